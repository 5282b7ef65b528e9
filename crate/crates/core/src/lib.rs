//! Qudit state-vector simulation of the spin-1 U(1) quantum link model.
//!
//! The crate is organised bottom-up: [`hilbert`] handles mixed-radix
//! registers, [`gates`] the native gate set, [`model`] the lattice
//! Hamiltonian and its physical subspace, [`compiler`] the Trotter
//! circuits, [`exact`] the reference evolution, [`noise`] the noisy
//! engines and [`scattering`] the end-to-end experiments. [`config`] and
//! [`artifacts`] cover run files on disk.

pub mod artifacts;
pub mod compiler;
pub mod config;
pub mod error;
pub mod exact;
pub mod gates;
pub mod hilbert;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod observables;
pub mod program;
pub mod scattering;

pub use error::{Error, Result};
pub use gates::{GateKind, GateOp, NoiseClass, Pauli};
pub use hilbert::{embed_local_operator, BasisConfig, LocalOp, PureState, QuditRegister, Role};
pub use linalg::{CMatrix, C64};
pub use compiler::{CompileOptions, WallSchedule};
pub use config::{ResolvedConfig, RunConfig, SCHEMA_VERSION};
pub use model::{Formulation, LatticeModel, PhysicalSubspace};
pub use noise::NoiseModel;
pub use scattering::{Engine, ObservableRecord, ScatteringProtocol};
