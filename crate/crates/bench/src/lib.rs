//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use qlm_core::compiler::CompileOptions;
use qlm_core::exact::{Propagator, SubspaceHamiltonian};
use qlm_core::model::{enumerate_physical, PhysicalSubspace};
use qlm_core::program::CompiledCircuit;
use qlm_core::scattering::compile_protocol;
use qlm_core::{QuditRegister, ScatteringProtocol, C64};

/// A normalized dense state with no structure worth exploiting.
pub fn spread_state(len: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..len).map(|k| C64::new((0.37 * k as f64).sin(), (0.11 * k as f64).cos())).collect();
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / n).collect()
}

pub fn preset(name: &str, n_steps: usize) -> ScatteringProtocol {
    let mut p = ScatteringProtocol::preset(name).expect("shipped preset");
    p.n_steps = n_steps;
    p
}

pub fn circuit(name: &str, n_steps: usize) -> CompiledCircuit {
    compile_protocol(&preset(name, n_steps), &CompileOptions::default()).expect("preset compiles")
}

pub fn register(name: &str) -> Arc<QuditRegister> {
    Arc::new(preset(name, 1).model().and_then(|m| m.register()).expect("register fits"))
}

pub fn propagator(name: &str) -> (PhysicalSubspace, Propagator) {
    let model = preset(name, 1).model().expect("valid model");
    let phys = enumerate_physical(&model).expect("enumerable");
    let h = SubspaceHamiltonian::build(&model, &phys, &[]).expect("hamiltonian");
    (phys, Propagator::new(&h))
}
