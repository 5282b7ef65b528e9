//! Native gate set.
//!
//! Every gate is stored symbolically and turned into a small unitary on
//! its targets by [`GateOp::matrix`]. Two-level rotations use
//! `R_mu^{ab}(theta) = exp(-i theta/2 sigma^{mu;ab})`.
//!
//! Text form, one gate per line:
//!
//! ```text
//! RX a=0 b=1 theta=0.25 @ 3
//! CX c=1 l1=1 l2=3 @ 0,2
//! MS mu=z nu=y alpha=-1.5707963267948966 @ 1,0
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diag, identity, is_unitary, kron, CMatrix, C64, I, ONE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseClass {
    OneBody,
    Cx,
    Ms,
    Virtual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    /// Pauli matrix on levels `a, b` of a `dim`-level system, zero elsewhere.
    pub fn on_levels(self, dim: usize, a: usize, b: usize) -> CMatrix {
        let mut m = CMatrix::zeros(dim, dim);
        match self {
            Pauli::X => {
                m[(a, b)] = ONE;
                m[(b, a)] = ONE;
            }
            Pauli::Y => {
                m[(a, b)] = -I;
                m[(b, a)] = I;
            }
            Pauli::Z => {
                m[(a, a)] = ONE;
                m[(b, b)] = -ONE;
            }
        }
        m
    }

    pub fn matrix(self) -> CMatrix {
        self.on_levels(2, 0, 1)
    }

    fn letter(self) -> char {
        match self {
            Pauli::X => 'x',
            Pauli::Y => 'y',
            Pauli::Z => 'z',
        }
    }
}

impl FromStr for Pauli {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Pauli::X),
            "y" | "Y" => Ok(Pauli::Y),
            "z" | "Z" => Ok(Pauli::Z),
            _ => Err(Error::InvalidGate(format!("unknown Pauli '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    Rx { a: usize, b: usize, theta: f64 },
    Ry { a: usize, b: usize, theta: f64 },
    Rz { a: usize, b: usize, theta: f64 },
    H { a: usize, b: usize },
    /// `exp(-i phi |a><a|)`.
    Vrz { a: usize, phi: f64 },
    /// Swaps target levels `l1, l2` when the control sits in `c`.
    Cx { c: usize, l1: usize, l2: usize },
    /// `exp(i alpha/4 (sigma^{mu;01} + sigma^nu)^2)`, qutrit first, qubit second.
    Ms { mu: Pauli, nu: Pauli, alpha: f64 },
    /// `exp(i alpha/2 sigma^{z;01} sigma^z)`, qutrit first, qubit second.
    Rzz { alpha: f64 },
    /// Rotation `R_ab(theta, phi)` on the target when the control sits in `c`.
    Crot { c: usize, a: usize, b: usize, theta: f64, phi: f64 },
    /// `R_Y^{01}(pi) R_Y^{12}(pi)`.
    PermPlus,
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::Cx { .. } | GateKind::Ms { .. } | GateKind::Rzz { .. } | GateKind::Crot { .. } => 2,
            _ => 1,
        }
    }

    pub fn noise_class(&self) -> NoiseClass {
        match self {
            GateKind::Vrz { .. } => NoiseClass::Virtual,
            GateKind::Cx { .. } | GateKind::Crot { .. } => NoiseClass::Cx,
            GateKind::Ms { .. } | GateKind::Rzz { .. } => NoiseClass::Ms,
            _ => NoiseClass::OneBody,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateKind::Rx { .. } => "RX",
            GateKind::Ry { .. } => "RY",
            GateKind::Rz { .. } => "RZ",
            GateKind::H { .. } => "H",
            GateKind::Vrz { .. } => "VRZ",
            GateKind::Cx { .. } => "CX",
            GateKind::Ms { .. } => "MS",
            GateKind::Rzz { .. } => "RZZ",
            GateKind::Crot { .. } => "CROT",
            GateKind::PermPlus => "PERM_PLUS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub kind: GateKind,
    pub targets: Vec<usize>,
}

/// `exp(-i theta/2 sigma)` on levels `a, b`, identity elsewhere.
pub fn two_level_rotation(dim: usize, a: usize, b: usize, pauli: Pauli, theta: f64) -> CMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let mut m = identity(dim);
    m[(a, a)] = C64::new(c, 0.0);
    m[(b, b)] = C64::new(c, 0.0);
    m += pauli.on_levels(dim, a, b) * C64::new(0.0, -s);
    m
}

fn projector(dim: usize, levels: &[usize]) -> CMatrix {
    let mut p = CMatrix::zeros(dim, dim);
    for &l in levels {
        p[(l, l)] = ONE;
    }
    p
}

impl GateOp {
    pub fn new(kind: GateKind, targets: Vec<usize>) -> Self {
        Self { kind, targets }
    }

    pub fn rx(q: usize, a: usize, b: usize, theta: f64) -> Self {
        Self::new(GateKind::Rx { a, b, theta }, vec![q])
    }
    pub fn ry(q: usize, a: usize, b: usize, theta: f64) -> Self {
        Self::new(GateKind::Ry { a, b, theta }, vec![q])
    }
    pub fn rz(q: usize, a: usize, b: usize, theta: f64) -> Self {
        Self::new(GateKind::Rz { a, b, theta }, vec![q])
    }
    pub fn h(q: usize, a: usize, b: usize) -> Self {
        Self::new(GateKind::H { a, b }, vec![q])
    }
    pub fn vrz(q: usize, a: usize, phi: f64) -> Self {
        Self::new(GateKind::Vrz { a, phi }, vec![q])
    }
    pub fn cx(control: usize, target: usize, c: usize, l1: usize, l2: usize) -> Self {
        Self::new(GateKind::Cx { c, l1, l2 }, vec![control, target])
    }
    pub fn ms(qutrit: usize, qubit: usize, mu: Pauli, nu: Pauli, alpha: f64) -> Self {
        Self::new(GateKind::Ms { mu, nu, alpha }, vec![qutrit, qubit])
    }
    pub fn rzz(qutrit: usize, qubit: usize, alpha: f64) -> Self {
        Self::new(GateKind::Rzz { alpha }, vec![qutrit, qubit])
    }

    pub fn noise_class(&self) -> NoiseClass {
        self.kind.noise_class()
    }

    /// Checks arity and level labels against the target dimensions.
    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGate(format!("{self}: {msg}")));
        if self.targets.len() != self.kind.arity() {
            return bad(format!("expects {} targets", self.kind.arity()));
        }
        if dims.len() != self.targets.len() {
            return bad(format!("{} dims for {} targets", dims.len(), self.targets.len()));
        }
        if self.targets.len() == 2 && self.targets[0] == self.targets[1] {
            return bad("control and target coincide".into());
        }
        let pair = |a: usize, b: usize, d: usize| a != b && a < d && b < d;
        let ok = match self.kind {
            GateKind::Rx { a, b, .. } | GateKind::Ry { a, b, .. } | GateKind::Rz { a, b, .. } | GateKind::H { a, b } => {
                pair(a, b, dims[0])
            }
            GateKind::Vrz { a, .. } => a < dims[0],
            GateKind::Cx { c, l1, l2 } => c < dims[0] && pair(l1, l2, dims[1]),
            GateKind::Crot { c, a, b, .. } => c < dims[0] && pair(a, b, dims[1]),
            GateKind::Ms { .. } | GateKind::Rzz { .. } => dims[1] == 2,
            GateKind::PermPlus => dims[0] >= 3,
        };
        if ok {
            Ok(())
        } else {
            bad(format!("labels incompatible with dims {dims:?}"))
        }
    }

    /// The unitary on the targets, first target most significant.
    pub fn matrix(&self, dims: &[usize]) -> Result<CMatrix> {
        self.validate(dims)?;
        let d0 = dims[0];
        let m = match self.kind {
            GateKind::Rx { a, b, theta } => two_level_rotation(d0, a, b, Pauli::X, theta),
            GateKind::Ry { a, b, theta } => two_level_rotation(d0, a, b, Pauli::Y, theta),
            GateKind::Rz { a, b, theta } => two_level_rotation(d0, a, b, Pauli::Z, theta),
            GateKind::H { a, b } => {
                let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                let mut m = identity(d0) - projector(d0, &[a, b]);
                m += (Pauli::X.on_levels(d0, a, b) + Pauli::Z.on_levels(d0, a, b)) * r;
                m
            }
            GateKind::Vrz { a, phi } => {
                let mut m = identity(d0);
                m[(a, a)] = C64::from_polar(1.0, -phi);
                m
            }
            GateKind::Cx { c, l1, l2 } => {
                let d1 = dims[1];
                let mut swap = identity(d1) - projector(d1, &[l1, l2]);
                swap += Pauli::X.on_levels(d1, l1, l2);
                controlled(d0, c, &swap)
            }
            GateKind::Crot { c, a, b, theta, phi } => {
                let d1 = dims[1];
                let gen = Pauli::X.on_levels(d1, a, b) * C64::new(phi.cos(), 0.0)
                    + Pauli::Y.on_levels(d1, a, b) * C64::new(phi.sin(), 0.0);
                let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
                let rot = identity(d1) - projector(d1, &[a, b]) * C64::new(1.0 - co, 0.0) - gen * C64::new(0.0, si);
                controlled(d0, c, &rot)
            }
            GateKind::Ms { mu, nu, alpha } => {
                let p01 = projector(d0, &[0, 1]);
                let phases: Vec<C64> = (0..d0)
                    .map(|k| C64::from_polar(1.0, alpha / 4.0 * if k < 2 { 2.0 } else { 1.0 }))
                    .collect();
                let a = mu.on_levels(d0, 0, 1);
                let inner = kron(&(identity(d0) - &p01), &identity(2))
                    + kron(&p01, &identity(2)) * C64::new((alpha / 2.0).cos(), 0.0)
                    + kron(&a, &nu.matrix()) * C64::new(0.0, (alpha / 2.0).sin());
                kron(&diag(&phases), &identity(2)) * inner
            }
            GateKind::Rzz { alpha } => {
                let z = Pauli::Z.on_levels(d0, 0, 1);
                let mut m = identity(2 * d0);
                let zz = kron(&z, &Pauli::Z.matrix());
                for k in 0..2 * d0 {
                    m[(k, k)] = C64::from_polar(1.0, alpha / 2.0 * zz[(k, k)].re);
                }
                m
            }
            GateKind::PermPlus => {
                two_level_rotation(d0, 0, 1, Pauli::Y, std::f64::consts::PI)
                    * two_level_rotation(d0, 1, 2, Pauli::Y, std::f64::consts::PI)
            }
        };
        Ok(m)
    }

    pub fn is_unitary(&self, dims: &[usize]) -> bool {
        self.matrix(dims).map(|m| is_unitary(&m, 1e-12)).unwrap_or(false)
    }

    /// The inverse gate.
    pub fn inverse(&self) -> GateOp {
        let kind = match self.kind {
            GateKind::Rx { a, b, theta } => GateKind::Rx { a, b, theta: -theta },
            GateKind::Ry { a, b, theta } => GateKind::Ry { a, b, theta: -theta },
            GateKind::Rz { a, b, theta } => GateKind::Rz { a, b, theta: -theta },
            GateKind::Vrz { a, phi } => GateKind::Vrz { a, phi: -phi },
            GateKind::Ms { mu, nu, alpha } => GateKind::Ms { mu, nu, alpha: -alpha },
            GateKind::Rzz { alpha } => GateKind::Rzz { alpha: -alpha },
            GateKind::Crot { c, a, b, theta, phi } => GateKind::Crot { c, a, b, theta: -theta, phi },
            GateKind::H { .. } | GateKind::Cx { .. } => self.kind,
            GateKind::PermPlus => {
                return GateOp::new(GateKind::PermPlus, self.targets.clone());
            }
        };
        GateOp::new(kind, self.targets.clone())
    }
}

fn controlled(dc: usize, c: usize, u: &CMatrix) -> CMatrix {
    let mut pc = CMatrix::zeros(dc, dc);
    pc[(c, c)] = ONE;
    let rest = identity(dc) - &pc;
    kron(&pc, u) + kron(&rest, &identity(u.nrows()))
}

impl fmt::Display for GateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        match self.kind {
            GateKind::Rx { a, b, theta } | GateKind::Ry { a, b, theta } | GateKind::Rz { a, b, theta } => {
                write!(f, " a={a} b={b} theta={theta:?}")?
            }
            GateKind::H { a, b } => write!(f, " a={a} b={b}")?,
            GateKind::Vrz { a, phi } => write!(f, " a={a} phi={phi:?}")?,
            GateKind::Cx { c, l1, l2 } => write!(f, " c={c} l1={l1} l2={l2}")?,
            GateKind::Ms { mu, nu, alpha } => write!(f, " mu={} nu={} alpha={alpha:?}", mu.letter(), nu.letter())?,
            GateKind::Rzz { alpha } => write!(f, " alpha={alpha:?}")?,
            GateKind::Crot { c, a, b, theta, phi } => write!(f, " c={c} a={a} b={b} theta={theta:?} phi={phi:?}")?,
            GateKind::PermPlus => {}
        }
        f.write_str(" @ ")?;
        for (i, t) in self.targets.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for GateOp {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let err = |msg: String| Error::InvalidGate(format!("'{line}': {msg}"));
        let (head, tail) = line.split_once('@').ok_or_else(|| err("missing '@'".into()))?;
        let targets = tail
            .trim()
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| err(format!("target: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut words = head.split_whitespace();
        let name = words.next().ok_or_else(|| err("empty gate".into()))?;
        let mut params = std::collections::BTreeMap::new();
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| err(format!("bad token '{w}'")))?;
            params.insert(k, v);
        }
        let raw = |k: &str| params.get(k).copied().ok_or_else(|| err(format!("missing {k}")));
        let level = |k: &str| raw(k)?.parse::<usize>().map_err(|e| err(format!("{k}: {e}")));
        let angle = |k: &str| raw(k)?.parse::<f64>().map_err(|e| err(format!("{k}: {e}")));
        let kind = match name {
            "RX" => GateKind::Rx { a: level("a")?, b: level("b")?, theta: angle("theta")? },
            "RY" => GateKind::Ry { a: level("a")?, b: level("b")?, theta: angle("theta")? },
            "RZ" => GateKind::Rz { a: level("a")?, b: level("b")?, theta: angle("theta")? },
            "H" => GateKind::H { a: level("a")?, b: level("b")? },
            "VRZ" => GateKind::Vrz { a: level("a")?, phi: angle("phi")? },
            "CX" => GateKind::Cx { c: level("c")?, l1: level("l1")?, l2: level("l2")? },
            "MS" => GateKind::Ms { mu: raw("mu")?.parse()?, nu: raw("nu")?.parse()?, alpha: angle("alpha")? },
            "RZZ" => GateKind::Rzz { alpha: angle("alpha")? },
            "CROT" => GateKind::Crot {
                c: level("c")?,
                a: level("a")?,
                b: level("b")?,
                theta: angle("theta")?,
                phi: angle("phi")?,
            },
            "PERM_PLUS" => GateKind::PermPlus,
            other => return Err(err(format!("unknown gate '{other}'"))),
        };
        let g = GateOp::new(kind, targets);
        if g.targets.len() != g.kind.arity() {
            return Err(err(format!("expects {} targets", g.kind.arity())));
        }
        Ok(g)
    }
}
