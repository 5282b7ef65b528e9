//! Reference evolution on the physical subspace.

use nalgebra::{DMatrix, DVector};

use crate::compiler::WallSchedule;
use crate::error::{Error, Result};
use crate::linalg::{expm_hermitian, CMatrix, C64};
use crate::model::{build_terms, LatticeModel, PhysicalSubspace, TermKind};

/// Largest physical dimension the dense engine accepts.
pub const EXACT_BUDGET: usize = 20_000;

/// `exp(-i h t)` for a Hermitian `h`.
pub fn expm_local(h: &CMatrix, t: f64) -> CMatrix {
    expm_hermitian(h, t)
}

/// The Hamiltonian restricted to the physical basis. All matrix elements of
/// the model are real, so the matrix is real symmetric.
#[derive(Debug, Clone)]
pub struct SubspaceHamiltonian {
    pub matrix: DMatrix<f64>,
}

impl SubspaceHamiltonian {
    /// Builds `H` with the minimal-coupling terms on `omit` removed.
    pub fn build(model: &LatticeModel, phys: &PhysicalSubspace, omit: &[usize]) -> Result<Self> {
        let n = phys.len();
        if n > EXACT_BUDGET {
            return Err(Error::BudgetExceeded(format!("physical dimension {n} > {EXACT_BUDGET}")));
        }
        let reg = phys.register();
        let terms = build_terms(model)?;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for term in terms.all() {
            if matches!(term.kind, TermKind::Min(j) if omit.contains(&j)) {
                continue;
            }
            let dims: Vec<usize> = term.support.iter().map(|&q| reg.dim(q)).collect();
            for (k, &idx) in phys.indices().iter().enumerate() {
                let mut col = 0;
                let mut base = idx;
                for (&q, &d) in term.support.iter().zip(&dims) {
                    let digit = reg.digit(idx, q);
                    col = col * d + digit;
                    base -= digit * reg.strides()[q];
                }
                for row in 0..term.matrix.nrows() {
                    let v = term.matrix[(row, col)];
                    if v.norm() == 0.0 {
                        continue;
                    }
                    if v.im.abs() > 1e-14 {
                        return Err(Error::InvalidModel("complex Hamiltonian element".into()));
                    }
                    let mut target = base;
                    let mut rem = row;
                    for (&q, &d) in term.support.iter().zip(&dims).rev() {
                        target += (rem % d) * reg.strides()[q];
                        rem /= d;
                    }
                    let pos = phys.position(target).ok_or_else(|| {
                        Error::GaussViolation(format!("term {:?} maps state {idx} outside the physical basis", term.kind))
                    })?;
                    h[(pos, k)] += v.re;
                }
            }
        }
        Ok(Self { matrix: h })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    pub fn expectation(&self, psi: &[C64]) -> f64 {
        let n = psi.len();
        let mut e = 0.0;
        for c in 0..n {
            if psi[c].norm_sqr() == 0.0 {
                continue;
            }
            for r in 0..n {
                let h = self.matrix[(r, c)];
                if h != 0.0 {
                    e += (psi[r].conj() * psi[c]).re * h;
                }
            }
        }
        e
    }
}

/// Spectral propagator of a fixed Hamiltonian.
#[derive(Debug, Clone)]
pub struct Propagator {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl Propagator {
    pub fn new(h: &SubspaceHamiltonian) -> Self {
        let eig = h.matrix.clone().symmetric_eigen();
        Self { values: eig.eigenvalues, vectors: eig.eigenvectors }
    }

    pub fn energies(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn evolve(&self, psi: &[C64], t: f64) -> Vec<C64> {
        let n = psi.len();
        let v = &self.vectors;
        let mut coeff = vec![C64::new(0.0, 0.0); n];
        for (k, c) in coeff.iter_mut().enumerate() {
            let col = v.column(k);
            let mut acc = C64::new(0.0, 0.0);
            for (r, p) in psi.iter().enumerate() {
                acc += p * col[r];
            }
            *c = acc * C64::from_polar(1.0, -self.values[k] * t);
        }
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (k, c) in coeff.iter().enumerate() {
            let col = v.column(k);
            for (r, o) in out.iter_mut().enumerate() {
                *o += c * col[r];
            }
        }
        out
    }
}

/// Piecewise-constant evolution: walls on for `hold`, then the full model.
#[derive(Debug, Clone)]
pub struct ExactEngine {
    pub model: LatticeModel,
    pub hold: f64,
    pub h_walled: Option<SubspaceHamiltonian>,
    pub h_free: SubspaceHamiltonian,
    walled: Option<Propagator>,
    free: Propagator,
}

impl ExactEngine {
    /// `walls` and `step_size` define the holding time `off_step * step_size`.
    pub fn new(model: &LatticeModel, phys: &PhysicalSubspace, walls: &WallSchedule, step_size: f64) -> Result<Self> {
        let h_free = SubspaceHamiltonian::build(model, phys, &[])?;
        let free = Propagator::new(&h_free);
        let (h_walled, walled, hold) = if walls.walls.is_empty() || walls.off_step == 0 {
            (None, None, 0.0)
        } else {
            let h = SubspaceHamiltonian::build(model, phys, &walls.walls)?;
            let p = Propagator::new(&h);
            (Some(h), Some(p), walls.off_step as f64 * step_size)
        };
        Ok(Self { model: *model, hold, h_walled, h_free, walled, free })
    }

    pub fn state_at(&self, psi0: &[C64], t: f64) -> Result<Vec<C64>> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::InvalidArgument(format!("negative time {t}")));
        }
        if t == 0.0 {
            return Ok(psi0.to_vec());
        }
        match &self.walled {
            Some(w) if t <= self.hold => Ok(w.evolve(psi0, t)),
            Some(w) => Ok(self.free.evolve(&w.evolve(psi0, self.hold), t - self.hold)),
            None => Ok(self.free.evolve(psi0, t)),
        }
    }

    /// The Hamiltonian in force at time `t`.
    pub fn hamiltonian_at(&self, t: f64) -> &SubspaceHamiltonian {
        match &self.h_walled {
            Some(h) if t < self.hold => h,
            _ => &self.h_free,
        }
    }
}

/// `exp(-i H t)|psi>` on the physical basis with an optional wall schedule.
pub fn evolve_exact(
    psi: &[C64],
    t: f64,
    model: &LatticeModel,
    phys: &PhysicalSubspace,
    walls: &WallSchedule,
    step_size: f64,
) -> Result<Vec<C64>> {
    ExactEngine::new(model, phys, walls, step_size)?.state_at(psi, t)
}
