//! Mixed-radix registers and state vectors.
//!
//! Qudit 0 is the most significant digit of the basis index, so the flat
//! index of a digit string `[d0, d1, ..]` is `d0 * stride0 + d1 * stride1 + ..`
//! with `stride_{n-1} = 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ONE, ZERO};

/// Largest state vector the simulator will allocate.
pub const MAX_AMPLITUDES: usize = 1 << 27;

const IDENTITY_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Matter site `j`.
    Matter(usize),
    /// Gauge link between sites `j` and `j + 1`.
    Link(usize),
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Matter(j) => write!(f, "q{j}"),
            Role::Link(j) => write!(f, "l{j}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuditRegister {
    dims: Vec<usize>,
    roles: Vec<Role>,
    strides: Vec<usize>,
    total: usize,
}

impl QuditRegister {
    pub fn new(dims: Vec<usize>, roles: Vec<Role>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::DimensionMismatch("empty register".into()));
        }
        if dims.len() != roles.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} dims but {} roles",
                dims.len(),
                roles.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| !(2..=4).contains(&d)) {
            return Err(Error::DimensionMismatch(format!("local dimension {d} not in 2..=4")));
        }
        let mut total: usize = 1;
        for &d in &dims {
            total = total
                .checked_mul(d)
                .filter(|&t| t <= MAX_AMPLITUDES)
                .ok_or_else(|| {
                    Error::BudgetExceeded(format!(
                        "register {:?} exceeds {} amplitudes",
                        dims, MAX_AMPLITUDES
                    ))
                })?;
        }
        let mut strides = vec![1; dims.len()];
        for q in (0..dims.len() - 1).rev() {
            strides[q] = strides[q + 1] * dims[q + 1];
        }
        Ok(Self { dims, roles, strides, total })
    }

    /// Links only: a qutrit for the leftmost link, ququarts for the rest.
    pub fn integrated_out(l: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidModel(format!("L = {l} < 2")));
        }
        let dims = (0..l - 1).map(|j| if j == 0 { 3 } else { 4 }).collect();
        let roles = (0..l - 1).map(Role::Link).collect();
        Self::new(dims, roles)
    }

    /// Alternating matter qubits and link qutrits, `q0 l0 q1 l1 .. q_{L-1}`.
    pub fn matterful(l: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidModel(format!("L = {l} < 2")));
        }
        let mut dims = Vec::with_capacity(2 * l - 1);
        let mut roles = Vec::with_capacity(2 * l - 1);
        for j in 0..l {
            dims.push(2);
            roles.push(Role::Matter(j));
            if j + 1 < l {
                dims.push(3);
                roles.push(Role::Link(j));
            }
        }
        Self::new(dims, roles)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn dim(&self, q: usize) -> usize {
        self.dims[q]
    }

    pub fn position(&self, role: Role) -> Option<usize> {
        self.roles.iter().position(|&r| r == role)
    }

    pub fn index_of(&self, config: &BasisConfig) -> Result<usize> {
        self.index_of_digits(&config.digits)
    }

    pub fn index_of_digits(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} digits for a register of {} qudits",
                digits.len(),
                self.dims.len()
            )));
        }
        let mut idx = 0;
        for (q, (&d, &dim)) in digits.iter().zip(&self.dims).enumerate() {
            if d >= dim {
                return Err(Error::DigitOutOfRange { qudit: q, digit: d, dim });
            }
            idx += d * self.strides[q];
        }
        Ok(idx)
    }

    pub fn config_of(&self, index: usize) -> Result<BasisConfig> {
        if index >= self.total {
            return Err(Error::InvalidArgument(format!(
                "index {index} outside register of dimension {}",
                self.total
            )));
        }
        Ok(BasisConfig { digits: self.digits_of(index) })
    }

    pub(crate) fn digits_of(&self, index: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.dims)
            .map(|(&s, &d)| (index / s) % d)
            .collect()
    }

    #[inline]
    pub fn digit(&self, index: usize, q: usize) -> usize {
        (index / self.strides[q]) % self.dims[q]
    }
}

impl fmt::Display for QuditRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (q, (r, d)) in self.roles.iter().zip(&self.dims).enumerate() {
            if q > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{r}:{d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisConfig {
    pub digits: Vec<usize>,
}

impl BasisConfig {
    pub fn new(digits: Vec<usize>) -> Self {
        Self { digits }
    }
}

impl fmt::Display for BasisConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.digits {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Kernel {
    /// Only the entries that are not exactly 1.
    Diagonal { offsets: Vec<usize>, phases: Vec<C64> },
    /// Restricted to the local levels the matrix actually touches; each
    /// output row keeps only its nonzero entries.
    Sparse { offsets: Vec<usize>, rows: Vec<Vec<(usize, C64)>> },
    Identity,
}

/// A small operator compiled against a register so that it can be applied
/// to state vectors without forming the full-space matrix.
#[derive(Debug, Clone)]
pub struct LocalOp {
    targets: Vec<usize>,
    matrix: CMatrix,
    kernel: Kernel,
    /// Odometer over the non-target qudits that precede the trailing block.
    outer_dims: Vec<usize>,
    outer_strides: Vec<usize>,
    inner_len: usize,
    total: usize,
}

/// Compile `op` acting on `targets` (first target most significant in the
/// local index) into an applicable operator.
pub fn embed_local_operator(op: &CMatrix, targets: &[usize], reg: &QuditRegister) -> Result<LocalOp> {
    LocalOp::new(op.clone(), targets, reg)
}

impl LocalOp {
    pub fn new(matrix: CMatrix, targets: &[usize], reg: &QuditRegister) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::DimensionMismatch("no targets".into()));
        }
        for (i, &t) in targets.iter().enumerate() {
            if t >= reg.len() {
                return Err(Error::DimensionMismatch(format!("target {t} outside register")));
            }
            if targets[..i].contains(&t) {
                return Err(Error::DimensionMismatch(format!("repeated target {t}")));
            }
        }
        let local: usize = targets.iter().map(|&t| reg.dim(t)).product();
        if matrix.nrows() != local || matrix.ncols() != local {
            return Err(Error::DimensionMismatch(format!(
                "matrix {}x{} on targets of total dimension {local}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }

        let mut offsets = vec![0usize; local];
        for (m, off) in offsets.iter_mut().enumerate() {
            let mut rem = m;
            for &t in targets.iter().rev() {
                let d = reg.dim(t);
                *off += (rem % d) * reg.strides()[t];
                rem /= d;
            }
        }

        let differs = |a: usize, b: usize| {
            let id = if a == b { ONE } else { ZERO };
            (matrix[(a, b)] - id).norm() > IDENTITY_TOL
        };
        let is_diag = (0..local).all(|a| (0..local).all(|b| a == b || matrix[(a, b)].norm() == 0.0));
        let kernel = if is_diag {
            let active: Vec<usize> = (0..local).filter(|&a| differs(a, a)).collect();
            if active.is_empty() {
                Kernel::Identity
            } else {
                Kernel::Diagonal {
                    offsets: active.iter().map(|&a| offsets[a]).collect(),
                    phases: active.iter().map(|&a| matrix[(a, a)]).collect(),
                }
            }
        } else {
            let active: Vec<usize> = (0..local)
                .filter(|&a| (0..local).any(|b| differs(a, b) || differs(b, a)))
                .collect();
            let rows = active
                .iter()
                .map(|&a| {
                    active
                        .iter()
                        .enumerate()
                        .filter(|&(_, &b)| matrix[(a, b)].norm() != 0.0)
                        .map(|(k, &b)| (k, matrix[(a, b)]))
                        .collect()
                })
                .collect();
            Kernel::Sparse { offsets: active.iter().map(|&a| offsets[a]).collect(), rows }
        };

        let last_target = *targets.iter().max().unwrap();
        let inner_len: usize = reg.dims()[last_target + 1..].iter().product();
        let (outer_dims, outer_strides) = (0..last_target)
            .filter(|q| !targets.contains(q))
            .map(|q| (reg.dim(q), reg.strides()[q]))
            .unzip();

        Ok(Self {
            targets: targets.to_vec(),
            matrix,
            kernel,
            outer_dims,
            outer_strides,
            inner_len,
            total: reg.total_dim(),
        })
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kernel, Kernel::Identity)
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.kernel, Kernel::Diagonal { .. } | Kernel::Identity)
    }

    /// Calls `f` with every flat index whose target digits are all zero.
    #[inline]
    fn for_each_base(&self, mut f: impl FnMut(usize)) {
        let depth = self.outer_dims.len();
        let mut counter = vec![0usize; depth];
        let mut outer = 0usize;
        loop {
            for inner in 0..self.inner_len {
                f(outer + inner);
            }
            let mut q = depth;
            loop {
                if q == 0 {
                    return;
                }
                q -= 1;
                counter[q] += 1;
                outer += self.outer_strides[q];
                if counter[q] < self.outer_dims[q] {
                    break;
                }
                outer -= counter[q] * self.outer_strides[q];
                counter[q] = 0;
            }
        }
    }

    pub fn apply(&self, amps: &mut [C64]) {
        assert_eq!(amps.len(), self.total, "state does not match the compiled register");
        match &self.kernel {
            Kernel::Identity => {}
            Kernel::Diagonal { offsets, phases } => self.for_each_base(|base| {
                for (&off, &ph) in offsets.iter().zip(phases) {
                    amps[base + off] *= ph;
                }
            }),
            Kernel::Sparse { offsets, rows } => {
                let mut gathered = vec![ZERO; offsets.len()];
                self.for_each_base(|base| {
                    for (g, &off) in gathered.iter_mut().zip(offsets) {
                        *g = amps[base + off];
                    }
                    for (row, &off) in rows.iter().zip(offsets) {
                        let mut acc = ZERO;
                        for &(k, m) in row {
                            acc += m * gathered[k];
                        }
                        amps[base + off] = acc;
                    }
                });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    register: Arc<QuditRegister>,
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn zero(register: Arc<QuditRegister>) -> Self {
        let n = register.total_dim();
        Self { register, amplitudes: vec![ZERO; n] }
    }

    pub fn basis(register: Arc<QuditRegister>, config: &BasisConfig) -> Result<Self> {
        let idx = register.index_of(config)?;
        let mut s = Self::zero(register);
        s.amplitudes[idx] = ONE;
        Ok(s)
    }

    pub fn from_amplitudes(register: Arc<QuditRegister>, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != register.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for register dimension {}",
                amplitudes.len(),
                register.total_dim()
            )));
        }
        Ok(Self { register, amplitudes })
    }

    pub fn register(&self) -> &Arc<QuditRegister> {
        &self.register
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        }
        n
    }

    pub fn apply(&mut self, op: &LocalOp) {
        op.apply(&mut self.amplitudes);
    }

    pub fn apply_matrix(&mut self, matrix: &CMatrix, targets: &[usize]) -> Result<()> {
        let op = LocalOp::new(matrix.clone(), targets, &self.register)?;
        op.apply(&mut self.amplitudes);
        Ok(())
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// Population of each level of qudit `q`.
    pub fn level_populations(&self, q: usize) -> Vec<f64> {
        let d = self.register.dim(q);
        let stride = self.register.strides()[q];
        let mut pops = vec![0.0; d];
        for (i, a) in self.amplitudes.iter().enumerate() {
            pops[(i / stride) % d] += a.norm_sqr();
        }
        pops
    }

    /// Level populations for every qudit in one pass.
    pub fn all_level_populations(&self) -> Vec<Vec<f64>> {
        let reg = &self.register;
        let mut pops: Vec<Vec<f64>> = reg.dims().iter().map(|&d| vec![0.0; d]).collect();
        let n = reg.len();
        let mut digits = vec![0usize; n];
        for a in &self.amplitudes {
            let w = a.norm_sqr();
            if w != 0.0 {
                for (p, &d) in pops.iter_mut().zip(&digits) {
                    p[d] += w;
                }
            }
            for q in (0..n).rev() {
                digits[q] += 1;
                if digits[q] < reg.dim(q) {
                    break;
                }
                digits[q] = 0;
            }
        }
        pops
    }

    /// `<psi| f(digit of q) |psi>` for a diagonal single-qudit observable.
    pub fn expect_diagonal(&self, q: usize, values: &[f64]) -> f64 {
        self.level_populations(q).iter().zip(values).map(|(p, v)| p * v).sum()
    }
}
