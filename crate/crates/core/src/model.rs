//! Spin-1 U(1) quantum link model in the particle-hole frame.
//!
//! Link levels encode the flux eigenvalue as `|0> = m=+1`, `|1> = m=0`,
//! `|2> = m=-1`; ququart links carry an extra auxiliary `|3>` used only by
//! the compiled circuits. Matter qubits use `|0> = occupied`,
//! `|1> = empty`, so `sigma^z = diag(+1, -1)` and `sigma^+ = |0><1|`.
//!
//! In this frame Gauss's law reads `n_j = m_{j-1} + m_j` with `n_j` in
//! `{0, 1}` and vanishing boundary fluxes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::Pauli;
use crate::hilbert::{BasisConfig, QuditRegister, Role, MAX_AMPLITUDES};
use crate::linalg::{identity, ketbra, kron, kron_all, real_diag, CMatrix, C64};

/// Largest chain the enumerator accepts.
pub const MAX_ENUMERATE_L: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Matterful,
    IntegratedOut,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::Matterful => "matterful",
            Formulation::IntegratedOut => "integrated_out",
        })
    }
}

impl FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matterful" => Ok(Formulation::Matterful),
            "integrated_out" | "integrated-out" => Ok(Formulation::IntegratedOut),
            _ => Err(Error::InvalidArgument(format!("unknown formulation '{s}'"))),
        }
    }
}

/// Spin-1 link operators in the qutrit encoding.
pub struct SpinOne;

impl SpinOne {
    /// Level of flux `m`.
    pub fn level(m: i8) -> usize {
        (1 - m) as usize
    }

    /// Flux of `level`; `None` for the auxiliary ququart level.
    pub fn flux(level: usize) -> Option<i8> {
        (level < 3).then(|| 1 - level as i8)
    }

    pub fn sz(dim: usize) -> CMatrix {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        v[2] = -1.0;
        real_diag(&v)
    }

    pub fn sz_squared(dim: usize) -> CMatrix {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        v[2] = 1.0;
        real_diag(&v)
    }

    /// Raises `m` by one: `sqrt2 (|0><1| + |1><2|)`.
    pub fn s_plus(dim: usize) -> CMatrix {
        (ketbra(dim, 0, 1) + ketbra(dim, 1, 2)) * C64::new(std::f64::consts::SQRT_2, 0.0)
    }

    /// The transpose of [`SpinOne::s_plus`], i.e. `sqrt2 (|2><1| + |1><0|)`.
    pub fn s_minus(dim: usize) -> CMatrix {
        Self::s_plus(dim).transpose()
    }

    /// Projector onto a single level.
    pub fn projector(dim: usize, level: usize) -> CMatrix {
        ketbra(dim, level, level)
    }
}

pub fn sigma_plus() -> CMatrix {
    ketbra(2, 0, 1)
}

pub fn sigma_z() -> CMatrix {
    real_diag(&[1.0, -1.0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    pub l: usize,
    pub kappa: f64,
    pub mu: f64,
    pub g: f64,
    pub formulation: Formulation,
}

impl LatticeModel {
    pub fn new(l: usize, kappa: f64, mu: f64, g: f64, formulation: Formulation) -> Result<Self> {
        let m = Self { l, kappa, mu, g, formulation };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return Err(Error::InvalidModel(format!("L = {} < 2", self.l)));
        }
        if ![self.kappa, self.mu, self.g].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidModel("couplings must be finite".into()));
        }
        Ok(())
    }

    pub fn with_formulation(mut self, formulation: Formulation) -> Self {
        self.formulation = formulation;
        self
    }

    pub fn links(&self) -> usize {
        self.l - 1
    }

    pub fn register(&self) -> Result<QuditRegister> {
        match self.formulation {
            Formulation::Matterful => QuditRegister::matterful(self.l),
            Formulation::IntegratedOut => QuditRegister::integrated_out(self.l),
        }
    }

    /// Register position of link `j`.
    pub fn link_qudit(&self, j: usize) -> usize {
        match self.formulation {
            Formulation::Matterful => 2 * j + 1,
            Formulation::IntegratedOut => j,
        }
    }

    /// Register position of matter site `j`; `None` when matter is integrated out.
    pub fn matter_qudit(&self, j: usize) -> Option<usize> {
        match self.formulation {
            Formulation::Matterful => Some(2 * j),
            Formulation::IntegratedOut => None,
        }
    }

    pub fn link_dim(&self, j: usize) -> usize {
        match self.formulation {
            Formulation::Matterful => 3,
            Formulation::IntegratedOut if j == 0 => 3,
            Formulation::IntegratedOut => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermKind {
    /// Minimal coupling on link `j`.
    Min(usize),
    /// Mass term; on site `j` (matterful) or link `j` (integrated out).
    Mass(usize),
    /// Electric energy on link `j`.
    Electric(usize),
}

#[derive(Debug, Clone)]
pub struct LocalTerm {
    pub kind: TermKind,
    /// Ascending, contiguous register positions.
    pub support: Vec<usize>,
    pub matrix: CMatrix,
}

impl LocalTerm {
    /// Embeds into the full register as `1 (x) M (x) 1`.
    pub fn full_matrix(&self, reg: &QuditRegister) -> CMatrix {
        let first = self.support[0];
        let last = *self.support.last().unwrap();
        let left: usize = reg.dims()[..first].iter().product();
        let right: usize = reg.dims()[last + 1..].iter().product();
        kron(&kron(&identity(left), &self.matrix), &identity(right))
    }

    pub fn is_diagonal(&self) -> bool {
        let m = &self.matrix;
        (0..m.nrows()).all(|a| (0..m.ncols()).all(|b| a == b || m[(a, b)].norm() == 0.0))
    }
}

#[derive(Debug, Clone)]
pub struct HamiltonianTerms {
    pub min: Vec<LocalTerm>,
    pub sg: Vec<LocalTerm>,
}

impl HamiltonianTerms {
    pub fn all(&self) -> impl Iterator<Item = &LocalTerm> {
        self.min.iter().chain(self.sg.iter())
    }

    pub fn min_on_link(&self, j: usize) -> Option<&LocalTerm> {
        self.min.iter().find(|t| t.kind == TermKind::Min(j))
    }

    /// Dense sum over the full register; only sensible for small systems.
    pub fn full_matrix(&self, reg: &QuditRegister) -> CMatrix {
        let n = reg.total_dim();
        let mut h = CMatrix::zeros(n, n);
        for t in self.all() {
            h += t.full_matrix(reg);
        }
        h
    }
}

pub fn build_terms(model: &LatticeModel) -> Result<HamiltonianTerms> {
    model.validate()?;
    match model.formulation {
        Formulation::Matterful => Ok(matterful_terms(model)),
        Formulation::IntegratedOut => Ok(integrated_out_terms(model)),
    }
}

fn matterful_terms(model: &LatticeModel) -> HamiltonianTerms {
    let l = model.l;
    let k = C64::new(model.kappa, 0.0);
    let hop = kron_all(&[&sigma_plus(), &SpinOne::s_plus(3), &sigma_plus()]);
    let min_matrix = (&hop + hop.adjoint()) * k;
    let min = (0..l - 1)
        .map(|j| LocalTerm { kind: TermKind::Min(j), support: vec![2 * j, 2 * j + 1, 2 * j + 2], matrix: min_matrix.clone() })
        .collect();
    let mut sg = Vec::new();
    for j in 0..l {
        sg.push(LocalTerm { kind: TermKind::Mass(j), support: vec![2 * j], matrix: sigma_z() * C64::new(model.mu / 2.0, 0.0) });
    }
    for j in 0..l - 1 {
        sg.push(LocalTerm {
            kind: TermKind::Electric(j),
            support: vec![2 * j + 1],
            matrix: SpinOne::sz_squared(3) * C64::new(model.g * model.g / 2.0, 0.0),
        });
    }
    HamiltonianTerms { min, sg }
}

/// Minimal-coupling term of link `j` with matter integrated out, as
/// `(support, matrix)`. Edge links see the fixed boundary flux `m = 0`.
pub fn integrated_out_min(model: &LatticeModel, j: usize) -> (Vec<usize>, CMatrix) {
    let l = model.l;
    let amp = C64::new(std::f64::consts::SQRT_2 * model.kappa, 0.0);
    let d = |j: usize| model.link_dim(j);
    let x01 = |j: usize| Pauli::X.on_levels(d(j), 0, 1);
    let x12 = |j: usize| Pauli::X.on_levels(d(j), 1, 2);
    let p = |j: usize, level: usize| SpinOne::projector(d(j), level);
    if l == 2 {
        (vec![0], x01(0) * amp)
    } else if j == 0 {
        (vec![0, 1], kron(&x01(0), &p(1, 1)) * amp)
    } else if j == l - 2 {
        (vec![j - 1, j], kron(&p(j - 1, 1), &x01(j)) * amp)
    } else {
        let a = kron_all(&[&p(j - 1, 1), &x01(j), &p(j + 1, 1)]);
        let b = kron_all(&[&p(j - 1, 0), &x12(j), &p(j + 1, 0)]);
        (vec![j - 1, j, j + 1], (a + b) * amp)
    }
}

fn integrated_out_terms(model: &LatticeModel) -> HamiltonianTerms {
    let links = model.links();
    let min = (0..links)
        .map(|j| {
            let (support, matrix) = integrated_out_min(model, j);
            LocalTerm { kind: TermKind::Min(j), support, matrix }
        })
        .collect();
    let mut sg = Vec::new();
    for j in 0..links {
        sg.push(LocalTerm {
            kind: TermKind::Mass(j),
            support: vec![j],
            matrix: SpinOne::sz(model.link_dim(j)) * C64::new(2.0 * model.mu, 0.0),
        });
    }
    for j in 0..links {
        sg.push(LocalTerm {
            kind: TermKind::Electric(j),
            support: vec![j],
            matrix: SpinOne::sz_squared(model.link_dim(j)) * C64::new(model.g * model.g / 2.0, 0.0),
        });
    }
    HamiltonianTerms { min, sg }
}

/// `G_j = (-1)^j [s^z_{j-1,j} + s^z_{j,j+1} - (sigma^z_j + 1)/2]` on the
/// matterful register, returned with its contiguous support.
pub fn gauss_generator(j: usize, model: &LatticeModel) -> Result<(Vec<usize>, CMatrix)> {
    if model.formulation != Formulation::Matterful {
        return Err(Error::InvalidModel("Gauss generators act on the matterful register".into()));
    }
    if j >= model.l {
        return Err(Error::InvalidArgument(format!("site {j} outside chain of {}", model.l)));
    }
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    let occupation = (sigma_z() + identity(2)) * C64::new(0.5, 0.0);
    let has_left = j > 0;
    let has_right = j + 1 < model.l;
    let mut support = Vec::new();
    let mut factors: Vec<CMatrix> = Vec::new();
    if has_left {
        support.push(2 * j - 1);
        factors.push(identity(3));
    }
    support.push(2 * j);
    factors.push(identity(2));
    if has_right {
        support.push(2 * j + 1);
        factors.push(identity(3));
    }
    let site = usize::from(has_left);
    let n: usize = factors.iter().map(|f| f.nrows()).product();
    let mut g = CMatrix::zeros(n, n);
    let with = |pos: usize, op: &CMatrix| {
        let mut fs = factors.clone();
        fs[pos] = op.clone();
        kron_all(&fs.iter().collect::<Vec<_>>())
    };
    if has_left {
        g += with(0, &SpinOne::sz(3));
    }
    if has_right {
        g += with(site + 1, &SpinOne::sz(3));
    }
    g -= with(site, &occupation);
    Ok((support, g * C64::new(sign, 0.0)))
}

/// Gauge-invariant basis states, in ascending register index.
#[derive(Debug, Clone)]
pub struct PhysicalSubspace {
    register: Arc<QuditRegister>,
    formulation: Formulation,
    configs: Vec<BasisConfig>,
    indices: Vec<usize>,
    fluxes: Vec<Vec<i8>>,
    lookup: HashMap<usize, usize>,
}

impl PhysicalSubspace {
    pub fn register(&self) -> &Arc<QuditRegister> {
        &self.register
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[BasisConfig] {
        &self.configs
    }

    /// Full-register index of each physical state.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Simulation-frame link fluxes of each physical state.
    pub fn fluxes(&self) -> &[Vec<i8>] {
        &self.fluxes
    }

    pub fn position(&self, full_index: usize) -> Option<usize> {
        self.lookup.get(&full_index).copied()
    }

    pub fn contains(&self, config: &BasisConfig) -> bool {
        self.register.index_of(config).ok().and_then(|i| self.position(i)).is_some()
    }

    /// Scatters physical-basis amplitudes into a full-register vector.
    pub fn embed(&self, coeffs: &[C64]) -> Vec<C64> {
        let mut full = vec![C64::new(0.0, 0.0); self.register.total_dim()];
        for (&i, &c) in self.indices.iter().zip(coeffs) {
            full[i] = c;
        }
        full
    }

    /// Gathers the physical components of a full-register vector.
    pub fn restrict(&self, amps: &[C64]) -> Vec<C64> {
        self.indices.iter().map(|&i| amps[i]).collect()
    }

    /// Zeroes every unphysical amplitude in place and returns the kept norm squared.
    pub fn project_in_place(&self, amps: &mut [C64]) -> f64 {
        let kept = self.restrict(amps);
        amps.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
        let mut norm = 0.0;
        for (&i, c) in self.indices.iter().zip(kept) {
            amps[i] = c;
            norm += c.norm_sqr();
        }
        norm
    }

    /// Weight of `amps` outside the physical subspace.
    pub fn leakage(&self, amps: &[C64]) -> f64 {
        let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let kept: f64 = self.indices.iter().map(|&i| amps[i].norm_sqr()).sum();
        (total - kept).max(0.0)
    }
}

/// Register digits for a flux sequence (simulation frame).
pub fn config_from_fluxes(model: &LatticeModel, fluxes: &[i8]) -> Result<BasisConfig> {
    if fluxes.len() != model.links() {
        return Err(Error::DimensionMismatch(format!("{} fluxes for {} links", fluxes.len(), model.links())));
    }
    if let Some(&m) = fluxes.iter().find(|m| !(-1..=1).contains(*m)) {
        return Err(Error::InvalidArgument(format!("flux {m} outside [-1, 1]")));
    }
    let occupations = occupations(fluxes);
    if let Some(j) = occupations.iter().position(|n| !(0..=1).contains(n)) {
        return Err(Error::GaussViolation(format!("site {j} would hold occupation {}", occupations[j])));
    }
    let digits = match model.formulation {
        Formulation::IntegratedOut => fluxes.iter().map(|&m| SpinOne::level(m)).collect(),
        Formulation::Matterful => {
            let mut d = Vec::with_capacity(2 * model.l - 1);
            for j in 0..model.l {
                d.push(if occupations[j] == 1 { 0 } else { 1 });
                if j < fluxes.len() {
                    d.push(SpinOne::level(fluxes[j]));
                }
            }
            d
        }
    };
    Ok(BasisConfig::new(digits))
}

/// `n_j = m_{j-1} + m_j` with zero boundary flux.
pub fn occupations(fluxes: &[i8]) -> Vec<i8> {
    let l = fluxes.len() + 1;
    (0..l)
        .map(|j| {
            let left = if j > 0 { fluxes[j - 1] } else { 0 };
            let right = if j < fluxes.len() { fluxes[j] } else { 0 };
            left + right
        })
        .collect()
}

/// Enumerates all configurations obeying Gauss's law at every site.
pub fn enumerate_physical(model: &LatticeModel) -> Result<PhysicalSubspace> {
    model.validate()?;
    if model.l > MAX_ENUMERATE_L {
        return Err(Error::BudgetExceeded(format!("enumeration limited to L <= {MAX_ENUMERATE_L}")));
    }
    let register = Arc::new(model.register()?);
    let links = model.links();
    let mut fluxes_all = Vec::new();
    let mut current = Vec::with_capacity(links);
    // Depth-first over links in level order; a prefix is pruned as soon as
    // the site to its left is overfilled or negative.
    fn dfs(current: &mut Vec<i8>, links: usize, out: &mut Vec<Vec<i8>>) {
        let j = current.len();
        if j == links {
            let n_last = current[links - 1];
            if (0..=1).contains(&n_last) {
                out.push(current.clone());
            }
            return;
        }
        let left = if j > 0 { current[j - 1] } else { 0 };
        for level in 0..3 {
            let m = 1 - level as i8;
            if (0..=1).contains(&(left + m)) {
                current.push(m);
                dfs(current, links, out);
                current.pop();
            }
        }
    }
    dfs(&mut current, links, &mut fluxes_all);

    let mut entries = Vec::with_capacity(fluxes_all.len());
    for f in fluxes_all {
        let config = config_from_fluxes(model, &f)?;
        let idx = register.index_of(&config)?;
        entries.push((idx, config, f));
    }
    entries.sort_by_key(|e| e.0);
    if entries.len() > MAX_AMPLITUDES {
        return Err(Error::BudgetExceeded("physical subspace too large".into()));
    }
    let mut configs = Vec::with_capacity(entries.len());
    let mut indices = Vec::with_capacity(entries.len());
    let mut fluxes = Vec::with_capacity(entries.len());
    let mut lookup = HashMap::with_capacity(entries.len());
    for (k, (idx, c, f)) in entries.into_iter().enumerate() {
        lookup.insert(idx, k);
        indices.push(idx);
        configs.push(c);
        fluxes.push(f);
    }
    Ok(PhysicalSubspace { register, formulation: model.formulation, configs, indices, fluxes, lookup })
}

/// Charges `rho_j = (-1)^j (m_{j-1} + m_j)` from simulation-frame fluxes.
pub fn reconstruct_charge(fluxes: &[f64]) -> Vec<f64> {
    let l = fluxes.len() + 1;
    (0..l)
        .map(|j| {
            let left = if j > 0 { fluxes[j - 1] } else { 0.0 };
            let right = if j + 1 < l { fluxes[j] } else { 0.0 };
            stagger(j) * (left + right)
        })
        .collect()
}

/// Charges from matter occupations `n_j`, i.e. `rho_j = (-1)^j n_j`.
pub fn charge_from_occupation(occupations: &[f64]) -> Vec<f64> {
    occupations.iter().enumerate().map(|(j, n)| stagger(j) * n).collect()
}

/// Original-frame flux `E_j = (-1)^j m_j`.
pub fn original_frame_flux(fluxes: &[f64]) -> Vec<f64> {
    fluxes.iter().enumerate().map(|(j, m)| stagger(j) * m).collect()
}

/// Charges from original-frame fluxes via `rho_j = E_j - E_{j-1}`.
pub fn charge_from_original_flux(flux: &[f64]) -> Vec<f64> {
    let l = flux.len() + 1;
    (0..l)
        .map(|j| {
            let left = if j > 0 { flux[j - 1] } else { 0.0 };
            let right = if j + 1 < l { flux[j] } else { 0.0 };
            right - left
        })
        .collect()
}

fn stagger(j: usize) -> f64 {
    if j % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Register role of a qudit, for labelling outputs.
pub fn describe(reg: &QuditRegister, q: usize) -> Role {
    reg.roles()[q]
}
