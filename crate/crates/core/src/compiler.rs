//! Trotter circuits for both formulations.
//!
//! All gate lists are in time order: the first gate acts first.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{GateKind, GateOp, NoiseClass, Pauli};
use crate::hilbert::{LocalOp, QuditRegister, Role};
use crate::linalg::{CMatrix, C64};
use crate::model::{Formulation, LatticeModel};

/// How the first-order minimal-coupling layer is ordered inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinOrdering {
    /// `prod_j U_j(T)` with `j` ascending. Only first order overall.
    Ascending,
    /// `E(T/2) O(T) E(T/2)` over even and odd links.
    #[default]
    EvenOddSymmetric,
}

/// Native entangler of the matterful circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entangler {
    #[default]
    Ms,
    Rzz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompileOptions {
    pub ordering: MinOrdering,
    pub entangler: Entangler,
}

/// Links whose minimal-coupling term is dropped for the first `off_step` steps.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WallSchedule {
    pub walls: Vec<usize>,
    pub off_step: usize,
}

impl WallSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(walls: Vec<usize>, off_step: usize) -> Self {
        Self { walls, off_step }
    }

    pub fn active(&self, step: usize) -> bool {
        !self.walls.is_empty() && step < self.off_step
    }

    pub fn blocks(&self, step: usize, link: usize) -> bool {
        self.active(step) && self.walls.contains(&link)
    }
}

/// Controlled `R_x^{ab}(angle)` on `target` when `control` sits in `c`.
///
/// With `H^{ab} = (sigma^x + sigma^z)/sqrt2` on the subspace the six gates
/// compose exactly (no global phase) to the controlled rotation.
pub fn compile_crx(control: usize, target: usize, c: usize, a: usize, b: usize, angle: f64) -> Vec<GateOp> {
    vec![
        GateOp::h(target, a, b),
        GateOp::rz(target, a, b, angle / 2.0),
        GateOp::cx(control, target, c, a, b),
        GateOp::rz(target, a, b, -angle / 2.0),
        GateOp::cx(control, target, c, a, b),
        GateOp::h(target, a, b),
    ]
}

fn min_angle(model: &LatticeModel, t: f64) -> f64 {
    // exp(-i sqrt2 kappa t sigma^x) = R_x(2 sqrt2 kappa t)
    2.0 * std::f64::consts::SQRT_2 * model.kappa * t
}

fn require(model: &LatticeModel, f: Formulation) -> Result<()> {
    if model.formulation == f {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("expected the {f} formulation, got {}", model.formulation)))
    }
}

/// `exp(-i t H^min_j)` for a bulk link, `1 <= j <= L-3`.
pub fn compile_umin_link(j: usize, model: &LatticeModel, t: f64) -> Result<Vec<GateOp>> {
    require(model, Formulation::IntegratedOut)?;
    if j == 0 || j + 2 >= model.l {
        return Err(Error::InvalidArgument(format!("link {j} is not a bulk link for L = {}", model.l)));
    }
    let angle = min_angle(model, t);
    let (left, mid, right) = (j - 1, j, j + 1);
    let mut g = Vec::with_capacity(16);
    g.push(GateOp::cx(left, right, 0, 0, 3));
    g.extend(compile_crx(right, mid, 3, 1, 2, angle));
    g.push(GateOp::cx(left, right, 0, 0, 3));
    g.push(GateOp::cx(left, right, 1, 1, 3));
    g.extend(compile_crx(right, mid, 3, 0, 1, angle));
    g.push(GateOp::cx(left, right, 1, 1, 3));
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// `exp(-i t H^min)` for an edge link. For `L = 2` the single link has no
/// neighbour and the block degenerates to a bare rotation.
pub fn compile_umin_edge(side: Side, model: &LatticeModel, t: f64) -> Result<Vec<GateOp>> {
    require(model, Formulation::IntegratedOut)?;
    let angle = min_angle(model, t);
    let last = model.l - 2;
    if model.l == 2 {
        return Ok(vec![GateOp::rx(0, 0, 1, angle)]);
    }
    Ok(match side {
        Side::Left => compile_crx(1, 0, 1, 0, 1, angle),
        Side::Right => compile_crx(last - 1, last, 1, 0, 1, angle),
    })
}

fn compile_umin_integrated(j: usize, model: &LatticeModel, t: f64) -> Result<Vec<GateOp>> {
    if j == 0 {
        compile_umin_edge(Side::Left, model, t)
    } else if j == model.l - 2 {
        compile_umin_edge(Side::Right, model, t)
    } else {
        compile_umin_link(j, model, t)
    }
}

/// `exp(-i tau H^sg)` as virtual phase gates.
pub fn compile_usg(model: &LatticeModel, tau: f64) -> Vec<GateOp> {
    let mut g = Vec::new();
    let mut push = |q: usize, a: usize, phi: f64| {
        if phi != 0.0 {
            g.push(GateOp::vrz(q, a, phi));
        }
    };
    let e = model.g * model.g / 2.0;
    match model.formulation {
        Formulation::IntegratedOut => {
            for j in 0..model.links() {
                push(j, 0, tau * (2.0 * model.mu + e));
                push(j, 2, tau * (e - 2.0 * model.mu));
            }
        }
        Formulation::Matterful => {
            for j in 0..model.l {
                push(2 * j, 0, tau * model.mu / 2.0);
                push(2 * j, 1, -tau * model.mu / 2.0);
                if j + 1 < model.l {
                    push(2 * j + 1, 0, tau * e);
                    push(2 * j + 1, 2, tau * e);
                }
            }
        }
    }
    g
}

/// Single-qudit gate mapping `sigma^x` to `sigma^axis` on levels 0, 1 by
/// conjugation `V sigma^x V^dag`.
fn from_x(q: usize, axis: Pauli, angle_sign: f64) -> Option<GateOp> {
    use std::f64::consts::FRAC_PI_2;
    match axis {
        Pauli::X => None,
        Pauli::Z => Some(GateOp::ry(q, 0, 1, -FRAC_PI_2 * angle_sign)),
        Pauli::Y => Some(GateOp::rz(q, 0, 1, FRAC_PI_2 * angle_sign)),
    }
}

/// Same, starting from `sigma^z`.
fn from_z(q: usize, axis: Pauli, angle_sign: f64) -> Option<GateOp> {
    use std::f64::consts::FRAC_PI_2;
    match axis {
        Pauli::Z => None,
        Pauli::X => Some(GateOp::ry(q, 0, 1, FRAC_PI_2 * angle_sign)),
        Pauli::Y => Some(GateOp::rx(q, 0, 1, -FRAC_PI_2 * angle_sign)),
    }
}

/// `M^{mu nu}(alpha)` on (qutrit, qubit) lowered to the native entangler.
///
/// With the RZZ entangler the qutrit phase `exp(i alpha/4 P^{01})` is
/// dropped; it commutes with every other factor of `U^min` and the angles
/// of each `U^min` sum to zero, so the composition is unchanged.
fn lower_ms(qutrit: usize, qubit: usize, mu: Pauli, nu: Pauli, alpha: f64, entangler: Entangler) -> Vec<GateOp> {
    let basis = match entangler {
        Entangler::Ms => from_x,
        Entangler::Rzz => from_z,
    };
    let mut g = Vec::with_capacity(5);
    g.extend(basis(qutrit, mu, -1.0));
    g.extend(basis(qubit, nu, -1.0));
    g.push(match entangler {
        Entangler::Ms => GateOp::ms(qutrit, qubit, Pauli::X, Pauli::X, alpha),
        Entangler::Rzz => GateOp::rzz(qutrit, qubit, alpha),
    });
    g.extend(basis(qutrit, mu, 1.0));
    g.extend(basis(qubit, nu, 1.0));
    g
}

/// Twelve-MS block `U^min(theta)` as an operator product, leftmost factor
/// last in time.
fn umin_factors(theta: f64) -> [(Pauli, Pauli, usize, f64); 12] {
    use std::f64::consts::FRAC_PI_2 as H;
    use Pauli::*;
    [
        (Z, Y, 0, -H),
        (X, X, 1, theta),
        (Z, Y, 0, H),
        (Y, Y, 0, -H),
        (Z, Y, 1, theta),
        (Y, Y, 0, H),
        (Y, X, 0, -H),
        (Z, X, 1, -theta),
        (Y, X, 0, H),
        (X, X, 0, -H),
        (Z, Y, 1, -theta),
        (X, X, 0, H),
    ]
}

fn umin_gates(j: usize, theta: f64, entangler: Entangler) -> Vec<GateOp> {
    let qutrit = 2 * j + 1;
    let qubits = [2 * j, 2 * j + 2];
    umin_factors(theta)
        .iter()
        .rev()
        .flat_map(|&(mu, nu, s, alpha)| lower_ms(qutrit, qubits[s], mu, nu, alpha, entangler))
        .collect()
}

/// `exp(-i t H^min_j)` on (qubit j, link j, qubit j+1) as
/// `U(theta) P U(theta) P^dag` with `theta = t kappa / sqrt2`.
pub fn compile_umin_matterful(j: usize, model: &LatticeModel, t: f64, entangler: Entangler) -> Result<Vec<GateOp>> {
    require(model, Formulation::Matterful)?;
    if j + 1 >= model.l {
        return Err(Error::InvalidArgument(format!("link {j} outside chain of {}", model.l)));
    }
    use std::f64::consts::PI;
    let theta = t * model.kappa / std::f64::consts::SQRT_2;
    let q = 2 * j + 1;
    let u = umin_gates(j, theta, entangler);
    let mut g = Vec::with_capacity(2 * u.len() + 4);
    // P^dag = R_Y^{12}(-pi) R_Y^{01}(-pi)
    g.push(GateOp::ry(q, 0, 1, -PI));
    g.push(GateOp::ry(q, 1, 2, -PI));
    g.extend(u.iter().cloned());
    // P = R_Y^{01}(pi) R_Y^{12}(pi)
    g.push(GateOp::ry(q, 1, 2, PI));
    g.push(GateOp::ry(q, 0, 1, PI));
    g.extend(u);
    Ok(g)
}

/// Minimal-coupling block of one link for either formulation.
pub fn compile_umin(j: usize, model: &LatticeModel, t: f64, opts: &CompileOptions) -> Result<Vec<GateOp>> {
    match model.formulation {
        Formulation::IntegratedOut => compile_umin_integrated(j, model, t),
        Formulation::Matterful => compile_umin_matterful(j, model, t, opts.entangler),
    }
}

/// One first-order minimal-coupling layer over the given links.
pub fn compile_min_layer(model: &LatticeModel, t: f64, links: &[usize], opts: &CompileOptions) -> Result<Vec<GateOp>> {
    let mut g = Vec::new();
    match opts.ordering {
        MinOrdering::Ascending => {
            for &j in links {
                g.extend(compile_umin(j, model, t, opts)?);
            }
        }
        MinOrdering::EvenOddSymmetric => {
            let even: Vec<usize> = links.iter().copied().filter(|j| j % 2 == 0).collect();
            let odd: Vec<usize> = links.iter().copied().filter(|j| j % 2 == 1).collect();
            for &j in &even {
                g.extend(compile_umin(j, model, t / 2.0, opts)?);
            }
            for &j in &odd {
                g.extend(compile_umin(j, model, t, opts)?);
            }
            for &j in &even {
                g.extend(compile_umin(j, model, t / 2.0, opts)?);
            }
        }
    }
    Ok(g)
}

/// A second-order Trotter circuit. Steps before `walls.off_step` use the
/// walled body; all later steps use the free body. Each step is
/// `S(T/2) M S(T/2)` with `S` the phase layer and `M` the coupling layer.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub register: Arc<QuditRegister>,
    pub model: LatticeModel,
    pub step_size: f64,
    pub n_steps: usize,
    pub walls: WallSchedule,
    pub options: CompileOptions,
    pub sg_half: Vec<GateOp>,
    pub min_walled: Vec<GateOp>,
    pub min_free: Vec<GateOp>,
}

pub fn assemble_trotter(
    model: &LatticeModel,
    t: f64,
    n: usize,
    walls: &WallSchedule,
    opts: &CompileOptions,
) -> Result<Circuit> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size {t} must be positive")));
    }
    let links: Vec<usize> = (0..model.links()).collect();
    if let Some(w) = walls.walls.iter().find(|&&w| w >= model.links()) {
        return Err(Error::InvalidArgument(format!("wall link {w} outside chain")));
    }
    let open: Vec<usize> = links.iter().copied().filter(|j| !walls.walls.contains(j)).collect();
    let register = Arc::new(model.register()?);
    let min_free = compile_min_layer(model, t, &links, opts)?;
    let min_walled = if walls.walls.is_empty() { min_free.clone() } else { compile_min_layer(model, t, &open, opts)? };
    let circuit = Circuit {
        register,
        model: *model,
        step_size: t,
        n_steps: n,
        walls: walls.clone(),
        options: *opts,
        sg_half: compile_usg(model, t / 2.0),
        min_walled,
        min_free,
    };
    circuit.validate()?;
    Ok(circuit)
}

impl Circuit {
    pub fn validate(&self) -> Result<()> {
        for g in self.sg_half.iter().chain(&self.min_walled).chain(&self.min_free) {
            if let Some(&q) = g.targets.iter().find(|&&q| q >= self.register.len()) {
                return Err(Error::InvalidGate(format!("{g}: target {q} outside register")));
            }
            let dims: Vec<usize> = g.targets.iter().map(|&q| self.register.dim(q)).collect();
            g.validate(&dims)?;
        }
        Ok(())
    }

    pub fn walled(&self, step: usize) -> bool {
        self.walls.active(step)
    }

    pub fn min_layer(&self, step: usize) -> &[GateOp] {
        if self.walled(step) {
            &self.min_walled
        } else {
            &self.min_free
        }
    }

    /// Gates of one full step.
    pub fn step_gates(&self, step: usize) -> Vec<GateOp> {
        let mut g = self.sg_half.clone();
        g.extend(self.min_layer(step).iter().cloned());
        g.extend(self.sg_half.iter().cloned());
        g
    }

    /// The whole circuit; with `merge_sg` adjacent phase half-steps are
    /// fused into single full-step phases.
    pub fn flat_gates(&self, merge_sg: bool) -> Vec<GateOp> {
        if !merge_sg {
            return (0..self.n_steps).flat_map(|s| self.step_gates(s)).collect();
        }
        let full = compile_usg(&self.model, self.step_size);
        let mut g = Vec::new();
        for s in 0..self.n_steps {
            g.extend(if s == 0 { self.sg_half.iter() } else { full.iter() }.cloned());
            g.extend(self.min_layer(s).iter().cloned());
        }
        if self.n_steps > 0 {
            g.extend(self.sg_half.iter().cloned());
        }
        g
    }

    pub fn counts(&self) -> GateCounts {
        (0..self.n_steps).fold(GateCounts::default(), |acc, s| acc + gate_count(&self.step_gates(s)))
    }

    /// Text dump; [`Circuit::parse`] reads it back.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let dims: Vec<String> = self.register.dims().iter().map(|d| d.to_string()).collect();
        let walls: Vec<String> = self.walls.walls.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "# qlm-circuit 1");
        let _ = writeln!(out, "register {}", dims.join(","));
        let _ = writeln!(
            out,
            "model L={} kappa={:?} mu={:?} g={:?} formulation={}",
            self.model.l, self.model.kappa, self.model.mu, self.model.g, self.model.formulation
        );
        let _ = writeln!(out, "steps n={} T={:?}", self.n_steps, self.step_size);
        let _ = writeln!(out, "walls links={} off_step={}", walls.join(","), self.walls.off_step);
        let _ = writeln!(
            out,
            "options ordering={} entangler={}",
            serde_json::to_string(&self.options.ordering).unwrap().trim_matches('"'),
            serde_json::to_string(&self.options.entangler).unwrap().trim_matches('"'),
        );
        for (name, gates) in [("sg_half", &self.sg_half), ("min_walled", &self.min_walled), ("min_free", &self.min_free)] {
            let _ = writeln!(out, "[{name}]");
            for g in gates {
                let _ = writeln!(out, "{g}");
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Circuit> {
        let mut dims: Option<Vec<usize>> = None;
        let mut model: Option<LatticeModel> = None;
        let mut steps: Option<(usize, f64)> = None;
        let mut walls = WallSchedule::none();
        let mut options = CompileOptions::default();
        let mut sections: [Vec<GateOp>; 3] = Default::default();
        let mut current: Option<usize> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let perr = |msg: String| Error::Parse { line: n + 1, msg };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = Some(match name {
                    "sg_half" => 0,
                    "min_walled" => 1,
                    "min_free" => 2,
                    _ => return Err(perr(format!("unknown section '{name}'"))),
                });
                continue;
            }
            if let Some(k) = current {
                sections[k].push(line.parse().map_err(|e: Error| perr(e.to_string()))?);
                continue;
            }
            let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
            let kv = |key: &str| -> Result<&str> {
                rest.split_whitespace()
                    .find_map(|w| w.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                    .ok_or_else(|| perr(format!("missing {key}")))
            };
            let num = |key: &str| -> Result<f64> { kv(key)?.parse().map_err(|_| perr(format!("bad {key}"))) };
            let int = |key: &str| -> Result<usize> { kv(key)?.parse().map_err(|_| perr(format!("bad {key}"))) };
            match head {
                "register" => {
                    dims = Some(
                        rest.trim()
                            .split(',')
                            .map(|d| d.parse().map_err(|_| perr(format!("bad dimension '{d}'"))))
                            .collect::<Result<_>>()?,
                    )
                }
                "model" => {
                    model = Some(LatticeModel::new(int("L")?, num("kappa")?, num("mu")?, num("g")?, kv("formulation")?.parse()?)?)
                }
                "steps" => steps = Some((int("n")?, num("T")?)),
                "walls" => {
                    let links = kv("links")?;
                    walls.walls = if links.is_empty() {
                        Vec::new()
                    } else {
                        links.split(',').map(|w| w.parse().map_err(|_| perr(format!("bad wall '{w}'")))).collect::<Result<_>>()?
                    };
                    walls.off_step = int("off_step")?;
                }
                "options" => {
                    options.ordering = serde_json::from_str(&format!("\"{}\"", kv("ordering")?))
                        .map_err(|_| perr("bad ordering".into()))?;
                    options.entangler = serde_json::from_str(&format!("\"{}\"", kv("entangler")?))
                        .map_err(|_| perr("bad entangler".into()))?;
                }
                other => return Err(perr(format!("unknown header '{other}'"))),
            }
        }
        let model = model.ok_or_else(|| Error::Parse { line: 0, msg: "missing model line".into() })?;
        let (n_steps, step_size) = steps.ok_or_else(|| Error::Parse { line: 0, msg: "missing steps line".into() })?;
        let register = Arc::new(model.register()?);
        if let Some(d) = dims {
            if d != register.dims() {
                return Err(Error::Parse { line: 0, msg: format!("register {d:?} does not match the model") });
            }
        }
        let [sg_half, min_walled, min_free] = sections;
        let c = Circuit { register, model, step_size, n_steps, walls, options, sg_half, min_walled, min_free };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub ms: usize,
    pub cx: usize,
    pub one_body: usize,
    pub virtual_: usize,
}

impl GateCounts {
    pub fn two_body(&self) -> usize {
        self.ms + self.cx
    }
}

impl std::ops::Add for GateCounts {
    type Output = GateCounts;
    fn add(self, o: GateCounts) -> GateCounts {
        GateCounts {
            ms: self.ms + o.ms,
            cx: self.cx + o.cx,
            one_body: self.one_body + o.one_body,
            virtual_: self.virtual_ + o.virtual_,
        }
    }
}

impl fmt::Display for GateCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ms={} cx={} one_body={} virtual={}", self.ms, self.cx, self.one_body, self.virtual_)
    }
}

pub fn gate_count(gates: &[GateOp]) -> GateCounts {
    let mut c = GateCounts::default();
    for g in gates {
        match g.noise_class() {
            NoiseClass::Ms => c.ms += 1,
            NoiseClass::Cx => c.cx += 1,
            NoiseClass::OneBody => c.one_body += 1,
            NoiseClass::Virtual => c.virtual_ += 1,
        }
    }
    c
}

/// Counts of one first-order coupling layer over every link, the unit in
/// which the two formulations are compared.
pub fn layer_counts(model: &LatticeModel, opts: &CompileOptions) -> Result<GateCounts> {
    let links: Vec<usize> = (0..model.links()).collect();
    let ascending = CompileOptions { ordering: MinOrdering::Ascending, ..*opts };
    Ok(gate_count(&compile_min_layer(model, 1.0, &links, &ascending)?))
}

/// Counts of one unwalled Trotter step, without building a register, so
/// sizes beyond the amplitude budget can still be counted.
pub fn step_counts(model: &LatticeModel, t: f64, opts: &CompileOptions) -> Result<GateCounts> {
    let links: Vec<usize> = (0..model.links()).collect();
    let sg = gate_count(&compile_usg(model, t / 2.0));
    Ok(sg + gate_count(&compile_min_layer(model, t, &links, opts)?) + sg)
}

/// Dense unitary of a gate list on a small register, by columns.
pub fn unitary_of(gates: &[GateOp], reg: &QuditRegister) -> Result<CMatrix> {
    let n = reg.total_dim();
    let ops = gates
        .iter()
        .map(|g| {
            let dims: Vec<usize> = g.targets.iter().map(|&q| reg.dim(q)).collect();
            LocalOp::new(g.matrix(&dims)?, &g.targets, reg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut u = CMatrix::zeros(n, n);
    let mut col = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        col.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        col[k] = C64::new(1.0, 0.0);
        for op in &ops {
            op.apply(&mut col);
        }
        for (r, c) in col.iter().enumerate() {
            u[(r, k)] = *c;
        }
    }
    Ok(u)
}

/// A register holding only the given qudits, in order, for block-level checks.
pub fn sub_register(dims: &[usize]) -> Result<QuditRegister> {
    QuditRegister::new(dims.to_vec(), (0..dims.len()).map(Role::Link).collect())
}

impl FromStr for MinOrdering {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_str(&format!("\"{s}\"")).map_err(|_| Error::InvalidArgument(format!("unknown ordering '{s}'")))
    }
}

impl FromStr for Entangler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_str(&format!("\"{s}\"")).map_err(|_| Error::InvalidArgument(format!("unknown entangler '{s}'")))
    }
}

/// Rewrites every gate target through `map`.
pub fn relabel(gates: &[GateOp], map: impl Fn(usize) -> usize) -> Vec<GateOp> {
    gates
        .iter()
        .map(|g| GateOp::new(g.kind, g.targets.iter().map(|&q| map(q)).collect()))
        .collect()
}

pub fn is_entangling(g: &GateOp) -> bool {
    matches!(g.kind, GateKind::Cx { .. } | GateKind::Ms { .. } | GateKind::Rzz { .. } | GateKind::Crot { .. })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm_hermitian, identity, phase_aligned_distance};
    use crate::model::build_terms;

    fn io(l: usize) -> LatticeModel {
        LatticeModel::new(l, 1.0, 1.0, 3.0, Formulation::IntegratedOut).unwrap()
    }

    #[test]
    fn crx_zero_angle_is_identity() {
        let reg = sub_register(&[4, 3]).unwrap();
        let u = unitary_of(&compile_crx(0, 1, 3, 0, 2, 0.0), &reg).unwrap();
        assert!(phase_aligned_distance(&u, &identity(12)) < 1e-12);
    }

    #[test]
    fn crx_pi_flips_target() {
        let reg = sub_register(&[4, 3]).unwrap();
        let u = unitary_of(&compile_crx(0, 1, 3, 0, 2, std::f64::consts::PI), &reg).unwrap();
        // |3,0> -> phase |3,2>
        assert!((u[(9 + 2, 9)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_crx_counts() {
        let c = gate_count(&compile_crx(0, 1, 3, 0, 1, 0.3));
        assert_eq!((c.cx, c.one_body, c.ms), (2, 4, 0));
        assert_eq!(gate_count(&[]), GateCounts::default());
    }

    #[test]
    fn bulk_block_matches_pxp_exponential() {
        let m = io(5);
        let t = 0.41;
        let reg = sub_register(&[4, 4, 4]).unwrap();
        let gates = relabel(&compile_umin_link(2, &m, t).unwrap(), |q| q - 1);
        assert_eq!(gate_count(&gates).cx, 8);
        let u = unitary_of(&gates, &reg).unwrap();
        let h = build_terms(&m).unwrap().min_on_link(2).unwrap().matrix.clone();
        let target = expm_hermitian(&h, t);
        // compare on the |3>-free subspace
        let free: Vec<usize> = (0..64).filter(|&i| i / 16 != 3 && (i / 4) % 4 != 3 && i % 4 != 3).collect();
        let pick = |m: &CMatrix| CMatrix::from_fn(free.len(), free.len(), |a, b| m[(free[a], free[b])]);
        assert!(phase_aligned_distance(&pick(&u), &pick(&target)) < 1e-10);
    }

    #[test]
    fn matterful_block_matches_exponential() {
        let m = LatticeModel::new(2, 1.0, 0.0, 0.0, Formulation::Matterful).unwrap();
        let reg = m.register().unwrap();
        let h = build_terms(&m).unwrap().min[0].matrix.clone();
        for entangler in [Entangler::Ms, Entangler::Rzz] {
            let gates = compile_umin_matterful(0, &m, 0.63, entangler).unwrap();
            let u = unitary_of(&gates, &reg).unwrap();
            assert!(phase_aligned_distance(&u, &expm_hermitian(&h, 0.63)) < 1e-10, "{entangler:?}");
        }
        let c = gate_count(&compile_umin_matterful(0, &m, 0.63, Entangler::Ms).unwrap());
        assert_eq!((c.ms, c.one_body), (24, 64));
    }

    #[test]
    fn matterful_phase_layer_single_link() {
        let m = LatticeModel::new(2, 1.0, 1.3, 0.7, Formulation::Matterful).unwrap();
        let gates = compile_usg(&m, 0.125);
        assert_eq!(gates.len(), 6);
        let reg = m.register().unwrap();
        let u = unitary_of(&gates, &reg).unwrap();
        let h: CMatrix = build_terms(&m).unwrap().sg.iter().map(|t| t.full_matrix(&reg)).sum();
        assert!(phase_aligned_distance(&u, &expm_hermitian(&h, 0.125)) < 1e-12);
        let zero = LatticeModel { mu: 0.0, g: 0.0, ..m };
        assert!(compile_usg(&zero, 0.125).is_empty());
    }

    #[test]
    fn layer_counts_integrated_out() {
        for l in 3..10 {
            let c = layer_counts(&io(l), &CompileOptions::default()).unwrap();
            assert_eq!(c.cx, 8 * (l - 3) + 4);
        }
    }

    #[test]
    fn empty_circuit() {
        let c = assemble_trotter(&io(4), 0.25, 0, &WallSchedule::none(), &CompileOptions::default()).unwrap();
        assert!(c.flat_gates(true).is_empty());
        assert_eq!(c.counts(), GateCounts::default());
    }

    #[test]
    fn merged_phases_match_unmerged() {
        let m = io(4);
        let c = assemble_trotter(&m, 0.3, 3, &WallSchedule::new(vec![0], 1), &CompileOptions::default()).unwrap();
        let reg = m.register().unwrap();
        let a = unitary_of(&c.flat_gates(false), &reg).unwrap();
        let b = unitary_of(&c.flat_gates(true), &reg).unwrap();
        assert!(phase_aligned_distance(&a, &b) < 1e-12);
    }

    #[test]
    fn dump_round_trip() {
        let m = LatticeModel::new(3, 1.0, 0.5, 2.0, Formulation::Matterful).unwrap();
        let opts = CompileOptions { ordering: MinOrdering::Ascending, entangler: Entangler::Rzz };
        let c = assemble_trotter(&m, 0.2, 5, &WallSchedule::new(vec![1], 2), &opts).unwrap();
        let back = Circuit::parse(&c.dump()).unwrap();
        assert_eq!(back.dump(), c.dump());
        assert_eq!(back.flat_gates(false), c.flat_gates(false));
        assert!(Circuit::parse("model L=3\n").is_err());
    }

    #[test]
    fn edge_block_rotates_only_when_neighbour_empty() {
        let m = io(4);
        let t = 0.37;
        let reg = sub_register(&[3, 4]).unwrap();
        let u = unitary_of(&compile_umin_edge(Side::Left, &m, t).unwrap(), &reg).unwrap();
        let h = build_terms(&m).unwrap().min_on_link(0).unwrap().matrix.clone();
        let free: Vec<usize> = (0..12).filter(|i| i % 4 != 3).collect();
        let pick = |m: &CMatrix| CMatrix::from_fn(free.len(), free.len(), |a, b| m[(free[a], free[b])]);
        assert!(phase_aligned_distance(&pick(&u), &pick(&expm_hermitian(&h, t))) < 1e-10);
    }
}
