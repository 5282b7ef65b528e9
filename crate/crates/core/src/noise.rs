//! Gate noise, trajectory sampling and the physical-subspace Kraus map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{GateOp, NoiseClass};
use crate::hilbert::{LocalOp, PureState, QuditRegister};
use crate::linalg::{max_abs, CMatrix, C64};
use crate::model::PhysicalSubspace;
use crate::observables::{moments, moments_physical, Frame};
use crate::program::{CompiledCircuit, Insertion, Program};

/// Post-selection norm guard.
pub const DEFAULT_ETA: f64 = 1e-10;
pub const DEFAULT_SHOTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub p_one_body: f64,
    pub p_cx: f64,
    pub p_ms: f64,
    /// Chance that an event depolarizes rather than dephases.
    pub depolarize_fraction: f64,
}

impl NoiseModel {
    /// Trapped-ion rates scaled by `10^-alpha`.
    pub fn trapped_ion(alpha: f64) -> Self {
        let s = 10f64.powf(-alpha);
        Self { p_one_body: 3e-5 * s, p_cx: 2e-3 * s, p_ms: 5e-3 * s, depolarize_fraction: 0.5 }
    }

    pub fn none() -> Self {
        Self { p_one_body: 0.0, p_cx: 0.0, p_ms: 0.0, depolarize_fraction: 0.5 }
    }

    pub fn uniform(p: f64) -> Self {
        Self { p_one_body: p, p_cx: p, p_ms: p, depolarize_fraction: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if [self.p_one_body, self.p_cx, self.p_ms, self.depolarize_fraction].into_iter().all(ok) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("noise probabilities outside [0, 1]: {self:?}")))
        }
    }

    pub fn rate(&self, class: NoiseClass) -> f64 {
        match class {
            NoiseClass::OneBody => self.p_one_body,
            NoiseClass::Cx => self.p_cx,
            NoiseClass::Ms => self.p_ms,
            NoiseClass::Virtual => 0.0,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.p_one_body == 0.0 && self.p_cx == 0.0 && self.p_ms == 0.0
    }
}

/// Generalized Pauli error `X^x Z^z`; dephasing has `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorEvent {
    /// Index of the gate the event follows.
    pub gate: usize,
    pub qudit: usize,
    pub x: usize,
    pub z: usize,
    pub depolarizing: bool,
}

/// `X^x Z^z` on `d` levels, `X|k> = |k+1>`, `Z|k> = w^k |k>`.
pub fn weyl(d: usize, x: usize, z: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    let w = 2.0 * std::f64::consts::PI / d as f64;
    for k in 0..d {
        m[((k + x) % d, k)] = C64::from_polar(1.0, w * ((k * z) % d) as f64);
    }
    m
}

impl ErrorEvent {
    pub fn matrix(&self, d: usize) -> CMatrix {
        weyl(d, self.x, self.z)
    }

    pub fn op(&self, reg: &QuditRegister) -> Result<LocalOp> {
        LocalOp::new(self.matrix(reg.dim(self.qudit)), &[self.qudit], reg)
    }
}

/// Draws the error (if any) following gate `index`.
pub fn sample_error<R: Rng>(index: usize, gate: &GateOp, noise: &NoiseModel, reg: &QuditRegister, rng: &mut R) -> Option<ErrorEvent> {
    let p = noise.rate(gate.noise_class());
    if p == 0.0 || rng.gen::<f64>() >= p {
        return None;
    }
    let qudit = gate.targets[rng.gen_range(0..gate.targets.len())];
    let d = reg.dim(qudit);
    let depolarizing = rng.gen::<f64>() < noise.depolarize_fraction;
    let x = if depolarizing { rng.gen_range(0..d) } else { 0 };
    let z = rng.gen_range(0..d);
    Some(ErrorEvent { gate: index, qudit, x, z, depolarizing })
}

pub fn sample_errors<R: Rng>(gates: &[GateOp], noise: &NoiseModel, reg: &QuditRegister, rng: &mut R) -> Vec<ErrorEvent> {
    gates.iter().enumerate().filter_map(|(k, g)| sample_error(k, g, noise, reg, rng)).collect()
}

/// Applies `gate` followed by a sampled error event.
pub fn apply_noisy_gate<R: Rng>(state: &mut PureState, gate: &GateOp, noise: &NoiseModel, rng: &mut R) -> Result<Option<ErrorEvent>> {
    let reg = state.register().clone();
    let dims: Vec<usize> = gate.targets.iter().map(|&q| reg.dim(q)).collect();
    state.apply_matrix(&gate.matrix(&dims)?, &gate.targets)?;
    let event = sample_error(0, gate, noise, &reg, rng);
    if let Some(e) = &event {
        state.apply_matrix(&e.matrix(reg.dim(e.qudit)), &[e.qudit])?;
    }
    Ok(event)
}

/// Applies one step program with sampled errors; returns the event count.
pub fn apply_noisy_program<R: Rng>(program: &Program, amps: &mut [C64], noise: &NoiseModel, rng: &mut R) -> Result<usize> {
    let reg = program.register();
    let events = sample_errors(program.gates(), noise, reg, rng);
    if events.is_empty() {
        program.apply(amps);
        return Ok(0);
    }
    let ins = events.iter().map(|e| Ok(Insertion { after: e.gate, op: e.op(reg)? })).collect::<Result<Vec<_>>>()?;
    program.apply_with(amps, &ins);
    Ok(events.len())
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(mix(master) ^ index)
}

/// Weight outside the physical subspace, relative to the norm.
pub fn leakage_fraction(phys: &PhysicalSubspace, amps: &[C64]) -> f64 {
    let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    phys.leakage(amps) / total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Renormalize every shot after projection; average the survivors.
    #[default]
    Survivors,
    /// Keep shots unnormalized and weight by their survival probability.
    SurvivalWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub shots: usize,
    pub master_seed: u64,
    pub postselect: bool,
    pub weighting: Weighting,
    pub eta: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { shots: DEFAULT_SHOTS, master_seed: 0, postselect: true, weighting: Weighting::Survivors, eta: DEFAULT_ETA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub seed: u64,
    /// Kept norm squared of each projection, relative to the norm before it.
    pub survival: Vec<f64>,
    /// Product of the survivals so far; entry `s` belongs to frame `s`.
    pub weight: Vec<f64>,
    pub frames: Vec<Frame>,
    /// Frame index at which the shot fell below the guard.
    pub discarded_at: Option<usize>,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub frames: Vec<Frame>,
    pub charge_se: Vec<Vec<f64>>,
    pub flux_se: Vec<Vec<f64>>,
    /// Shots contributing to each frame.
    pub kept: Vec<usize>,
    pub discarded: usize,
    pub first_discard: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRun {
    pub shots: Vec<TrajectoryResult>,
    pub ensemble: Ensemble,
}

/// Applies one step program with the given errors spliced in.
fn apply_events(program: &Program, amps: &mut [C64], events: &[ErrorEvent]) -> Result<()> {
    if events.is_empty() {
        program.apply(amps);
        return Ok(());
    }
    let reg = program.register();
    let ins = events.iter().map(|e| Ok(Insertion { after: e.gate, op: e.op(reg)? })).collect::<Result<Vec<_>>>()?;
    program.apply_with(amps, &ins);
    Ok(())
}

/// Every error of one shot, drawn up front; the draws do not depend on the
/// state, so this matches sampling step by step.
fn schedule(compiled: &CompiledCircuit, noise: &NoiseModel, seed: u64) -> Vec<Vec<ErrorEvent>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reg = compiled.register();
    (0..compiled.n_steps()).map(|s| sample_errors(compiled.program(s).gates(), noise, reg, &mut rng)).collect()
}

/// Continues a shot from the ideal state before step `start`.
#[allow(clippy::too_many_arguments)]
fn finish_shot(
    compiled: &CompiledCircuit,
    ideal: &[C64],
    ideal_frames: &[Frame],
    start: usize,
    seed: u64,
    events: &[Vec<ErrorEvent>],
    phys: Option<&PhysicalSubspace>,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryResult> {
    let model = &compiled.circuit.model;
    let reg = compiled.register();
    let mut amps = ideal.to_vec();
    let mut res = TrajectoryResult {
        seed,
        survival: vec![1.0; start],
        weight: vec![1.0; start + 1],
        frames: ideal_frames[..=start].to_vec(),
        discarded_at: None,
        events: 0,
    };
    for (s, step_events) in events.iter().enumerate().skip(start) {
        apply_events(compiled.program(s), &mut amps, step_events)?;
        res.events += step_events.len();
        if step_events.is_empty() {
            // An error-free step is gauge invariant and unitary.
            res.survival.push(1.0);
            res.weight.push(res.weight[s]);
            res.frames.push(moments(model, reg, &amps).frame());
            continue;
        }
        let before: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let after = match (opts.postselect, phys) {
            (true, Some(p)) => p.project_in_place(&mut amps),
            _ => before,
        };
        let survival = if before > 0.0 { after / before } else { 0.0 };
        res.survival.push(survival);
        if after.is_nan() || after < opts.eta * before || after == 0.0 {
            res.discarded_at = Some(s + 1);
            break;
        }
        let scale = 1.0 / after.sqrt();
        amps.iter_mut().for_each(|a| *a *= scale);
        res.weight.push(res.weight[s] * survival);
        res.frames.push(moments(model, reg, &amps).frame());
    }
    Ok(res)
}

/// Monte Carlo unraveling of the noisy circuit. With `postselect` the state
/// is projected onto `phys` after every step that carried an error.
///
/// Shots share the ideal evolution up to their first error.
pub fn run_trajectories(
    compiled: &CompiledCircuit,
    initial: &PureState,
    noise: &NoiseModel,
    phys: Option<&PhysicalSubspace>,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRun> {
    noise.validate()?;
    if opts.shots == 0 {
        return Err(Error::InvalidArgument("at least one shot is required".into()));
    }
    if opts.postselect && phys.is_none() {
        return Err(Error::InvalidArgument("post-selection needs the physical subspace".into()));
    }
    let n = compiled.n_steps();
    let model = &compiled.circuit.model;
    let reg = compiled.register();
    let seeds: Vec<u64> = (0..opts.shots as u64).map(|k| derive_seed(opts.master_seed, k)).collect();
    let schedules: Vec<Vec<Vec<ErrorEvent>>> = seeds.par_iter().map(|&seed| schedule(compiled, noise, seed)).collect();
    let first: Vec<usize> = schedules.iter().map(|sc| sc.iter().position(|e| !e.is_empty()).unwrap_or(n)).collect();

    let mut amps = initial.amplitudes().to_vec();
    let mut ideal_frames = vec![moments(model, reg, &amps).frame()];
    let mut shots: Vec<Option<TrajectoryResult>> = vec![None; opts.shots];
    for s in 0..=n {
        let forks: Vec<usize> = (0..opts.shots).filter(|&k| first[k] == s).collect();
        if s == n {
            for k in forks {
                shots[k] = Some(TrajectoryResult {
                    seed: seeds[k],
                    survival: vec![1.0; n],
                    weight: vec![1.0; n + 1],
                    frames: ideal_frames.clone(),
                    discarded_at: None,
                    events: 0,
                });
            }
            break;
        }
        let done = forks
            .par_iter()
            .map(|&k| finish_shot(compiled, &amps, &ideal_frames, s, seeds[k], &schedules[k], phys, opts))
            .collect::<Result<Vec<_>>>()?;
        for (k, r) in forks.into_iter().zip(done) {
            shots[k] = Some(r);
        }
        if first.iter().all(|&f| f <= s) {
            break;
        }
        compiled.program(s).apply(&mut amps);
        ideal_frames.push(moments(model, reg, &amps).frame());
    }
    let shots: Vec<TrajectoryResult> = shots.into_iter().map(|r| r.expect("every shot finished")).collect();
    let ensemble = reduce(&shots, n + 1, opts)?;
    Ok(TrajectoryRun { shots, ensemble })
}

fn flatten(f: &Frame) -> Vec<f64> {
    f.charge.iter().chain(&f.flux).copied().collect()
}

fn unflatten(v: &[f64], sites: usize) -> (Vec<f64>, Vec<f64>) {
    (v[..sites].to_vec(), v[sites..].to_vec())
}

fn reduce(shots: &[TrajectoryResult], frames: usize, opts: &TrajectoryOptions) -> Result<Ensemble> {
    let sites = shots[0].frames[0].charge.len();
    let width = sites + shots[0].frames[0].flux.len();
    let discarded = shots.iter().filter(|s| s.discarded_at.is_some()).count();
    let first_discard = shots.iter().filter_map(|s| s.discarded_at).min();
    let mut out = Ensemble { frames: vec![], charge_se: vec![], flux_se: vec![], kept: vec![], discarded, first_discard };
    for s in 0..frames {
        let live: Vec<(&TrajectoryResult, Vec<f64>)> =
            shots.iter().filter(|t| t.frames.len() > s).map(|t| (t, flatten(&t.frames[s]))).collect();
        let n = live.len();
        if n == 0 {
            return Err(Error::AllTrajectoriesDiscarded { shots: shots.len(), first_step: first_discard.unwrap_or(s) });
        }
        let constant = live.iter().all(|(_, v)| v == &live[0].1);
        let (mean, se) = match opts.weighting {
            // Identical shots average to themselves without rounding.
            _ if constant && live.iter().any(|(t, _)| t.weight[s] > 0.0) => (live[0].1.clone(), vec![0.0; width]),
            Weighting::Survivors => {
                let mut mean = vec![0.0; width];
                for (_, v) in &live {
                    mean.iter_mut().zip(v).for_each(|(m, x)| *m += x / n as f64);
                }
                let mut var = vec![0.0; width];
                if n > 1 {
                    for (_, v) in &live {
                        var.iter_mut().zip(v.iter().zip(&mean)).for_each(|(a, (x, m))| *a += (x - m).powi(2) / (n - 1) as f64);
                    }
                }
                let se = var.iter().map(|v| (v / n as f64).sqrt()).collect::<Vec<_>>();
                (mean, se)
            }
            Weighting::SurvivalWeighted => {
                // Ratio estimator over all shots; discarded shots weigh zero.
                let total = shots.len() as f64;
                let w: Vec<f64> = live.iter().map(|(t, _)| t.weight[s]).collect();
                let wsum: f64 = w.iter().sum();
                if wsum.is_nan() || wsum <= 0.0 {
                    return Err(Error::AllTrajectoriesDiscarded { shots: shots.len(), first_step: s });
                }
                let mut mean = vec![0.0; width];
                for ((_, v), wi) in live.iter().zip(&w) {
                    mean.iter_mut().zip(v).for_each(|(m, x)| *m += wi * x / wsum);
                }
                let wbar = wsum / total;
                let mut se = vec![0.0; width];
                if total > 1.0 {
                    for ((_, v), wi) in live.iter().zip(&w) {
                        se.iter_mut().zip(v.iter().zip(&mean)).for_each(|(a, (x, m))| *a += (wi * (x - m)).powi(2));
                    }
                    // Discarded shots contribute (0 - R*0)^2 = 0.
                    se.iter_mut().for_each(|a| *a = (*a / (total * (total - 1.0))).sqrt() / wbar);
                }
                (mean, se)
            }
        };
        let (c, f) = unflatten(&mean, sites);
        let (cs, fs) = unflatten(&se, sites);
        out.frames.push(Frame { charge: c, flux: f });
        out.charge_se.push(cs);
        out.flux_se.push(fs);
        out.kept.push(n);
    }
    Ok(out)
}

/// Density matrix on the physical basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalDensityMatrix {
    pub matrix: CMatrix,
}

impl PhysicalDensityMatrix {
    pub fn pure(coeffs: &[C64]) -> Self {
        let v = nalgebra::DVector::from_column_slice(coeffs);
        Self { matrix: &v * v.adjoint() }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|c| c.re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrausOptions {
    pub samples: usize,
    pub master_seed: u64,
    pub eta: f64,
}

impl Default for KrausOptions {
    fn default() -> Self {
        Self { samples: DEFAULT_SHOTS, master_seed: 0, eta: DEFAULT_ETA }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrausRun {
    pub frames: Vec<Frame>,
    /// Trace of the ensemble map output before renormalization, per step.
    pub traces: Vec<f64>,
    pub purities: Vec<f64>,
    pub min_eigenvalues: Vec<f64>,
    pub hermiticity: Vec<f64>,
    pub states: Vec<PhysicalDensityMatrix>,
    pub error_samples: usize,
}

/// The projected map `P U P` on the physical basis for one step.
fn kraus_operator(program: &Program, phys: &PhysicalSubspace, insertions: &[Insertion]) -> CMatrix {
    let d = phys.len();
    let total = program.register().total_dim();
    let mut k = CMatrix::zeros(d, d);
    let mut amps = vec![C64::new(0.0, 0.0); total];
    for (c, &idx) in phys.indices().iter().enumerate() {
        amps.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
        amps[idx] = C64::new(1.0, 0.0);
        program.apply_with(&mut amps, insertions);
        for (r, &j) in phys.indices().iter().enumerate() {
            k[(r, c)] = amps[j];
        }
    }
    k
}

/// Ensemble-map evolution with the trace renormalized once per step.
pub fn run_kraus_physical(
    compiled: &CompiledCircuit,
    initial: &[C64],
    noise: &NoiseModel,
    phys: &PhysicalSubspace,
    opts: &KrausOptions,
    keep_states: bool,
) -> Result<KrausRun> {
    noise.validate()?;
    if opts.samples == 0 {
        return Err(Error::InvalidArgument("at least one Kraus sample is required".into()));
    }
    if initial.len() != phys.len() {
        return Err(Error::DimensionMismatch(format!("{} coefficients for {} physical states", initial.len(), phys.len())));
    }
    let model = &compiled.circuit.model;
    let reg = compiled.register();
    let mut rho = PhysicalDensityMatrix::pure(initial);
    let frame = |rho: &PhysicalDensityMatrix| -> Frame { moments_physical(model, phys, &rho.probabilities()).frame() };
    let mut run = KrausRun {
        frames: vec![frame(&rho)],
        traces: vec![],
        purities: vec![rho.purity()],
        min_eigenvalues: vec![],
        hermiticity: vec![],
        states: if keep_states { vec![rho.clone()] } else { vec![] },
        error_samples: 0,
    };
    let mut ideal: [Option<CMatrix>; 2] = [None, None];
    for s in 0..compiled.n_steps() {
        let program = compiled.program(s);
        let slot = usize::from(compiled.circuit.walled(s));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.master_seed, s as u64));
        let mut next = CMatrix::zeros(phys.len(), phys.len());
        let mut clean = 0usize;
        for _ in 0..opts.samples {
            let events = sample_errors(program.gates(), noise, reg, &mut rng);
            if events.is_empty() {
                clean += 1;
                continue;
            }
            run.error_samples += 1;
            let ins = events.iter().map(|e| Ok(Insertion { after: e.gate, op: e.op(reg)? })).collect::<Result<Vec<_>>>()?;
            let k = kraus_operator(program, phys, &ins);
            next += &k * &rho.matrix * k.adjoint();
        }
        if clean > 0 {
            let k = ideal[slot].get_or_insert_with(|| kraus_operator(program, phys, &[]));
            next += (&*k * &rho.matrix * k.adjoint()) * C64::new(clean as f64, 0.0);
        }
        next /= C64::new(opts.samples as f64, 0.0);
        let tr = next.trace().re;
        run.traces.push(tr);
        if tr.is_nan() || tr < opts.eta {
            return Err(Error::TraceCollapse { step: s + 1, trace: tr });
        }
        rho = PhysicalDensityMatrix { matrix: next / C64::new(tr, 0.0) };
        run.hermiticity.push(rho.hermiticity_error());
        run.min_eigenvalues.push(rho.min_eigenvalue());
        run.purities.push(rho.purity());
        run.frames.push(frame(&rho));
        if keep_states {
            run.states.push(rho.clone());
        }
    }
    Ok(run)
}
