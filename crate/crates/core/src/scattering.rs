//! Scattering protocols, engines and the subtraction analyses.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::compiler::{assemble_trotter, CompileOptions, WallSchedule};
use crate::error::{Error, Result};
use crate::exact::ExactEngine;
use crate::hilbert::{BasisConfig, PureState};
use crate::linalg::C64;
use crate::model::{config_from_fluxes, enumerate_physical, Formulation, LatticeModel, PhysicalSubspace};
use crate::noise::{run_kraus_physical, run_trajectories, KrausOptions, NoiseModel, TrajectoryOptions, Weighting};
use crate::observables::{measure, measure_physical, Frame};
use crate::program::CompiledCircuit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    MesonMeson,
    MesonAntimeson,
    FreeLeft,
    FreeRight,
    Vacuum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatteringProtocol {
    pub name: String,
    pub kind: CollisionKind,
    #[serde(rename = "L")]
    pub l: usize,
    pub kappa: f64,
    pub mu: f64,
    pub g: f64,
    #[serde(default = "default_formulation")]
    pub formulation: Formulation,
    pub step_size: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub walls: Vec<usize>,
    #[serde(default)]
    pub off_step: usize,
    /// Simulation-frame link fluxes at `t = 0`.
    pub fluxes: Vec<i8>,
}

fn default_formulation() -> Formulation {
    Formulation::IntegratedOut
}

/// Preset names shipped with the crate.
pub const PRESETS: [&str; 4] = ["meson_meson_g3", "meson_antimeson_g3", "meson_antimeson_g0.5", "l7_g3"];

fn excitations(links: usize, at: &[usize]) -> Vec<i8> {
    (0..links).map(|j| i8::from(at.contains(&j))).collect()
}

impl ScatteringProtocol {
    pub fn preset(name: &str) -> Result<Self> {
        let base = |name: &str, kind, l: usize, g: f64, walls: Vec<usize>, off_step, at: &[usize]| Self {
            name: name.to_string(),
            kind,
            l,
            kappa: 1.0,
            mu: 1.0,
            g,
            formulation: Formulation::IntegratedOut,
            step_size: 0.25,
            n_steps: 40,
            walls,
            off_step,
            fluxes: excitations(l - 1, at),
        };
        match name {
            "meson_meson_g3" => Ok(base(name, CollisionKind::MesonMeson, 12, 3.0, vec![2, 8], 6, &[3, 7])),
            "meson_antimeson_g3" => Ok(base(name, CollisionKind::MesonAntimeson, 11, 3.0, vec![1, 8], 16, &[2, 7])),
            "meson_antimeson_g0.5" => Ok(base(name, CollisionKind::MesonAntimeson, 11, 0.5, vec![1, 8], 8, &[2, 7])),
            "l7_g3" => Ok(base(name, CollisionKind::MesonAntimeson, 7, 3.0, vec![], 0, &[0, 5])),
            _ => Err(Error::InvalidArgument(format!("unknown preset '{name}'; known: {}", PRESETS.join(", ")))),
        }
    }

    pub fn model(&self) -> Result<LatticeModel> {
        LatticeModel::new(self.l, self.kappa, self.mu, self.g, self.formulation)
    }

    pub fn walls(&self) -> WallSchedule {
        WallSchedule::new(self.walls.clone(), self.off_step)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.step_size).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size {} must be positive", self.step_size)));
        }
        if let Some(w) = self.walls.iter().find(|&&w| w >= model.links()) {
            return Err(Error::InvalidArgument(format!("wall link {w} outside chain of {} links", model.links())));
        }
        config_from_fluxes(&model, &self.fluxes)?;
        Ok(())
    }

    /// Whether link `j` lies in the left half of the chain.
    fn left_half(&self, j: usize) -> bool {
        2 * j + 1 < self.l - 1
    }

    /// The same protocol with one or both excitations removed.
    pub fn variant(&self, kind: CollisionKind) -> Self {
        let keep = |j: usize| match kind {
            CollisionKind::FreeLeft => self.left_half(j),
            CollisionKind::FreeRight => !self.left_half(j),
            CollisionKind::Vacuum => false,
            _ => true,
        };
        let fluxes = self.fluxes.iter().enumerate().map(|(j, &m)| if keep(j) { m } else { 0 }).collect();
        let suffix = match kind {
            CollisionKind::FreeLeft => "free_left",
            CollisionKind::FreeRight => "free_right",
            CollisionKind::Vacuum => "vacuum",
            _ => return self.clone(),
        };
        Self { name: format!("{}_{suffix}", self.name), kind, fluxes, ..self.clone() }
    }

    pub fn with_formulation(&self, formulation: Formulation) -> Self {
        Self { formulation, ..self.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct Initial {
    pub config: BasisConfig,
    pub state: PureState,
}

pub fn prepare_initial(protocol: &ScatteringProtocol) -> Result<Initial> {
    protocol.validate()?;
    let model = protocol.model()?;
    let config = config_from_fluxes(&model, &protocol.fluxes)?;
    let state = PureState::basis(Arc::new(model.register()?), &config)?;
    Ok(Initial { config, state })
}

/// Physical-basis coefficients of the initial basis state.
pub fn initial_physical(initial: &Initial, phys: &PhysicalSubspace) -> Result<Vec<C64>> {
    let idx = phys.register().index_of(&initial.config)?;
    let pos = phys.position(idx).ok_or_else(|| Error::GaussViolation("initial state is unphysical".into()))?;
    let mut v = vec![C64::new(0.0, 0.0); phys.len()];
    v[pos] = C64::new(1.0, 0.0);
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Noiseless,
    NoisyTrajectories,
    NoisyKraus,
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisyMode {
    #[default]
    Trajectories,
    Kraus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisySettings {
    pub noise: NoiseModel,
    pub mode: NoisyMode,
    pub shots: usize,
    pub postselect: bool,
    pub weighting: Weighting,
    pub seed: u64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Engine {
    Exact,
    Noiseless,
    Noisy(NoisySettings),
}

/// Diagnostics attached to noisy runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub kept: Vec<usize>,
    pub discarded: usize,
    pub first_discard: Option<usize>,
    pub traces: Vec<f64>,
    pub purities: Vec<f64>,
    pub error_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub protocol: String,
    pub kind: CollisionKind,
    pub provenance: Provenance,
    pub times: Vec<f64>,
    /// `charge[t][j]`.
    pub charge: Vec<Vec<f64>>,
    /// `flux[t][j]` in the original frame.
    pub flux: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge_se: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<RunStats>,
}

impl ObservableRecord {
    fn from_frames(p: &ScatteringProtocol, provenance: Provenance, frames: Vec<Frame>) -> Self {
        let (charge, flux) = frames.into_iter().map(|f| (f.charge, f.flux)).unzip();
        Self {
            protocol: p.name.clone(),
            kind: p.kind,
            provenance,
            times: p.times(),
            charge,
            flux,
            charge_se: None,
            seed: None,
            shots: None,
            stats: None,
        }
    }

    pub fn sites(&self) -> usize {
        self.charge.first().map_or(0, Vec::len)
    }

    pub fn total_charge(&self, step: usize) -> f64 {
        self.charge[step].iter().sum()
    }

    /// Largest `|a - b|` over all charge entries.
    pub fn max_charge_deviation(&self, other: &ObservableRecord) -> Result<f64> {
        check_grid(self, other)?;
        Ok(self
            .charge
            .iter()
            .zip(&other.charge)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }
}

fn check_grid(a: &ObservableRecord, b: &ObservableRecord) -> Result<()> {
    let same_times = a.times.len() == b.times.len() && a.times.iter().zip(&b.times).all(|(x, y)| (x - y).abs() < 1e-9);
    if !same_times || a.sites() != b.sites() {
        return Err(Error::GridMismatch(format!(
            "{} ({} times, {} sites) vs {} ({} times, {} sites)",
            a.protocol,
            a.times.len(),
            a.sites(),
            b.protocol,
            b.times.len(),
            b.sites()
        )));
    }
    Ok(())
}

fn combine(parts: &[(&ObservableRecord, f64)], name: String) -> Result<ObservableRecord> {
    let first = parts[0].0;
    for (r, _) in &parts[1..] {
        check_grid(first, r)?;
    }
    let mix = |get: &dyn Fn(&ObservableRecord) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..first.times.len())
            .map(|t| {
                (0..get(first)[t].len()).map(|j| parts.iter().map(|(r, s)| s * get(r)[t][j]).sum()).collect()
            })
            .collect()
    };
    Ok(ObservableRecord {
        protocol: name,
        kind: first.kind,
        provenance: Provenance::Derived,
        times: first.times.clone(),
        charge: mix(&|r| &r.charge),
        flux: mix(&|r| &r.flux),
        charge_se: None,
        seed: first.seed,
        shots: first.shots,
        stats: None,
    })
}

/// `record - vacuum` at matching times.
pub fn subtract_vacuum(record: &ObservableRecord, vacuum: &ObservableRecord) -> Result<ObservableRecord> {
    combine(&[(record, 1.0), (vacuum, -1.0)], format!("{}-vacuum", record.protocol))
}

/// `scat - left - right + vacuum`: what the collision adds beyond two free
/// excitations over the same background.
pub fn subtract_free(
    scat: &ObservableRecord,
    left: &ObservableRecord,
    right: &ObservableRecord,
    vacuum: &ObservableRecord,
) -> Result<ObservableRecord> {
    let expect = [
        (left, CollisionKind::FreeLeft),
        (right, CollisionKind::FreeRight),
        (vacuum, CollisionKind::Vacuum),
    ];
    for (r, k) in expect {
        if r.kind != k {
            return Err(Error::InvalidArgument(format!("{} has kind {:?}, expected {:?}", r.protocol, r.kind, k)));
        }
    }
    combine(&[(scat, 1.0), (left, -1.0), (right, -1.0), (vacuum, 1.0)], format!("{}-free", scat.protocol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub flux: Vec<f64>,
}

/// Flux profiles at the requested times, which must lie on the record grid.
pub fn flux_snapshots(record: &ObservableRecord, times: &[f64]) -> Result<Vec<Snapshot>> {
    times
        .iter()
        .map(|&t| {
            let k = record
                .times
                .iter()
                .position(|&x| (x - t).abs() < 1e-9)
                .ok_or_else(|| Error::GridMismatch(format!("time {t} not on the grid of {}", record.protocol)))?;
            Ok(Snapshot { time: record.times[k], flux: record.flux[k].clone() })
        })
        .collect()
}

/// Exact engine over the protocol's time grid.
pub fn run_exact(p: &ScatteringProtocol) -> Result<ObservableRecord> {
    let init = prepare_initial(p)?;
    let model = p.model()?;
    let phys = enumerate_physical(&model)?;
    let psi0 = initial_physical(&init, &phys)?;
    let engine = ExactEngine::new(&model, &phys, &p.walls(), p.step_size)?;
    let frames = p
        .times()
        .iter()
        .map(|&t| Ok(measure_physical(&model, &phys, &engine.state_at(&psi0, t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservableRecord::from_frames(p, Provenance::Exact, frames))
}

pub fn compile_protocol(p: &ScatteringProtocol, options: &CompileOptions) -> Result<CompiledCircuit> {
    let model = p.model()?;
    CompiledCircuit::new(assemble_trotter(&model, p.step_size, p.n_steps, &p.walls(), options)?)
}

pub fn run_noiseless(p: &ScatteringProtocol, options: &CompileOptions) -> Result<ObservableRecord> {
    let init = prepare_initial(p)?;
    let compiled = compile_protocol(p, options)?;
    let model = compiled.circuit.model;
    let reg = compiled.register().clone();
    let mut amps = init.state.into_amplitudes();
    let mut frames = Vec::with_capacity(p.n_steps + 1);
    compiled.run(&mut amps, |_, a| frames.push(measure(&model, &reg, a)));
    Ok(ObservableRecord::from_frames(p, Provenance::Noiseless, frames))
}

pub fn run_noisy(p: &ScatteringProtocol, options: &CompileOptions, s: &NoisySettings) -> Result<ObservableRecord> {
    let init = prepare_initial(p)?;
    let compiled = compile_protocol(p, options)?;
    let phys = enumerate_physical(&compiled.circuit.model)?;
    let mut rec = match s.mode {
        NoisyMode::Trajectories => {
            let opts = TrajectoryOptions {
                shots: s.shots,
                master_seed: s.seed,
                postselect: s.postselect,
                weighting: s.weighting,
                eta: s.eta,
            };
            let run = run_trajectories(&compiled, &init.state, &s.noise, Some(&phys), &opts)?;
            let e = run.ensemble;
            let mut rec = ObservableRecord::from_frames(p, Provenance::NoisyTrajectories, e.frames);
            rec.charge_se = Some(e.charge_se);
            rec.stats = Some(RunStats {
                kept: e.kept,
                discarded: e.discarded,
                first_discard: e.first_discard,
                error_events: run.shots.iter().map(|t| t.events).sum(),
                ..Default::default()
            });
            rec
        }
        NoisyMode::Kraus => {
            let psi0 = initial_physical(&init, &phys)?;
            let opts = KrausOptions { samples: s.shots, master_seed: s.seed, eta: s.eta };
            let run = run_kraus_physical(&compiled, &psi0, &s.noise, &phys, &opts, false)?;
            let mut rec = ObservableRecord::from_frames(p, Provenance::NoisyKraus, run.frames);
            rec.stats = Some(RunStats {
                traces: run.traces,
                purities: run.purities,
                error_events: run.error_samples,
                ..Default::default()
            });
            rec
        }
    };
    rec.seed = Some(s.seed);
    rec.shots = Some(s.shots);
    Ok(rec)
}

pub fn run_experiment(p: &ScatteringProtocol, engine: &Engine, options: &CompileOptions) -> Result<ObservableRecord> {
    match engine {
        Engine::Exact => run_exact(p),
        Engine::Noiseless => run_noiseless(p, options),
        Engine::Noisy(s) => run_noisy(p, options, s),
    }
}

/// Records for the scattering run and its three reference runs, in the
/// order scattering, free left, free right, vacuum.
pub fn run_family(p: &ScatteringProtocol, engine: &Engine, options: &CompileOptions) -> Result<[ObservableRecord; 4]> {
    let kinds = [p.kind, CollisionKind::FreeLeft, CollisionKind::FreeRight, CollisionKind::Vacuum];
    let mut out = Vec::with_capacity(4);
    for k in kinds {
        out.push(run_experiment(&p.variant(k), engine, options)?);
    }
    Ok(out.try_into().expect("four records"))
}

/// Arrival threshold used to calibrate the shipped presets.
pub const ARRIVAL_THRESHOLD: f64 = 0.3;

/// First step at which the vacuum-subtracted charge on the two central
/// sites reaches `threshold`, with the walls held for the whole run.
pub fn calibrate_off_step(p: &ScatteringProtocol, threshold: f64) -> Result<usize> {
    let held = ScatteringProtocol { off_step: p.n_steps + 1, ..p.clone() };
    let scat = run_exact(&held)?;
    let vac = run_exact(&held.variant(CollisionKind::Vacuum))?;
    let diff = subtract_vacuum(&scat, &vac)?;
    let centre = [(p.l - 1) / 2, p.l / 2];
    (0..diff.times.len())
        .find(|&k| {
            let mut sites = centre.to_vec();
            sites.dedup();
            sites.iter().map(|&j| diff.charge[k][j].abs()).sum::<f64>() >= threshold
        })
        .ok_or_else(|| Error::InvalidArgument(format!("fronts never reach the centre within {} steps", p.n_steps)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_physical() {
        for name in PRESETS {
            let p = ScatteringProtocol::preset(name).unwrap();
            p.validate().unwrap();
            for k in [CollisionKind::FreeLeft, CollisionKind::FreeRight, CollisionKind::Vacuum] {
                p.variant(k).validate().unwrap();
            }
        }
        assert!(ScatteringProtocol::preset("nope").is_err());
    }

    #[test]
    fn variants_split_the_excitations() {
        let p = ScatteringProtocol::preset("meson_meson_g3").unwrap();
        let l = p.variant(CollisionKind::FreeLeft).fluxes;
        let r = p.variant(CollisionKind::FreeRight).fluxes;
        let v = p.variant(CollisionKind::Vacuum).fluxes;
        let sum: Vec<i8> = l.iter().zip(&r).map(|(a, b)| a + b).collect();
        assert_eq!(sum, p.fluxes);
        assert!(v.iter().all(|&m| m == 0));
        assert_eq!(l.iter().filter(|&&m| m != 0).count(), 1);
    }

    #[test]
    fn subtraction_identities() {
        let p = ScatteringProtocol { n_steps: 6, ..ScatteringProtocol::preset("l7_g3").unwrap() };
        let r = run_exact(&p).unwrap();
        let z = subtract_vacuum(&r, &r).unwrap();
        assert!(z.charge.iter().flatten().all(|x| *x == 0.0));
        let mut vac = r.clone();
        vac.kind = CollisionKind::Vacuum;
        let mut left = r.clone();
        left.kind = CollisionKind::FreeLeft;
        let mut right = r.clone();
        right.kind = CollisionKind::FreeRight;
        // scat = left + right - vacuum by construction.
        let scat = combine(&[(&left, 1.0), (&right, 1.0), (&vac, -1.0)], "s".into()).unwrap();
        let d = subtract_free(&scat, &left, &right, &vac).unwrap();
        assert!(d.charge.iter().flatten().all(|x| x.abs() < 1e-15));
        assert!(subtract_free(&scat, &right, &left, &vac).is_err());
        let short = ScatteringProtocol { n_steps: 3, ..p };
        assert!(subtract_vacuum(&r, &run_exact(&short).unwrap()).is_err());
    }

    #[test]
    fn snapshots_pick_grid_times() {
        let p = ScatteringProtocol { n_steps: 4, ..ScatteringProtocol::preset("l7_g3").unwrap() };
        let r = run_exact(&p).unwrap();
        let s = flux_snapshots(&r, &[0.0, 0.5]).unwrap();
        assert_eq!(s[0].flux, vec![1.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        assert!(flux_snapshots(&r, &[0.3]).is_err());
    }

    #[test]
    fn initial_record_matches_pattern() {
        let p = ScatteringProtocol { n_steps: 2, ..ScatteringProtocol::preset("meson_antimeson_g3").unwrap() };
        let r = run_noiseless(&p, &CompileOptions::default()).unwrap();
        let mut expect = vec![0.0; 11];
        expect[2] = 1.0;
        expect[3] = -1.0;
        expect[7] = -1.0;
        expect[8] = 1.0;
        assert_eq!(r.charge[0], expect);
    }
}
