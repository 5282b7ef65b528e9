//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! output = "out"
//!
//! [protocol]
//! preset = "meson_meson_g3"   # or spell out every field below
//! n_steps = 20                # any field overrides the preset
//!
//! [engine]
//! kind = "noisy"              # exact | noiseless | noisy
//! alpha = 1.0                 # rates 3e-5, 2e-3, 5e-3 scaled by 10^-alpha
//! mode = "trajectories"       # trajectories | kraus
//! shots = 500
//! postselect = true
//! weighting = "survivors"     # survivors | survival_weighted
//! seed = 0
//!
//! [compile]
//! ordering = "even_odd_symmetric"
//! entangler = "ms"
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::compiler::CompileOptions;
use crate::error::{Error, Result};
use crate::model::Formulation;
use crate::noise::{NoiseModel, Weighting, DEFAULT_ETA, DEFAULT_SHOTS};
use crate::scattering::{CollisionKind, Engine, NoisyMode, NoisySettings, ScatteringProtocol};

pub const SCHEMA_VERSION: u32 = 1;

/// Overrides the output directory of every run.
pub const OUTPUT_ROOT_ENV: &str = "QLM_OUTPUT_ROOT";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub kind: Option<CollisionKind>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    pub kappa: Option<f64>,
    pub mu: Option<f64>,
    pub g: Option<f64>,
    pub formulation: Option<Formulation>,
    pub step_size: Option<f64>,
    pub n_steps: Option<usize>,
    pub walls: Option<Vec<usize>>,
    pub off_step: Option<usize>,
    pub fluxes: Option<Vec<i8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Exact,
    #[default]
    Noiseless,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub alpha: f64,
    pub depolarize_fraction: f64,
    pub mode: NoisyMode,
    pub shots: usize,
    pub postselect: bool,
    pub weighting: Weighting,
    pub seed: u64,
    pub eta: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            kind: EngineKind::Noiseless,
            alpha: 1.0,
            depolarize_fraction: 0.5,
            mode: NoisyMode::Trajectories,
            shots: DEFAULT_SHOTS,
            postselect: true,
            weighting: Weighting::Survivors,
            seed: 0,
            eta: DEFAULT_ETA,
        }
    }
}

impl EngineConfig {
    pub fn engine(&self) -> Engine {
        match self.kind {
            EngineKind::Exact => Engine::Exact,
            EngineKind::Noiseless => Engine::Noiseless,
            EngineKind::Noisy => Engine::Noisy(NoisySettings {
                noise: NoiseModel { depolarize_fraction: self.depolarize_fraction, ..NoiseModel::trapped_ion(self.alpha) },
                mode: self.mode,
                shots: self.shots,
                postselect: self.postselect,
                weighting: self.weighting,
                seed: self.seed,
                eta: self.eta,
            }),
        }
    }

    /// Short label used in artifact names.
    pub fn label(&self) -> &'static str {
        match (self.kind, self.mode) {
            (EngineKind::Exact, _) => "exact",
            (EngineKind::Noiseless, _) => "noiseless",
            (EngineKind::Noisy, NoisyMode::Trajectories) => "trajectories",
            (EngineKind::Noisy, NoisyMode::Kraus) => "kraus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub compile: CompileOptions,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Everything a run depends on, as embedded in its artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub schema_version: u32,
    pub protocol: ScatteringProtocol,
    pub engine: EngineConfig,
    pub compile: CompileOptions,
}

fn missing(field: &str) -> Error {
    Error::Config(format!("protocol.{field} is required without a preset"))
}

impl ProtocolConfig {
    pub fn from_preset(name: &str) -> Self {
        Self { preset: Some(name.to_string()), ..Self::default() }
    }

    pub fn resolve(&self) -> Result<ScatteringProtocol> {
        let base = match &self.preset {
            Some(name) => Some(ScatteringProtocol::preset(name).map_err(|e| Error::Config(e.to_string()))?),
            None => None,
        };
        macro_rules! pick {
            ($field:ident, $key:literal) => {
                match (&self.$field, &base) {
                    (Some(v), _) => v.clone(),
                    (None, Some(b)) => b.$field.clone(),
                    (None, None) => return Err(missing($key)),
                }
            };
        }
        let p = ScatteringProtocol {
            name: pick!(name, "name"),
            kind: pick!(kind, "kind"),
            l: pick!(l, "L"),
            kappa: pick!(kappa, "kappa"),
            mu: pick!(mu, "mu"),
            g: pick!(g, "g"),
            formulation: self.formulation.or(base.as_ref().map(|b| b.formulation)).unwrap_or(Formulation::IntegratedOut),
            step_size: pick!(step_size, "step_size"),
            n_steps: pick!(n_steps, "n_steps"),
            walls: self.walls.clone().or(base.as_ref().map(|b| b.walls.clone())).unwrap_or_default(),
            off_step: self.off_step.or(base.as_ref().map(|b| b.off_step)).unwrap_or(0),
            fluxes: pick!(fluxes, "fluxes"),
        };
        p.validate().map_err(|e| match e {
            Error::BudgetExceeded(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        Ok(p)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_version()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn check_version(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        self.check_version()?;
        let e = &self.engine;
        if e.kind == EngineKind::Noisy {
            if e.shots == 0 {
                return Err(Error::Config("engine.shots must be positive".into()));
            }
            if e.eta.is_nan() || e.eta <= 0.0 {
                return Err(Error::Config("engine.eta must be positive".into()));
            }
            if let Engine::Noisy(s) = e.engine() {
                s.noise.validate().map_err(|err| Error::Config(err.to_string()))?;
            }
        }
        Ok(ResolvedConfig {
            schema_version: SCHEMA_VERSION,
            protocol: self.protocol.resolve()?,
            engine: self.engine,
            compile: self.compile,
        })
    }

    /// `$QLM_OUTPUT_ROOT`, else the configured directory, else `out`.
    pub fn output_root(&self) -> PathBuf {
        output_root(self.output.as_deref())
    }
}

pub fn output_root(configured: Option<&std::path::Path>) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.map_or_else(|| PathBuf::from("out"), PathBuf::from),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_with_override() {
        let cfg = RunConfig::parse(
            "schema_version = 1\n[protocol]\npreset = \"l7_g3\"\nn_steps = 3\n[engine]\nkind = \"exact\"\n",
        )
        .unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.protocol.n_steps, 3);
        assert_eq!(r.protocol.l, 7);
        assert_eq!(r.engine.engine(), Engine::Exact);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(RunConfig::parse("schema_version = 1\n[protocol]\npreset = \"l7_g3\"\ncolour = 1\n").is_err());
        assert!(RunConfig::parse("schema_version = 1\nbogus = 2\n[protocol]\npreset = \"l7_g3\"\n").is_err());
        assert!(matches!(RunConfig::parse("schema_version = 9\n[protocol]\npreset = \"l7_g3\"\n"), Err(Error::Config(_))));
    }

    #[test]
    fn explicit_protocol_needs_every_field() {
        let cfg = RunConfig::parse("schema_version = 1\n[protocol]\nL = 5\n").unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
        let full = "schema_version = 1\n[protocol]\nname = \"x\"\nkind = \"vacuum\"\nL = 5\nkappa = 1.0\nmu = 1.0\ng = 1.0\n\
                    step_size = 0.1\nn_steps = 2\nfluxes = [0, 0, 0, 0]\n";
        let r = RunConfig::parse(full).unwrap().resolve().unwrap();
        assert_eq!(r.protocol.formulation, Formulation::IntegratedOut);
    }

    #[test]
    fn gauss_violating_pattern_is_a_config_error() {
        let cfg = RunConfig::parse("schema_version = 1\n[protocol]\npreset = \"l7_g3\"\nfluxes = [0, 1, -1, 0, 0, 0]\n").unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
    }
}
