//! `qlm`: batch driver for the quantum link model scattering lab.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qlm_core::artifacts::{read_record, stem, write_record, write_snapshots, RecordHeader};
use qlm_core::compiler::{assemble_trotter, step_counts, Entangler, MinOrdering};
use qlm_core::config::{EngineKind, ProtocolConfig};
use qlm_core::model::enumerate_physical;
use qlm_core::noise::Weighting;
use qlm_core::scattering::{flux_snapshots, run_experiment, run_family, subtract_free, subtract_vacuum, CollisionKind, NoisyMode};
use qlm_core::{Error, Formulation, LatticeModel, ResolvedConfig, RunConfig, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "qlm", version, about = "Spin-1 U(1) quantum link model scattering lab")]
struct Cli {
    /// Worker threads for trajectory and family runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count (and optionally list) the Gauss-law basis.
    EnumerateBasis {
        #[arg(long = "L")]
        l: usize,
        #[arg(long, default_value = "integrated_out")]
        formulation: Formulation,
        /// Print the link fluxes of every state.
        #[arg(long)]
        list: bool,
    },
    /// Dump the Trotter circuit of a run in the text gate format.
    Compile {
        #[command(flatten)]
        run: RunArgs,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Per-step gate counts as CSV.
    Gatecount {
        /// A size or an inclusive range such as `7..12`.
        #[arg(long = "L")]
        l: String,
        /// Count both formulations and add their two-body ratio.
        #[arg(long)]
        both: bool,
        #[arg(long, default_value = "integrated_out")]
        formulation: Formulation,
        #[arg(long, default_value_t = 0.25)]
        step_size: f64,
    },
    /// Exact evolution on the physical subspace.
    Exact {
        #[command(flatten)]
        run: RunArgs,
        /// Also run the free and vacuum references.
        #[arg(long)]
        family: bool,
    },
    /// Run any engine and write heatmaps.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,
        /// Also run the free and vacuum references.
        #[arg(long)]
        family: bool,
    },
    /// Vacuum or free-particle subtraction of stored runs.
    Analyze {
        /// Sidecar (`.meta.ndjson`) of the scattering run.
        #[arg(long)]
        scat: PathBuf,
        #[arg(long)]
        vacuum: PathBuf,
        #[arg(long, requires = "right")]
        left: Option<PathBuf>,
        #[arg(long, requires = "left")]
        right: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flux profiles of a stored run at selected times.
    Snapshot {
        #[arg(long)]
        record: PathBuf,
        /// Comma-separated times on the record grid.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Exact,
    Noiseless,
    Noisy,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    formulation: Option<Formulation>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<NoisyMode>,
    #[arg(long, value_parser = parse_weighting)]
    weighting: Option<Weighting>,
    #[arg(long)]
    no_postselect: bool,
    #[arg(long)]
    ordering: Option<MinOrdering>,
    #[arg(long)]
    entangler: Option<Entangler>,
    /// Output directory; beats `QLM_OUTPUT_ROOT` and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn snake<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(json!(s.replace('-', "_"))).map_err(|_| format!("unknown value '{s}'"))
}

fn parse_mode(s: &str) -> Result<NoisyMode, String> {
    snake(s)
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    snake(s)
}

impl RunArgs {
    fn config(&self) -> qlm_core::Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig {
                schema_version: SCHEMA_VERSION,
                protocol: ProtocolConfig::from_preset(name),
                engine: Default::default(),
                compile: Default::default(),
                output: None,
            },
            (None, None) => return Err(Error::Config("either --config or --preset is required".into())),
        };
        let p = &mut cfg.protocol;
        p.n_steps = self.n_steps.or(p.n_steps);
        p.step_size = self.step_size.or(p.step_size);
        p.formulation = self.formulation.or(p.formulation);
        let e = &mut cfg.engine;
        e.seed = self.seed.unwrap_or(e.seed);
        e.alpha = self.alpha.unwrap_or(e.alpha);
        e.shots = self.shots.unwrap_or(e.shots);
        e.mode = self.mode.unwrap_or(e.mode);
        e.weighting = self.weighting.unwrap_or(e.weighting);
        e.postselect &= !self.no_postselect;
        cfg.compile.ordering = self.ordering.unwrap_or(cfg.compile.ordering);
        cfg.compile.entangler = self.entangler.unwrap_or(cfg.compile.entangler);
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.output_root())
    }
}

fn parse_sizes(s: &str) -> qlm_core::Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad size or range '{s}'"));
    let num = |x: &str| x.trim().parse::<usize>().map_err(|_| bad());
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![num(s)?]),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_) | Error::GaussViolation(_) | Error::GridMismatch(_) => 2,
        Error::BudgetExceeded(_) => 3,
        Error::AllTrajectoriesDiscarded { .. } => 4,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Parse { .. } => "parse",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::GaussViolation(_) => "gauss_violation",
        Error::GridMismatch(_) => "grid_mismatch",
        Error::BudgetExceeded(_) => "budget_exceeded",
        Error::AllTrajectoriesDiscarded { .. } => "all_trajectories_discarded",
        Error::TraceCollapse { .. } => "trace_collapse",
        Error::Io(_) => "io",
        _ => "internal",
    }
}

fn emit(records: &[(String, PathBuf)]) {
    let mut out = std::io::stdout().lock();
    for (name, path) in records {
        let _ = writeln!(out, "{}", json!({ "record": name, "meta": path }));
    }
}

fn simulate(run: &RunArgs, engine: Option<EngineKind>, family: bool) -> qlm_core::Result<()> {
    let mut cfg = run.config()?;
    if let Some(k) = engine {
        cfg.engine.kind = k;
    }
    let resolved = cfg.resolve()?;
    let dir = run.out_dir(&cfg);
    let engine = resolved.engine.engine();
    let records = if family {
        run_family(&resolved.protocol, &engine, &resolved.compile)?.to_vec()
    } else {
        vec![run_experiment(&resolved.protocol, &engine, &resolved.compile)?]
    };
    let mut written = vec![];
    for rec in &records {
        let own = ResolvedConfig { protocol: resolved.protocol.variant(rec.kind), ..resolved.clone() };
        let paths = write_record(&dir, &own, rec, &[])?;
        written.push((rec.protocol.clone(), paths.meta));
    }
    emit(&written);
    Ok(())
}

fn analyze(scat: &Path, vacuum: &Path, lr: Option<(&Path, &Path)>, out: Option<&Path>) -> qlm_core::Result<()> {
    let s = read_record(scat)?;
    let v = read_record(vacuum)?;
    if v.record.kind != CollisionKind::Vacuum {
        return Err(Error::Config(format!("{} is not a vacuum run", vacuum.display())));
    }
    let mut inputs = vec![s.header.protocol.clone()];
    let derived = match lr {
        Some((l, r)) => {
            let (l, r) = (read_record(l)?, read_record(r)?);
            inputs.extend([l.header.protocol.clone(), r.header.protocol.clone()]);
            subtract_free(&s.record, &l.record, &r.record, &v.record)?
        }
        None => subtract_vacuum(&s.record, &v.record)?,
    };
    inputs.push(v.header.protocol.clone());
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| scat.parent().unwrap_or(Path::new(".")).to_path_buf());
    let paths = write_record(&dir, &s.config, &derived, &inputs)?;
    emit(&[(derived.protocol.clone(), paths.meta)]);
    Ok(())
}

fn snapshot(record: &Path, times: &[f64], out: Option<&Path>) -> qlm_core::Result<()> {
    let loaded = read_record(record)?;
    let snaps = flux_snapshots(&loaded.record, times)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| record.parent().unwrap_or(Path::new(".")).to_path_buf());
    let name = stem(&loaded.record.protocol, loaded.config.engine.label(), loaded.config.engine.seed);
    let header = RecordHeader { inputs: vec![loaded.header.protocol.clone()], ..loaded.header.clone() };
    let path = write_snapshots(&dir, &name, &loaded.config, &header, &snaps)?;
    emit(&[(loaded.record.protocol, path)]);
    Ok(())
}

fn gatecount(sizes: &str, both: bool, formulation: Formulation, step_size: f64) -> qlm_core::Result<()> {
    let sizes = parse_sizes(sizes)?;
    let opts = Default::default();
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["L", "formulation", "ms", "cx", "one_body", "two_body", "two_body_ratio"]).map_err(io)?;
    let forms: Vec<Formulation> = if both { vec![Formulation::IntegratedOut, Formulation::Matterful] } else { vec![formulation] };
    for l in sizes {
        let counts = forms
            .iter()
            .map(|&f| step_counts(&LatticeModel::new(l, 1.0, 1.0, 1.0, f)?, step_size, &opts))
            .collect::<qlm_core::Result<Vec<_>>>()?;
        let base = if both { Some(counts[0].two_body()) } else { None };
        for (f, c) in forms.iter().zip(&counts) {
            let ratio = base.map_or(String::new(), |b| format!("{:.4}", c.two_body() as f64 / b as f64));
            w.write_record([
                l.to_string(),
                f.to_string(),
                c.ms.to_string(),
                c.cx.to_string(),
                c.one_body.to_string(),
                c.two_body().to_string(),
                ratio,
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn compile(run: &RunArgs, output: Option<&Path>) -> qlm_core::Result<()> {
    let resolved = run.config()?.resolve()?;
    let p = &resolved.protocol;
    let circuit = assemble_trotter(&p.model()?, p.step_size, p.n_steps, &p.walls(), &resolved.compile)?;
    let text = circuit.dump();
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn dispatch(cli: Cli) -> qlm_core::Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::EnumerateBasis { l, formulation, list } => {
            let phys = enumerate_physical(&LatticeModel::new(l, 1.0, 1.0, 1.0, formulation)?)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", phys.len())?;
            if list {
                for f in phys.fluxes() {
                    let s: Vec<String> = f.iter().map(i8::to_string).collect();
                    writeln!(out, "{}", s.join(" "))?;
                }
            }
            Ok(())
        }
        Command::Compile { run, output } => compile(&run, output.as_deref()),
        Command::Gatecount { l, both, formulation, step_size } => gatecount(&l, both, formulation, step_size),
        Command::Exact { run, family } => simulate(&run, Some(EngineKind::Exact), family),
        Command::Simulate { run, engine, family } => {
            let kind = engine.map(|e| match e {
                EngineArg::Exact => EngineKind::Exact,
                EngineArg::Noiseless => EngineKind::Noiseless,
                EngineArg::Noisy => EngineKind::Noisy,
            });
            simulate(&run, kind, family)
        }
        Command::Analyze { scat, vacuum, left, right, out } => {
            let lr = left.as_deref().zip(right.as_deref());
            analyze(&scat, &vacuum, lr, out.as_deref())
        }
        Command::Snapshot { record, times, out } => snapshot(&record, &times, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let record = json!({ "error": error_kind(&e), "message": e.to_string(), "exit_code": code });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}
