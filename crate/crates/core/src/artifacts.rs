//! On-disk artifacts: heatmap CSVs with an NDJSON sidecar.
//!
//! A run named `<stem>` writes `<stem>.charge.csv` and `<stem>.flux.csv`
//! (one row per time step) and `<stem>.meta.ndjson`, whose first line holds
//! the schema version and the resolved configuration.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ResolvedConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::scattering::{CollisionKind, ObservableRecord, Provenance, RunStats, Snapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub protocol: String,
    pub kind: CollisionKind,
    pub provenance: Provenance,
    pub seed: Option<u64>,
    pub shots: Option<usize>,
    /// Names of the records a derived record was computed from.
    #[serde(default)]
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetaLine {
    Meta { schema_version: u32, config: ResolvedConfig, record: RecordHeader },
    Stats { stats: RunStats },
    StandardError { step: usize, charge: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactPaths {
    pub charge: PathBuf,
    pub flux: PathBuf,
    pub meta: PathBuf,
}

impl ArtifactPaths {
    pub fn new(dir: &Path, stem: &str) -> Self {
        Self {
            charge: dir.join(format!("{stem}.charge.csv")),
            flux: dir.join(format!("{stem}.flux.csv")),
            meta: dir.join(format!("{stem}.meta.ndjson")),
        }
    }

    /// Paths of the run whose sidecar is `meta`.
    pub fn from_meta(meta: &Path) -> Result<Self> {
        let name = meta.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let stem = name
            .strip_suffix(".meta.ndjson")
            .ok_or_else(|| Error::InvalidArgument(format!("{} is not a .meta.ndjson file", meta.display())))?;
        Ok(Self::new(meta.parent().unwrap_or(Path::new(".")), stem))
    }
}

/// `<record>__<engine>__seed<seed>`.
pub fn stem(record_name: &str, engine_label: &str, seed: u64) -> String {
    format!("{record_name}__{engine_label}__seed{seed}")
}

pub fn record_stem(config: &ResolvedConfig, record: &ObservableRecord) -> String {
    stem(&record.protocol, config.engine.label(), config.engine.seed)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line: 0, msg: format!("{other:?}") },
    }
}

/// Rows are time steps, columns `step,time,<prefix>0,...`.
pub fn write_grid(path: &Path, prefix: &str, times: &[f64], grid: &[Vec<f64>]) -> Result<()> {
    let width = grid.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["step".to_string(), "time".to_string()];
    header.extend((0..width).map(|j| format!("{prefix}{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, (t, row)) in times.iter().zip(grid).enumerate() {
        let mut fields = vec![k.to_string(), t.to_string()];
        fields.extend(row.iter().map(|x| (x + 0.0).to_string()));
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut times = vec![];
    let mut grid = vec![];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse { line: line + 2, msg: format!("{}: {e}", path.display()) })
        };
        times.push(parse(rec.get(1).unwrap_or_default())?);
        grid.push(rec.iter().skip(2).map(parse).collect::<Result<Vec<_>>>()?);
    }
    Ok((times, grid))
}

fn write_lines(path: &Path, lines: &[MetaLine]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        serde_json::to_writer(&mut w, l).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the heatmaps and sidecar of `record` into `dir`.
pub fn write_record(dir: &Path, config: &ResolvedConfig, record: &ObservableRecord, inputs: &[String]) -> Result<ArtifactPaths> {
    std::fs::create_dir_all(dir)?;
    let paths = ArtifactPaths::new(dir, &record_stem(config, record));
    write_grid(&paths.charge, "site", &record.times, &record.charge)?;
    write_grid(&paths.flux, "link", &record.times, &record.flux)?;
    let mut lines = vec![MetaLine::Meta {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        record: RecordHeader {
            protocol: record.protocol.clone(),
            kind: record.kind,
            provenance: record.provenance,
            seed: record.seed,
            shots: record.shots,
            inputs: inputs.to_vec(),
        },
    }];
    if let Some(stats) = &record.stats {
        lines.push(MetaLine::Stats { stats: stats.clone() });
    }
    if let Some(se) = &record.charge_se {
        lines.extend(se.iter().enumerate().map(|(step, c)| MetaLine::StandardError { step, charge: c.clone() }));
    }
    write_lines(&paths.meta, &lines)?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRecord {
    pub config: ResolvedConfig,
    pub header: RecordHeader,
    pub record: ObservableRecord,
}

fn read_meta(path: &Path) -> Result<Vec<MetaLine>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = vec![];
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if k == 0 {
            // Check the version before the schema of the rest.
            let v: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
            let found = v.get("schema_version").and_then(|x| x.as_u64());
            if found != Some(SCHEMA_VERSION as u64) {
                return Err(Error::Config(format!(
                    "{} has schema version {found:?}, expected {SCHEMA_VERSION}",
                    path.display()
                )));
            }
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse { line: k + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

/// Loads a run from its sidecar, refusing other schema versions.
pub fn read_record(meta: &Path) -> Result<LoadedRecord> {
    let lines = read_meta(meta)?;
    let (config, header) = match lines.first() {
        Some(MetaLine::Meta { config, record, .. }) => (config.clone(), record.clone()),
        _ => return Err(Error::Parse { line: 1, msg: format!("{} lacks a meta line", meta.display()) }),
    };
    let paths = ArtifactPaths::from_meta(meta)?;
    let (times, charge) = read_grid(&paths.charge)?;
    let (flux_times, flux) = read_grid(&paths.flux)?;
    if flux_times != times {
        return Err(Error::GridMismatch(format!("{} and {} disagree on times", paths.charge.display(), paths.flux.display())));
    }
    let mut stats = None;
    let mut se = vec![];
    for l in &lines[1..] {
        match l {
            MetaLine::Stats { stats: s } => stats = Some(s.clone()),
            MetaLine::StandardError { charge, .. } => se.push(charge.clone()),
            MetaLine::Meta { .. } => return Err(Error::Parse { line: 0, msg: "repeated meta line".into() }),
        }
    }
    let record = ObservableRecord {
        protocol: header.protocol.clone(),
        kind: header.kind,
        provenance: header.provenance,
        times,
        charge,
        flux,
        charge_se: (!se.is_empty()).then_some(se),
        seed: header.seed,
        shots: header.shots,
        stats,
    };
    Ok(LoadedRecord { config, header, record })
}

/// Snapshot table: one row per selected time, columns `time,link0,...`.
pub fn write_snapshots(dir: &Path, stem: &str, config: &ResolvedConfig, header: &RecordHeader, snaps: &[Snapshot]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.snapshots.csv"));
    let width = snaps.first().map_or(0, |s| s.flux.len());
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    let mut head = vec!["time".to_string()];
    head.extend((0..width).map(|j| format!("link{j}")));
    w.write_record(&head).map_err(csv_err)?;
    for s in snaps {
        let mut row = vec![s.time.to_string()];
        row.extend(s.flux.iter().map(|x| (x + 0.0).to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    let meta = MetaLine::Meta { schema_version: SCHEMA_VERSION, config: config.clone(), record: header.clone() };
    write_lines(&dir.join(format!("{stem}.snapshots.meta.ndjson")), &[meta])?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ProtocolConfig, RunConfig};
    use crate::scattering::run_exact;

    fn resolved() -> ResolvedConfig {
        let mut p = ProtocolConfig::from_preset("l7_g3");
        p.n_steps = Some(3);
        RunConfig { schema_version: 1, protocol: p, engine: Default::default(), compile: Default::default(), output: None }
            .resolve()
            .unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = std::env::temp_dir().join(format!("qlm-artifacts-{}", std::process::id()));
        let cfg = resolved();
        let rec = run_exact(&cfg.protocol).unwrap();
        let paths = write_record(&dir, &cfg, &rec, &[]).unwrap();
        assert!(paths.meta.ends_with("l7_g3__noiseless__seed0.meta.ndjson"));
        let back = read_record(&paths.meta).unwrap();
        assert_eq!(back.record, rec);
        assert_eq!(back.config, cfg);

        let text = std::fs::read_to_string(&paths.meta).unwrap().replacen("\"schema_version\":1", "\"schema_version\":7", 1);
        std::fs::write(&paths.meta, text).unwrap();
        assert!(matches!(read_record(&paths.meta), Err(Error::Config(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
