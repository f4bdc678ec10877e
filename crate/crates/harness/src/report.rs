//! Result files written next to each experiment run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiments::{summarize, ComponentDirectivity, ExperimentResult};

pub const RECORDS_HEADER: &str = "condition,components,q,utterance,method,si_sdr,si_sir,si_sar";
pub const SUMMARY_HEADER: &str = "condition,method,metric,mean,ci95";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub versions: Versions,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub gmmse: &'static str,
    pub harness: &'static str,
    pub model_schema: u32,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, files: Vec<String>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            experiment: cfg.kind().name().to_string(),
            seed: cfg.seed(),
            config_sha256: cfg.hash(),
            config: serde_json::from_str(&cfg.canonical_json()).expect("canonical JSON parses"),
            versions: Versions {
                gmmse: gmmse::VERSION,
                harness: env!("CARGO_PKG_VERSION"),
                model_schema: gmmse::noisemodel::SCHEMA_VERSION,
            },
            files,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// One row per (condition, utterance, method).
pub fn write_records<W: Write>(mut w: W, result: &ExperimentResult) -> std::io::Result<()> {
    writeln!(w, "{RECORDS_HEADER}")?;
    let mut rows: Vec<_> = result.records.iter().collect();
    rows.sort_by(|a, b| {
        (a.components, &a.condition, a.utterance, a.method.name()).cmp(&(b.components, &b.condition, b.utterance, b.method.name()))
    });
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.condition,
            r.components,
            r.q.map(fmt).unwrap_or_default(),
            r.utterance,
            r.method,
            fmt(r.si_sdr),
            fmt(r.si_sir),
            fmt(r.si_sar)
        )?;
    }
    Ok(())
}

/// Mean and 95% confidence half-width per (condition, method, metric); the
/// pseudo-method `delta` holds the paired nl-mmse − mvdr-mmse difference.
pub fn write_summary<W: Write>(mut w: W, result: &ExperimentResult) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for (condition, method, metric, s) in summarize(result) {
        writeln!(w, "{condition},{method},{metric},{},{}", fmt(s.mean), fmt(s.ci95))?;
    }
    Ok(())
}

/// Band-median gain per angle: aggregate MVDR and each aligned component.
pub fn write_directivity_summary<W: Write>(mut w: W, d: &ComponentDirectivity) -> std::io::Result<()> {
    write!(w, "angle_deg,aggregate_db")?;
    for m in 0..d.components_db.len() {
        write!(w, ",component_{}_db", m + 1)?;
    }
    writeln!(w)?;
    for (i, a) in d.angles_deg.iter().enumerate() {
        write!(w, "{},{}", a.round(), fmt(d.aggregate_db[i]))?;
        for c in &d.components_db {
            write!(w, ",{}", fmt(c[i]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes every output of a run into `dir` and returns the written paths.
pub fn write_all(dir: &Path, cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut out = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        let mut w = create(&path)?;
        f(&mut w)?;
        w.flush()?;
        written.push(path);
        Ok(())
    };
    out("records.csv", &|w| write_records(w, result))?;
    out("summary.csv", &|w| write_summary(w, result))?;
    if let Some(d) = &result.directivity {
        out("directivity.csv", &|w| write_directivity_summary(w, d))?;
        out("directivity_aggregate.csv", &|w| d.aggregate_pattern.write_csv(w))?;
        for (m, p) in d.component_patterns.iter().enumerate() {
            out(&format!("directivity_component_{}.csv", m + 1), &|w| p.write_csv(w))?;
        }
    }
    let names = written
        .iter()
        .map(|p| p.file_name().expect("file").to_string_lossy().into_owned())
        .collect();
    let manifest = Manifest::new(cfg, names);
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    written.push(path);
    Ok(written)
}
