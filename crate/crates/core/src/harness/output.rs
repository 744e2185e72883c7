//! CSV result files and JSON metadata sidecars.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::SimConfig;
use crate::error::Result;
use crate::harness::detection::DetectionPoint;
use crate::harness::mobility::MobilityPoint;
use crate::harness::sinr::SinrResult;

#[derive(Serialize)]
struct DetectionRow<'a> {
    variant: String,
    estimator: String,
    patterns: &'a str,
    assignment: &'a str,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "Q")]
    q: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "N_D")]
    n_d: usize,
    trials: usize,
    p_detect: f64,
    ci_lo: f64,
    ci_hi: f64,
}

#[derive(Serialize)]
struct SinrRow<'a> {
    direction: &'a str,
    estimator: String,
    k: usize,
    q: usize,
    sinr_db: f64,
}

#[derive(Serialize)]
struct MobilityRow {
    frame: usize,
    v_max: f64,
    lambda_f: f64,
    p_detect: f64,
    ci_lo: f64,
    ci_hi: f64,
}

pub fn write_detection_csv<W: Write>(w: W, points: &[DetectionPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(DetectionRow {
            variant: p.variant.label(),
            estimator: p.variant.estimator.to_string(),
            patterns: p.variant.patterns_label(),
            assignment: p.variant.assignment_label(),
            d: p.num_patterns,
            q: p.per_chain,
            t: p.slots,
            n_d: p.serving_aps,
            trials: p.trials,
            p_detect: p.p.p,
            ci_lo: p.p.lo,
            ci_hi: p.p.hi,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sinr_csv<W: Write>(w: W, result: &SinrResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in &result.samples {
        out.serialize(SinrRow {
            direction: s.direction.as_str(),
            estimator: s.source.label(),
            k: s.ue,
            q: s.subcarrier,
            sinr_db: s.sinr_db,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mobility_csv<W: Write>(w: W, points: &[MobilityPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(MobilityRow {
            frame: p.frame,
            v_max: p.v_max,
            lambda_f: p.forgetting,
            p_detect: p.p.p,
            ci_lo: p.p.lo,
            ci_hi: p.p.hi,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Sidecar describing how a result file was produced.
#[derive(Debug, Serialize)]
pub struct Metadata {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub trials: usize,
    pub config_hash: String,
    pub config: SimConfig,
    /// Command-specific counters (excluded UEs, short associations, ...).
    pub notes: serde_json::Map<String, serde_json::Value>,
}

impl Metadata {
    pub fn new(command: &str, cfg: &SimConfig) -> Self {
        Metadata {
            command: command.into(),
            version: concat!("cellfree-ba ", env!("CARGO_PKG_VERSION")).into(),
            seed: cfg.seed,
            trials: cfg.trials,
            config_hash: cfg.hash(),
            config: cfg.clone(),
            notes: serde_json::Map::new(),
        }
    }

    pub fn note(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.notes.insert(key.into(), value.into());
        self
    }
}

/// Writes `<dir>/<stem>.csv` through `write` and `<dir>/<stem>.json`; returns the CSV path.
pub fn write_result<F>(dir: &Path, stem: &str, meta: &Metadata, write: F) -> Result<PathBuf>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    write(&mut w)?;
    w.flush()?;
    let json = serde_json::to_string_pretty(meta)?;
    std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
    Ok(csv_path)
}
