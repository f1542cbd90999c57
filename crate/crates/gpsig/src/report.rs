//! CSV and JSON outputs.

use std::path::Path;

use gpsig_core::model::Metrics;
use gpsig_core::signature::GramBlock;
use gpsig_core::trainer::TrainLog;
use serde::{Deserialize, Serialize};

/// Per-epoch training history: `epoch,phase,elbo,val_nlpp,val_accuracy,elapsed_secs`.
pub fn write_trainlog(path: &Path, log: &TrainLog) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "phase", "elbo", "val_nlpp", "val_accuracy", "elapsed_secs"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &log.records {
        w.write_record([
            r.epoch.to_string(),
            r.phase.name().to_string(),
            r.elbo.to_string(),
            opt(r.val_nlpp),
            opt(r.val_accuracy),
            r.elapsed_secs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Gram block with a header row of column ids and a leading column of row ids.
pub fn write_gram(path: &Path, g: &GramBlock) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![String::new()];
    header.extend(g.col_ids.iter().cloned());
    w.write_record(&header)?;
    for i in 0..g.rows {
        let mut row = vec![g.row_ids[i].clone()];
        row.extend((0..g.cols).map(|j| g.get(i, j).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a Gram block back from [`write_gram`] output.
pub fn read_gram(path: &Path) -> csv::Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.iter().skip(1).map(|v| v.parse().unwrap_or(f64::NAN)).collect());
    }
    Ok(rows)
}

/// One inducing-variable comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub n_z: usize,
    pub variant: String,
    pub seed: u64,
    pub elbo: f64,
    pub accuracy: f64,
    pub nlpp: f64,
}

pub fn write_compare(path: &Path, rows: &[CompareRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_compare(path: &Path) -> csv::Result<Vec<CompareRow>> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

/// `metrics.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub mean_nlpp: f64,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_elbo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_secs: Option<f64>,
}

impl MetricsReport {
    pub fn new(m: Metrics) -> Self {
        Self {
            accuracy: m.accuracy,
            mean_nlpp: m.mean_nlpp,
            count: m.count,
            final_elbo: None,
            train_secs: None,
        }
    }
}
