use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{EffectivePlan, ExperimentConfig};
use super::experiment::{DatasetStats, ExperimentReport};
use super::metrics::{RankingSummary, RoundMetrics};
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    round: usize,
    hr10: f64,
    ndcg10: f64,
    hr20: f64,
    ndcg20: f64,
    loss: f64,
    cluster_sizes: String,
}

/// Final summary written next to the per-round CSV.
#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub config: &'a ExperimentConfig,
    pub effective: &'a EffectivePlan,
    pub dataset: &'a DatasetStats,
    pub rounds: usize,
    pub final_validation: Option<&'a RoundMetrics>,
    pub test: &'a RankingSummary,
    pub wall_time_secs: f64,
}

impl Serialize for RoundMetrics {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        row_of(self).serialize(s)
    }
}

fn row_of(m: &RoundMetrics) -> CsvRow {
    CsvRow {
        round: m.round,
        hr10: m.hr10,
        ndcg10: m.ndcg10,
        hr20: m.hr20,
        ndcg20: m.ndcg20,
        loss: m.loss,
        cluster_sizes: m
            .cluster_sizes
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";"),
    }
}

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the per-round series with header
/// `round,hr10,ndcg10,hr20,ndcg20,loss,cluster_sizes`.
pub fn write_metrics_csv(path: impl AsRef<Path>, series: &[RoundMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if series.is_empty() {
        w.write_record(["round", "hr10", "ndcg10", "hr20", "ndcg20", "loss", "cluster_sizes"])
            .map_err(|e| csv_error(path, e))?;
    }
    for m in series {
        w.serialize(row_of(m)).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<RoundMetrics>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize::<CsvRow>()
        .enumerate()
        .map(|(idx, row)| {
            let row = row.map_err(|e| csv_error(path, e))?;
            let cluster_sizes = if row.cluster_sizes.is_empty() {
                Vec::new()
            } else {
                row.cluster_sizes
                    .split(';')
                    .map(|s| {
                        s.parse().map_err(|_| Error::Parse {
                            path: path.to_path_buf(),
                            line: idx + 2,
                            message: format!("invalid cluster size {s:?}"),
                        })
                    })
                    .collect::<Result<_>>()?
            };
            Ok(RoundMetrics {
                round: row.round,
                hr10: row.hr10,
                ndcg10: row.ndcg10,
                hr20: row.hr20,
                ndcg20: row.ndcg20,
                loss: row.loss,
                cluster_sizes,
            })
        })
        .collect()
}

pub fn write_summary_json(path: impl AsRef<Path>, report: &ExperimentReport) -> Result<()> {
    let path = path.as_ref();
    let summary = Summary {
        config: &report.config,
        effective: &report.plan,
        dataset: &report.dataset,
        rounds: report.rounds.len(),
        final_validation: report.rounds.last(),
        test: &report.test,
        wall_time_secs: report.wall_time_secs,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes `metrics.csv` and `summary.json` into `dir`, creating it if needed.
pub fn emit_metrics(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(METRICS_FILE);
    let json = dir.join(SUMMARY_FILE);
    write_metrics_csv(&csv, &report.rounds)?;
    write_summary_json(&json, report)?;
    Ok((csv, json))
}
