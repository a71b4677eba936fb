//! Aggregates finished experiment directories into TTA/CTA/RTA tables and
//! plot-ready curve data, recomputed from the per-repetition CSVs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{read_rows, AccuracyPoint, LedgerPoint};
use super::runner::ExperimentSummary;
use super::ExperimentError;

/// One row of `report.csv`: an experiment at one accuracy target, averaged
/// over the repetitions that reached it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub algorithm: String,
    pub target: f64,
    pub repetitions: usize,
    pub reached: usize,
    pub tta_s: Option<f64>,
    pub cta_bytes: Option<f64>,
    pub rta_s: Option<f64>,
    pub final_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CurveRow<'a> {
    experiment: &'a str,
    repetition: u32,
    time_s: f64,
    round: u64,
    accuracy: f64,
    accuracy_std: f64,
    bytes_total: u64,
    train_seconds_total: f64,
}

struct Repetition {
    index: u32,
    accuracy: Vec<AccuracyPoint>,
    ledger: Vec<LedgerPoint>,
}

impl Repetition {
    /// Ledger state when the evaluation at `time_s` was taken.
    fn ledger_at(&self, time_s: f64) -> Option<&LedgerPoint> {
        self.ledger.iter().find(|p| p.time_s >= time_s)
    }

    fn reaching(&self, target: f64) -> Option<(f64, &LedgerPoint)> {
        let p = self.accuracy.iter().find(|p| p.accuracy >= target)?;
        Some((p.time_s, self.ledger_at(p.time_s)?))
    }
}

/// Experiment directories below `path`: `path` itself if it holds a
/// `summary.json`, otherwise its immediate subdirectories that do.
fn experiment_dirs(path: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    if path.join("summary.json").is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| ExperimentError::io(path, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| ExperimentError::io(path, e))?.path();
        if p.join("summary.json").is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(ExperimentError::Output(format!(
            "no experiment results under {}",
            path.display()
        )));
    }
    Ok(dirs)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn fmt_opt(v: Option<f64>, scale: f64, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.*}", digits, x / scale))
}

/// Reads every experiment under `paths`, writes `report.csv` and
/// `curves.csv` into `out`, and returns the rows plus a printable table.
pub fn report(paths: &[PathBuf], out: &Path) -> Result<(Vec<Summary>, String), ExperimentError> {
    let mut rows = Vec::new();
    std::fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;
    let curves_path = out.join("curves.csv");
    let csv_err =
        |e: csv::Error| ExperimentError::Output(format!("{}: {e}", curves_path.display()));
    let mut curves = csv::Writer::from_path(&curves_path).map_err(csv_err)?;
    for path in paths {
        for dir in experiment_dirs(path)? {
            let summary_path = dir.join("summary.json");
            let text = std::fs::read_to_string(&summary_path)
                .map_err(|e| ExperimentError::io(&summary_path, e))?;
            let summary: ExperimentSummary = serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Output(format!("{}: {e}", summary_path.display())))?;
            let mut reps = Vec::new();
            for r in &summary.repetitions {
                let rep_dir = dir.join(format!("rep{}", r.repetition));
                reps.push(Repetition {
                    index: r.repetition,
                    accuracy: read_rows(&rep_dir.join("accuracy.csv"))?,
                    ledger: read_rows(&rep_dir.join("ledger.csv"))?,
                });
            }
            for rep in &reps {
                for p in &rep.accuracy {
                    let l = rep.ledger_at(p.time_s);
                    curves
                        .serialize(CurveRow {
                            experiment: &summary.name,
                            repetition: rep.index,
                            time_s: p.time_s,
                            round: p.round,
                            accuracy: p.accuracy,
                            accuracy_std: p.accuracy_std,
                            bytes_total: l.map_or(0, |l| l.bytes_total),
                            train_seconds_total: l.map_or(0.0, |l| l.train_seconds_total),
                        })
                        .map_err(csv_err)?;
                }
            }
            let finals: Vec<f64> = reps
                .iter()
                .filter_map(|r| r.accuracy.last().map(|p| p.accuracy))
                .collect();
            let targets: Vec<f64> = summary.mean.targets.iter().map(|t| t.target).collect();
            for target in targets {
                let hits: Vec<(f64, &LedgerPoint)> =
                    reps.iter().filter_map(|r| r.reaching(target)).collect();
                rows.push(Summary {
                    experiment: summary.name.clone(),
                    algorithm: summary.algorithm.clone(),
                    target,
                    repetitions: reps.len(),
                    reached: hits.len(),
                    tta_s: mean(&hits.iter().map(|h| h.0).collect::<Vec<_>>()),
                    cta_bytes: mean(
                        &hits
                            .iter()
                            .map(|h| h.1.bytes_total as f64)
                            .collect::<Vec<_>>(),
                    ),
                    rta_s: mean(
                        &hits
                            .iter()
                            .map(|h| h.1.train_seconds_total)
                            .collect::<Vec<_>>(),
                    ),
                    final_accuracy: mean(&finals).unwrap_or(0.0),
                });
            }
        }
    }
    curves
        .flush()
        .map_err(|e| ExperimentError::io(&curves_path, e))?;

    let report_path = out.join("report.csv");
    let mut w =
        csv::Writer::from_path(&report_path).map_err(|e| ExperimentError::Output(e.to_string()))?;
    for row in &rows {
        w.serialize(row)
            .map_err(|e| ExperimentError::Output(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| ExperimentError::io(&report_path, e))?;

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<28} {:<7} {:>7} {:>7} {:>10} {:>10} {:>12} {:>8}",
        "experiment", "alg", "target", "reached", "TTA (h)", "CTA (GB)", "RTA (h)", "final"
    );
    for r in &rows {
        let _ = writeln!(
            table,
            "{:<28} {:<7} {:>7.3} {:>7} {:>10} {:>10} {:>12} {:>8.4}",
            r.experiment,
            r.algorithm,
            r.target,
            format!("{}/{}", r.reached, r.repetitions),
            fmt_opt(r.tta_s, 3600.0, 3),
            fmt_opt(r.cta_bytes, 1e9, 4),
            fmt_opt(r.rta_s, 3600.0, 3),
            r.final_accuracy
        );
    }
    Ok((rows, table))
}
