use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// One evaluation of the global model (Plexus, FL) or of all node models
/// (D-PSGD, GL).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub time_s: f64,
    pub round: u64,
    pub accuracy: f64,
    pub accuracy_std: f64,
    #[serde(skip)]
    pub bytes_total: u64,
    #[serde(skip)]
    pub train_seconds_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerPoint {
    pub time_s: f64,
    pub bytes_total: u64,
    pub train_seconds_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub duration_s: f64,
    pub participants: usize,
    pub models_aggregated: usize,
    pub late_models: u64,
}

/// Everything an experiment measures: accuracy over virtual time, bytes on
/// the wire, device training time, and per-round statistics.
///
/// Training time is kept as per-node invocation counts so the total is an
/// exact function of which devices trained, independent of event order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLedger {
    pub accuracy: Vec<AccuracyPoint>,
    pub ledger: Vec<LedgerPoint>,
    pub rounds: Vec<RoundRecord>,
    pub bytes_total: u64,
    pub transfers: u64,
    pub late_models: u64,
    pub duplicates: u64,
    pub final_time: f64,
    compute_secs: Vec<f64>,
    invocations: Vec<u64>,
    round_index: BTreeMap<u64, usize>,
}

impl MetricsLedger {
    /// `compute_secs[i]` is the duration of one training invocation on node `i`.
    pub fn new(compute_secs: Vec<f64>) -> Self {
        let n = compute_secs.len();
        MetricsLedger {
            accuracy: Vec::new(),
            ledger: Vec::new(),
            rounds: Vec::new(),
            bytes_total: 0,
            transfers: 0,
            late_models: 0,
            duplicates: 0,
            final_time: 0.0,
            compute_secs,
            invocations: vec![0; n],
            round_index: BTreeMap::new(),
        }
    }

    pub fn add_transfer(&mut self, bytes: u64) {
        self.bytes_total += bytes;
        self.transfers += 1;
    }

    pub fn add_training(&mut self, node: usize) {
        self.invocations[node] += 1;
    }

    pub fn trainings(&self) -> u64 {
        self.invocations.iter().sum()
    }

    pub fn invocations(&self) -> &[u64] {
        &self.invocations
    }

    /// Σ over nodes (in index order) of invocations × seconds per invocation.
    pub fn train_seconds_total(&self) -> f64 {
        self.invocations
            .iter()
            .zip(&self.compute_secs)
            .map(|(&c, &s)| c as f64 * s)
            .sum()
    }

    pub fn snapshot(&mut self, time_s: f64) {
        let point = LedgerPoint {
            time_s,
            bytes_total: self.bytes_total,
            train_seconds_total: self.train_seconds_total(),
        };
        if self.ledger.last() != Some(&point) {
            self.ledger.push(point);
        }
    }

    pub fn record_accuracy(&mut self, time_s: f64, round: u64, accuracy: f64, accuracy_std: f64) {
        self.accuracy.push(AccuracyPoint {
            time_s,
            round,
            accuracy,
            accuracy_std,
            bytes_total: self.bytes_total,
            train_seconds_total: self.train_seconds_total(),
        });
        self.snapshot(time_s);
    }

    pub fn complete_round(&mut self, time_s: f64, record: RoundRecord) {
        self.round_index.insert(record.round, self.rounds.len());
        self.rounds.push(record);
        self.snapshot(time_s);
    }

    /// A model for `round` arrived after aggregation.
    pub fn add_late(&mut self, round: u64) {
        self.late_models += 1;
        if let Some(&i) = self.round_index.get(&round) {
            self.rounds[i].late_models += 1;
        }
    }

    pub fn last_accuracy(&self) -> Option<&AccuracyPoint> {
        self.accuracy.last()
    }

    /// First evaluation at or above `target`.
    pub fn first_reaching(&self, target: f64) -> Option<&AccuracyPoint> {
        self.accuracy.iter().find(|p| p.accuracy >= target)
    }

    pub fn tta(&self, target: f64) -> Option<f64> {
        self.first_reaching(target).map(|p| p.time_s)
    }

    pub fn cta(&self, target: f64) -> Option<u64> {
        self.first_reaching(target).map(|p| p.bytes_total)
    }

    pub fn rta(&self, target: f64) -> Option<f64> {
        self.first_reaching(target).map(|p| p.train_seconds_total)
    }

    /// Writes `accuracy.csv`, `ledger.csv` and `rounds.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
        write_rows(
            &dir.join("accuracy.csv"),
            &["time_s", "round", "accuracy", "accuracy_std"],
            &self.accuracy,
        )?;
        write_rows(
            &dir.join("ledger.csv"),
            &["time_s", "bytes_total", "train_seconds_total"],
            &self.ledger,
        )?;
        write_rows(
            &dir.join("rounds.csv"),
            &[
                "round",
                "duration_s",
                "participants",
                "models_aggregated",
                "late_models",
            ],
            &self.rounds,
        )?;
        Ok(())
    }
}

fn write_rows<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: &[T],
) -> Result<(), ExperimentError> {
    let err = |e: csv::Error| ExperimentError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| ExperimentError::Output(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| ExperimentError::Output(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
    pub histogram: Vec<HistogramBin>,
}

pub const HISTOGRAM_BINS: usize = 20;

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Round-duration summary with an equal-width histogram over `[min, max]`.
pub fn round_duration_stats(rounds: &[RoundRecord]) -> Option<DurationStats> {
    if rounds.is_empty() {
        return None;
    }
    let mut d: Vec<f64> = rounds.iter().map(|r| r.duration_s).collect();
    d.sort_by(f64::total_cmp);
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let std = (d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    let (min, max) = (d[0], d[d.len() - 1]);
    let width = (max - min) / HISTOGRAM_BINS as f64;
    let mut histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lo: min + width * b as f64,
            hi: if b + 1 == HISTOGRAM_BINS {
                max
            } else {
                min + width * (b + 1) as f64
            },
            count: 0,
        })
        .collect();
    for &x in &d {
        let b = if width > 0.0 {
            (((x - min) / width) as usize).min(HISTOGRAM_BINS - 1)
        } else {
            0
        };
        histogram[b].count += 1;
    }
    Some(DurationStats {
        count: d.len(),
        mean,
        std,
        p50: quantile(&d, 0.5),
        p95: quantile(&d, 0.95),
        max,
        histogram,
    })
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
