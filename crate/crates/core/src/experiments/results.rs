//! Result rows, median summaries and the files a run leaves behind.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::Mode;

pub const RESULTS_HEADER: &str =
    "mode,sweep_value,trial_seed,realized_connectivity,mse,mae,train_seconds,final_train_loss";

/// One trained-and-evaluated trial. Failed trials keep their identifying
/// fields and carry NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub mode: String,
    pub sweep_value: f64,
    pub trial_seed: u64,
    pub realized_connectivity: f64,
    pub mse: f64,
    pub mae: f64,
    pub train_seconds: f64,
    pub final_train_loss: f64,
    /// Connectivity arm the trial belongs to.
    pub arm: f64,
    pub trial_index: usize,
    pub failure: Option<String>,
}

impl ResultRow {
    pub fn is_failure(&self) -> bool {
        self.failure.is_some()
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.mode,
            self.sweep_value,
            self.trial_seed,
            self.realized_connectivity,
            self.mse,
            self.mae,
            self.train_seconds,
            self.final_train_loss
        )
    }
}

/// Median over trials at one (arm, sweep value) point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub arm: f64,
    pub sweep_value: f64,
    pub median_mse: f64,
    pub median_mae: f64,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub mode: Mode,
    pub rows: Vec<ResultRow>,
}

/// Median of the finite entries; `NaN` when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ExperimentResult {
    pub fn arms(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.arm) {
                out.push(r.arm);
            }
        }
        out
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.sweep_value) {
                out.push(r.sweep_value);
            }
        }
        out
    }

    pub fn rows_at(&self, arm: f64, sweep_value: f64) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.arm == arm && r.sweep_value == sweep_value)
    }

    pub fn median_mse(&self, arm: f64, sweep_value: f64) -> f64 {
        median(self.rows_at(arm, sweep_value).map(|r| r.mse))
    }

    pub fn median_mae(&self, arm: f64, sweep_value: f64) -> f64 {
        median(self.rows_at(arm, sweep_value).map(|r| r.mae))
    }

    pub fn summary(&self) -> Vec<PointSummary> {
        let mut out = Vec::new();
        for arm in self.arms() {
            for v in self.sweep_values() {
                let rows: Vec<&ResultRow> = self.rows_at(arm, v).collect();
                if rows.is_empty() {
                    continue;
                }
                out.push(PointSummary {
                    arm,
                    sweep_value: v,
                    median_mse: median(rows.iter().map(|r| r.mse)),
                    median_mae: median(rows.iter().map(|r| r.mae)),
                    trials: rows.len(),
                    failures: rows.iter().filter(|r| r.is_failure()).count(),
                });
            }
        }
        out
    }

    pub fn failures(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.is_failure())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(RESULTS_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.csv_line());
        }
        s
    }
}

/// Spread of medians across window lengths, and the longest-window
/// comparison against the dense arm. Recorded, not asserted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeqlenReport {
    pub window_lengths: Vec<f64>,
    /// `(arm, max - min of median MSE over window lengths)`
    pub spread: Vec<(f64, f64)>,
    pub longest_window: f64,
    /// `(arm, median MSE at the longest window)`
    pub at_longest: Vec<(f64, f64)>,
    /// Sparse arms whose median beats the dense arm at the longest window.
    pub sparse_beats_dense_at_longest: Vec<(f64, bool)>,
}

pub fn seqlen_report(result: &ExperimentResult) -> SeqlenReport {
    let lengths = result.sweep_values();
    let longest = lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let arms = result.arms();
    let spread = arms
        .iter()
        .map(|&arm| {
            let medians: Vec<f64> = lengths.iter().map(|&l| result.median_mse(arm, l)).collect();
            let hi = medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = medians.iter().copied().fold(f64::INFINITY, f64::min);
            (arm, hi - lo)
        })
        .collect();
    let at_longest: Vec<(f64, f64)> = arms.iter().map(|&arm| (arm, result.median_mse(arm, longest))).collect();
    let dense = at_longest.iter().find(|(a, _)| *a == 1.0).map(|&(_, m)| m);
    let sparse_beats_dense_at_longest = match dense {
        Some(d) => at_longest.iter().filter(|(a, _)| *a < 1.0).map(|&(a, m)| (a, m < d)).collect(),
        None => Vec::new(),
    };
    SeqlenReport { window_lengths: lengths, spread, longest_window: longest, at_longest, sparse_beats_dense_at_longest }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_owned(), source })
}

pub fn write_results_csv(path: &Path, result: &ExperimentResult) -> Result<()> {
    write_text(path, &result.to_csv())
}

/// `actual,predicted` rows in raw units.
pub fn pred_vs_actual_csv(pairs: &[(f64, f64)]) -> String {
    let mut s = String::from("actual,predicted\n");
    for (a, p) in pairs {
        let _ = writeln!(s, "{a},{p}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(arm: f64, v: f64, mse: f64) -> ResultRow {
        ResultRow {
            mode: "sweep-connectivity".into(),
            sweep_value: v,
            trial_seed: 1,
            realized_connectivity: arm,
            mse,
            mae: mse.sqrt(),
            train_seconds: 0.0,
            final_train_loss: 0.1,
            arm,
            trial_index: 0,
            failure: None,
        }
    }

    #[test]
    fn median_cases() {
        assert_eq!(median([3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median([f64::NAN, 5.0]), 5.0);
        assert!(median([f64::NAN]).is_nan());
    }

    #[test]
    fn csv_layout() {
        let r = ExperimentResult { mode: Mode::SweepConnectivity, rows: vec![row(0.35, 0.35, 0.25)] };
        assert_eq!(
            r.to_csv(),
            "mode,sweep_value,trial_seed,realized_connectivity,mse,mae,train_seconds,final_train_loss\n\
             sweep-connectivity,0.35,1,0.35,0.25,0.5,0,0.1\n"
        );
    }

    #[test]
    fn seqlen_report_compares_against_dense() {
        let rows = vec![row(0.35, 5.0, 0.2), row(0.35, 100.0, 0.1), row(1.0, 5.0, 0.15), row(1.0, 100.0, 0.3)];
        let rep = seqlen_report(&ExperimentResult { mode: Mode::SweepSeqlen, rows });
        assert_eq!(rep.longest_window, 100.0);
        assert_eq!(rep.sparse_beats_dense_at_longest, vec![(0.35, true)]);
        assert!((rep.spread[0].1 - 0.1).abs() < 1e-15);
        assert!((rep.spread[1].1 - 0.15).abs() < 1e-15);
    }
}
