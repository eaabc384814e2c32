//! Series ingestion, z-score normalization, sliding windows and the
//! chronological train/test split.

use std::f64::consts::PI;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numcore::Vec64;
use crate::seeding::rng_from;

/// Reads one numeric value per line. A non-numeric first line is treated as
/// a header and skipped; blank lines are ignored. Row numbers in errors are
/// 1-based file lines.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    parse_series(&text)
}

pub fn parse_series(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    let mut first_content = true;
    for (idx, line) in text.lines().enumerate() {
        let field = line.trim().trim_end_matches(',').trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => return Err(Error::MalformedRow { row: idx + 1, value: field.to_owned() }),
            Err(_) if first_content => {}
            Err(_) => return Err(Error::MalformedRow { row: idx + 1, value: field.to_owned() }),
        }
        first_content = false;
    }
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(values)
}

/// Samples per simulated day (15-minute slots).
pub const DAY: usize = 96;
/// Slow component period: five days.
pub const WEEK: usize = 480;

/// Periodic traffic-like series: a daily and a five-day sinusoid around a
/// level of 10, plus Gaussian noise with the given standard deviation.
pub fn synth_traffic_with_noise(n: usize, seed: u64, noise_std: f64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    (0..n)
        .map(|t| {
            let t = t as f64;
            let clean = 10.0 + 4.0 * (2.0 * PI * t / DAY as f64).sin() + 1.5 * (2.0 * PI * t / WEEK as f64).sin();
            if noise_std > 0.0 {
                clean + noise.sample(&mut rng)
            } else {
                clean
            }
        })
        .collect()
}

pub fn synth_traffic(n: usize, seed: u64) -> Vec<f64> {
    synth_traffic_with_noise(n, seed, 0.5)
}

/// Raw values with their z-score normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub values: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub normalized: Vec<f64>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.sigma + self.mu
    }
}

/// Normalizes `values` with externally supplied statistics, e.g. those a
/// model was trained with.
pub fn normalize_with(values: &[f64], mu: f64, sigma: f64) -> Result<Series> {
    if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(Error::DegenerateSeries);
    }
    let normalized = values.iter().map(|v| (v - mu) / sigma).collect();
    Ok(Series { values: values.to_vec(), mu, sigma, normalized })
}

/// `(x - mean) / std` with the population standard deviation.
pub fn normalize(values: &[f64]) -> Result<Series> {
    if values.len() < 2 {
        return Err(Error::SeriesTooShort { needed: 2, got: values.len() });
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if sigma.is_nan() || sigma <= 0.0 || sigma <= mu.abs() * 1e-15 {
        return Err(Error::DegenerateSeries);
    }
    let normalized = values.iter().map(|v| (v - mu) / sigma).collect();
    Ok(Series { values: values.to_vec(), mu, sigma, normalized })
}

/// Sliding windows of `window` consecutive normalized values, each paired
/// with the value that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Vec<Vec<Vec64>>,
    pub targets: Vec<f64>,
    pub window: usize,
    /// Series index of each window's first element.
    pub starts: Vec<usize>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Windows `range` of this dataset, keeping their series offsets.
    pub fn slice(&self, range: std::ops::Range<usize>) -> WindowedDataset {
        WindowedDataset {
            inputs: self.inputs[range.clone()].to_vec(),
            targets: self.targets[range.clone()].to_vec(),
            window: self.window,
            starts: self.starts[range].to_vec(),
        }
    }
}

pub fn make_windows(series: &Series, window: usize) -> Result<WindowedDataset> {
    let len = series.normalized.len();
    if window == 0 || window >= len {
        return Err(Error::WindowTooLong { window, len });
    }
    let count = len - window;
    let z = &series.normalized;
    let inputs = (0..count).map(|k| z[k..k + window].iter().map(|&v| Vec64(vec![v])).collect()).collect();
    let targets = (0..count).map(|k| z[k + window]).collect();
    Ok(WindowedDataset { inputs, targets, window, starts: (0..count).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainSize {
    All,
    Windows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub test_size: usize,
    pub train_size: TrainSize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { test_size: 1000, train_size: TrainSize::All }
    }
}

/// Test set is the last `test_size` windows; train is the block of windows
/// immediately before it, truncated from the old end when `train_size` is
/// given.
pub fn split(dataset: &WindowedDataset, spec: SplitSpec) -> Result<(WindowedDataset, WindowedDataset)> {
    let total = dataset.len();
    if spec.test_size == 0 || spec.test_size >= total {
        return Err(Error::InfeasibleSplit(format!(
            "test size {} leaves no training windows out of {total}",
            spec.test_size
        )));
    }
    let available = total - spec.test_size;
    let train_size = match spec.train_size {
        TrainSize::All => available,
        TrainSize::Windows(0) => return Err(Error::InfeasibleSplit("train size must be positive".into())),
        TrainSize::Windows(n) if n > available => {
            return Err(Error::InfeasibleSplit(format!(
                "train size {n} + test size {} exceeds {total} windows",
                spec.test_size
            )))
        }
        TrainSize::Windows(n) => n,
    };
    let train = dataset.slice(available - train_size..available);
    let test = dataset.slice(available..total);
    Ok((train, test))
}
