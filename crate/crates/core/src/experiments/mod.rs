//! Experiment orchestration: connectivity, training-size and window-length
//! sweeps, single-model train/predict runs, and the files they write.
//!
//! Every trial draws its seed from the master seed and its own coordinates
//! (mode, sweep value, trial index), never from shared generator state, so
//! trials can run in any order or on any worker and any single trial can be
//! rerun in isolation. Connectivity arms that share a sweep point and trial
//! index share the seed, which pairs their initialization and data order.

pub mod checkpoint;
pub mod results;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    load_csv, make_windows, normalize, normalize_with, split, synth_traffic, Series, SplitSpec, TrainSize,
    WindowedDataset,
};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::network::build_network;
use crate::seeding::{derive_seed, TAG_MASK};
use crate::training::{train, TrainConfig};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use results::{median, seqlen_report, ExperimentResult, PointSummary, ResultRow, SeqlenReport, RESULTS_HEADER};

pub const DEFAULT_CONNECTIVITY_SWEEP: [f64; 6] = [0.1, 0.2, 0.35, 0.5, 0.75, 1.0];
pub const DEFAULT_ARMS: [f64; 3] = [0.35, 0.5, 1.0];
pub const DEFAULT_TRAIN_SIZES: [usize; 5] = [500, 1000, 2000, 4000, 6000];
pub const DEFAULT_WINDOWS: [usize; 5] = [5, 10, 20, 50, 100];
pub const DEFAULT_SERIES_LEN: usize = 7289;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Train,
    Predict,
    SweepConnectivity,
    SweepTrainsize,
    SweepSeqlen,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Predict => "predict",
            Mode::SweepConnectivity => "sweep-connectivity",
            Mode::SweepTrainsize => "sweep-trainsize",
            Mode::SweepSeqlen => "sweep-seqlen",
        }
    }

    fn id(self) -> u64 {
        match self {
            Mode::Train => 1,
            Mode::Predict => 2,
            Mode::SweepConnectivity => 3,
            Mode::SweepTrainsize => 4,
            Mode::SweepSeqlen => 5,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Csv { path: PathBuf },
    Synthetic { len: usize, seed: u64 },
}

impl DataSource {
    pub fn load(&self) -> Result<Vec<f64>> {
        match self {
            DataSource::Csv { path } => load_csv(path),
            DataSource::Synthetic { len, seed } => {
                if *len < 2 {
                    return Err(Error::Config(format!("synthetic series length must be at least 2, got {len}")));
                }
                Ok(synth_traffic(*len, *seed))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub data_source: DataSource,
    /// Swept values for `sweep-connectivity`; the compared arms for the
    /// other sweeps; the first entry is the model connectivity for `train`.
    pub connectivity_list: Vec<f64>,
    pub trainsize_list: Vec<usize>,
    pub seqlen_list: Vec<usize>,
    pub trials_per_point: usize,
    /// Cap on training windows for `train`, `sweep-connectivity` and
    /// `sweep-seqlen`; `None` trains on every window before the test tail.
    pub train_size: Option<usize>,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    pub layers: usize,
    pub hidden: usize,
    /// Window length for every mode except `sweep-seqlen`.
    pub window: usize,
    pub test_size: usize,
    pub master_seed: u64,
    pub workers: usize,
    /// Write measured wall time into `train_seconds`. Off by default so
    /// reruns produce byte-identical result files.
    pub record_timing: bool,
    /// Checkpoint to read in `predict` mode.
    pub checkpoint: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, output_dir: impl Into<PathBuf>) -> Self {
        let connectivity_list = match mode {
            Mode::SweepConnectivity => DEFAULT_CONNECTIVITY_SWEEP.to_vec(),
            Mode::SweepTrainsize | Mode::SweepSeqlen => DEFAULT_ARMS.to_vec(),
            Mode::Train | Mode::Predict => vec![0.35],
        };
        ExperimentConfig {
            mode,
            data_source: DataSource::Synthetic { len: DEFAULT_SERIES_LEN, seed: 0 },
            connectivity_list,
            trainsize_list: DEFAULT_TRAIN_SIZES.to_vec(),
            seqlen_list: DEFAULT_WINDOWS.to_vec(),
            trials_per_point: 5,
            train_size: None,
            train: TrainConfig::default(),
            output_dir: output_dir.into(),
            layers: 3,
            hidden: 32,
            window: 10,
            test_size: 1000,
            master_seed: 0,
            workers: 1,
            record_timing: false,
            checkpoint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.layers == 0 || self.hidden == 0 {
            return cfg_err("layers and hidden size must be positive".into());
        }
        if self.trials_per_point == 0 {
            return cfg_err("trials per point must be positive".into());
        }
        if self.workers == 0 {
            return cfg_err("worker count must be positive".into());
        }
        if self.window == 0 {
            return cfg_err("window length must be positive".into());
        }
        if self.train_size == Some(0) {
            return cfg_err("training size must be positive".into());
        }
        if self.test_size == 0 {
            return cfg_err("test size must be positive".into());
        }
        if self.connectivity_list.is_empty() {
            return cfg_err("connectivity list is empty".into());
        }
        if let Some(&c) = self.connectivity_list.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidConnectivity(c));
        }
        if has_duplicates(&self.connectivity_list) {
            return cfg_err("connectivity list has duplicates".into());
        }
        match self.mode {
            Mode::SweepTrainsize => {
                if self.trainsize_list.is_empty() || self.trainsize_list.contains(&0) {
                    return cfg_err("training-size list must be non-empty and positive".into());
                }
                if self.trainsize_list.windows(2).any(|w| w[0] >= w[1]) {
                    return cfg_err("training-size list must be strictly ascending".into());
                }
            }
            Mode::SweepSeqlen => {
                if self.seqlen_list.is_empty() || self.seqlen_list.contains(&0) {
                    return cfg_err("window-length list must be non-empty and positive".into());
                }
                let mut sorted = self.seqlen_list.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != self.seqlen_list.len() {
                    return cfg_err("window-length list has duplicates".into());
                }
            }
            Mode::Predict if self.checkpoint.is_none() => {
                return cfg_err("predict needs a checkpoint path".into());
            }
            _ => {}
        }
        Ok(())
    }

    fn fixed_split(&self) -> SplitSpec {
        let train_size = self.train_size.map_or(TrainSize::All, TrainSize::Windows);
        SplitSpec { test_size: self.test_size, train_size }
    }

    fn trial_seed(&self, sweep_value: f64, trial_index: usize) -> u64 {
        derive_seed(self.master_seed, &[self.mode.id(), sweep_value.to_bits(), trial_index as u64])
    }
}

fn has_duplicates(v: &[f64]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[i + 1..].contains(a))
}

/// Identifies one trial; `sort_key` fixes the output order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub arm: f64,
    pub sweep_value: f64,
    pub sweep_index: usize,
    pub arm_index: usize,
    pub trial_index: usize,
    pub seed: u64,
}

impl TrialSpec {
    fn sort_key(&self) -> (usize, usize, usize) {
        (self.sweep_index, self.arm_index, self.trial_index)
    }
}

/// `mode` column value: the sweep name, suffixed with `@<connectivity>` when
/// the sweep compares several connectivity arms.
fn row_mode(mode: Mode, arm: f64) -> String {
    match mode {
        Mode::SweepTrainsize | Mode::SweepSeqlen => format!("{}@{arm}", mode.name()),
        _ => mode.name().to_owned(),
    }
}

/// The trials a sweep consists of, in output order.
pub fn plan_trials(cfg: &ExperimentConfig) -> Vec<TrialSpec> {
    let sweep_values: Vec<f64> = match cfg.mode {
        Mode::SweepConnectivity => cfg.connectivity_list.clone(),
        Mode::SweepTrainsize => cfg.trainsize_list.iter().map(|&n| n as f64).collect(),
        Mode::SweepSeqlen => cfg.seqlen_list.iter().map(|&n| n as f64).collect(),
        Mode::Train | Mode::Predict => vec![cfg.connectivity_list[0]],
    };
    let mut out = Vec::new();
    for (sweep_index, &v) in sweep_values.iter().enumerate() {
        let arms: Vec<f64> = match cfg.mode {
            Mode::SweepTrainsize | Mode::SweepSeqlen => cfg.connectivity_list.clone(),
            _ => vec![v],
        };
        for (arm_index, &arm) in arms.iter().enumerate() {
            for trial_index in 0..cfg.trials_per_point {
                out.push(TrialSpec {
                    arm,
                    sweep_value: v,
                    sweep_index,
                    arm_index,
                    trial_index,
                    seed: cfg.trial_seed(v, trial_index),
                });
            }
        }
    }
    out
}

/// Everything one trial produced.
pub struct TrialOutcome {
    pub row: ResultRow,
    pub network: Option<crate::network::StackedNetwork>,
    pub report: Option<crate::metrics::EvalReport>,
}

/// Builds, trains and evaluates one network. Errors become a failure row.
pub fn run_trial(
    cfg: &ExperimentConfig,
    spec: &TrialSpec,
    train_set: &WindowedDataset,
    test_set: &WindowedDataset,
) -> TrialOutcome {
    let start = Instant::now();
    let attempt = || -> Result<_> {
        let net = build_network(cfg.layers, 1, cfg.hidden, spec.arm, spec.seed)?;
        let realized = net.realized_connectivity();
        let tcfg = TrainConfig { seed: spec.seed, ..cfg.train };
        let (net, history) = train(net, train_set, &tcfg)?;
        let report = evaluate(&net, test_set)?;
        Ok((net, realized, history, report))
    };
    let outcome = attempt();
    let seconds = if cfg.record_timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let mut row = ResultRow {
        mode: row_mode(cfg.mode, spec.arm),
        sweep_value: spec.sweep_value,
        trial_seed: spec.seed,
        realized_connectivity: f64::NAN,
        mse: f64::NAN,
        mae: f64::NAN,
        train_seconds: seconds,
        final_train_loss: f64::NAN,
        arm: spec.arm,
        trial_index: spec.trial_index,
        failure: None,
    };
    match outcome {
        Ok((net, realized, history, report)) => {
            row.realized_connectivity = realized;
            row.mse = report.mse;
            row.mae = report.mae;
            row.final_train_loss = *history.last().expect("at least one epoch");
            if !(row.mse.is_finite() && row.mae.is_finite() && row.final_train_loss.is_finite()) {
                row.failure = Some("non-finite metric".into());
            }
            TrialOutcome { row, network: Some(net), report: Some(report) }
        }
        Err(e) => {
            row.failure = Some(e.to_string());
            TrialOutcome { row, network: None, report: None }
        }
    }
}

/// Normalized series plus the dataset it was loaded from.
pub struct PreparedData {
    pub series: Series,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let raw = cfg.data_source.load()?;
    Ok(PreparedData { series: normalize(&raw)? })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Runs `trials` against the datasets chosen by `datasets(spec)` and
/// returns rows in plan order regardless of completion order.
fn execute_trials<'a>(
    cfg: &ExperimentConfig,
    trials: &[TrialSpec],
    datasets: impl Fn(&TrialSpec) -> (&'a WindowedDataset, &'a WindowedDataset) + Sync,
) -> Result<ExperimentResult> {
    let pool = pool(cfg.workers)?;
    let mut rows: Vec<(TrialSpec, ResultRow)> = pool.install(|| {
        trials
            .par_iter()
            .map(|spec| {
                let (tr, te) = datasets(spec);
                let out = run_trial(cfg, spec, tr, te);
                if let Some(msg) = &out.row.failure {
                    eprintln!(
                        "trial {} @ {} (trial {}) failed: {msg}",
                        out.row.mode, spec.sweep_value, spec.trial_index
                    );
                }
                (*spec, out.row)
            })
            .collect()
    });
    rows.sort_by_key(|(spec, _)| spec.sort_key());
    Ok(ExperimentResult { mode: cfg.mode, rows: rows.into_iter().map(|(_, r)| r).collect() })
}

fn require_mode(cfg: &ExperimentConfig, mode: Mode) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::Config(format!("configuration is for {}, not {mode}", cfg.mode)));
    }
    cfg.validate()
}

/// Connectivity sweep on a fixed split; the 1.0 point is the dense baseline.
pub fn run_sweep_connectivity(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentResult> {
    require_mode(cfg, Mode::SweepConnectivity)?;
    let windows = make_windows(&data.series, cfg.window)?;
    let (train_set, test_set) = split(&windows, cfg.fixed_split())?;
    execute_trials(cfg, &plan_trials(cfg), |_| (&train_set, &test_set))
}

/// Training-size sweep: the test tail is fixed and training windows are the
/// `n` immediately preceding it.
pub fn run_sweep_trainsize(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentResult> {
    require_mode(cfg, Mode::SweepTrainsize)?;
    let windows = make_windows(&data.series, cfg.window)?;
    let splits = cfg
        .trainsize_list
        .iter()
        .map(|&n| split(&windows, SplitSpec { test_size: cfg.test_size, train_size: TrainSize::Windows(n) }))
        .collect::<Result<Vec<_>>>()?;
    execute_trials(cfg, &plan_trials(cfg), |spec| {
        let (tr, te) = &splits[spec.sweep_index];
        (tr, te)
    })
}

/// Window-length sweep: windows are rebuilt for every length and each uses
/// the configured training windows immediately before its test tail.
pub fn run_sweep_seqlen(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentResult> {
    require_mode(cfg, Mode::SweepSeqlen)?;
    let splits = cfg
        .seqlen_list
        .iter()
        .map(|&l| {
            let w = make_windows(&data.series, l)?;
            split(&w, cfg.fixed_split())
        })
        .collect::<Result<Vec<_>>>()?;
    execute_trials(cfg, &plan_trials(cfg), |spec| {
        let (tr, te) = &splits[spec.sweep_index];
        (tr, te)
    })
}

/// Output of a single-model run.
pub struct TrainPredictOutput {
    pub checkpoint: Checkpoint,
    pub row: ResultRow,
    /// `(actual, predicted)` over the test tail in raw units.
    pub pred_vs_actual: Vec<(f64, f64)>,
    pub report: crate::metrics::EvalReport,
}

fn raw_pairs(series: &Series, report: &crate::metrics::EvalReport) -> Vec<(f64, f64)> {
    report
        .targets
        .iter()
        .zip(&report.predictions)
        .map(|(&t, &p)| (series.denormalize(t), series.denormalize(p)))
        .collect()
}

/// Trains one model at the first configured connectivity and evaluates it
/// on the test tail.
pub fn run_train_predict(cfg: &ExperimentConfig, data: &PreparedData) -> Result<TrainPredictOutput> {
    require_mode(cfg, Mode::Train)?;
    let windows = make_windows(&data.series, cfg.window)?;
    let (train_set, test_set) = split(&windows, cfg.fixed_split())?;
    let spec = plan_trials(cfg)[0];
    let out = run_trial(cfg, &spec, &train_set, &test_set);
    if let Some(msg) = &out.row.failure {
        return Err(Error::Config(format!("training failed: {msg}")));
    }
    let net = out.network.expect("successful trial has a network");
    let report = out.report.expect("successful trial has a report");
    let mask_seeds = (0..cfg.layers).map(|l| derive_seed(spec.seed, &[TAG_MASK, l as u64])).collect();
    let checkpoint = Checkpoint::new(
        net,
        spec.arm,
        spec.seed,
        mask_seeds,
        cfg.window,
        data.series.mu,
        data.series.sigma,
        TrainConfig { seed: spec.seed, ..cfg.train },
    );
    Ok(TrainPredictOutput { pred_vs_actual: raw_pairs(&data.series, &report), checkpoint, row: out.row, report })
}

/// Applies a stored model to the test tail of `raw`, normalized with the
/// checkpoint's own statistics.
pub fn run_predict(
    ckpt: &Checkpoint,
    raw: &[f64],
    test_size: usize,
) -> Result<(Vec<(f64, f64)>, crate::metrics::EvalReport)> {
    let series = normalize_with(raw, ckpt.mu, ckpt.sigma)?;
    let windows = make_windows(&series, ckpt.window)?;
    if test_size == 0 || test_size > windows.len() {
        return Err(Error::InfeasibleSplit(format!("test size {test_size} with {} windows", windows.len())));
    }
    let test = windows.slice(windows.len() - test_size..windows.len());
    let report = evaluate(&ckpt.network, &test)?;
    Ok((raw_pairs(&series, &report), report))
}

#[derive(Debug, Serialize)]
struct DataInfo {
    source: DataSource,
    len: usize,
    mu: f64,
    sigma: f64,
}

#[derive(Debug, Serialize)]
struct TrialInfo {
    arm: f64,
    sweep_value: f64,
    trial_index: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    mode: Mode,
    config: &'a ExperimentConfig,
    seed_scheme: &'static str,
    data: DataInfo,
    trials: Vec<TrialInfo>,
    summary: Vec<PointSummary>,
    failures: Vec<&'a ResultRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seqlen_report: Option<SeqlenReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<String>,
}

const SEED_SCHEME: &str =
    "trial seed = splitmix64 fold of (master seed; mode id, sweep value f64 bits, trial index); mode ids: train 1, predict 2, sweep-connectivity 3, sweep-trainsize 4, sweep-seqlen 5";

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PRED_FILE: &str = "pred_vs_actual.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Paths a run wrote.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub result: Option<ExperimentResult>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_owned(), source })
}

fn manifest_json(manifest: &Manifest<'_>) -> Result<String> {
    let mut s = serde_json::to_string_pretty(manifest)?;
    s.push('\n');
    Ok(s)
}

/// Runs the configured mode and writes its output files.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    ensure_dir(&cfg.output_dir)?;
    let dir = &cfg.output_dir;

    if cfg.mode == Mode::Predict {
        let path = cfg.checkpoint.as_ref().expect("validated");
        let ckpt = load_checkpoint(path)?;
        let raw = cfg.data_source.load()?;
        let (pairs, _) = run_predict(&ckpt, &raw, cfg.test_size)?;
        let pred = dir.join(PRED_FILE);
        results::write_text(&pred, &results::pred_vs_actual_csv(&pairs))?;
        return Ok(RunOutput { files: vec![pred], result: None });
    }

    let data = prepare(cfg)?;
    let data_info = || DataInfo {
        source: cfg.data_source.clone(),
        len: data.series.len(),
        mu: data.series.mu,
        sigma: data.series.sigma,
    };
    let trials_info = || {
        plan_trials(cfg)
            .into_iter()
            .map(|t| TrialInfo { arm: t.arm, sweep_value: t.sweep_value, trial_index: t.trial_index, seed: t.seed })
            .collect::<Vec<_>>()
    };

    let (result, extra_files, checkpoint_name) = match cfg.mode {
        Mode::Train => {
            let out = run_train_predict(cfg, &data)?;
            let ckpt_path = dir.join(CHECKPOINT_FILE);
            save_checkpoint(&out.checkpoint, &ckpt_path)?;
            let pred = dir.join(PRED_FILE);
            results::write_text(&pred, &results::pred_vs_actual_csv(&out.pred_vs_actual))?;
            let result = ExperimentResult { mode: Mode::Train, rows: vec![out.row] };
            (result, vec![ckpt_path, pred], Some(CHECKPOINT_FILE.to_owned()))
        }
        Mode::SweepConnectivity => (run_sweep_connectivity(cfg, &data)?, vec![], None),
        Mode::SweepTrainsize => (run_sweep_trainsize(cfg, &data)?, vec![], None),
        Mode::SweepSeqlen => (run_sweep_seqlen(cfg, &data)?, vec![], None),
        Mode::Predict => unreachable!("handled above"),
    };

    let results_path = dir.join(RESULTS_FILE);
    results::write_results_csv(&results_path, &result)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        mode: cfg.mode,
        config: cfg,
        seed_scheme: SEED_SCHEME,
        data: data_info(),
        trials: trials_info(),
        summary: result.summary(),
        failures: result.failures().collect(),
        seqlen_report: (cfg.mode == Mode::SweepSeqlen).then(|| seqlen_report(&result)),
        checkpoint: checkpoint_name,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    results::write_text(&manifest_path, &manifest_json(&manifest)?)?;

    let mut files = vec![results_path, manifest_path];
    files.extend(extra_files);
    Ok(RunOutput { files, result: Some(result) })
}
