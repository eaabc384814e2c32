use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rclstm::experiments::{execute, DataSource, ExperimentConfig, Mode, DEFAULT_SERIES_LEN};

#[derive(Parser)]
#[command(name = "rclstm", version)]
#[command(about = "Random-connectivity LSTM forecasting: train, predict and reproduce the sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model, write its checkpoint and test-tail predictions
    Train(Common),
    /// Apply a saved checkpoint to the test tail of a series
    Predict {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// MSE/MAE over the percentage of neural connectivity
    SweepConnectivity(Common),
    /// MSE over the number of training windows
    SweepTrainsize {
        #[command(flatten)]
        common: Common,
        /// Ascending list of training-set sizes (windows)
        #[arg(long, value_delimiter = ',')]
        train_sizes: Option<Vec<usize>>,
    },
    /// MSE over the input window length
    SweepSeqlen(Common),
}

#[derive(Args)]
struct Common {
    /// Newline-delimited series; falls back to $RCLSTM_DATA
    #[arg(long, env = "RCLSTM_DATA", conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Use the built-in periodic traffic generator
    #[arg(long)]
    synthetic: bool,
    /// Length of the synthetic series
    #[arg(long, default_value_t = DEFAULT_SERIES_LEN)]
    synthetic_len: usize,
    /// Connectivity value(s), comma separated
    #[arg(long, value_delimiter = ',')]
    connectivity: Option<Vec<f64>>,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    /// Window length; a comma-separated list for sweep-seqlen
    #[arg(long, value_delimiter = ',')]
    window: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trials per sweep point
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Training windows before the test tail (train, sweep-connectivity, sweep-seqlen)
    #[arg(long)]
    train_size: Option<usize>,
    /// Windows held out at the end of the series
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 5.0)]
    clip_norm: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Record wall-clock training time in results.csv (makes reruns differ)
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn into_config(self, mode: Mode) -> Result<ExperimentConfig, String> {
        let mut cfg = ExperimentConfig::new(mode, self.out);
        cfg.data_source = match (self.data, self.synthetic) {
            (Some(path), false) => DataSource::Csv { path },
            (None, true) => DataSource::Synthetic { len: self.synthetic_len, seed: self.seed },
            (None, false) => return Err("choose a data source with --data <path> or --synthetic".into()),
            (Some(_), true) => unreachable!("clap rejects --data with --synthetic"),
        };
        if let Some(c) = self.connectivity {
            cfg.connectivity_list = c;
        }
        match (mode, self.window) {
            (Mode::SweepSeqlen, Some(w)) => cfg.seqlen_list = w,
            (_, Some(w)) if w.len() == 1 => cfg.window = w[0],
            (_, Some(_)) => return Err("--window takes a list only for sweep-seqlen".into()),
            (_, None) => {}
        }
        cfg.hidden = self.hidden;
        cfg.layers = self.layers;
        cfg.trials_per_point = self.trials;
        cfg.train_size = self.train_size;
        cfg.test_size = self.test_size;
        cfg.master_seed = self.seed;
        cfg.workers = self.workers;
        cfg.record_timing = self.timing;
        cfg.train.epochs = self.epochs;
        cfg.train.learning_rate = self.lr;
        cfg.train.batch_size = self.batch_size;
        cfg.train.clip_norm = self.clip_norm;
        Ok(cfg)
    }
}

fn build_config(cli: Cli) -> Result<ExperimentConfig, String> {
    match cli.command {
        Command::Train(c) => c.into_config(Mode::Train),
        Command::Predict { common, checkpoint } => {
            let mut cfg = common.into_config(Mode::Predict)?;
            cfg.checkpoint = Some(checkpoint);
            Ok(cfg)
        }
        Command::SweepConnectivity(c) => c.into_config(Mode::SweepConnectivity),
        Command::SweepTrainsize { common, train_sizes } => {
            let mut cfg = common.into_config(Mode::SweepTrainsize)?;
            if let Some(sizes) = train_sizes {
                cfg.trainsize_list = sizes;
            }
            Ok(cfg)
        }
        Command::SweepSeqlen(c) => c.into_config(Mode::SweepSeqlen),
    }
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cfg = match build_config(Cli::parse()) {
        Ok(cfg) => cfg,
        Err(msg) => return usage_error(&msg),
    };
    if let Err(e) = cfg.validate() {
        return usage_error(&e.to_string());
    }
    match execute(&cfg) {
        Ok(out) => {
            if let Some(result) = &out.result {
                for p in result.summary() {
                    println!(
                        "c={:<5} value={:<6} median_mse={:.6} median_mae={:.6} trials={} failures={}",
                        p.arm, p.sweep_value, p.median_mse, p.median_mae, p.trials, p.failures
                    );
                }
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
