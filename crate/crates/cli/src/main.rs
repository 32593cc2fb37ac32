//! `poselift`: synthesize pose data, train and evaluate lifter variants,
//! compare result tables, render figures and run the verification suite.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error,
//! 3 training diverged.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "poselift", version, about = "2D-to-3D human pose lifting pipeline")]
#[command(args_override_self = true)]
#[command(after_help = "Any flag may also come from `--config FILE` (TOML, one [command] table per subcommand); \
flags given on the command line take precedence.")]
struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic 2D/3D pose dataset CSV.
    Synth(SynthArgs),
    /// Compute normalization statistics of a training split.
    Stats(StatsArgs),
    /// Train a lifter variant and write a checkpoint plus its training log.
    Train(TrainArgs),
    /// Per-action MPJPE tables for a checkpoint.
    Eval(EvalArgs),
    /// Compare a baseline table against one or more candidates.
    Compare(CompareArgs),
    /// Render the 2D input, 3D ground truth and 3D prediction of one sample as SVG.
    Render(RenderArgs),
    /// Run gradient checks and metric oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Gaussian pixel noise on the 2D poses.
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 1145.0)]
    pub focal: f64,
    #[arg(long, default_value_t = 512.0)]
    pub cx: f64,
    #[arg(long, default_value_t = 515.0)]
    pub cy: f64,
    /// Camera distance added to every joint depth (mm).
    #[arg(long, default_value_t = 5000.0)]
    pub z0: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "S1,S2,S3,S4,S5")]
    pub train_subjects: String,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// original, v1, v2 or v3.
    #[arg(long, default_value = "v3")]
    pub variant: String,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.96)]
    pub decay_factor: f64,
    /// Optimizer steps between learning-rate decays.
    #[arg(long, default_value_t = 25_000)]
    pub decay_interval: u64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// mse, l1 or wmse. Defaults to wmse for v3 and mse otherwise.
    #[arg(long)]
    pub loss: Option<String>,
    /// JSON object of per-joint weights for wmse.
    #[arg(long)]
    pub weights_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output checkpoint JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV. Defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    pub linear_size: usize,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    /// Give each Swish site its own β instead of sharing one.
    #[arg(long)]
    pub per_layer_swish: bool,
    #[arg(long, default_value = "S1,S2,S3,S4,S5")]
    pub train_subjects: String,
    #[arg(long, default_value = "S6,S7")]
    pub test_subjects: String,
    /// Evaluate and checkpoint every this many epochs.
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    /// Clip the global gradient norm to this value.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub no_shuffle: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also write a weighted-MPJPE table using these joint weights.
    #[arg(long)]
    pub weights_file: Option<PathBuf>,
    /// Restrict to these subjects (comma separated). All samples by default.
    #[arg(long)]
    pub subjects: Option<String>,
    /// Row label. Defaults to the checkpoint's variant.
    #[arg(long)]
    pub label: Option<String>,
    /// Output table CSV. The weighted table goes to `<stem>.weighted.<ext>`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Table CSV; its first row is the baseline.
    #[arg(long)]
    pub baseline: PathBuf,
    /// Table CSVs; every row is compared against the baseline.
    #[arg(long, required = true, num_args = 1..)]
    pub candidate: Vec<PathBuf>,
    /// Comparison CSV. Also writes `<stem>.tables.csv` and `<stem>.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Row of the dataset to render (0-based).
    #[arg(long)]
    pub index: usize,
    /// Output SVG.
    #[arg(long)]
    pub out: PathBuf,
    /// View azimuth in degrees.
    #[arg(long, default_value_t = 70.0)]
    pub azimuth: f64,
    /// View elevation in degrees.
    #[arg(long, default_value_t = 15.0)]
    pub elevation: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Add whole-model checks for every variant.
    #[arg(long)]
    pub full: bool,
    /// Comma-separated seeds.
    #[arg(long, default_value = "0")]
    pub seeds: String,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

/// Returned when at least one verification check failed.
#[derive(Debug)]
pub struct VerifyFailed(pub usize);

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} check(s) failed", self.0)
    }
}

impl std::error::Error for VerifyFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<VerifyFailed>().is_some() {
            return 1;
        }
        if let Some(poselift::Error::Diverged { .. }) = cause.downcast_ref::<poselift::Error>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    // clap exits with 2 on usage errors and 0 for --help/--version.
    let cli = Cli::parse_from(args);
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Stats(a) => commands::stats(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Compare(a) => commands::compare(a),
        Command::Render(a) => commands::render(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn later_flag_wins() {
        let cli = Cli::try_parse_from(["poselift", "synth", "--n", "3", "--out", "a", "--n", "5"]).unwrap();
        match cli.command {
            Command::Synth(a) => assert_eq!(a.n, 5),
            _ => unreachable!(),
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&anyhow::Error::new(VerifyFailed(1))), 1);
        let div = poselift::Error::Diverged {
            epoch: 2,
            restored_epoch: 1,
            log: Box::default(),
        };
        assert_eq!(exit_code(&anyhow::Error::new(div).context("training")), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("missing file")), 2);
    }
}
