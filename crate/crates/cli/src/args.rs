//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use zicp_core::conformal::ConformalMethod;
use zicp_core::data::Horizon;
use zicp_core::two_stage::{CutoffMode, GammaFormula};

#[derive(Debug, Parser)]
#[command(
    name = "zicp",
    version,
    about = "Two-stage conformal intervals for zero-inflated medication changes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort as a samples CSV.
    Datagen(DatagenArgs),
    /// Turn raw visit records into horizon-labeled samples.
    Ledd(LeddArgs),
    /// Fit the change classifier and the conformal regressor for one horizon.
    Train(TrainArgs),
    /// Single-stage conformal intervals on the test partition.
    Conformal(ConformalArgs),
    /// Two-stage coverage and length across a cutoff grid.
    Sweep(OutDirArgs),
    /// Per-cell summaries, cross-validated classifier metrics and feature importance.
    Evaluate(OutDirArgs),
    /// Tables, frontier data and SVG plots over every horizon.
    Report(OutDirArgs),
    /// Repeated paired runs of two-stage against single-stage intervals.
    Significance(OutDirArgs),
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// JSON config file; explicit flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed (fallback: config file, then ZICP_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores). Never changes results.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Log progress to standard error.
    #[arg(short, long)]
    pub verbose: bool,

    /// Samples CSV; without it a synthetic cohort is generated.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic cohort spec (JSON); defaults to the bundled one.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub n_patients: Option<usize>,

    /// Miscoverage level; intervals target 1 − alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Conformal methods, comma separated.
    #[arg(long, value_delimiter = ',', alias = "methods")]
    pub method: Option<Vec<ConformalMethod>>,
    /// Cutoff grid as `start:stop:step` or a comma list.
    #[arg(long)]
    pub grid: Option<String>,
    /// Horizons, comma separated (6M,1Y,2Y,4Y).
    #[arg(long, value_delimiter = ',', alias = "horizon")]
    pub horizons: Option<Vec<Horizon>>,
    #[arg(long)]
    pub gamma_formula: Option<GammaFormula>,
    #[arg(long)]
    pub cutoff_mode: Option<CutoffMode>,
    /// Single cutoff for train and significance.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Boosting rounds for both learners.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Tree depth for both learners.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub bootstraps: Option<usize>,
    /// Split rows independently instead of keeping patients together.
    #[arg(long)]
    pub ungrouped: bool,
    #[arg(long)]
    pub n_runs: Option<usize>,
    #[arg(long)]
    pub importance_repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the ground truth (solved intercept, clamp bounds) as JSON.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct LeddArgs {
    /// Visit records CSV.
    #[arg(long)]
    pub visits: PathBuf,
    /// Demographics CSV (`patient_id,age_years,sex,race`).
    #[arg(long)]
    pub demographics: Option<PathBuf>,
    /// Conversion factor table; defaults to the bundled one.
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Days a successor visit may sit from the exact horizon.
    #[arg(long, default_value_t = 90)]
    pub slack_days: i64,
    /// `train` (fit on the training partition), `all`, `skip`, or fixed `lo:hi` bounds.
    #[arg(long, default_value = "train")]
    pub winsor: String,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Grid-search the classifier depth and rounds by cross-validation first.
    #[arg(long)]
    pub tune: bool,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct ConformalArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct OutDirArgs {
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub run: RunFlags,
}
