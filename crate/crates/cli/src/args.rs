use std::path::PathBuf;

use aloe_core::harness::Profile;
use aloe_core::{ExperimentConfig, Mode, Rule};
use clap::{Args, Parser, Subcommand};

/// Environment variable naming the default `serve` state directory.
pub const STATE_DIR_ENV: &str = "ALOE_STATE_DIR";

#[derive(Debug, Parser)]
#[command(name = "aloe", version, about = "Active learning over precomputed embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Gaussian-cluster dataset.
    Synth(SynthArgs),
    /// Convert a CSV of embeddings into the binary dataset format.
    ImportCsv(ImportArgs),
    /// Run one (strategy, mode) cell for several replicas.
    Run(RunArgs),
    /// Run every cell of a manifest.
    Sweep(SweepArgs),
    /// Train on the whole labeled train split and report accuracies.
    Baseline(BaselineArgs),
    /// Re-render curve/table/summary files from stored cell logs.
    Report(ReportArgs),
    /// Serve the human-oracle labeling API for one experiment.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Samples per class in each of train / validation / test.
    #[arg(long, default_value_t = 400)]
    pub per_class: usize,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub dim: usize,
    /// The CSV has no label column.
    #[arg(long)]
    pub unlabeled: bool,
    /// Class names for an unlabeled import, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    #[arg(short, long)]
    pub out: PathBuf,
}

/// Experiment keys; each flag overrides the manifest key of the same name.
#[derive(Debug, Args, Default, Clone)]
pub struct ExperimentArgs {
    /// rounds = 25, runs = 3 (explicit --rounds / --runs still win).
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seeds_per_class: Option<usize>,
    /// Master seed; replica i uses stream i of it.
    #[arg(long = "seed")]
    pub run_seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Stop a run once validation accuracy plateaus.
    #[arg(long)]
    pub early_stop: bool,
}

impl ExperimentArgs {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if self.quick {
            Profile::Quick.apply(config);
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { config.$($field).+ = v; })*
            };
        }
        set!(
            rounds => rounds,
            runs => runs,
            seeds_per_class => seeds_per_class,
            run_seed => run_seed,
            epochs => train.epochs,
            learning_rate => train.learning_rate,
            batch_size => train.batch_size,
        );
        if self.early_stop && config.early_stop.is_none() {
            config.early_stop = Some(Default::default());
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, visible_alias = "dataset")]
    pub data: Option<PathBuf>,
    /// Take defaults from this manifest's `[experiment]` table.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub strategy: Option<Rule>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long)]
    pub parallel: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub manifest: PathBuf,
    #[arg(long, visible_alias = "dataset")]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Vec<Rule>,
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<Mode>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long)]
    pub parallel: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, visible_alias = "dataset")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the trained probe as a checkpoint.
    #[arg(long)]
    pub save: Option<PathBuf>,
    /// Print the result as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding `cells/*.json` from `run` or `sweep`.
    pub dir: PathBuf,
    /// Write the reports here instead of into `dir`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, visible_alias = "dataset")]
    pub data: PathBuf,
    /// Class names when the dataset carries none, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    #[arg(long, default_value = "smallest-margin")]
    pub strategy: Rule,
    #[arg(long, default_value = "class-aware")]
    pub mode: Mode,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = STATE_DIR_ENV, default_value = ".aloe-state")]
    pub state_dir: PathBuf,
    /// Give up on a round after this many seconds without a full batch
    /// (the round is then reissued); waits forever when unset.
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}
