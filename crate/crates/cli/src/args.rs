use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specexec_core::experiment::{presets, Estimator, ExperimentKind};
use specexec_core::learners::TrainMode;
use specexec_core::sim::{parse_bytes, ClusterConfig};
use specexec_core::strategies::{NnConfig, StrategyKind, StrategyParams};
use specexec_core::Workload;

#[derive(Debug, Parser)]
#[command(
    name = "specexec",
    version,
    about = "Simulate speculative execution on heterogeneous MapReduce clusters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one or more jobs on a simulated cluster.
    Simulate(SimulateArgs),
    /// Fit the neural and k-means models from a history file.
    Train(TrainArgs),
    /// Run an experiment and write CSV metrics.
    Experiment(ExperimentArgs),
    /// Re-emit the CSV and summary of stored metrics.
    Report(ReportArgs),
}

fn bytes(s: &str) -> Result<u64, String> {
    parse_bytes(s).map_err(|e| e.to_string())
}

fn strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: specexec_core::Error| e.to_string())
}

fn estimator(s: &str) -> Result<Estimator, String> {
    s.parse().map_err(|e: specexec_core::Error| e.to_string())
}

fn workload(s: &str) -> Result<Workload, String> {
    s.parse().map_err(|e: specexec_core::Error| e.to_string())
}

fn train_mode(s: &str) -> Result<TrainMode, String> {
    s.parse().map_err(|e: specexec_core::Error| e.to_string())
}

fn experiment(s: &str) -> Result<ExperimentKind, String> {
    s.parse().map_err(|e: specexec_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Four workers, one at 0.3x speed with a single container; sort job.
    Straggler,
    /// Nodes alternating slow-shuffle and slow-sort regimes; wordcount job.
    TwoRegime,
}

/// Cluster shape. Settings come from `--preset` or `--config` (the config
/// file wins), then individual flags override them.
#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    /// key = value cluster config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// wordcount or sort.
    #[arg(long, value_parser = workload)]
    pub workload: Option<Workload>,
    /// Stage-time noise amplitude in [0, 1).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Containers per node.
    #[arg(long)]
    pub containers: Option<usize>,
    /// Reduce task count (default: one per node).
    #[arg(long)]
    pub reducers: Option<usize>,
    #[arg(long, value_parser = bytes)]
    pub block_size: Option<u64>,
    /// Fraction of nodes slowed down, rounded up to whole nodes.
    #[arg(long)]
    pub straggler_fraction: Option<f64>,
    /// Speed multiplier of slowed-down nodes.
    #[arg(long)]
    pub straggler_multiplier: Option<f64>,
    /// Container count of slowed-down nodes.
    #[arg(long)]
    pub straggler_containers: Option<usize>,
    /// Per-node stage speeds, e.g. "1,1,0.35,1,1;1,1,1,0.3,1", assigned to
    /// nodes in turn.
    #[arg(long)]
    pub regimes: Option<String>,
    /// Seconds between strategy evaluations.
    #[arg(long)]
    pub tick: Option<f64>,
}

impl ClusterArgs {
    pub fn build(&self) -> anyhow::Result<ClusterConfig> {
        let mut c = match (&self.config, self.preset) {
            (Some(path), _) => ClusterConfig::load(path)?,
            (None, Some(Preset::Straggler)) => presets::straggler_cluster(),
            (None, Some(Preset::TwoRegime)) => presets::two_regime_cluster(),
            (None, None) => ClusterConfig::default(),
        };
        if let Some(w) = self.workload {
            c.workload = w;
        }
        if let Some(v) = self.noise {
            c.noise = v;
        }
        if let Some(v) = self.containers {
            c.containers_per_node = v;
        }
        if let Some(v) = self.reducers {
            c.reduce_tasks = Some(v);
        }
        if let Some(v) = self.block_size {
            c.block_size = v;
        }
        if let Some(v) = self.straggler_fraction {
            c.straggler.fraction = v;
        }
        if let Some(v) = self.straggler_multiplier {
            c.straggler.multiplier = v;
        }
        if let Some(v) = self.straggler_containers {
            c.straggler.containers = Some(v);
        }
        if let Some(r) = &self.regimes {
            c.set("regimes", r)?;
        }
        if let Some(v) = self.tick {
            c.tick_interval = v;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Concurrent backups allowed as a fraction of running tasks.
    #[arg(long, default_value_t = 0.10)]
    pub speculative_cap: f64,
    /// SAMR slow-task time threshold.
    #[arg(long, default_value_t = 0.4)]
    pub stt: f64,
    /// SAMR bound on running backups as a fraction of running tasks.
    #[arg(long, default_value_t = 0.2)]
    pub bp: f64,
    /// SAMR slow-task rate threshold.
    #[arg(long, default_value_t = 0.2)]
    pub stac: f64,
    /// ESAMR cluster count.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Seconds a task runs before it can be judged [default: 60, or 10 with
    /// the straggler preset].
    #[arg(long)]
    pub min_elapsed: Option<f64>,
    /// Completed fraction of a phase before ESAMR uses per-node clusters.
    #[arg(long, default_value_t = 0.2)]
    pub esamr_fraction: f64,
    /// Training epochs of the neural estimator.
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Learning rate of the neural estimator.
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Hidden units of the neural estimator.
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    /// online (one step per sample) or batch (one step per epoch).
    #[arg(long, value_parser = train_mode, default_value = "online")]
    pub train_mode: TrainMode,
}

impl ParamArgs {
    pub fn build(&self, preset: Option<Preset>) -> StrategyParams {
        let base = match preset {
            Some(Preset::Straggler) => presets::straggler_params(),
            _ => StrategyParams::default(),
        };
        let mut nn = NnConfig {
            hidden: self.hidden,
            ..NnConfig::default()
        };
        nn.train.epochs = self.epochs;
        nn.train.learning_rate = self.lr;
        nn.train.mode = self.train_mode;
        StrategyParams {
            speculative_cap: self.speculative_cap,
            stt: self.stt,
            bp: self.bp,
            stac: self.stac,
            k: self.k,
            min_elapsed: self.min_elapsed.unwrap_or(base.min_elapsed),
            esamr_completion_fraction: self.esamr_fraction,
            nn,
            ..base
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// none, naive, late, samr, esamr or nn.
    #[arg(long, value_parser = strategy, default_value = "none")]
    pub strategy: StrategyKind,
    /// Worker nodes.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Job input size, e.g. 256MB or 1GB.
    #[arg(long, value_parser = bytes)]
    pub input_size: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Jobs to run back to back; job i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// History file (JSON lines); read before and appended after the run.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Keep at most this many records per node in the history.
    #[arg(long)]
    pub history_cap: Option<usize>,
    /// Directory written by `train`; its models replace training at start.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Write each job's full result as JSON into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep per-tick task snapshots in the JSON result.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub history: PathBuf,
    /// Output directory for the models.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// weights, tte, makespan or sweep.
    #[arg(value_parser = experiment)]
    pub kind: ExperimentKind,
    /// Strategies for makespan and sweep, comma separated.
    #[arg(long, value_parser = strategy, value_delimiter = ',')]
    pub strategy: Vec<StrategyKind>,
    /// Estimators for weights and tte, comma separated: late, samr, esamr,
    /// nn, oracle.
    #[arg(long, value_parser = estimator, value_delimiter = ',')]
    pub estimators: Vec<Estimator>,
    /// Node counts to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub nodes: Vec<usize>,
    /// Input sizes to sweep, comma separated.
    #[arg(long, value_parser = bytes, value_delimiter = ',')]
    pub input_size: Vec<u64>,
    /// First seed; repetition i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Jobs run without speculation to fill the history first.
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    /// Tasks per phase scored by the tte experiment.
    #[arg(long, default_value_t = 20)]
    pub tte_sample: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A metrics CSV, or a directory containing metrics.csv.
    pub input: PathBuf,
    /// Directory to re-emit metrics.csv and summary.txt into; prints the
    /// summary when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
