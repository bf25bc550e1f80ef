//! Benchmark harness: weight-estimation, remaining-time and makespan
//! experiments over sweeps of cluster size, input size and seed.
//!
//! Every sweep point first runs a number of warm-up jobs without speculation
//! to fill the history. Estimation experiments then run one more job without
//! speculation, record every tick's snapshots and replay each estimator over
//! them offline, so all estimators judge exactly the same observations.
//! Makespan experiments run the evaluation job once per strategy, each from
//! its own copy of the warmed-up history.

mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use report::{
    emit_report, mean_std, parse_rows, read_rows, rows_to_csv, sort_rows, summary_table, MetricsRow, METRICS_HEADER,
};

use crate::error::{Error, Result};
use crate::history::HistoryStore;
use crate::sim::{run_simulation, ClusterConfig, SimResult, StragglerSpec, Workload, MIB};
use crate::strategies::{EvalContext, Strategy, StrategyKind, StrategyParams, TaskEstimate};
use crate::task::{ExecutionRecord, Phase, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Weights,
    Tte,
    Makespan,
    Sweep,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Weights => "weights",
            ExperimentKind::Tte => "tte",
            ExperimentKind::Makespan => "makespan",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ExperimentKind::Weights,
            ExperimentKind::Tte,
            ExperimentKind::Makespan,
            ExperimentKind::Sweep,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::config(format!("unknown experiment {s:?}")))
    }
}

/// Something that estimates stage weights and remaining time of running
/// tasks. `Oracle` uses each task's own realized weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Late,
    Samr,
    Esamr,
    Nn,
    Oracle,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Late,
        Estimator::Samr,
        Estimator::Esamr,
        Estimator::Nn,
        Estimator::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Late => "late",
            Estimator::Samr => "samr",
            Estimator::Esamr => "esamr",
            Estimator::Nn => "nn",
            Estimator::Oracle => "oracle",
        }
    }

    fn strategy(self) -> Option<StrategyKind> {
        match self {
            Estimator::Late => Some(StrategyKind::Late),
            Estimator::Samr => Some(StrategyKind::Samr),
            Estimator::Esamr => Some(StrategyKind::Esamr),
            Estimator::Nn => Some(StrategyKind::Nn),
            Estimator::Oracle => None,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown estimator {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Strategies compared by makespan experiments.
    pub strategies: Vec<StrategyKind>,
    /// Estimators compared by weight and remaining-time experiments.
    pub estimators: Vec<Estimator>,
    pub nodes: Vec<usize>,
    pub input_sizes: Vec<u64>,
    /// One repetition per seed.
    pub seeds: Vec<u64>,
    /// Template for every sweep point; `workers`, `input_bytes` and `seed`
    /// are overridden.
    pub cluster: ClusterConfig,
    pub params: StrategyParams,
    pub warmup_jobs: usize,
    /// Tasks per phase sampled by the remaining-time experiment.
    pub tte_sample: usize,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        let sweep = kind == ExperimentKind::Sweep;
        ExperimentSpec {
            kind,
            strategies: vec![
                StrategyKind::NoSpeculate,
                StrategyKind::Late,
                StrategyKind::Samr,
                StrategyKind::Esamr,
                StrategyKind::Nn,
            ],
            estimators: vec![
                Estimator::Late,
                Estimator::Samr,
                Estimator::Esamr,
                Estimator::Nn,
                Estimator::Oracle,
            ],
            nodes: if sweep { vec![2, 3, 4] } else { vec![4] },
            input_sizes: if sweep {
                vec![256 * MIB, 1 << 30, 4 << 30]
            } else {
                vec![1 << 30]
            },
            seeds: (1..=5).collect(),
            cluster: ClusterConfig::default(),
            params: StrategyParams::default(),
            warmup_jobs: 10,
            tte_sample: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("at least one repetition is required"));
        }
        if self.nodes.is_empty() || self.input_sizes.is_empty() {
            return Err(Error::config("node and input-size sweeps must be non-empty"));
        }
        match self.kind {
            ExperimentKind::Weights | ExperimentKind::Tte if self.estimators.is_empty() => {
                Err(Error::config("no estimators to compare"))
            }
            ExperimentKind::Makespan | ExperimentKind::Sweep if self.strategies.is_empty() => {
                Err(Error::config("no strategies to compare"))
            }
            _ => self.params.validate(),
        }
    }

    fn point_config(&self, nodes: usize, input_bytes: u64) -> ClusterConfig {
        ClusterConfig {
            workers: nodes,
            input_bytes,
            ..self.cluster.clone()
        }
    }
}

/// Seed of the `index`-th warm-up job of a repetition.
pub fn warmup_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

/// Runs `jobs` jobs without speculation and returns the history they leave.
pub fn warm_up(config: &ClusterConfig, seed: u64, jobs: usize) -> Result<HistoryStore> {
    let mut history = HistoryStore::new();
    let mut strategy = Strategy::new(StrategyKind::NoSpeculate, StrategyParams::default())?;
    for i in 0..jobs {
        let cfg = ClusterConfig {
            seed: warmup_seed(seed, i),
            record_trace: false,
            ..config.clone()
        };
        run_simulation(&cfg, &mut strategy, &mut history)?;
    }
    Ok(history)
}

/// Remaining-time errors of one sampled task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskErrorRow {
    pub workload: String,
    pub nodes: usize,
    pub input_bytes: u64,
    pub seed: u64,
    pub phase: Phase,
    pub task_id: TaskId,
    /// Mean absolute error per estimator, in spec order.
    pub errors: Vec<(Estimator, f64)>,
}

/// Makespan gain of a strategy over a baseline: `(baseline - method) /
/// baseline * 100`, positive when the strategy is faster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub strategy: String,
    pub baseline: String,
    pub workload: String,
    pub nodes: usize,
    pub input_bytes: u64,
    pub seed: u64,
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRow>,
    pub task_errors: Vec<TaskErrorRow>,
    pub improvements: Vec<ImprovementRow>,
}

impl ExperimentOutput {
    /// Writes `metrics.csv` and `summary.txt`, plus `tte_tasks.csv` and
    /// `improvements.csv` when the experiment produced them.
    pub fn write(&self, dir: &Path) -> Result<()> {
        emit_report(&self.rows, dir)?;
        if !self.task_errors.is_empty() {
            fs::write(dir.join("tte_tasks.csv"), task_errors_csv(&self.task_errors))?;
        }
        if !self.improvements.is_empty() {
            fs::write(dir.join("improvements.csv"), improvements_csv(&self.improvements))?;
        }
        Ok(())
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let mut out = ExperimentOutput::default();
    for &nodes in &spec.nodes {
        for &input in &spec.input_sizes {
            for &seed in &spec.seeds {
                let config = spec.point_config(nodes, input);
                match spec.kind {
                    ExperimentKind::Weights | ExperimentKind::Tte => estimation_point(spec, &config, seed, &mut out)?,
                    ExperimentKind::Makespan | ExperimentKind::Sweep => makespan_point(spec, &config, seed, &mut out)?,
                }
            }
        }
    }
    sort_rows(&mut out.rows);
    Ok(out)
}

pub fn run_weights_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_experiment(&ExperimentSpec {
        kind: ExperimentKind::Weights,
        ..spec.clone()
    })
}

pub fn run_tte_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_experiment(&ExperimentSpec {
        kind: ExperimentKind::Tte,
        ..spec.clone()
    })
}

pub fn run_makespan_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_experiment(&ExperimentSpec {
        kind: ExperimentKind::Makespan,
        ..spec.clone()
    })
}

fn row(config: &ClusterConfig, seed: u64, strategy: &str, metric: String, value: f64) -> MetricsRow {
    MetricsRow {
        strategy: strategy.to_string(),
        workload: config.workload.to_string(),
        nodes: config.workers,
        input_bytes: config.input_bytes,
        seed,
        metric,
        value,
    }
}

fn makespan_point(spec: &ExperimentSpec, config: &ClusterConfig, seed: u64, out: &mut ExperimentOutput) -> Result<()> {
    let warm = warm_up(config, seed, spec.warmup_jobs)?;
    let cfg = ClusterConfig {
        seed,
        record_trace: false,
        ..config.clone()
    };
    let mut makespans = BTreeMap::new();
    for &kind in &spec.strategies {
        let mut history = warm.clone();
        let params = StrategyParams {
            seed,
            ..spec.params.clone()
        };
        let mut strategy = Strategy::new(kind, params)?;
        let r = run_simulation(&cfg, &mut strategy, &mut history)?;
        let name = kind.as_str();
        out.rows.push(row(config, seed, name, "makespan_s".into(), r.makespan));
        out.rows
            .push(row(config, seed, name, "decisions".into(), r.decisions.len() as f64));
        out.rows
            .push(row(config, seed, name, "cancelled_work_s".into(), r.cancelled_work));
        makespans.insert(kind, r.makespan);
    }
    for baseline in [StrategyKind::NoSpeculate, StrategyKind::Late] {
        let Some(&b) = makespans.get(&baseline) else {
            continue;
        };
        for (&kind, &m) in &makespans {
            if kind != baseline {
                out.improvements.push(ImprovementRow {
                    strategy: kind.as_str().into(),
                    baseline: baseline.as_str().into(),
                    workload: config.workload.to_string(),
                    nodes: config.workers,
                    input_bytes: config.input_bytes,
                    seed,
                    improvement_pct: (b - m) / b * 100.0,
                });
            }
        }
    }
    Ok(())
}

/// Every estimator's view of one running task at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub clock: f64,
    pub task_id: TaskId,
    pub phase: Phase,
    pub elapsed: f64,
    pub realized_remaining: f64,
    pub realized_weights: Vec<f64>,
    /// One estimate per estimator, in the order given to [`replay`].
    pub estimates: Vec<TaskEstimate>,
}

/// Replays recorded snapshots of `result` through each estimator. The
/// history each estimator sees grows with the job's completions exactly as
/// it did during the run.
pub fn replay(
    result: &SimResult,
    before: &HistoryStore,
    estimators: &[Estimator],
    params: &StrategyParams,
) -> Result<Vec<Observation>> {
    let records: BTreeMap<TaskId, &ExecutionRecord> = result.records.iter().map(|r| (r.task_id, r)).collect();
    let mut strategies = Vec::with_capacity(estimators.len());
    for e in estimators {
        strategies.push(match e.strategy() {
            Some(kind) => {
                let mut s = Strategy::new(kind, params.clone())?;
                s.prepare(before)?;
                Some(s)
            }
            None => None,
        });
    }

    let mut history = before.clone();
    let mut next = 0;
    let no_backups = BTreeSet::new();
    let mut out = Vec::new();
    for tick in &result.trace {
        while next < result.records.len() && result.records[next].finished_at <= tick.clock {
            history.append(result.records[next].clone())?;
            next += 1;
        }
        let ctx = EvalContext {
            clock: tick.clock,
            job_id: result.job_id,
            task_totals: [result.map_tasks, result.reduce_tasks],
            snapshots: &tick.snapshots,
            nodes: &[],
            backed_up: &no_backups,
            running_backups: 0,
            history: &history,
        };
        let mut per_estimator = Vec::with_capacity(strategies.len());
        for s in &strategies {
            per_estimator.push(match s {
                Some(s) => s.estimate(&ctx)?,
                None => tick
                    .snapshots
                    .iter()
                    .map(|snap| TaskEstimate::from_weights(snap, records[&snap.task_id].realized_weights.clone()))
                    .collect::<Result<Vec<_>>>()?,
            });
        }
        for (i, snap) in tick.snapshots.iter().enumerate() {
            let record = records[&snap.task_id];
            out.push(Observation {
                clock: tick.clock,
                task_id: snap.task_id,
                phase: snap.phase,
                elapsed: snap.elapsed,
                realized_remaining: record.finished_at - tick.clock,
                realized_weights: record.realized_weights.clone(),
                estimates: per_estimator.iter().map(|e| e[i].clone()).collect(),
            });
        }
    }
    Ok(out)
}

/// Warm-up plus one traced evaluation job without speculation.
pub fn traced_job(config: &ClusterConfig, seed: u64, warmup_jobs: usize) -> Result<(HistoryStore, SimResult)> {
    let before = warm_up(config, seed, warmup_jobs)?;
    if before.is_empty() {
        return Err(Error::Empty("history after warm-up"));
    }
    let mut history = before.clone();
    let cfg = ClusterConfig {
        seed,
        record_trace: true,
        ..config.clone()
    };
    let mut strategy = Strategy::new(StrategyKind::NoSpeculate, StrategyParams::default())?;
    let result = run_simulation(&cfg, &mut strategy, &mut history)?;
    Ok((before, result))
}

fn estimation_point(
    spec: &ExperimentSpec,
    config: &ClusterConfig,
    seed: u64,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let (before, result) = traced_job(config, seed, spec.warmup_jobs)?;
    let params = StrategyParams {
        seed,
        ..spec.params.clone()
    };
    let observations = replay(&result, &before, &spec.estimators, &params)?;
    match spec.kind {
        ExperimentKind::Weights => {
            for (i, e) in spec.estimators.iter().enumerate() {
                for phase in Phase::ALL {
                    if let Some(mse) = weight_mse(&observations, i, phase) {
                        out.rows
                            .push(row(config, seed, e.as_str(), format!("weight_mse_{phase}"), mse));
                    }
                }
            }
        }
        _ => {
            for phase in Phase::ALL {
                let summary = tte_errors(&observations, spec.estimators.len(), phase, spec.tte_sample);
                if summary.tasks.is_empty() {
                    continue;
                }
                for (i, e) in spec.estimators.iter().enumerate() {
                    out.rows.push(row(
                        config,
                        seed,
                        e.as_str(),
                        format!("tte_mae_{phase}"),
                        summary.mae[i],
                    ));
                    out.rows.push(row(
                        config,
                        seed,
                        e.as_str(),
                        format!("tte_mse_{phase}"),
                        summary.mse[i],
                    ));
                }
                for (task, errs) in summary.tasks {
                    out.task_errors.push(TaskErrorRow {
                        workload: config.workload.to_string(),
                        nodes: config.workers,
                        input_bytes: config.input_bytes,
                        seed,
                        phase,
                        task_id: task,
                        errors: spec.estimators.iter().copied().zip(errs).collect(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Mean squared difference between estimated and realized weights over every
/// (observation, stage) pair of `phase`; `None` if the estimator produced no
/// weights for that phase.
pub fn weight_mse(observations: &[Observation], estimator: usize, phase: Phase) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for o in observations.iter().filter(|o| o.phase == phase) {
        if let Some(w) = &o.estimates[estimator].weights {
            for (a, b) in w.iter().zip(&o.realized_weights) {
                sum += (a - b) * (a - b);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Remaining-time errors of the sampled tasks of one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct TteErrors {
    /// Per sampled task, the mean absolute error of each estimator.
    pub tasks: Vec<(TaskId, Vec<f64>)>,
    /// Mean over sampled tasks of the per-task mean absolute error.
    pub mae: Vec<f64>,
    /// Mean squared error over all observations of the sampled tasks.
    pub mse: Vec<f64>,
}

/// Scores remaining-time estimates. Only observations with positive elapsed
/// time where every estimator gave a finite estimate count, so all
/// estimators are judged on the same set. Up to `sample` tasks that have
/// such observations are picked, evenly spaced by task id.
pub fn tte_errors(observations: &[Observation], estimators: usize, phase: Phase, sample: usize) -> TteErrors {
    let mut by_task: BTreeMap<TaskId, Vec<&Observation>> = BTreeMap::new();
    for o in observations.iter().filter(|o| o.phase == phase && o.elapsed > 0.0) {
        if o.estimates.iter().all(|e| e.tte.is_finite()) {
            by_task.entry(o.task_id).or_default().push(o);
        }
    }
    let ids: Vec<TaskId> = by_task.keys().copied().collect();
    let picked: Vec<TaskId> = if ids.len() <= sample {
        ids
    } else {
        (0..sample).map(|i| ids[i * ids.len() / sample]).collect()
    };

    let mut tasks = Vec::with_capacity(picked.len());
    let mut sq = vec![0.0; estimators];
    let mut count = 0usize;
    for id in picked {
        let obs = &by_task[&id];
        let mut abs = vec![0.0; estimators];
        for o in obs {
            for (i, e) in o.estimates.iter().enumerate() {
                let d = e.tte - o.realized_remaining;
                abs[i] += d.abs();
                sq[i] += d * d;
            }
        }
        count += obs.len();
        tasks.push((id, abs.into_iter().map(|a| a / obs.len() as f64).collect::<Vec<_>>()));
    }
    let n = tasks.len().max(1) as f64;
    let mae = (0..estimators)
        .map(|i| tasks.iter().map(|(_, e)| e[i]).sum::<f64>() / n)
        .collect();
    let mse = sq.into_iter().map(|s| s / count.max(1) as f64).collect();
    TteErrors { tasks, mae, mse }
}

/// Per-task remaining-time errors as CSV, with an ESAMR-minus-NN column when
/// both are present.
pub fn task_errors_csv(rows: &[TaskErrorRow]) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let names: Vec<Estimator> = first.errors.iter().map(|(e, _)| *e).collect();
    let diff = names
        .iter()
        .position(|e| *e == Estimator::Esamr)
        .zip(names.iter().position(|e| *e == Estimator::Nn));
    let mut out = String::from("workload,nodes,input_bytes,seed,phase,task_id");
    for e in &names {
        let _ = write!(out, ",{e}_err");
    }
    if diff.is_some() {
        out.push_str(",esamr_minus_nn");
    }
    out.push('\n');
    let mut sorted: Vec<&TaskErrorRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.workload, a.nodes, a.input_bytes, a.seed, a.phase, a.task_id).cmp(&(
            &b.workload,
            b.nodes,
            b.input_bytes,
            b.seed,
            b.phase,
            b.task_id,
        ))
    });
    for r in sorted {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            r.workload, r.nodes, r.input_bytes, r.seed, r.phase, r.task_id.0
        );
        for (_, v) in &r.errors {
            let _ = write!(out, ",{v}");
        }
        if let Some((a, b)) = diff {
            let _ = write!(out, ",{}", r.errors[a].1 - r.errors[b].1);
        }
        out.push('\n');
    }
    out
}

pub fn improvements_csv(rows: &[ImprovementRow]) -> String {
    let mut sorted: Vec<&ImprovementRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.strategy, &a.baseline, &a.workload, a.nodes, a.input_bytes, a.seed).cmp(&(
            &b.strategy,
            &b.baseline,
            &b.workload,
            b.nodes,
            b.input_bytes,
            b.seed,
        ))
    });
    let mut out = String::from("strategy,baseline,workload,nodes,input_bytes,seed,improvement_pct\n");
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.strategy, r.baseline, r.workload, r.nodes, r.input_bytes, r.seed, r.improvement_pct
        );
    }
    out
}

/// Ready-made clusters used by the regression fixtures and the CLI.
pub mod presets {
    use super::*;

    /// Four workers; the last runs every stage at 0.3x speed with a single
    /// container while the others have four. Sort-like 1 GiB job with eleven
    /// reducers, so the reduce wave on the slow node decides the makespan.
    pub fn straggler_cluster() -> ClusterConfig {
        ClusterConfig {
            workers: 4,
            containers_per_node: 4,
            straggler: StragglerSpec {
                fraction: 0.25,
                multiplier: 0.3,
                containers: Some(1),
            },
            workload: Workload::SortLike,
            input_bytes: 1 << 30,
            reduce_tasks: Some(11),
            ..ClusterConfig::default()
        }
    }

    /// Strategy parameters matching [`straggler_cluster`]: its tasks last
    /// seconds, so they are judged after 10 s instead of a minute.
    pub fn straggler_params() -> StrategyParams {
        StrategyParams {
            min_elapsed: 10.0,
            ..StrategyParams::default()
        }
    }

    /// Nodes alternate between two regimes: slow shuffle (network-bound) and
    /// slow sort (disk-bound), so reduce-stage weights differ by node.
    pub fn two_regime_cluster() -> ClusterConfig {
        ClusterConfig {
            workers: 4,
            containers_per_node: 1,
            regimes: vec![[1.0, 1.0, 0.35, 1.0, 1.0], [1.0, 1.0, 1.0, 0.3, 1.0]],
            workload: Workload::WordCountLike,
            input_bytes: 1 << 30,
            reduce_tasks: Some(16),
            ..ClusterConfig::default()
        }
    }
}
