//! Speculative-execution strategies behind one decision interface.
//!
//! Every strategy works in two steps. First it estimates the progress score,
//! progress rate and time to end of each running task using its own stage
//! weights (constant for Naive and LATE, history-driven for SAMR and ESAMR,
//! learned for the neural estimator). Then it picks stragglers from those
//! estimates and assigns each one a backup node.

mod esamr;
mod naive;
mod nn;
mod samr;
mod target;

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use esamr::EsamrModels;
pub use naive::naive_stragglers;
pub use nn::{map_features, reduce_features, NnConfig, NnModels, NodeModels, NodeScale};
pub use samr::{samr_node_weights, samr_stragglers};
pub use target::{select_backup_node, slow_nodes};

use crate::error::{Error, Result};
use crate::history::HistoryStore;
use crate::progress::{time_to_end, weighted_progress};
use crate::task::{JobId, NodeId, Phase, StageWeights, TaskId, TaskSnapshot};

/// Guards `floor(fraction * count)` against products such as `0.1 * 30`
/// landing a hair below an integer.
const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "none")]
    NoSpeculate,
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "late")]
    Late,
    #[serde(rename = "samr")]
    Samr,
    #[serde(rename = "esamr")]
    Esamr,
    #[serde(rename = "nn")]
    Nn,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::NoSpeculate,
        StrategyKind::Naive,
        StrategyKind::Late,
        StrategyKind::Samr,
        StrategyKind::Esamr,
        StrategyKind::Nn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::NoSpeculate => "none",
            StrategyKind::Naive => "naive",
            StrategyKind::Late => "late",
            StrategyKind::Samr => "samr",
            StrategyKind::Esamr => "esamr",
            StrategyKind::Nn => "nn",
        }
    }

    /// Strategies bounded by the speculative cap rather than SAMR's `Bp` rule.
    pub fn uses_cap(self) -> bool {
        matches!(self, StrategyKind::Late | StrategyKind::Esamr | StrategyKind::Nn)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    /// Concurrent backups allowed as a fraction of running tasks (LATE,
    /// ESAMR, NN).
    pub speculative_cap: f64,
    /// SAMR: running backups must stay below `bp * running tasks`.
    pub bp: f64,
    /// SAMR slow-task time threshold.
    pub stt: f64,
    /// SAMR slow-task rate threshold.
    pub stac: f64,
    /// ESAMR cluster count.
    pub k: usize,
    pub kmeans_max_iter: usize,
    /// Seconds a task must have run before it can be judged.
    pub min_elapsed: f64,
    /// ESAMR switches from the centroid mean to per-node centroids once this
    /// fraction of a phase's tasks has completed.
    pub esamr_completion_fraction: f64,
    /// Naive: a task is a straggler below this fraction of the average score.
    pub naive_threshold: f64,
    /// Fraction of nodes treated as slow and never used as backup targets.
    pub slow_node_fraction: f64,
    pub nn: NnConfig,
    /// Seeds k-means initialisation and network training.
    pub seed: u64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            speculative_cap: 0.10,
            bp: 0.2,
            stt: 0.4,
            stac: 0.2,
            k: 10,
            kmeans_max_iter: crate::learners::kmeans::DEFAULT_MAX_ITER,
            min_elapsed: 60.0,
            esamr_completion_fraction: 0.20,
            naive_threshold: 0.8,
            slow_node_fraction: 0.25,
            nn: NnConfig::default(),
            seed: 0,
        }
    }
}

impl StrategyParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("speculative cap", self.speculative_cap),
            ("bp", self.bp),
            ("stt", self.stt),
            ("stac", self.stac),
            ("esamr completion fraction", self.esamr_completion_fraction),
            ("naive threshold", self.naive_threshold),
        ];
        for (name, v) in fractions {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.slow_node_fraction) {
            return Err(Error::config("slow node fraction must be in [0, 1)"));
        }
        if !(self.min_elapsed >= 0.0) || !self.min_elapsed.is_finite() {
            return Err(Error::config("min elapsed must be >= 0"));
        }
        if self.k == 0 {
            return Err(Error::config("k must be >= 1"));
        }
        self.nn.validate()
    }
}

/// What a strategy sees of a worker node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    /// Mean of the node's per-stage speed factors.
    pub mean_speed: f64,
    pub free_containers: usize,
}

/// Inputs of one strategy evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub clock: f64,
    pub job_id: JobId,
    /// Number of map and reduce tasks of the job.
    pub task_totals: [usize; 2],
    /// One snapshot per running task, taken from its original attempt.
    pub snapshots: &'a [TaskSnapshot],
    pub nodes: &'a [NodeState],
    /// Tasks that already have a backup attempt running.
    pub backed_up: &'a BTreeSet<TaskId>,
    pub running_backups: usize,
    /// Completed-task records, including those of the current job so far.
    pub history: &'a HistoryStore,
}

impl EvalContext<'_> {
    pub fn total_in_phase(&self, phase: Phase) -> usize {
        match phase {
            Phase::Map => self.task_totals[0],
            Phase::Reduce => self.task_totals[1],
        }
    }
}

/// A strategy's view of one running task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEstimate {
    pub job_id: JobId,
    pub task_id: TaskId,
    pub node_id: NodeId,
    pub phase: Phase,
    pub elapsed: f64,
    pub progress_score: f64,
    pub progress_rate: f64,
    pub tte: f64,
    /// Stage weights behind the estimate; `None` when the estimator predicts
    /// the remaining time directly.
    pub weights: Option<Vec<f64>>,
}

impl TaskEstimate {
    /// Estimate from the given phase weights.
    pub fn from_weights(snapshot: &TaskSnapshot, weights: Vec<f64>) -> Result<Self> {
        snapshot.validate()?;
        let stages = snapshot.phase.stages();
        let finished =
            snapshot.current_stage == stages[stages.len() - 1] && snapshot.processed_pairs == snapshot.total_pairs;
        // Renormalized weights may sum to a hair under one.
        let score = if finished {
            1.0
        } else {
            weighted_progress(&weights, snapshot.current_stage, snapshot.sub_progress())?
        };
        Ok(Self::from_score(snapshot, score, Some(weights)))
    }

    fn from_score(snapshot: &TaskSnapshot, score: f64, weights: Option<Vec<f64>>) -> Self {
        let rate = if snapshot.elapsed > 0.0 {
            score / snapshot.elapsed
        } else {
            0.0
        };
        TaskEstimate {
            job_id: snapshot.job_id,
            task_id: snapshot.task_id,
            node_id: snapshot.node_id,
            phase: snapshot.phase,
            elapsed: snapshot.elapsed,
            progress_score: score,
            progress_rate: rate,
            tte: time_to_end(score, rate),
            weights,
        }
    }

    /// Builds an estimate from a directly predicted remaining time. The
    /// progress score is the elapsed share of the predicted total, so that
    /// `(1 - score) / rate` gives back `tte`.
    fn from_tte(snapshot: &TaskSnapshot, tte: f64) -> Result<Self> {
        snapshot.validate()?;
        let tte = tte.max(0.0);
        let score = if tte == 0.0 {
            1.0
        } else if snapshot.elapsed > 0.0 {
            snapshot.elapsed / (snapshot.elapsed + tte)
        } else {
            0.0
        };
        let mut e = Self::from_score(snapshot, score, None);
        if score < 1.0 && snapshot.elapsed > 0.0 {
            e.tte = tte;
        }
        Ok(e)
    }

    fn judgeable(&self, min_elapsed: f64) -> bool {
        self.elapsed > 0.0 && self.elapsed >= min_elapsed && self.tte > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeculationDecision {
    pub job_id: JobId,
    pub task_id: TaskId,
    pub original_node: NodeId,
    pub target: NodeId,
    /// Estimated remaining time of the original attempt, in seconds.
    pub estimated_tte: f64,
    pub clock: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub estimates: Vec<TaskEstimate>,
    pub slow_nodes: Vec<NodeId>,
    pub decisions: Vec<SpeculationDecision>,
    /// Stragglers left without a backup because no node could take one.
    pub dropped: Vec<TaskId>,
}

/// A configured strategy together with whatever it learned from history.
#[derive(Debug, Clone)]
pub struct Strategy {
    kind: StrategyKind,
    params: StrategyParams,
    esamr: Option<EsamrModels>,
    nn: Option<NnModels>,
}

impl Strategy {
    pub fn new(kind: StrategyKind, params: StrategyParams) -> Result<Self> {
        params.validate()?;
        Ok(Strategy {
            kind,
            params,
            esamr: None,
            nn: None,
        })
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn params(&self) -> &StrategyParams {
        &self.params
    }

    /// Uses pre-trained network models instead of training at
    /// [`Strategy::prepare`].
    pub fn with_nn_models(mut self, models: NnModels) -> Self {
        self.nn = Some(models);
        self
    }

    pub fn with_esamr_models(mut self, models: EsamrModels) -> Self {
        self.esamr = Some(models);
        self
    }

    pub fn nn_models(&self) -> Option<&NnModels> {
        self.nn.as_ref()
    }

    pub fn esamr_models(&self) -> Option<&EsamrModels> {
        self.esamr.as_ref()
    }

    /// Fits the history-driven models that are not already present. Called
    /// once before a job starts.
    pub fn prepare(&mut self, history: &HistoryStore) -> Result<()> {
        match self.kind {
            StrategyKind::Esamr if self.esamr.is_none() => {
                self.esamr = Some(EsamrModels::fit(
                    history,
                    self.params.k,
                    self.params.seed,
                    self.params.kmeans_max_iter,
                )?);
            }
            StrategyKind::Nn if self.nn.is_none() => {
                let config = self.params.nn.clone().with_seed(self.params.seed);
                self.nn = Some(NnModels::train(history, &config)?);
            }
            _ => {}
        }
        Ok(())
    }

    /// Progress estimates for every snapshot, in snapshot order.
    pub fn estimate(&self, ctx: &EvalContext<'_>) -> Result<Vec<TaskEstimate>> {
        let mut cache: BTreeMap<(NodeId, Phase), Vec<f64>> = BTreeMap::new();
        let mut out = Vec::with_capacity(ctx.snapshots.len());
        for s in ctx.snapshots {
            if self.kind == StrategyKind::Nn && s.phase == Phase::Map {
                if let Some(tte) = self.nn.as_ref().map(|m| m.map_tte(s)).transpose()?.flatten() {
                    out.push(TaskEstimate::from_tte(s, tte)?);
                    continue;
                }
            }
            let key = (s.node_id, s.phase);
            let w = match cache.entry(key) {
                Entry::Occupied(e) => e.get().clone(),
                Entry::Vacant(e) => e.insert(self.phase_weights(ctx, s)?).clone(),
            };
            out.push(TaskEstimate::from_weights(s, w)?);
        }
        Ok(out)
    }

    /// Stage weights this strategy assumes for the phase of `snapshot` on its
    /// node.
    fn phase_weights(&self, ctx: &EvalContext<'_>, s: &TaskSnapshot) -> Result<Vec<f64>> {
        let naive = || StageWeights::NAIVE.for_phase(s.phase).to_vec();
        Ok(match self.kind {
            StrategyKind::NoSpeculate | StrategyKind::Naive | StrategyKind::Late => naive(),
            StrategyKind::Samr => samr_node_weights(ctx.history, s.node_id, s.phase),
            StrategyKind::Esamr => match &self.esamr {
                Some(m) => m.weights_for(ctx, s.node_id, s.phase, self.params.esamr_completion_fraction)?,
                None => naive(),
            },
            StrategyKind::Nn => match (s.phase, &self.nn) {
                (Phase::Reduce, Some(m)) => m.reduce_weights(s)?.unwrap_or_else(naive),
                _ => naive(),
            },
        })
    }

    /// Estimates every running task and emits this tick's backup decisions.
    pub fn evaluate(&self, ctx: &EvalContext<'_>) -> Result<Evaluation> {
        if self.kind == StrategyKind::NoSpeculate {
            return Ok(Evaluation::default());
        }
        let estimates = self.estimate(ctx)?;
        let slow = slow_nodes(&estimates, ctx.nodes, self.params.slow_node_fraction);
        let p = &self.params;
        let candidates: Vec<&TaskEstimate> = estimates
            .iter()
            .filter(|e| e.judgeable(p.min_elapsed) && !ctx.backed_up.contains(&e.task_id))
            .collect();

        let (ordered, limit): (Vec<&TaskEstimate>, Box<dyn Fn(usize) -> bool>) = match self.kind {
            StrategyKind::NoSpeculate => unreachable!(),
            StrategyKind::Naive => {
                let judged: Vec<&TaskEstimate> = estimates
                    .iter()
                    .filter(|e| e.elapsed >= p.min_elapsed && e.elapsed > 0.0)
                    .collect();
                let ids = naive_stragglers(&judged, p.naive_threshold);
                let mut picked: Vec<&TaskEstimate> = candidates
                    .iter()
                    .copied()
                    .filter(|e| ids.contains(&e.task_id))
                    .collect();
                picked.sort_by(|a, b| {
                    a.progress_score
                        .total_cmp(&b.progress_score)
                        .then(a.task_id.cmp(&b.task_id))
                });
                (picked, Box::new(|_| true))
            }
            StrategyKind::Samr => {
                let judged: Vec<&TaskEstimate> = estimates
                    .iter()
                    .filter(|e| e.elapsed >= p.min_elapsed && e.elapsed > 0.0)
                    .collect();
                let ids = samr_stragglers(&judged, p.stac, p.stt);
                // Stragglers on slow nodes go first, then by time to end.
                let mut picked = rank_by_tte(
                    candidates
                        .iter()
                        .copied()
                        .filter(|e| ids.contains(&e.task_id))
                        .collect(),
                );
                picked.sort_by_key(|e| !slow.contains(&e.node_id));
                let running = ctx.snapshots.len() as f64;
                let base = ctx.running_backups;
                let bp = p.bp;
                (
                    picked,
                    Box::new(move |launched| ((base + launched + 1) as f64) < bp * running),
                )
            }
            StrategyKind::Late | StrategyKind::Esamr | StrategyKind::Nn => {
                let allowed = speculative_allowance(p.speculative_cap, ctx.snapshots.len(), ctx.running_backups);
                (rank_by_tte(candidates), Box::new(move |launched| launched < allowed))
            }
        };

        let mut nodes = ctx.nodes.to_vec();
        let mut decisions = Vec::new();
        let mut dropped = Vec::new();
        for e in ordered {
            if !limit(decisions.len()) {
                break;
            }
            match select_backup_node(&nodes, &slow, e.node_id) {
                Ok(target) => {
                    if let Some(n) = nodes.iter_mut().find(|n| n.id == target) {
                        n.free_containers -= 1;
                    }
                    decisions.push(SpeculationDecision {
                        job_id: e.job_id,
                        task_id: e.task_id,
                        original_node: e.node_id,
                        target,
                        estimated_tte: e.tte,
                        clock: ctx.clock,
                    });
                }
                Err(_) => dropped.push(e.task_id),
            }
        }
        Ok(Evaluation {
            estimates,
            slow_nodes: slow.into_iter().collect(),
            decisions,
            dropped,
        })
    }
}

/// Backups that may still be launched: `floor(cap * running) - backups`.
pub fn speculative_allowance(cap: f64, running: usize, running_backups: usize) -> usize {
    let bound = (cap * running as f64 + FLOOR_EPS).floor() as usize;
    bound.saturating_sub(running_backups)
}

/// Sorts by time to end, longest first; ties by task id.
fn rank_by_tte(mut tasks: Vec<&TaskEstimate>) -> Vec<&TaskEstimate> {
    tasks.sort_by(|a, b| b.tte.total_cmp(&a.tte).then(a.task_id.cmp(&b.task_id)));
    tasks
}

#[cfg(test)]
mod tests;
