//! Domain types shared by the simulator, the estimators and the strategies.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "weights of a phase sum to one".
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Tolerance for "stage durations sum to the total time", in seconds.
pub const DURATION_SUM_TOLERANCE: f64 = 1e-6;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_newtype!(
    /// Identifier of a task, unique within its job.
    TaskId,
    "t"
);
id_newtype!(
    /// Identifier of a worker node.
    NodeId,
    "n"
);
id_newtype!(
    /// Identifier of a job, unique within a history store.
    JobId,
    "j"
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Map,
    Reduce,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Map, Phase::Reduce];

    /// Stages of this phase in execution order.
    pub fn stages(self) -> &'static [Stage] {
        match self {
            Phase::Map => &Stage::ALL[..2],
            Phase::Reduce => &Stage::ALL[2..],
        }
    }

    pub fn stage_count(self) -> usize {
        self.stages().len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Map => "map",
            Phase::Reduce => "reduce",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The five execution stages of a MapReduce task. Ordinal order is execution
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    MapCopy,
    MapCombine,
    ReduceShuffle,
    ReduceSort,
    ReduceReduce,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::MapCopy,
        Stage::MapCombine,
        Stage::ReduceShuffle,
        Stage::ReduceSort,
        Stage::ReduceReduce,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn phase(self) -> Phase {
        match self {
            Stage::MapCopy | Stage::MapCombine => Phase::Map,
            _ => Phase::Reduce,
        }
    }

    /// Position of the stage inside its own phase (0-based).
    pub fn index_in_phase(self) -> usize {
        match self.phase() {
            Phase::Map => self.ordinal(),
            Phase::Reduce => self.ordinal() - 2,
        }
    }

    pub fn from_phase_index(phase: Phase, index: usize) -> Option<Stage> {
        phase.stages().get(index).copied()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::MapCopy => "map-copy",
            Stage::MapCombine => "map-combine",
            Stage::ReduceShuffle => "reduce-shuffle",
            Stage::ReduceSort => "reduce-sort",
            Stage::ReduceReduce => "reduce-reduce",
        };
        f.write_str(name)
    }
}

/// Per-stage fractions of phase execution time: `(M1, M2)` for the map phase
/// and `(R1, R2, R3)` for the reduce phase. Each phase sums to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageWeights {
    map: [f64; 2],
    reduce: [f64; 3],
}

impl StageWeights {
    /// Constant weights used by Hadoop's naive estimator and by LATE.
    pub const NAIVE: StageWeights = StageWeights {
        map: [1.0, 0.0],
        reduce: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    };

    pub fn new(map: [f64; 2], reduce: [f64; 3]) -> Result<Self> {
        check_phase_weights(&map)?;
        check_phase_weights(&reduce)?;
        Ok(StageWeights { map, reduce })
    }

    pub fn m1(&self) -> f64 {
        self.map[0]
    }

    pub fn m2(&self) -> f64 {
        self.map[1]
    }

    pub fn r1(&self) -> f64 {
        self.reduce[0]
    }

    pub fn r2(&self) -> f64 {
        self.reduce[1]
    }

    pub fn r3(&self) -> f64 {
        self.reduce[2]
    }

    pub fn for_phase(&self, phase: Phase) -> &[f64] {
        match phase {
            Phase::Map => &self.map,
            Phase::Reduce => &self.reduce,
        }
    }

    /// Replaces the weights of one phase, keeping the other.
    pub fn with_phase(mut self, phase: Phase, weights: &[f64]) -> Result<Self> {
        if weights.len() != phase.stage_count() {
            return Err(Error::Dimension {
                expected: phase.stage_count(),
                got: weights.len(),
            });
        }
        check_phase_weights(weights)?;
        match phase {
            Phase::Map => self.map.copy_from_slice(weights),
            Phase::Reduce => self.reduce.copy_from_slice(weights),
        }
        Ok(self)
    }
}

impl Default for StageWeights {
    fn default() -> Self {
        StageWeights::NAIVE
    }
}

fn check_phase_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0 || *w > 1.0) {
        return Err(Error::degenerate(format!("weight outside [0, 1]: {weights:?}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::degenerate(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Turns per-stage durations into per-stage time fractions.
pub fn realized_weights_from_durations(durations: &[f64]) -> Result<Vec<f64>> {
    if durations.is_empty() {
        return Err(Error::Empty("stage durations"));
    }
    if durations.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::degenerate("stage durations must be finite and non-negative"));
    }
    let total: f64 = durations.iter().sum();
    if total <= 0.0 {
        return Err(Error::degenerate("stage durations are all zero"));
    }
    Ok(durations.iter().map(|d| d / total).collect())
}

/// Live progress observables of one running task attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSnapshot {
    pub job_id: JobId,
    pub task_id: TaskId,
    pub phase: Phase,
    pub current_stage: Stage,
    /// Key/value pairs processed so far in the current stage (`N_f`).
    pub processed_pairs: u64,
    /// Key/value pairs the current stage has to process (`N_a`).
    pub total_pairs: u64,
    /// Seconds since the attempt started.
    pub elapsed: f64,
    pub input_bytes: u64,
    pub node_id: NodeId,
}

impl TaskSnapshot {
    pub fn validate(&self) -> Result<()> {
        if self.total_pairs == 0 {
            return Err(Error::degenerate("total pairs must be at least 1"));
        }
        if self.processed_pairs > self.total_pairs {
            return Err(Error::degenerate("processed pairs exceed total pairs"));
        }
        if !(self.elapsed >= 0.0) {
            return Err(Error::degenerate("elapsed time must be non-negative"));
        }
        if self.current_stage.phase() != self.phase {
            return Err(Error::WrongPhase {
                expected: self.phase.as_str(),
                got: self.current_stage.to_string(),
            });
        }
        Ok(())
    }

    /// Within-stage progress `N_f / N_a`.
    pub fn sub_progress(&self) -> f64 {
        self.processed_pairs as f64 / self.total_pairs.max(1) as f64
    }
}

/// A completed task as stored in the history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub job_id: JobId,
    pub task_id: TaskId,
    pub node_id: NodeId,
    pub phase: Phase,
    pub input_bytes: u64,
    /// Seconds spent in each stage of `phase`, in execution order.
    pub stage_durations: Vec<f64>,
    /// Realized stage weights of `phase`: `stage_durations / total_time`.
    #[serde(rename = "weights")]
    pub realized_weights: Vec<f64>,
    pub total_time: f64,
    /// Simulation clock at completion, in seconds.
    pub finished_at: f64,
}

impl ExecutionRecord {
    /// Builds a record, deriving the total time and realized weights from the
    /// stage durations.
    pub fn from_durations(
        job_id: JobId,
        task_id: TaskId,
        node_id: NodeId,
        phase: Phase,
        input_bytes: u64,
        stage_durations: Vec<f64>,
        finished_at: f64,
    ) -> Result<Self> {
        if stage_durations.len() != phase.stage_count() {
            return Err(Error::Dimension {
                expected: phase.stage_count(),
                got: stage_durations.len(),
            });
        }
        let realized_weights = realized_weights_from_durations(&stage_durations)?;
        let total_time = stage_durations.iter().sum();
        Ok(ExecutionRecord {
            job_id,
            task_id,
            node_id,
            phase,
            input_bytes,
            stage_durations,
            realized_weights,
            total_time,
            finished_at,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.phase.stage_count();
        if self.stage_durations.len() != n || self.realized_weights.len() != n {
            return Err(Error::InvalidRecord(format!(
                "{}/{}: expected {n} stages",
                self.job_id, self.task_id
            )));
        }
        if !self.total_time.is_finite() || self.total_time <= 0.0 || !self.finished_at.is_finite() {
            return Err(Error::InvalidRecord(format!(
                "{}/{}: non-positive or non-finite time",
                self.job_id, self.task_id
            )));
        }
        let sum: f64 = self.stage_durations.iter().sum();
        if (sum - self.total_time).abs() > DURATION_SUM_TOLERANCE {
            return Err(Error::InvalidRecord(format!(
                "{}/{}: stage durations sum to {sum}, total is {}",
                self.job_id, self.task_id, self.total_time
            )));
        }
        for (d, w) in self.stage_durations.iter().zip(&self.realized_weights) {
            if (d / self.total_time - w).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(Error::InvalidRecord(format!(
                    "{}/{}: weight {w} does not match duration {d}",
                    self.job_id, self.task_id
                )));
            }
        }
        Ok(())
    }

    /// Stage and within-stage fraction reached `fraction` of the way through
    /// the task's lifetime.
    pub fn position_at(&self, fraction: f64) -> (Stage, f64) {
        let target = fraction.clamp(0.0, 1.0) * self.total_time;
        let mut start = 0.0;
        let stages = self.phase.stages();
        for (i, d) in self.stage_durations.iter().enumerate() {
            let end = start + d;
            if target < end || i + 1 == stages.len() {
                let sub = if *d > 0.0 {
                    ((target - start) / d).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                return (stages[i], sub);
            }
            start = end;
        }
        (stages[stages.len() - 1], 1.0)
    }
}

/// A worker node: per-stage speed multipliers (1.0 is nominal) and the number
/// of containers it can run at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub speeds: [f64; 5],
    pub containers: usize,
}

impl NodeSpec {
    pub fn uniform(id: NodeId, speed: f64, containers: usize) -> Self {
        NodeSpec {
            id,
            speeds: [speed; 5],
            containers,
        }
    }

    pub fn speed(&self, stage: Stage) -> f64 {
        self.speeds[stage.ordinal()]
    }

    pub fn mean_speed(&self) -> f64 {
        self.speeds.iter().sum::<f64>() / self.speeds.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.speeds.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::config(format!("node {}: speed factors must be > 0", self.id)));
        }
        if self.containers == 0 {
            return Err(Error::config(format!("node {}: needs at least one container", self.id)));
        }
        Ok(())
    }
}
