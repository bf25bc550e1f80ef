//! Deterministic discrete-event simulation of a heterogeneous MapReduce
//! cluster.
//!
//! A job is split into one map task per block and a configured number of
//! reduce tasks. Reduce tasks start only after every map task has finished.
//! Every stage runs for a duration drawn from the cost model; within a stage
//! the processed key/value pairs grow linearly with time. The active
//! strategy is consulted at a fixed tick and may launch backup attempts,
//! which restart the task from scratch. Whichever attempt finishes first wins
//! and the other is cancelled.

mod config;
mod cost;
mod engine;

pub use config::{parse_bytes, ClusterConfig, StragglerSpec, Workload, DEFAULT_BLOCK_SIZE, MIB};
pub use cost::{attempt_rng, even_shares, map_shares, pairs_for, split_job, stage_duration, PAIRS_PER_BLOCK};
pub use engine::{run_simulation, DecisionLog, EstimateLog, EventKind, SimEvent, SimResult, TraceTick};
