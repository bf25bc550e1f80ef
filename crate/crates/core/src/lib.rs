//! Discrete-event simulation of heterogeneous MapReduce clusters with a
//! pluggable speculative-execution layer.
//!
//! The crate is organised bottom-up:
//!
//! - [`task`]: stages, weights, snapshots and execution records shared by
//!   everything else.
//! - [`progress`]: pure progress-score, progress-rate and time-to-end math.
//! - [`learners`]: a from-scratch backpropagation MLP and Lloyd's k-means.
//! - [`history`]: the per-node store of completed-task records.
//! - [`strategies`]: Naive, LATE, SAMR, ESAMR and the neural-network
//!   estimator behind one decision interface.
//! - [`sim`]: the deterministic event-driven cluster simulator.
//! - [`experiment`]: the benchmark harness and CSV reporting.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod history;
pub mod learners;
pub mod progress;
pub mod sim;
pub mod strategies;
pub mod task;

pub use error::{Error, Result};
pub use history::HistoryStore;
pub use sim::{run_simulation, ClusterConfig, SimResult, Workload};
pub use strategies::{SpeculationDecision, Strategy, StrategyKind, StrategyParams};
pub use task::{ExecutionRecord, JobId, NodeId, NodeSpec, Phase, Stage, StageWeights, TaskId, TaskSnapshot};
