//! SAMR: per-node weights from the most recent completed task, and the
//! combined rate and time-to-end straggler test.

use std::collections::BTreeSet;

use crate::history::HistoryStore;
use crate::task::{NodeId, Phase, StageWeights, TaskId};

use super::TaskEstimate;

/// Realized weights of the node's most recent completed task in `phase`, or
/// the initial `(1, 0, 1/3, 1/3, 1/3)` when it has none.
pub fn samr_node_weights(history: &HistoryStore, node: NodeId, phase: Phase) -> Vec<f64> {
    history
        .node_records(node)
        .iter()
        .rev()
        .find(|r| r.phase == phase)
        .map(|r| r.realized_weights.clone())
        .unwrap_or_else(|| StageWeights::NAIVE.for_phase(phase).to_vec())
}

/// Tasks that are slow by rate (`Pr < (1 - stac) * APR`) and slow by time
/// (`TTE - ATTE > ATTE * stt`), with averages taken per phase. Tasks with an
/// infinite time to end are left out of ATTE and count as slow by time.
pub fn samr_stragglers(estimates: &[&TaskEstimate], stac: f64, stt: f64) -> BTreeSet<TaskId> {
    let mut out = BTreeSet::new();
    for phase in Phase::ALL {
        let tasks: Vec<&&TaskEstimate> = estimates.iter().filter(|e| e.phase == phase).collect();
        if tasks.is_empty() {
            continue;
        }
        let apr = tasks.iter().map(|e| e.progress_rate).sum::<f64>() / tasks.len() as f64;
        let finite: Vec<f64> = tasks.iter().map(|e| e.tte).filter(|t| t.is_finite()).collect();
        let atte = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        for e in tasks {
            let slow_rate = e.progress_rate < (1.0 - stac) * apr;
            let slow_time = if e.tte.is_infinite() {
                atte.is_finite()
            } else {
                e.tte - atte > atte * stt
            };
            if slow_rate && slow_time {
                out.insert(e.task_id);
            }
        }
    }
    out
}
