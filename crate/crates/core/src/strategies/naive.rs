//! Hadoop's default straggler test.

use std::collections::BTreeSet;

use crate::task::{Phase, TaskId};

use super::TaskEstimate;

/// Tasks whose progress score is below `threshold` times the average score
/// of their phase. A task equal to the average is never a straggler, so a
/// lone task never is.
pub fn naive_stragglers(estimates: &[&TaskEstimate], threshold: f64) -> BTreeSet<TaskId> {
    let mut out = BTreeSet::new();
    for phase in Phase::ALL {
        let scores: Vec<&&TaskEstimate> = estimates.iter().filter(|e| e.phase == phase).collect();
        if scores.is_empty() {
            continue;
        }
        let avg = scores.iter().map(|e| e.progress_score).sum::<f64>() / scores.len() as f64;
        out.extend(
            scores
                .iter()
                .filter(|e| e.progress_score < threshold * avg)
                .map(|e| e.task_id),
        );
    }
    out
}
