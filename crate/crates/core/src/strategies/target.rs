//! Slow-node detection and backup placement.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::task::NodeId;

use super::{NodeState, TaskEstimate, FLOOR_EPS};

/// The `floor(fraction * nodes)` nodes with the lowest mean progress rate over
/// their running tasks. Nodes without a started task are not ranked; rate
/// ties go to the lower node id.
pub fn slow_nodes(estimates: &[TaskEstimate], nodes: &[NodeState], fraction: f64) -> BTreeSet<NodeId> {
    let count = (fraction * nodes.len() as f64 + FLOOR_EPS).floor() as usize;
    let mut sums: BTreeMap<NodeId, (f64, usize)> = BTreeMap::new();
    for e in estimates.iter().filter(|e| e.elapsed > 0.0) {
        let s = sums.entry(e.node_id).or_default();
        s.0 += e.progress_rate;
        s.1 += 1;
    }
    let mut ranked: Vec<(f64, NodeId)> = sums.into_iter().map(|(id, (sum, n))| (sum / n as f64, id)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(count).map(|(_, id)| id).collect()
}

/// Fastest node (highest mean stage speed) that is not slow, is not the
/// original node and has a free container. Ties go to the lower node id.
pub fn select_backup_node(nodes: &[NodeState], slow: &BTreeSet<NodeId>, original: NodeId) -> Result<NodeId> {
    nodes
        .iter()
        .filter(|n| n.id != original && n.free_containers > 0 && !slow.contains(&n.id))
        .min_by(|a, b| b.mean_speed.total_cmp(&a.mean_speed).then(a.id.cmp(&b.id)))
        .map(|n| n.id)
        .ok_or(Error::NoTarget(original.0))
}
