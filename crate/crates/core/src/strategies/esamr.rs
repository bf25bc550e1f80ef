//! ESAMR: k-means over historical stage weights.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::history::HistoryStore;
use crate::learners::KmeansModel;
use crate::task::{NodeId, Phase, StageWeights};

use super::EvalContext;

/// One k-means model per phase, fitted on the realized weights of every
/// record in the history. A phase without records has no model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsamrModels {
    pub map: Option<KmeansModel>,
    pub reduce: Option<KmeansModel>,
}

impl EsamrModels {
    pub fn fit(history: &HistoryStore, k: usize, seed: u64, max_iter: usize) -> Result<Self> {
        let fit_phase = |phase: Phase| -> Result<Option<KmeansModel>> {
            let points: Vec<Vec<f64>> = history
                .records_in_phase(phase)
                .map(|r| r.realized_weights.clone())
                .collect();
            if points.is_empty() {
                return Ok(None);
            }
            let mut model = KmeansModel::new(k, seed, max_iter);
            model.fit(&points)?;
            Ok(Some(model))
        };
        Ok(EsamrModels {
            map: fit_phase(Phase::Map)?,
            reduce: fit_phase(Phase::Reduce)?,
        })
    }

    pub fn for_phase(&self, phase: Phase) -> Option<&KmeansModel> {
        match phase {
            Phase::Map => self.map.as_ref(),
            Phase::Reduce => self.reduce.as_ref(),
        }
    }

    /// Weights for a task of `phase` on `node`. Once `completion_fraction` of
    /// the job's tasks in that phase are done, a node that has completed some
    /// of them gets the centroid nearest to their mean realized weights.
    /// Otherwise the mean of all centroids is used, and LATE's constants when
    /// there is no model.
    pub fn weights_for(
        &self,
        ctx: &EvalContext<'_>,
        node: NodeId,
        phase: Phase,
        completion_fraction: f64,
    ) -> Result<Vec<f64>> {
        let Some(model) = self.for_phase(phase) else {
            return Ok(StageWeights::NAIVE.for_phase(phase).to_vec());
        };
        let total = ctx.total_in_phase(phase);
        let completed = ctx
            .history
            .records_in_phase(phase)
            .filter(|r| r.job_id == ctx.job_id)
            .count();
        if total > 0 && completed as f64 >= completion_fraction * total as f64 {
            let own: Vec<&Vec<f64>> = ctx
                .history
                .records_for_node(node, phase)
                .into_iter()
                .filter(|r| r.job_id == ctx.job_id)
                .map(|r| &r.realized_weights)
                .collect();
            if !own.is_empty() {
                let mut temp = vec![0.0; phase.stage_count()];
                for w in &own {
                    for (t, v) in temp.iter_mut().zip(w.iter()) {
                        *t += v;
                    }
                }
                temp.iter_mut().for_each(|t| *t /= own.len() as f64);
                let i = model.nearest(&temp)?;
                return Ok(model.centroids()[i].clone());
            }
        }
        model.centroid_mean()
    }
}
