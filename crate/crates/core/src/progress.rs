//! Progress score, progress rate and time-to-end arithmetic.
//!
//! Everything here is a pure function of its arguments. A stalled task (rate
//! zero, not complete) has an infinite time to end so that it ranks as the
//! worst straggler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{Phase, Stage, StageWeights, TaskSnapshot};

/// Progress score, progress rate and estimated seconds remaining for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressReport {
    pub progress_score: f64,
    pub progress_rate: f64,
    pub tte: f64,
}

impl ProgressReport {
    pub fn from_score(progress_score: f64, elapsed: f64) -> Result<Self> {
        let progress_rate = progress_rate(progress_score, elapsed)?;
        Ok(ProgressReport {
            progress_score,
            progress_rate,
            tte: time_to_end(progress_score, progress_rate),
        })
    }
}

fn ratio(processed: u64, total: u64) -> Result<f64> {
    if total == 0 {
        return Err(Error::degenerate("total pairs is zero"));
    }
    if processed > total {
        return Err(Error::degenerate(format!(
            "processed pairs {processed} exceed total {total}"
        )));
    }
    Ok(processed as f64 / total as f64)
}

/// Map-task progress score: processed pairs over total pairs.
pub fn map_progress(snapshot: &TaskSnapshot) -> Result<f64> {
    if snapshot.phase != Phase::Map {
        return Err(Error::WrongPhase {
            expected: "map",
            got: snapshot.current_stage.to_string(),
        });
    }
    ratio(snapshot.processed_pairs, snapshot.total_pairs)
}

/// Hadoop's naive reduce progress score, `(K + N_f / N_a) / 3` where `K` is
/// the 0-based reduce stage index.
pub fn reduce_progress_naive(stage_index: usize, processed: u64, total: u64) -> Result<f64> {
    if stage_index > 2 {
        return Err(Error::degenerate(format!(
            "reduce stage index {stage_index} out of range"
        )));
    }
    Ok((stage_index as f64 + ratio(processed, total)?) / 3.0)
}

/// Within-stage progress `Subps = N_f / N_a`.
pub fn sub_progress(processed: u64, total: u64) -> Result<f64> {
    ratio(processed, total)
}

/// Progress score of a phase given its stage weights: the weights of the
/// completed stages plus the current stage's weight scaled by `subps`.
pub fn weighted_progress(phase_weights: &[f64], stage: Stage, subps: f64) -> Result<f64> {
    let k = stage.index_in_phase();
    if phase_weights.len() != stage.phase().stage_count() {
        return Err(Error::Dimension {
            expected: stage.phase().stage_count(),
            got: phase_weights.len(),
        });
    }
    if !(0.0..=1.0).contains(&subps) {
        return Err(Error::degenerate(format!("sub-progress {subps} outside [0, 1]")));
    }
    let done: f64 = phase_weights[..k].iter().sum();
    Ok((done + phase_weights[k] * subps).clamp(0.0, 1.0))
}

/// Reduce progress score from per-stage weights: `R1·s` while shuffling,
/// `R1 + R2·s` while sorting and `R1 + R2 + R3·s` while reducing.
pub fn weighted_reduce_progress(weights: &StageWeights, stage: Stage, subps: f64) -> Result<f64> {
    if stage.phase() != Phase::Reduce {
        return Err(Error::WrongPhase {
            expected: "reduce",
            got: stage.to_string(),
        });
    }
    weighted_progress(weights.for_phase(Phase::Reduce), stage, subps)
}

/// Progress rate `P_s / t`.
pub fn progress_rate(score: f64, elapsed: f64) -> Result<f64> {
    if !(elapsed > 0.0) {
        return Err(Error::degenerate("progress rate needs a positive elapsed time"));
    }
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::degenerate(format!("progress score {score} outside [0, 1]")));
    }
    Ok(score / elapsed)
}

/// Time to end `(1 - P_s) / Pr`; zero for a finished task, infinite for a
/// stalled one.
pub fn time_to_end(score: f64, rate: f64) -> f64 {
    if score >= 1.0 {
        0.0
    } else if rate <= 0.0 {
        f64::INFINITY
    } else {
        (1.0 - score) / rate
    }
}

fn mean(values: &[f64], what: &'static str) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty(what));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Average progress score of the running tasks.
pub fn average_progress(scores: &[f64]) -> Result<f64> {
    mean(scores, "progress scores")
}

/// Average progress rate (APR).
pub fn average_rate(rates: &[f64]) -> Result<f64> {
    mean(rates, "progress rates")
}

/// Average time to end (ATTE). Callers drop infinite entries first.
pub fn average_tte(ttes: &[f64]) -> Result<f64> {
    mean(ttes, "times to end")
}

/// Mean squared residual between estimates and actual values.
pub fn mse_error(estimates: &[f64], actuals: &[f64]) -> Result<f64> {
    if estimates.len() != actuals.len() {
        return Err(Error::Dimension {
            expected: actuals.len(),
            got: estimates.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::Empty("estimates"));
    }
    let sum: f64 = estimates.iter().zip(actuals).map(|(e, a)| (e - a) * (e - a)).sum();
    Ok(sum / estimates.len() as f64)
}
