//! Task sizing and the stage cost model.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::task::{NodeSpec, Stage};

use super::config::Workload;

/// Synthetic key/value pairs per block processed by every stage.
pub const PAIRS_PER_BLOCK: f64 = 10_000.0;

/// Number of map tasks: one per (possibly partial) block.
pub fn split_job(input_bytes: u64, block_size: u64) -> Result<usize> {
    if input_bytes == 0 || block_size == 0 {
        return Err(Error::config("input size and block size must be > 0"));
    }
    Ok(input_bytes.div_ceil(block_size) as usize)
}

/// Splits `total` bytes into `parts` near-equal shares, remainder bytes going
/// to the first shares.
pub fn even_shares(total: u64, parts: usize) -> Vec<u64> {
    let parts = parts.max(1) as u64;
    let (base, extra) = (total / parts, total % parts);
    (0..parts).map(|i| base + u64::from(i < extra)).collect()
}

/// Byte sizes of the map tasks: full blocks, the last one possibly partial.
pub fn map_shares(input_bytes: u64, block_size: u64) -> Vec<u64> {
    let n = input_bytes.div_ceil(block_size);
    (0..n).map(|i| block_size.min(input_bytes - i * block_size)).collect()
}

/// `N_a` of a stage over `bytes` of input: at least one pair.
pub fn pairs_for(bytes: u64, block_size: u64) -> u64 {
    ((PAIRS_PER_BLOCK * bytes as f64 / block_size as f64).ceil() as u64).max(1)
}

/// Seconds a stage takes: the workload's per-block base time scaled by input
/// size and node speed, times `1 + u` with `u` uniform in `[-noise, noise]`.
pub fn stage_duration(
    workload: Workload,
    stage: Stage,
    task_bytes: u64,
    block_size: u64,
    node: &NodeSpec,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let base = workload.base_seconds(stage) * (task_bytes as f64 / block_size as f64) / node.speed(stage);
    let u = if noise > 0.0 {
        rng.gen_range(-noise..=noise)
    } else {
        0.0
    };
    base * (1.0 + u)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream of one task attempt, derived from the run seed and the
/// attempt's identity so that attempts never share draws.
pub fn attempt_rng(seed: u64, job: u32, task: u32, attempt: u32) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for part in [job, task, attempt] {
        h = splitmix64(h ^ u64::from(part));
    }
    ChaCha8Rng::seed_from_u64(h)
}
