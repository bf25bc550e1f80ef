//! Cluster and workload configuration, including the `key = value` file
//! format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{NodeId, NodeSpec, Stage};

pub const MIB: u64 = 1 << 20;
pub const DEFAULT_BLOCK_SIZE: u64 = 128 * MIB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Workload {
    #[serde(rename = "wordcount")]
    WordCountLike,
    #[serde(rename = "sort")]
    SortLike,
}

impl Workload {
    /// Seconds per block for each stage on a node of speed 1.
    pub fn profile(self) -> [f64; 5] {
        match self {
            Workload::WordCountLike => [8.0, 2.0, 6.0, 2.0, 2.0],
            Workload::SortLike => [4.0, 1.0, 12.0, 6.0, 3.0],
        }
    }

    pub fn base_seconds(self, stage: Stage) -> f64 {
        self.profile()[stage.ordinal()]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Workload::WordCountLike => "wordcount",
            Workload::SortLike => "sort",
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Workload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wordcount" | "wordcountlike" | "wordcount-like" => Ok(Workload::WordCountLike),
            "sort" | "sortlike" | "sort-like" => Ok(Workload::SortLike),
            _ => Err(Error::config(format!("unknown workload {s:?}"))),
        }
    }
}

/// Slows down the last nodes of the cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StragglerSpec {
    /// Fraction of nodes affected, rounded up to whole nodes.
    pub fraction: f64,
    /// Multiplies every stage speed of an affected node.
    pub multiplier: f64,
    /// Container count of an affected node, if different from the others.
    pub containers: Option<usize>,
}

impl Default for StragglerSpec {
    fn default() -> Self {
        StragglerSpec {
            fraction: 0.0,
            multiplier: 1.0,
            containers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub workers: usize,
    pub containers_per_node: usize,
    /// Per-stage speed vectors assigned to nodes in turn: node `i` gets
    /// `regimes[i % regimes.len()]`.
    pub regimes: Vec<[f64; 5]>,
    pub straggler: StragglerSpec,
    pub block_size: u64,
    pub workload: Workload,
    pub input_bytes: u64,
    /// Each stage duration is scaled by `1 + u`, `u` uniform in
    /// `[-noise, noise]`.
    pub noise: f64,
    pub seed: u64,
    /// Reduce task count; one per worker when unset.
    pub reduce_tasks: Option<usize>,
    /// Seconds between strategy evaluations.
    pub tick_interval: f64,
    /// Keep every tick's task snapshots in the result.
    pub record_trace: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            workers: 4,
            containers_per_node: 1,
            regimes: vec![[1.0; 5]],
            straggler: StragglerSpec::default(),
            block_size: DEFAULT_BLOCK_SIZE,
            workload: Workload::WordCountLike,
            input_bytes: 1 << 30,
            noise: 0.1,
            seed: 0,
            reduce_tasks: None,
            tick_interval: 1.0,
            record_trace: false,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("at least one worker node is required"));
        }
        if self.containers_per_node == 0 || self.straggler.containers == Some(0) {
            return Err(Error::config("nodes need at least one container"));
        }
        if self.block_size == 0 {
            return Err(Error::config("block size must be > 0"));
        }
        if self.input_bytes == 0 {
            return Err(Error::config("input size must be > 0"));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::config("noise must be in [0, 1)"));
        }
        if self.regimes.is_empty() || self.regimes.iter().flatten().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::config("regimes must be non-empty with speeds > 0"));
        }
        if !(0.0..1.0).contains(&self.straggler.fraction) {
            return Err(Error::config("straggler fraction must be in [0, 1)"));
        }
        if !(self.straggler.multiplier > 0.0 && self.straggler.multiplier <= 1.0) {
            return Err(Error::config("straggler multiplier must be in (0, 1]"));
        }
        if self.reduce_tasks == Some(0) {
            return Err(Error::config("reduce task count must be >= 1"));
        }
        if !(self.tick_interval > 0.0) || !self.tick_interval.is_finite() {
            return Err(Error::config("tick interval must be > 0"));
        }
        Ok(())
    }

    pub fn reduce_count(&self) -> usize {
        self.reduce_tasks.unwrap_or(self.workers)
    }

    /// Number of nodes slowed down by the straggler spec.
    pub fn straggler_count(&self) -> usize {
        (self.straggler.fraction * self.workers as f64).ceil() as usize
    }

    /// Node specs: regimes assigned in turn, stragglers last.
    pub fn nodes(&self) -> Vec<NodeSpec> {
        let first_straggler = self.workers - self.straggler_count().min(self.workers);
        (0..self.workers)
            .map(|i| {
                let mut speeds = self.regimes[i % self.regimes.len()];
                let mut containers = self.containers_per_node;
                if i >= first_straggler {
                    speeds.iter_mut().for_each(|s| *s *= self.straggler.multiplier);
                    containers = self.straggler.containers.unwrap_or(containers);
                }
                NodeSpec {
                    id: NodeId(i as u32),
                    speeds,
                    containers,
                }
            })
            .collect()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::config(format!("{key}: invalid {what} {value:?}"));
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad("number"));
        let int = |v: &str| v.parse::<usize>().map_err(|_| bad("integer"));
        match key {
            "workers" | "nodes" => self.workers = int(value)?,
            "containers_per_node" => self.containers_per_node = int(value)?,
            "regimes" => self.regimes = parse_regimes(value).map_err(|_| bad("regime list"))?,
            "straggler_fraction" => self.straggler.fraction = num(value)?,
            "straggler_multiplier" => self.straggler.multiplier = num(value)?,
            "straggler_containers" => self.straggler.containers = Some(int(value)?),
            "block_size" => self.block_size = parse_bytes(value)?,
            "workload" => self.workload = value.parse()?,
            "input_bytes" | "input_size" => self.input_bytes = parse_bytes(value)?,
            "noise" => self.noise = num(value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "reduce_tasks" => self.reduce_tasks = Some(int(value)?),
            "tick_interval" => self.tick_interval = num(value)?,
            "record_trace" => self.record_trace = value.parse().map_err(|_| bad("boolean"))?,
            _ => return Err(Error::config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a config file: one `key = value` per line, `#` starts a
    /// comment. Unset keys keep their defaults.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut config = ClusterConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected key = value".into()))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| parse_err(e.to_string()))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    /// Renders the config in the file format accepted by [`ClusterConfig::parse`].
    pub fn to_text(&self) -> String {
        let regimes: Vec<String> = self
            .regimes
            .iter()
            .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
            .collect();
        let mut out = format!(
            "workers = {}\ncontainers_per_node = {}\nregimes = {}\nstraggler_fraction = {}\nstraggler_multiplier = {}\n",
            self.workers,
            self.containers_per_node,
            regimes.join(";"),
            self.straggler.fraction,
            self.straggler.multiplier
        );
        if let Some(c) = self.straggler.containers {
            out += &format!("straggler_containers = {c}\n");
        }
        out += &format!(
            "block_size = {}\nworkload = {}\ninput_bytes = {}\nnoise = {}\nseed = {}\n",
            self.block_size, self.workload, self.input_bytes, self.noise, self.seed
        );
        if let Some(r) = self.reduce_tasks {
            out += &format!("reduce_tasks = {r}\n");
        }
        out += &format!(
            "tick_interval = {}\nrecord_trace = {}\n",
            self.tick_interval, self.record_trace
        );
        out
    }
}

/// `"1,1,1,1,1;0.5,1,1,1,1"`: semicolon-separated five-speed vectors.
fn parse_regimes(value: &str) -> std::result::Result<Vec<[f64; 5]>, ()> {
    value
        .split(';')
        .map(|r| {
            let v: Vec<f64> = r
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| ())?;
            v.try_into().map_err(|_| ())
        })
        .collect()
}

/// Parses a byte count with an optional binary unit suffix: `512`, `64KB`,
/// `256MB`, `1GB`, `1.5GiB`, `2T`.
pub fn parse_bytes(s: &str) -> Result<u64> {
    let t = s.trim();
    let split = t.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let scale: u64 = match unit.trim().to_ascii_uppercase().as_str() {
        "" | "B" => 1,
        "K" | "KB" | "KIB" => 1 << 10,
        "M" | "MB" | "MIB" => 1 << 20,
        "G" | "GB" | "GIB" => 1 << 30,
        "T" | "TB" | "TIB" => 1 << 40,
        _ => return Err(Error::config(format!("unknown size unit in {s:?}"))),
    };
    let n: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid size {s:?}")))?;
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::config(format!("invalid size {s:?}")));
    }
    Ok((n * scale as f64).round() as u64)
}
