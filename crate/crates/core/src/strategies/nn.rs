//! Per-node neural estimators.
//!
//! Each node gets two small networks trained on its own completed tasks:
//! one predicts the shuffle and sort weights of a reduce task (the reduce
//! weight follows as `1 - R1 - R2`), the other predicts the remaining time of
//! a map task directly. Byte counts and times are scaled by the node's
//! historical maxima so every feature and target lies in `[0, 1]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::HistoryStore;
use crate::learners::{Mlp, Sample, TrainConfig};
use crate::task::{NodeId, Phase, Stage, TaskSnapshot};

pub const REDUCE_INPUTS: usize = 3;
pub const REDUCE_OUTPUTS: usize = 2;
pub const MAP_INPUTS: usize = 2;
pub const MAP_OUTPUTS: usize = 1;

const SCALE_FILE: &str = "scales.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnConfig {
    pub hidden: usize,
    pub train: TrainConfig,
    /// Training samples taken per completed task, at evenly spaced points of
    /// its lifetime.
    pub samples_per_task: usize,
}

impl Default for NnConfig {
    fn default() -> Self {
        NnConfig {
            hidden: 8,
            train: TrainConfig::default(),
            samples_per_task: 9,
        }
    }
}

impl NnConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.samples_per_task == 0 {
            return Err(Error::config("hidden units and samples per task must be >= 1"));
        }
        if !(self.train.learning_rate > 0.0) || self.train.epochs == 0 {
            return Err(Error::config("learning rate must be > 0 and epochs >= 1"));
        }
        Ok(())
    }
}

/// Historical maxima used to scale one node's features and targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeScale {
    pub max_reduce_bytes: u64,
    pub max_map_bytes: u64,
    pub max_map_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeModels {
    pub scale: NodeScale,
    pub reduce: Option<Mlp>,
    pub map: Option<Mlp>,
}

fn scaled_bytes(bytes: u64, max: u64) -> f64 {
    if max == 0 {
        return 0.0;
    }
    (bytes as f64 / max as f64).clamp(0.0, 1.0)
}

/// Inputs of the reduce weight network: within-stage progress, processed
/// volume and task volume, both relative to the node's largest reduce input.
pub fn reduce_features(subps: f64, input_bytes: u64, scale: &NodeScale) -> [f64; REDUCE_INPUTS] {
    let b = scaled_bytes(input_bytes, scale.max_reduce_bytes);
    [subps, subps * b, b]
}

/// Inputs of the map time network. The two map stages are read as one:
/// progress is `(stage index + subps) / 2`, and the processed volume is that
/// progress times the task's relative input size.
pub fn map_features(stage: Stage, subps: f64, input_bytes: u64, scale: &NodeScale) -> [f64; MAP_INPUTS] {
    let p = (stage.index_in_phase() as f64 + subps) / 2.0;
    [p, p * scaled_bytes(input_bytes, scale.max_map_bytes)]
}

/// Turns the network's `(R1, R2)` into a reduce weight triple summing to one.
fn complete_reduce_weights(r1: f64, r2: f64) -> Vec<f64> {
    let r3 = (1.0 - r1 - r2).clamp(0.0, 1.0);
    let sum = r1 + r2 + r3;
    vec![r1 / sum, r2 / sum, r3 / sum]
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NnModels {
    nodes: BTreeMap<NodeId, NodeModels>,
}

impl NnModels {
    /// Trains both networks for every node that has records of the matching
    /// phase.
    pub fn train(history: &HistoryStore, config: &NnConfig) -> Result<Self> {
        config.validate()?;
        let n = config.samples_per_task;
        let fractions: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        let mut nodes = BTreeMap::new();
        for node in history.nodes() {
            let reduces = history.records_for_node(node, Phase::Reduce);
            let maps = history.records_for_node(node, Phase::Map);
            let scale = NodeScale {
                max_reduce_bytes: reduces.iter().map(|r| r.input_bytes).max().unwrap_or(0),
                max_map_bytes: maps.iter().map(|r| r.input_bytes).max().unwrap_or(0),
                max_map_time: maps.iter().map(|r| r.total_time).fold(0.0, f64::max),
            };
            let seed = config.train.seed.wrapping_add(2 * node.0 as u64);

            let reduce = if reduces.is_empty() {
                None
            } else {
                let mut data = Vec::with_capacity(reduces.len() * n);
                for r in &reduces {
                    for &f in &fractions {
                        let (_, subps) = r.position_at(f);
                        let x = reduce_features(subps, r.input_bytes, &scale);
                        data.push(Sample::new(x.to_vec(), r.realized_weights[..2].to_vec()));
                    }
                }
                let mut mlp = Mlp::new(&[REDUCE_INPUTS, config.hidden, REDUCE_OUTPUTS], seed)?;
                mlp.train(&data, &TrainConfig { seed, ..config.train })?;
                Some(mlp)
            };

            let map = if maps.is_empty() {
                None
            } else {
                let mut data = Vec::with_capacity(maps.len() * n);
                for r in &maps {
                    for &f in &fractions {
                        let (stage, subps) = r.position_at(f);
                        let x = map_features(stage, subps, r.input_bytes, &scale);
                        let remaining = (1.0 - f) * r.total_time / scale.max_map_time;
                        data.push(Sample::new(x.to_vec(), vec![remaining]));
                    }
                }
                let seed = seed.wrapping_add(1);
                let mut mlp = Mlp::new(&[MAP_INPUTS, config.hidden, MAP_OUTPUTS], seed)?;
                mlp.train(&data, &TrainConfig { seed, ..config.train })?;
                Some(mlp)
            };
            nodes.insert(node, NodeModels { scale, reduce, map });
        }
        Ok(NnModels { nodes })
    }

    pub fn from_nodes(nodes: BTreeMap<NodeId, NodeModels>) -> Result<Self> {
        for m in nodes.values() {
            check_shape(m.reduce.as_ref(), REDUCE_INPUTS, REDUCE_OUTPUTS)?;
            check_shape(m.map.as_ref(), MAP_INPUTS, MAP_OUTPUTS)?;
        }
        Ok(NnModels { nodes })
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeModels> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &NodeModels)> {
        self.nodes.iter().map(|(id, m)| (*id, m))
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Predicted reduce weights for the snapshot's node, or `None` when that
    /// node has no reduce model.
    pub fn reduce_weights(&self, s: &TaskSnapshot) -> Result<Option<Vec<f64>>> {
        let Some(m) = self.nodes.get(&s.node_id) else {
            return Ok(None);
        };
        let Some(net) = &m.reduce else {
            return Ok(None);
        };
        let out = net.forward(&reduce_features(s.sub_progress(), s.input_bytes, &m.scale))?;
        Ok(Some(complete_reduce_weights(out[0], out[1])))
    }

    /// Predicted remaining seconds of a map task, or `None` when the node has
    /// no map model.
    pub fn map_tte(&self, s: &TaskSnapshot) -> Result<Option<f64>> {
        let Some(m) = self.nodes.get(&s.node_id) else {
            return Ok(None);
        };
        let Some(net) = &m.map else {
            return Ok(None);
        };
        let out = net.forward(&map_features(
            s.current_stage,
            s.sub_progress(),
            s.input_bytes,
            &m.scale,
        ))?;
        Ok(Some(out[0] * m.scale.max_map_time))
    }

    /// Writes `scales.json` plus one text file per network into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let scales: BTreeMap<u32, NodeScale> = self.nodes.iter().map(|(id, m)| (id.0, m.scale)).collect();
        let json = serde_json::to_string_pretty(&scales).expect("scales serialize");
        fs::write(dir.join(SCALE_FILE), json + "\n")?;
        for (id, m) in &self.nodes {
            if let Some(net) = &m.reduce {
                fs::write(dir.join(format!("node-{}-reduce.mlp", id.0)), net.to_text())?;
            }
            if let Some(net) = &m.map {
                fs::write(dir.join(format!("node-{}-map.mlp", id.0)), net.to_text())?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SCALE_FILE);
        let text = fs::read_to_string(&path)?;
        let scales: BTreeMap<u32, NodeScale> = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let read = |name: String| -> Result<Option<Mlp>> {
            let p = dir.join(name);
            if !p.exists() {
                return Ok(None);
            }
            Mlp::from_text(&fs::read_to_string(p)?).map(Some)
        };
        let mut nodes = BTreeMap::new();
        for (id, scale) in scales {
            let reduce = read(format!("node-{id}-reduce.mlp"))?;
            let map = read(format!("node-{id}-map.mlp"))?;
            nodes.insert(NodeId(id), NodeModels { scale, reduce, map });
        }
        Self::from_nodes(nodes)
    }
}

fn check_shape(net: Option<&Mlp>, inputs: usize, outputs: usize) -> Result<()> {
    if let Some(net) = net {
        if net.input_size() != inputs || net.output_size() != outputs {
            return Err(Error::config(format!(
                "network shape {:?} does not take {inputs} features to {outputs} outputs",
                net.layer_sizes()
            )));
        }
    }
    Ok(())
}
