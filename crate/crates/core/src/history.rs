//! Per-node store of completed-task records.
//!
//! On disk the store is one JSON object per line with the fields `job_id`,
//! `task_id`, `node_id`, `phase`, `input_bytes`, `stage_durations`,
//! `weights`, `total_time` and `finished_at`. Records are written grouped by
//! node (ascending id), each node's records in completion order, so saving
//! the same store twice yields identical bytes.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::task::{ExecutionRecord, JobId, NodeId, Phase};

#[derive(Debug, Clone, Default)]
pub struct HistoryStore {
    nodes: BTreeMap<NodeId, Vec<ExecutionRecord>>,
    path: Option<PathBuf>,
    per_node_cap: Option<usize>,
    unflushed: Vec<ExecutionRecord>,
}

impl PartialEq for HistoryStore {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }
}

impl HistoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// An empty store that flushes to `path`.
    pub fn with_path(path: impl Into<PathBuf>) -> Self {
        HistoryStore {
            path: Some(path.into()),
            ..Self::default()
        }
    }

    /// Loads `path` if it exists, otherwise starts empty; either way later
    /// flushes go to `path`.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut store = if path.exists() { Self::load(&path)? } else { Self::new() };
        store.path = Some(path);
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut store = Self::parse(&text, path)?;
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut store = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ExecutionRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            store.insert(record)?;
        }
        Ok(store)
    }

    /// Keeps at most `cap` records per node, dropping the oldest first.
    pub fn set_per_node_cap(&mut self, cap: Option<usize>) {
        self.per_node_cap = cap;
        if let Some(cap) = cap {
            for records in self.nodes.values_mut() {
                let excess = records.len().saturating_sub(cap);
                records.drain(..excess);
            }
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn insert(&mut self, record: ExecutionRecord) -> Result<()> {
        record.validate()?;
        let records = self.nodes.entry(record.node_id).or_default();
        if let Some(last) = records.last() {
            if record.finished_at < last.finished_at {
                return Err(Error::InvalidRecord(format!(
                    "{}/{} finished at {} before the latest record of {} ({})",
                    record.job_id, record.task_id, record.finished_at, record.node_id, last.finished_at
                )));
            }
        }
        records.push(record);
        if let Some(cap) = self.per_node_cap {
            let excess = records.len().saturating_sub(cap);
            records.drain(..excess);
        }
        Ok(())
    }

    /// Appends a completed-task record under its node. The record reaches disk
    /// on the next [`HistoryStore::flush`].
    pub fn append(&mut self, record: ExecutionRecord) -> Result<()> {
        self.insert(record.clone())?;
        if self.path.is_some() {
            self.unflushed.push(record);
        }
        Ok(())
    }

    /// Appends pending records to the backing file, if any.
    pub fn flush(&mut self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if self.unflushed.is_empty() {
            return Ok(());
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut buf = String::new();
        for r in &self.unflushed {
            buf.push_str(&serde_json::to_string(r).expect("records serialize"));
            buf.push('\n');
        }
        file.write_all(buf.as_bytes())?;
        self.unflushed.clear();
        Ok(())
    }

    /// Writes the whole store to `path`, replacing its contents.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.iter() {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// All records of `node` in `phase`, in completion order. Unknown nodes
    /// yield an empty list.
    pub fn records_for_node(&self, node: NodeId, phase: Phase) -> Vec<&ExecutionRecord> {
        self.nodes
            .get(&node)
            .map(|rs| rs.iter().filter(|r| r.phase == phase).collect())
            .unwrap_or_default()
    }

    pub fn node_records(&self, node: NodeId) -> &[ExecutionRecord] {
        self.nodes.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// Every record, grouped by node.
    pub fn iter(&self) -> impl Iterator<Item = &ExecutionRecord> {
        self.nodes.values().flatten()
    }

    pub fn records_in_phase(&self, phase: Phase) -> impl Iterator<Item = &ExecutionRecord> {
        self.iter().filter(move |r| r.phase == phase)
    }

    pub fn len(&self) -> usize {
        self.nodes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Latest completion time across all nodes, or zero for an empty store.
    pub fn latest_finish(&self) -> f64 {
        self.iter().map(|r| r.finished_at).fold(0.0, f64::max)
    }

    pub fn next_job_id(&self) -> JobId {
        self.iter().map(|r| JobId(r.job_id.0 + 1)).max().unwrap_or_default()
    }
}
