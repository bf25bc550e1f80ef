//! The event loop.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::history::HistoryStore;
use crate::strategies::{EvalContext, NodeState, SpeculationDecision, Strategy};
use crate::task::{ExecutionRecord, JobId, NodeId, NodeSpec, Phase, TaskId, TaskSnapshot};

use super::config::ClusterConfig;
use super::cost::{attempt_rng, even_shares, map_shares, pairs_for, stage_duration};

/// Event kinds in tie-breaking order: at equal timestamps stage completions
/// are handled first, so a tick sees every stage that ended at its instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    TaskStageComplete,
    StrategyTick,
    TaskLaunch,
    BackupLaunch,
    TaskCancel,
    JobComplete,
}

#[derive(Debug, Clone, Copy)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub task_id: TaskId,
    /// Index of the attempt the event concerns.
    pub attempt: usize,
    seq: u64,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.task_id.cmp(&other.task_id))
            .then(self.seq.cmp(&other.seq))
    }
}

/// One backup launch together with the load it was decided under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub decision: SpeculationDecision,
    /// Running original attempts when the decision was taken.
    pub running_tasks: usize,
    /// Running backups including this one.
    pub running_backups: usize,
}

/// A strategy's remaining-time estimate next to what actually happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateLog {
    pub clock: f64,
    pub task_id: TaskId,
    pub node_id: NodeId,
    pub phase: Phase,
    pub estimated_tte: f64,
    /// Task completion time minus `clock`.
    pub realized_remaining: f64,
}

/// Snapshots of all running tasks at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTick {
    pub clock: f64,
    pub snapshots: Vec<TaskSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub job_id: JobId,
    /// Clock value at job submission.
    pub epoch: f64,
    pub makespan: f64,
    pub nodes: Vec<NodeSpec>,
    pub map_tasks: usize,
    pub reduce_tasks: usize,
    /// Records of the winning attempts, in completion order.
    pub records: Vec<ExecutionRecord>,
    pub estimates: Vec<EstimateLog>,
    pub decisions: Vec<DecisionLog>,
    /// Stragglers the strategy wanted to back up but could not place.
    pub dropped: usize,
    pub attempts_launched: usize,
    pub attempts_cancelled: usize,
    /// Seconds of work thrown away by cancelled attempts.
    pub cancelled_work: f64,
    pub trace: Vec<TraceTick>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AttemptState {
    Pending,
    Running,
    /// Lost the race; its slot is released by the pending cancel event.
    Cancelling,
    Cancelled,
    Finished,
}

#[derive(Debug, Clone)]
struct Attempt {
    task: TaskId,
    node: usize,
    backup: bool,
    start: f64,
    durations: Vec<f64>,
    stage: usize,
    stage_start: f64,
    state: AttemptState,
}

#[derive(Debug, Clone)]
struct TaskState {
    phase: Phase,
    bytes: u64,
    pairs: u64,
    attempts: Vec<usize>,
    finish: Option<f64>,
}

struct Engine<'a> {
    config: &'a ClusterConfig,
    nodes: Vec<NodeSpec>,
    free: Vec<usize>,
    cursor: usize,
    job_id: JobId,
    epoch: f64,
    clock: f64,
    tasks: Vec<TaskState>,
    attempts: Vec<Attempt>,
    pending: VecDeque<TaskId>,
    events: BinaryHeap<Reverse<SimEvent>>,
    seq: u64,
    maps_left: usize,
    tasks_left: usize,
    result: SimResult,
}

/// Runs one job on the configured cluster under `strategy`, appending each
/// completed task to `history`. The job starts at the latest completion time
/// already in the history and takes the next free job id.
pub fn run_simulation(
    config: &ClusterConfig,
    strategy: &mut Strategy,
    history: &mut HistoryStore,
) -> Result<SimResult> {
    config.validate()?;
    let nodes = config.nodes();
    for n in &nodes {
        n.validate()?;
    }
    strategy.prepare(history)?;

    let maps = map_shares(config.input_bytes, config.block_size);
    let reduces = even_shares(config.input_bytes, config.reduce_count());
    let mut tasks = Vec::with_capacity(maps.len() + reduces.len());
    for (phase, shares) in [(Phase::Map, &maps), (Phase::Reduce, &reduces)] {
        for &bytes in shares.iter() {
            tasks.push(TaskState {
                phase,
                bytes,
                pairs: pairs_for(bytes, config.block_size),
                attempts: Vec::new(),
                finish: None,
            });
        }
    }

    let epoch = history.latest_finish();
    let mut engine = Engine {
        config,
        free: nodes.iter().map(|n| n.containers).collect(),
        cursor: 0,
        job_id: history.next_job_id(),
        epoch,
        clock: epoch,
        pending: (0..maps.len() as u32).map(TaskId).collect(),
        maps_left: maps.len(),
        tasks_left: tasks.len(),
        tasks,
        attempts: Vec::new(),
        events: BinaryHeap::new(),
        seq: 0,
        result: SimResult {
            job_id: history.next_job_id(),
            epoch,
            makespan: 0.0,
            nodes: nodes.clone(),
            map_tasks: maps.len(),
            reduce_tasks: reduces.len(),
            records: Vec::new(),
            estimates: Vec::new(),
            decisions: Vec::new(),
            dropped: 0,
            attempts_launched: 0,
            attempts_cancelled: 0,
            cancelled_work: 0.0,
            trace: Vec::new(),
        },
        nodes,
    };
    engine.run(strategy, history)?;
    history.flush()?;
    Ok(engine.result)
}

impl Engine<'_> {
    fn push(&mut self, time: f64, kind: EventKind, task_id: TaskId, attempt: usize) {
        self.seq += 1;
        self.events.push(Reverse(SimEvent {
            time,
            kind,
            task_id,
            attempt,
            seq: self.seq,
        }));
    }

    fn run(&mut self, strategy: &Strategy, history: &mut HistoryStore) -> Result<()> {
        let mut tick = 1u64;
        self.push(
            self.epoch + self.config.tick_interval,
            EventKind::StrategyTick,
            TaskId(0),
            0,
        );
        self.dispatch();
        while let Some(Reverse(ev)) = self.events.pop() {
            debug_assert!(ev.time >= self.clock);
            self.clock = ev.time;
            match ev.kind {
                EventKind::TaskLaunch | EventKind::BackupLaunch => self.launch(ev.attempt),
                EventKind::TaskStageComplete => self.stage_complete(ev.attempt, history)?,
                EventKind::TaskCancel => self.cancel(ev.attempt),
                EventKind::StrategyTick => {
                    if self.tasks_left > 0 {
                        self.tick(strategy, history)?;
                        tick += 1;
                        let next = self.epoch + tick as f64 * self.config.tick_interval;
                        self.push(next, EventKind::StrategyTick, TaskId(0), 0);
                    }
                }
                EventKind::JobComplete => break,
            }
        }
        self.result.makespan = self.clock - self.epoch;
        for e in &mut self.result.estimates {
            let finish = self.tasks[e.task_id.0 as usize].finish.expect("every task finishes");
            e.realized_remaining = finish - e.clock;
        }
        Ok(())
    }

    /// Places pending tasks on free containers, visiting nodes round-robin.
    fn dispatch(&mut self) {
        while !self.pending.is_empty() {
            let n = self.nodes.len();
            let Some(node) = (0..n).map(|i| (self.cursor + i) % n).find(|&i| self.free[i] > 0) else {
                return;
            };
            self.cursor = (node + 1) % n;
            let task = self.pending.pop_front().expect("non-empty");
            let idx = self.new_attempt(task, node, false);
            self.push(self.clock, EventKind::TaskLaunch, task, idx);
        }
    }

    fn new_attempt(&mut self, task: TaskId, node: usize, backup: bool) -> usize {
        self.free[node] -= 1;
        let idx = self.attempts.len();
        self.attempts.push(Attempt {
            task,
            node,
            backup,
            start: self.clock,
            durations: Vec::new(),
            stage: 0,
            stage_start: self.clock,
            state: AttemptState::Pending,
        });
        self.tasks[task.0 as usize].attempts.push(idx);
        self.result.attempts_launched += 1;
        idx
    }

    fn launch(&mut self, idx: usize) {
        let a = &self.attempts[idx];
        if a.state != AttemptState::Pending {
            return;
        }
        let task = &self.tasks[a.task.0 as usize];
        let number = task
            .attempts
            .iter()
            .position(|&i| i == idx)
            .expect("attempt belongs to task") as u32;
        let mut rng = attempt_rng(self.config.seed, self.job_id.0, a.task.0, number);
        let node = &self.nodes[a.node];
        let durations: Vec<f64> = task
            .phase
            .stages()
            .iter()
            .map(|&s| {
                stage_duration(
                    self.config.workload,
                    s,
                    task.bytes,
                    self.config.block_size,
                    node,
                    self.config.noise,
                    &mut rng,
                )
            })
            .collect();
        let first = durations[0];
        let a = &mut self.attempts[idx];
        a.state = AttemptState::Running;
        a.start = self.clock;
        a.stage_start = self.clock;
        a.durations = durations;
        let task_id = a.task;
        self.push(self.clock + first, EventKind::TaskStageComplete, task_id, idx);
    }

    fn stage_complete(&mut self, idx: usize, history: &mut HistoryStore) -> Result<()> {
        let a = &mut self.attempts[idx];
        if a.state != AttemptState::Running {
            return Ok(());
        }
        if a.stage + 1 < a.durations.len() {
            a.stage += 1;
            a.stage_start = self.clock;
            let (t, next) = (a.task, a.durations[a.stage]);
            self.push(self.clock + next, EventKind::TaskStageComplete, t, idx);
            return Ok(());
        }

        a.state = AttemptState::Finished;
        let (task_id, node) = (a.task, a.node);
        let durations = a.durations.clone();
        self.free[node] += 1;
        let task = &mut self.tasks[task_id.0 as usize];
        task.finish = Some(self.clock);
        let (phase, bytes) = (task.phase, task.bytes);
        let losers: Vec<usize> = task.attempts.iter().copied().filter(|&i| i != idx).collect();
        for l in losers {
            if matches!(self.attempts[l].state, AttemptState::Pending | AttemptState::Running) {
                self.attempts[l].state = AttemptState::Cancelling;
                self.push(self.clock, EventKind::TaskCancel, task_id, l);
            }
        }

        let record = ExecutionRecord::from_durations(
            self.job_id,
            task_id,
            self.nodes[node].id,
            phase,
            bytes,
            durations,
            self.clock,
        )?;
        history.append(record.clone())?;
        self.result.records.push(record);

        self.tasks_left -= 1;
        if phase == Phase::Map {
            self.maps_left -= 1;
            if self.maps_left == 0 {
                let first_reduce = self.result.map_tasks as u32;
                self.pending.extend((first_reduce..self.tasks.len() as u32).map(TaskId));
            }
        }
        self.dispatch();
        if self.tasks_left == 0 {
            self.push(self.clock, EventKind::JobComplete, task_id, idx);
        }
        Ok(())
    }

    fn cancel(&mut self, idx: usize) {
        let a = &mut self.attempts[idx];
        if a.state != AttemptState::Cancelling {
            return;
        }
        a.state = AttemptState::Cancelled;
        self.free[a.node] += 1;
        self.result.cancelled_work += self.clock - a.start;
        self.result.attempts_cancelled += 1;
        self.dispatch();
    }

    fn snapshot(&self, idx: usize) -> TaskSnapshot {
        let a = &self.attempts[idx];
        let task = &self.tasks[a.task.0 as usize];
        let d = a.durations[a.stage];
        let frac = if d > 0.0 {
            ((self.clock - a.stage_start) / d).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let processed = ((frac * task.pairs as f64 + 1e-9).floor() as u64).min(task.pairs);
        TaskSnapshot {
            job_id: self.job_id,
            task_id: a.task,
            phase: task.phase,
            current_stage: task.phase.stages()[a.stage],
            processed_pairs: processed,
            total_pairs: task.pairs,
            elapsed: self.clock - a.start,
            input_bytes: task.bytes,
            node_id: self.nodes[a.node].id,
        }
    }

    /// Snapshots of every unfinished task's running original attempt, by
    /// task id.
    pub fn running_snapshots(&self) -> Vec<TaskSnapshot> {
        self.tasks
            .iter()
            .filter(|t| t.finish.is_none())
            .filter_map(|t| {
                t.attempts
                    .iter()
                    .copied()
                    .find(|&i| !self.attempts[i].backup && self.attempts[i].state == AttemptState::Running)
            })
            .map(|i| self.snapshot(i))
            .collect()
    }

    fn tick(&mut self, strategy: &Strategy, history: &HistoryStore) -> Result<()> {
        let snapshots = self.running_snapshots();
        if self.config.record_trace {
            self.result.trace.push(TraceTick {
                clock: self.clock,
                snapshots: snapshots.clone(),
            });
        }
        let mut backed_up = BTreeSet::new();
        let mut running_backups = 0;
        for a in &self.attempts {
            if a.backup && matches!(a.state, AttemptState::Pending | AttemptState::Running) {
                backed_up.insert(a.task);
                running_backups += 1;
            }
        }
        let node_states: Vec<NodeState> = self
            .nodes
            .iter()
            .zip(&self.free)
            .map(|(n, &free)| NodeState {
                id: n.id,
                mean_speed: n.mean_speed(),
                free_containers: free,
            })
            .collect();
        let ctx = EvalContext {
            clock: self.clock,
            job_id: self.job_id,
            task_totals: [self.result.map_tasks, self.result.reduce_tasks],
            snapshots: &snapshots,
            nodes: &node_states,
            backed_up: &backed_up,
            running_backups,
            history,
        };
        let eval = strategy.evaluate(&ctx)?;

        for e in &eval.estimates {
            self.result.estimates.push(EstimateLog {
                clock: self.clock,
                task_id: e.task_id,
                node_id: e.node_id,
                phase: e.phase,
                estimated_tte: e.tte,
                realized_remaining: f64::NAN,
            });
        }
        self.result.dropped += eval.dropped.len();
        for d in eval.decisions {
            let Some(target) = self.nodes.iter().position(|n| n.id == d.target) else {
                self.result.dropped += 1;
                continue;
            };
            if self.free[target] == 0 {
                self.result.dropped += 1;
                continue;
            }
            let idx = self.new_attempt(d.task_id, target, true);
            self.push(self.clock, EventKind::BackupLaunch, d.task_id, idx);
            running_backups += 1;
            self.result.decisions.push(DecisionLog {
                decision: d,
                running_tasks: snapshots.len(),
                running_backups,
            });
        }
        Ok(())
    }
}
