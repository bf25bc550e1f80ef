use std::collections::BTreeSet;

use super::*;
use crate::task::{ExecutionRecord, Stage};

fn snap(task: u32, node: u32, stage: Stage, processed: u64, elapsed: f64) -> TaskSnapshot {
    TaskSnapshot {
        job_id: JobId(1),
        task_id: TaskId(task),
        phase: stage.phase(),
        current_stage: stage,
        processed_pairs: processed,
        total_pairs: 100,
        elapsed,
        input_bytes: 1 << 27,
        node_id: NodeId(node),
    }
}

fn nodes(n: u32, free: usize) -> Vec<NodeState> {
    (0..n)
        .map(|i| NodeState {
            id: NodeId(i),
            mean_speed: 1.0,
            free_containers: free,
        })
        .collect()
}

fn ctx<'a>(
    snapshots: &'a [TaskSnapshot],
    nodes: &'a [NodeState],
    backed_up: &'a BTreeSet<TaskId>,
    history: &'a HistoryStore,
) -> EvalContext<'a> {
    EvalContext {
        clock: 100.0,
        job_id: JobId(1),
        task_totals: [10, 10],
        snapshots,
        nodes,
        backed_up,
        running_backups: 0,
        history,
    }
}

fn params(min_elapsed: f64) -> StrategyParams {
    StrategyParams {
        min_elapsed,
        ..StrategyParams::default()
    }
}

fn estimate(task: u32, phase: Phase, score: f64, rate: f64, tte: f64) -> TaskEstimate {
    TaskEstimate {
        job_id: JobId(1),
        task_id: TaskId(task),
        node_id: NodeId(0),
        phase,
        elapsed: 100.0,
        progress_score: score,
        progress_rate: rate,
        tte,
        weights: None,
    }
}

fn record(job: u32, task: u32, node: u32, durations: [f64; 3], at: f64) -> ExecutionRecord {
    ExecutionRecord::from_durations(
        JobId(job),
        TaskId(task),
        NodeId(node),
        Phase::Reduce,
        1 << 27,
        durations.to_vec(),
        at,
    )
    .unwrap()
}

#[test]
fn kind_names_round_trip() {
    for k in StrategyKind::ALL {
        assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
    }
    assert!("fast".parse::<StrategyKind>().is_err());
    assert!(StrategyKind::Nn.uses_cap() && !StrategyKind::Samr.uses_cap());
}

#[test]
fn params_validation() {
    assert!(StrategyParams::default().validate().is_ok());
    let bad = StrategyParams {
        speculative_cap: 0.0,
        ..StrategyParams::default()
    };
    assert!(bad.validate().is_err());
    let bad = StrategyParams {
        min_elapsed: -1.0,
        ..StrategyParams::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn naive_threshold_examples() {
    let equal: Vec<TaskEstimate> = (0..4).map(|i| estimate(i, Phase::Map, 0.5, 0.0, 1.0)).collect();
    assert!(naive_stragglers(&equal.iter().collect::<Vec<_>>(), 0.8).is_empty());

    let mixed: Vec<TaskEstimate> = [0.9, 0.9, 0.9, 0.3]
        .iter()
        .enumerate()
        .map(|(i, s)| estimate(i as u32, Phase::Map, *s, 0.0, 1.0))
        .collect();
    let ids = naive_stragglers(&mixed.iter().collect::<Vec<_>>(), 0.8);
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![TaskId(3)]);

    let single = [estimate(0, Phase::Reduce, 0.01, 0.0, 1.0)];
    assert!(naive_stragglers(&single.iter().collect::<Vec<_>>(), 0.8).is_empty());
}

#[test]
fn samr_slow_by_time_and_rate() {
    // Only the time test can fire: equal rates.
    let by_time: Vec<TaskEstimate> = [10.0, 10.0, 10.0, 30.0]
        .iter()
        .enumerate()
        .map(|(i, t)| estimate(i as u32, Phase::Reduce, 0.5, 0.05, *t))
        .collect();
    assert!(samr_stragglers(&by_time.iter().collect::<Vec<_>>(), 0.2, 0.4).is_empty());

    let both: Vec<TaskEstimate> = [(0.05, 10.0), (0.05, 10.0), (0.05, 10.0), (0.01, 30.0)]
        .iter()
        .enumerate()
        .map(|(i, (r, t))| estimate(i as u32, Phase::Reduce, 0.5, *r, *t))
        .collect();
    let ids = samr_stragglers(&both.iter().collect::<Vec<_>>(), 0.2, 0.4);
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![TaskId(3)]);

    // Slow by rate alone is not enough.
    let rate_only: Vec<TaskEstimate> = [(0.05, 10.0), (0.05, 10.0), (0.05, 10.0), (0.01, 12.0)]
        .iter()
        .enumerate()
        .map(|(i, (r, t))| estimate(i as u32, Phase::Reduce, 0.5, *r, *t))
        .collect();
    assert!(samr_stragglers(&rate_only.iter().collect::<Vec<_>>(), 0.2, 0.4).is_empty());
}

#[test]
fn samr_weights_follow_latest_record() {
    let mut h = HistoryStore::new();
    assert_eq!(
        samr_node_weights(&h, NodeId(0), Phase::Reduce),
        StageWeights::NAIVE.for_phase(Phase::Reduce)
    );
    h.append(record(0, 0, 0, [6.0, 2.0, 2.0], 1.0)).unwrap();
    h.append(record(0, 1, 0, [2.0, 6.0, 2.0], 2.0)).unwrap();
    let w = samr_node_weights(&h, NodeId(0), Phase::Reduce);
    assert!((w[1] - 0.6).abs() < 1e-15);
    assert_eq!(samr_node_weights(&h, NodeId(0), Phase::Map), vec![1.0, 0.0]);
}

#[test]
fn allowance_is_floor_of_cap() {
    assert_eq!(speculative_allowance(0.10, 10, 0), 1);
    assert_eq!(speculative_allowance(0.10, 9, 0), 0);
    assert_eq!(speculative_allowance(0.10, 30, 1), 2);
    assert_eq!(speculative_allowance(0.10, 10, 3), 0);
}

#[test]
fn late_ranks_by_tte_and_respects_cap() {
    // Reduce tasks with naive weights: score (k + s) / 3.
    let mut snaps: Vec<TaskSnapshot> = (0..9).map(|i| snap(i, i % 3, Stage::ReduceSort, 50, 70.0)).collect();
    snaps.push(snap(9, 1, Stage::ReduceShuffle, 50, 100.0));
    let ns = nodes(4, 1);
    let none = BTreeSet::new();
    let h = HistoryStore::new();
    let s = Strategy::new(StrategyKind::Late, params(60.0)).unwrap();
    let eval = s.evaluate(&ctx(&snaps, &ns, &none, &h)).unwrap();
    assert_eq!(eval.decisions.len(), 1);
    let d = &eval.decisions[0];
    assert_eq!(d.task_id, TaskId(9));
    assert!((d.estimated_tte - 500.0).abs() < 1e-9);
    assert_ne!(d.target, d.original_node);
    assert!(!eval.slow_nodes.contains(&d.target));

    // Under the elapsed gate nothing is judged.
    let s = Strategy::new(StrategyKind::Late, params(120.0)).unwrap();
    assert!(s.evaluate(&ctx(&snaps, &ns, &none, &h)).unwrap().decisions.is_empty());

    // A task that already has a backup is not chosen again.
    let backed: BTreeSet<TaskId> = [TaskId(9)].into();
    let mut c = ctx(&snaps, &ns, &backed, &h);
    c.running_backups = 0;
    let s = Strategy::new(StrategyKind::Late, params(60.0)).unwrap();
    let eval = s.evaluate(&c).unwrap();
    assert!(eval.decisions.iter().all(|d| d.task_id != TaskId(9)));
}

#[test]
fn one_of_four_nodes_is_slow() {
    let snaps: Vec<TaskSnapshot> = (0..4)
        .map(|i| snap(i, i, Stage::MapCopy, 10 + 20 * i as u64, 70.0))
        .collect();
    let ns = nodes(4, 1);
    let none = BTreeSet::new();
    let h = HistoryStore::new();
    let s = Strategy::new(StrategyKind::Late, params(60.0)).unwrap();
    let eval = s.evaluate(&ctx(&snaps, &ns, &none, &h)).unwrap();
    assert_eq!(eval.slow_nodes, vec![NodeId(0)]);
}

#[test]
fn backup_target_selection() {
    let mut ns = nodes(4, 1);
    ns[1].mean_speed = 2.0;
    ns[2].mean_speed = 1.5;
    let slow: BTreeSet<NodeId> = [NodeId(1)].into();
    assert_eq!(select_backup_node(&ns, &slow, NodeId(0)).unwrap(), NodeId(2));
    // Equal speeds go to the lower id.
    let ns = nodes(4, 1);
    assert_eq!(select_backup_node(&ns, &BTreeSet::new(), NodeId(0)).unwrap(), NodeId(1));
    let mut full = nodes(2, 0);
    full[0].free_containers = 1;
    assert!(matches!(
        select_backup_node(&full, &BTreeSet::new(), NodeId(0)),
        Err(Error::NoTarget(0))
    ));
}

#[test]
fn no_speculate_never_decides() {
    let snaps: Vec<TaskSnapshot> = (0..20)
        .map(|i| snap(i, i % 4, Stage::ReduceShuffle, i as u64, 500.0))
        .collect();
    let ns = nodes(4, 4);
    let none = BTreeSet::new();
    let h = HistoryStore::new();
    let s = Strategy::new(StrategyKind::NoSpeculate, params(0.0)).unwrap();
    assert_eq!(s.evaluate(&ctx(&snaps, &ns, &none, &h)).unwrap(), Evaluation::default());
}

#[test]
fn samr_backup_bound() {
    let mut snaps: Vec<TaskSnapshot> = (0..8).map(|i| snap(i, i % 3, Stage::ReduceReduce, 50, 70.0)).collect();
    snaps.push(snap(8, 1, Stage::ReduceShuffle, 10, 100.0));
    snaps.push(snap(9, 2, Stage::ReduceShuffle, 10, 100.0));
    let ns = nodes(4, 2);
    let none = BTreeSet::new();
    let h = HistoryStore::new();
    let s = Strategy::new(StrategyKind::Samr, params(60.0)).unwrap();
    let mut c = ctx(&snaps, &ns, &none, &h);
    // TaskNum 10, Bp 0.2: backups must stay below 2.
    let eval = s.evaluate(&c).unwrap();
    assert_eq!(eval.decisions.len(), 1);
    c.running_backups = 1;
    assert!(s.evaluate(&c).unwrap().decisions.is_empty());
}

#[test]
fn samr_backs_up_slow_node_stragglers_first() {
    let mut snaps: Vec<TaskSnapshot> = (0..16)
        .map(|i| snap(i, [0, 2, 3][i as usize % 3], Stage::ReduceReduce, 50, 70.0))
        .collect();
    // Task 16 has the longer time to end, but task 17 sits alone on node 1,
    // which makes node 1 the slow node.
    snaps.push(snap(16, 0, Stage::ReduceShuffle, 10, 200.0));
    snaps.push(snap(17, 1, Stage::ReduceShuffle, 30, 100.0));
    let ns = nodes(4, 2);
    let none = BTreeSet::new();
    let h = HistoryStore::new();
    let s = Strategy::new(StrategyKind::Samr, params(60.0)).unwrap();
    let eval = s.evaluate(&ctx(&snaps, &ns, &none, &h)).unwrap();
    assert_eq!(eval.slow_nodes, vec![NodeId(1)]);
    let ids: Vec<TaskId> = eval.decisions.iter().map(|d| d.task_id).collect();
    assert_eq!(ids, vec![TaskId(17), TaskId(16)]);
    assert!(eval.decisions[0].estimated_tte < eval.decisions[1].estimated_tte);
}

#[test]
fn naive_strategy_flags_low_scores_without_cap() {
    let mut snaps: Vec<TaskSnapshot> = (0..4).map(|i| snap(i, 0, Stage::MapCopy, 90, 70.0)).collect();
    snaps.push(snap(4, 1, Stage::MapCopy, 10, 70.0));
    snaps.push(snap(5, 2, Stage::MapCopy, 20, 70.0));
    let ns = nodes(4, 2);
    let none = BTreeSet::new();
    let h = HistoryStore::new();
    let s = Strategy::new(StrategyKind::Naive, params(60.0)).unwrap();
    let eval = s.evaluate(&ctx(&snaps, &ns, &none, &h)).unwrap();
    let ids: Vec<TaskId> = eval.decisions.iter().map(|d| d.task_id).collect();
    // Lowest score first; node 1 is the slow node so task 4 goes elsewhere.
    assert_eq!(ids, vec![TaskId(4), TaskId(5)]);
}

#[test]
fn esamr_single_weight_vector() {
    let mut h = HistoryStore::new();
    for i in 0..5 {
        h.append(record(0, i, i % 2, [6.0, 2.0, 2.0], i as f64)).unwrap();
    }
    let m = EsamrModels::fit(&h, 10, 0, 100).unwrap();
    assert!(m.map.is_none());
    let snaps = [snap(0, 3, Stage::ReduceSort, 50, 70.0)];
    let ns = nodes(4, 1);
    let none = BTreeSet::new();
    let c = ctx(&snaps, &ns, &none, &h);
    let w = m.weights_for(&c, NodeId(3), Phase::Reduce, 0.2).unwrap();
    for (a, b) in w.iter().zip([0.6, 0.2, 0.2]) {
        assert!((a - b).abs() < 1e-12);
    }
    // No map history: LATE constants.
    assert_eq!(m.weights_for(&c, NodeId(3), Phase::Map, 0.2).unwrap(), vec![1.0, 0.0]);
}

#[test]
fn esamr_centroid_mean_and_nearest() {
    // Two regimes: shuffle-heavy on node 0, sort-heavy on node 1.
    let mut h = HistoryStore::new();
    let mut t = 0.0;
    for i in 0..6 {
        t += 1.0;
        h.append(record(0, i, 0, [6.0, 2.0, 2.0], t)).unwrap();
        h.append(record(0, 10 + i, 1, [2.0, 6.0, 2.0], t)).unwrap();
    }
    let m = EsamrModels::fit(&h, 2, 3, 100).unwrap();
    let snaps = [snap(0, 0, Stage::ReduceSort, 50, 70.0)];
    let ns = nodes(4, 1);
    let none = BTreeSet::new();

    // Before any task of the current job completes: mean of the centroids.
    let c = ctx(&snaps, &ns, &none, &h);
    let w = m.weights_for(&c, NodeId(0), Phase::Reduce, 0.2).unwrap();
    for (a, b) in w.iter().zip([0.4, 0.4, 0.2]) {
        assert!((a - b).abs() < 1e-12, "{w:?}");
    }

    // Two of ten reduce tasks of job 1 done, one on node 0.
    t += 1.0;
    h.append(record(1, 0, 0, [5.5, 2.5, 2.0], t)).unwrap();
    h.append(record(1, 1, 1, [2.5, 5.5, 2.0], t)).unwrap();
    let c = ctx(&snaps, &ns, &none, &h);
    let w = m.weights_for(&c, NodeId(0), Phase::Reduce, 0.2).unwrap();
    // Exhaustive check against every centroid.
    let temp = [0.55, 0.25, 0.2];
    let dist = |c: &Vec<f64>| c.iter().zip(temp).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let best = m
        .reduce
        .as_ref()
        .unwrap()
        .centroids()
        .iter()
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .unwrap();
    assert_eq!(&w, best);
    assert!((w[0] - 0.6).abs() < 1e-12);
    // Node 2 has completed nothing in this job.
    let w = m.weights_for(&c, NodeId(2), Phase::Reduce, 0.2).unwrap();
    assert!((w[0] - 0.4).abs() < 1e-12);
}

#[test]
fn weighted_estimate_matches_constant_rate_oracle() {
    // Stage durations 30, 10, 10 seconds; at t = 35 the task is halfway
    // through sorting and 15 seconds remain.
    let weights = vec![0.6, 0.2, 0.2];
    let s = snap(0, 0, Stage::ReduceSort, 50, 35.0);
    let e = TaskEstimate::from_weights(&s, weights).unwrap();
    assert!((e.progress_score - 0.7).abs() < 1e-12);
    assert!((e.tte - 15.0).abs() < 1e-9);

    // Uniform stages: exact 1/3 weights and LATE's constants agree.
    let s = snap(1, 0, Stage::ReduceSort, 25, 17.5);
    let exact = TaskEstimate::from_weights(&s, vec![1.0 / 3.0; 3]).unwrap();
    let late = TaskEstimate::from_weights(&s, StageWeights::NAIVE.for_phase(Phase::Reduce).to_vec()).unwrap();
    assert!((exact.tte - late.tte).abs() < 1e-9);
}

#[test]
fn finished_reduce_is_never_a_candidate() {
    let snaps = [
        snap(0, 0, Stage::ReduceReduce, 100, 90.0),
        snap(1, 1, Stage::ReduceShuffle, 1, 90.0),
    ];
    let ns = nodes(4, 1);
    let none = BTreeSet::new();
    let mut h = HistoryStore::new();
    h.append(record(0, 0, 0, [2.0, 2.0, 6.0], 1.0)).unwrap();
    let mut s = Strategy::new(StrategyKind::Nn, params(60.0)).unwrap();
    s.prepare(&h).unwrap();
    let c = EvalContext {
        task_totals: [0, 20],
        ..ctx(&snaps, &ns, &none, &h)
    };
    let eval = s.evaluate(&c).unwrap();
    assert_eq!(eval.estimates[0].progress_score, 1.0);
    assert_eq!(eval.estimates[0].tte, 0.0);
    assert!(eval.decisions.iter().all(|d| d.task_id != TaskId(0)));
    // Node 1 has no records: LATE constants.
    assert_eq!(
        eval.estimates[1].weights.as_deref(),
        Some(StageWeights::NAIVE.for_phase(Phase::Reduce))
    );
}

#[test]
fn nn_models_round_trip_and_shape_check() {
    let mut h = HistoryStore::new();
    for i in 0..4 {
        h.append(record(0, i, i % 2, [6.0, 2.0, 2.0], i as f64)).unwrap();
    }
    let map = ExecutionRecord::from_durations(
        JobId(0),
        TaskId(9),
        NodeId(0),
        Phase::Map,
        1 << 27,
        vec![8.0, 2.0],
        10.0,
    )
    .unwrap();
    h.append(map).unwrap();
    let config = NnConfig::default();
    let models = NnModels::train(&h, &config).unwrap();
    assert!(models.node(NodeId(0)).unwrap().map.is_some());
    assert!(models.node(NodeId(1)).unwrap().map.is_none());
    assert_eq!(models, NnModels::train(&h, &config).unwrap());

    let dir = tempfile::tempdir().unwrap();
    models.save(dir.path()).unwrap();
    let loaded = NnModels::load(dir.path()).unwrap();
    let s = snap(0, 0, Stage::ReduceShuffle, 40, 10.0);
    assert_eq!(loaded.reduce_weights(&s).unwrap(), models.reduce_weights(&s).unwrap());
    let w = loaded.reduce_weights(&s).unwrap().unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    std::fs::write(
        dir.path().join("node-0-reduce.mlp"),
        Mlp::new(&[2, 3, 2], 0).unwrap().to_text(),
    )
    .unwrap();
    assert!(matches!(NnModels::load(dir.path()), Err(Error::Config(_))));
}

use crate::learners::Mlp;
