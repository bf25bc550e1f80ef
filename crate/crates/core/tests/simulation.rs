use std::collections::BTreeSet;

use specexec_core::experiment::{presets, replay, warm_up, Estimator};
use specexec_core::sim::{ClusterConfig, StragglerSpec, Workload, MIB};
use specexec_core::strategies::StrategyParams;
use specexec_core::{run_simulation, HistoryStore, Phase, SimResult, Stage, Strategy, StrategyKind};

const BLOCK: u64 = 128 * MIB;

fn quiet(workers: usize, containers: usize, input: u64, reducers: usize) -> ClusterConfig {
    ClusterConfig {
        workers,
        containers_per_node: containers,
        input_bytes: input,
        reduce_tasks: Some(reducers),
        noise: 0.0,
        ..ClusterConfig::default()
    }
}

fn run(config: &ClusterConfig, kind: StrategyKind, params: StrategyParams, history: &mut HistoryStore) -> SimResult {
    let mut s = Strategy::new(kind, params).unwrap();
    run_simulation(config, &mut s, history).unwrap()
}

fn none(config: &ClusterConfig) -> SimResult {
    run(
        config,
        StrategyKind::NoSpeculate,
        StrategyParams::default(),
        &mut HistoryStore::new(),
    )
}

#[test]
fn serial_job_makespan_is_sum_of_stage_times() {
    let r = none(&quiet(1, 1, BLOCK, 1));
    let expected: f64 = Workload::WordCountLike.profile().iter().sum();
    assert!((r.makespan - expected).abs() < 1e-6, "{}", r.makespan);
    assert_eq!((r.map_tasks, r.reduce_tasks), (1, 1));
}

#[test]
fn homogeneous_waves_match_critical_path() {
    for (workers, containers, blocks, reducers, workload) in [
        (2, 1, 4, 2, Workload::WordCountLike),
        (3, 2, 7, 3, Workload::SortLike),
        (4, 1, 8, 4, Workload::SortLike),
    ] {
        let config = ClusterConfig {
            workload,
            ..quiet(workers, containers, blocks * BLOCK, reducers)
        };
        let r = none(&config);
        // Independent oracle: full waves of identical tasks.
        let p = workload.profile();
        let slots = workers * containers;
        let map_time = p[0] + p[1];
        let reduce_blocks = blocks as f64 / reducers as f64;
        let reduce_time = (p[2] + p[3] + p[4]) * reduce_blocks;
        let waves = |n: usize| n.div_ceil(slots) as f64;
        let expected = waves(blocks as usize) * map_time + waves(reducers) * reduce_time;
        assert!(
            (r.makespan - expected).abs() < 1e-6,
            "{workers}x{containers}: {} vs {expected}",
            r.makespan
        );
    }
}

#[test]
fn identical_inputs_give_identical_results() {
    let config = ClusterConfig {
        seed: 5,
        record_trace: true,
        ..presets::straggler_cluster()
    };
    let warm = warm_up(&config, 5, 3).unwrap();
    for kind in StrategyKind::ALL {
        let params = StrategyParams {
            min_elapsed: 5.0,
            ..StrategyParams::default()
        };
        let a = run(&config, kind, params.clone(), &mut warm.clone());
        let b = run(&config, kind, params, &mut warm.clone());
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap(),
            "{kind}"
        );
    }
}

#[test]
fn every_task_finishes_exactly_once() {
    let config = presets::straggler_cluster();
    let mut history = warm_up(&config, 2, 2).unwrap();
    let before = history.len();
    let r = run(&config, StrategyKind::Late, presets::straggler_params(), &mut history);
    let ids: BTreeSet<_> = r.records.iter().map(|rec| rec.task_id).collect();
    assert_eq!(ids.len(), r.map_tasks + r.reduce_tasks);
    assert_eq!(r.records.len(), ids.len());
    assert_eq!(history.len(), before + ids.len());
    assert!(!r.decisions.is_empty());
    // Each backup pair ends with one winner and one cancelled attempt.
    assert_eq!(r.attempts_launched, ids.len() + r.decisions.len());
    assert_eq!(r.attempts_cancelled, r.decisions.len());
    assert!(r.cancelled_work > 0.0);
    for w in r.records.windows(2) {
        assert!(w[0].finished_at <= w[1].finished_at);
    }
    // Reduces start only after every map has finished.
    let last_map = r
        .records
        .iter()
        .filter(|x| x.phase == Phase::Map)
        .map(|x| x.finished_at)
        .fold(0.0, f64::max);
    for rec in r.records.iter().filter(|x| x.phase == Phase::Reduce) {
        assert!(rec.finished_at - rec.total_time >= last_map - 1e-9);
    }
}

#[test]
fn realized_remaining_is_finish_minus_clock() {
    let config = presets::straggler_cluster();
    let mut history = warm_up(&config, 4, 2).unwrap();
    let r = run(&config, StrategyKind::Late, presets::straggler_params(), &mut history);
    assert!(!r.estimates.is_empty());
    for e in &r.estimates {
        let rec = r.records.iter().find(|x| x.task_id == e.task_id).unwrap();
        assert_eq!(e.realized_remaining, rec.finished_at - e.clock);
    }
}

#[test]
fn slow_node_stages_take_longer() {
    let config = ClusterConfig {
        straggler: StragglerSpec {
            fraction: 0.5,
            multiplier: 0.3,
            containers: None,
        },
        ..quiet(2, 1, 8 * BLOCK, 2)
    };
    let r = none(&config);
    let maps = |node: u32| {
        r.records
            .iter()
            .filter(|x| x.phase == Phase::Map && x.node_id.0 == node)
            .map(|x| x.stage_durations.clone())
            .collect::<Vec<_>>()
    };
    let (fast, slow) = (maps(0), maps(1));
    assert!(!fast.is_empty() && !slow.is_empty());
    for s in &slow {
        for f in &fast {
            assert!(s.iter().zip(f).all(|(a, b)| a > b));
        }
    }
}

#[test]
fn snapshots_cover_exactly_the_running_tasks() {
    let config = ClusterConfig {
        record_trace: true,
        seed: 9,
        ..presets::two_regime_cluster()
    };
    let r = none(&config);
    for tick in &r.trace {
        let running = r
            .records
            .iter()
            .filter(|x| x.finished_at - x.total_time < tick.clock && tick.clock < x.finished_at)
            .count();
        assert_eq!(tick.snapshots.len(), running, "at {}", tick.clock);
        for s in &tick.snapshots {
            s.validate().unwrap();
            assert!(s.elapsed > 0.0);
        }
    }
}

#[test]
fn halfway_through_a_stage_is_half_progress() {
    let config = ClusterConfig {
        record_trace: true,
        ..quiet(1, 1, BLOCK, 1)
    };
    let r = none(&config);
    // The only map copies for 8 s, so the tick at 4 s sees it halfway.
    let tick = r.trace.iter().find(|t| t.clock == 4.0).unwrap();
    assert_eq!(tick.snapshots.len(), 1);
    let s = &tick.snapshots[0];
    assert_eq!(s.current_stage, Stage::MapCopy);
    assert_eq!(s.sub_progress(), 0.5);
    assert_eq!(s.elapsed, 4.0);
}

#[test]
fn exact_weights_give_exact_remaining_time() {
    // Stage times 8, 2, 8, 2, 2 s: every tick falls on a whole number of
    // key/value pairs, so the only error left is rounding.
    let config = ClusterConfig {
        regimes: vec![[1.0, 1.0, 0.75, 1.0, 1.0]],
        record_trace: true,
        ..quiet(1, 1, BLOCK, 1)
    };
    let mut history = HistoryStore::new();
    let r = run(
        &config,
        StrategyKind::NoSpeculate,
        StrategyParams::default(),
        &mut history,
    );
    let obs = replay(
        &r,
        &HistoryStore::new(),
        &[Estimator::Oracle],
        &StrategyParams::default(),
    )
    .unwrap();
    // Ticks at 1..=21 s, except 10 s where the map is done and the reduce
    // is not yet launched.
    assert_eq!(obs.len(), 20);
    for o in &obs {
        let e = &o.estimates[0];
        assert!(
            (e.tte - o.realized_remaining).abs() < 1e-6,
            "{} vs {}",
            e.tte,
            o.realized_remaining
        );
    }
}

#[test]
fn straggler_backup_shortens_the_job() {
    let config = ClusterConfig {
        seed: 1,
        ..presets::straggler_cluster()
    };
    let warm = warm_up(&config, 1, 3).unwrap();
    let base = run(
        &config,
        StrategyKind::NoSpeculate,
        StrategyParams::default(),
        &mut warm.clone(),
    );
    let late = run(
        &config,
        StrategyKind::Late,
        presets::straggler_params(),
        &mut warm.clone(),
    );
    assert!(late.makespan <= base.makespan);
}

#[test]
fn history_file_receives_every_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.jsonl");
    let mut history = HistoryStore::with_path(&path);
    let config = quiet(2, 1, 4 * BLOCK, 2);
    let mut s = Strategy::new(StrategyKind::NoSpeculate, StrategyParams::default()).unwrap();
    let a = run_simulation(&config, &mut s, &mut history).unwrap();
    let b = run_simulation(&config, &mut s, &mut history).unwrap();
    assert_eq!(b.job_id.0, a.job_id.0 + 1);
    assert!((b.epoch - a.makespan).abs() < 1e-9);
    let loaded = HistoryStore::load(&path).unwrap();
    assert_eq!(loaded, history);
    assert_eq!(loaded.len(), 12);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut s = Strategy::new(StrategyKind::NoSpeculate, StrategyParams::default()).unwrap();
    for bad in [
        ClusterConfig {
            workers: 0,
            ..ClusterConfig::default()
        },
        ClusterConfig {
            containers_per_node: 0,
            ..ClusterConfig::default()
        },
        ClusterConfig {
            input_bytes: 0,
            ..ClusterConfig::default()
        },
    ] {
        assert!(run_simulation(&bad, &mut s, &mut HistoryStore::new()).is_err());
    }
}
