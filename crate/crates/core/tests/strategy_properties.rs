use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use specexec_core::experiment::{presets, warm_up};
use specexec_core::strategies::{speculative_allowance, EvalContext, NodeState};
use specexec_core::Strategy as Spec;
use specexec_core::{HistoryStore, JobId, NodeId, Phase, Stage, StrategyKind, StrategyParams, TaskId, TaskSnapshot};

struct Fixture {
    history: HistoryStore,
    strategies: Vec<Spec>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let history = warm_up(&presets::straggler_cluster(), 3, 3).unwrap();
        let params = StrategyParams {
            min_elapsed: 5.0,
            ..StrategyParams::default()
        };
        let strategies = StrategyKind::ALL
            .iter()
            .map(|&k| {
                let mut s = Spec::new(k, params.clone()).unwrap();
                s.prepare(&history).unwrap();
                s
            })
            .collect();
        Fixture { history, strategies }
    })
}

#[derive(Debug, Clone)]
struct Case {
    snapshots: Vec<TaskSnapshot>,
    nodes: Vec<NodeState>,
    backed_up: BTreeSet<TaskId>,
    running_backups: usize,
}

fn snapshot(id: u32, node: u32, stage: usize, frac: f64, elapsed: f64) -> TaskSnapshot {
    let stage = Stage::ALL[stage];
    let total = 10_000;
    TaskSnapshot {
        job_id: JobId(1000),
        task_id: TaskId(id),
        phase: stage.phase(),
        current_stage: stage,
        processed_pairs: (frac * total as f64) as u64,
        total_pairs: total,
        elapsed,
        input_bytes: 128 << 20,
        node_id: NodeId(node),
    }
}

fn case() -> impl Strategy<Value = Case> {
    (2u32..8).prop_flat_map(|n_nodes| {
        (
            prop::collection::vec((0..n_nodes, 0usize..5, 0.0f64..1.0, 0.0f64..300.0), 1..40),
            prop::collection::vec((0.2f64..2.0, 0usize..3), n_nodes as usize),
            prop::collection::vec(any::<bool>(), 40),
            0usize..4,
        )
            .prop_map(|(tasks, nodes, backed, running_backups)| {
                let snapshots: Vec<TaskSnapshot> = tasks
                    .iter()
                    .enumerate()
                    .map(|(i, &(node, stage, frac, elapsed))| snapshot(i as u32, node, stage, frac, elapsed))
                    .collect();
                let nodes = nodes
                    .iter()
                    .enumerate()
                    .map(|(i, &(mean_speed, free_containers))| NodeState {
                        id: NodeId(i as u32),
                        mean_speed,
                        free_containers,
                    })
                    .collect();
                let backed_up = snapshots
                    .iter()
                    .zip(&backed)
                    .filter(|(_, &b)| b)
                    .map(|(s, _)| s.task_id)
                    .take(running_backups)
                    .collect();
                Case {
                    snapshots,
                    nodes,
                    backed_up,
                    running_backups,
                }
            })
    })
}

fn ctx(c: &Case) -> EvalContext<'_> {
    let maps = c.snapshots.iter().filter(|s| s.phase == Phase::Map).count();
    EvalContext {
        clock: 500.0,
        job_id: JobId(1000),
        task_totals: [maps + 4, c.snapshots.len() - maps + 4],
        snapshots: &c.snapshots,
        nodes: &c.nodes,
        backed_up: &c.backed_up,
        running_backups: c.running_backups,
        history: &fixture().history,
    }
}

fn strategy(kind: StrategyKind) -> &'static Spec {
    fixture().strategies.iter().find(|s| s.kind() == kind).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn decisions_respect_placement_rules(c in case()) {
        let ctx = ctx(&c);
        for kind in StrategyKind::ALL {
            let eval = strategy(kind).evaluate(&ctx).unwrap();
            let mut used = vec![0usize; c.nodes.len()];
            let mut seen = BTreeSet::new();
            for d in &eval.decisions {
                prop_assert_ne!(d.target, d.original_node);
                prop_assert!(!eval.slow_nodes.contains(&d.target));
                prop_assert!(!c.backed_up.contains(&d.task_id));
                prop_assert!(seen.insert(d.task_id), "{} twice", d.task_id);
                used[d.target.0 as usize] += 1;
                let s = c.snapshots.iter().find(|s| s.task_id == d.task_id).unwrap();
                prop_assert!(s.elapsed >= 5.0);
                prop_assert!(d.estimated_tte > 0.0);
            }
            for (n, u) in c.nodes.iter().zip(&used) {
                prop_assert!(*u <= n.free_containers);
            }
        }
    }

    #[test]
    fn no_speculation_never_decides(c in case()) {
        let eval = strategy(StrategyKind::NoSpeculate).evaluate(&ctx(&c)).unwrap();
        prop_assert!(eval.decisions.is_empty());
    }

    #[test]
    fn backup_counts_stay_within_the_cap(c in case()) {
        let ctx = ctx(&c);
        let running = c.snapshots.len();
        for kind in [StrategyKind::Late, StrategyKind::Esamr, StrategyKind::Nn] {
            let eval = strategy(kind).evaluate(&ctx).unwrap();
            let allowed = speculative_allowance(0.10, running, c.running_backups);
            prop_assert!(eval.decisions.len() <= allowed);
            if !eval.decisions.is_empty() {
                prop_assert!((c.running_backups + eval.decisions.len()) as f64 <= (0.10 * running as f64).floor());
            }
        }
        let eval = strategy(StrategyKind::Samr).evaluate(&ctx).unwrap();
        if !eval.decisions.is_empty() {
            prop_assert!(((c.running_backups + eval.decisions.len()) as f64) < 0.2 * running as f64);
        }
    }

    #[test]
    fn ranked_strategies_pick_longest_remaining_first(c in case()) {
        let ctx = ctx(&c);
        for kind in [StrategyKind::Late, StrategyKind::Esamr, StrategyKind::Nn] {
            let eval = strategy(kind).evaluate(&ctx).unwrap();
            for w in eval.decisions.windows(2) {
                prop_assert!(w[0].estimated_tte >= w[1].estimated_tte);
            }
        }
        // SAMR ranks the same way within tasks on slow nodes and the rest.
        let eval = strategy(StrategyKind::Samr).evaluate(&ctx).unwrap();
        let on_slow = |d: &specexec_core::SpeculationDecision| eval.slow_nodes.contains(&d.original_node);
        for w in eval.decisions.windows(2) {
            prop_assert!(on_slow(&w[0]) >= on_slow(&w[1]));
            if on_slow(&w[0]) == on_slow(&w[1]) {
                prop_assert!(w[0].estimated_tte >= w[1].estimated_tte);
            }
        }
    }

    #[test]
    fn evaluation_is_deterministic(c in case()) {
        let ctx = ctx(&c);
        for kind in StrategyKind::ALL {
            let a = strategy(kind).evaluate(&ctx).unwrap();
            let b = strategy(kind).evaluate(&ctx).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn estimates_are_well_formed(c in case()) {
        let ctx = ctx(&c);
        for kind in StrategyKind::ALL.into_iter().filter(|&k| k != StrategyKind::NoSpeculate) {
            let eval = strategy(kind).evaluate(&ctx).unwrap();
            prop_assert_eq!(eval.estimates.len(), c.snapshots.len());
            for e in &eval.estimates {
                prop_assert!((0.0..=1.0 + 1e-9).contains(&e.progress_score), "{kind}: {}", e.progress_score);
                prop_assert!(e.tte >= 0.0);
                if let Some(w) = &e.weights {
                    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
