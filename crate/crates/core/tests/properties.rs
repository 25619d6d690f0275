mod common;

use metareason::backends::{SimBackend, SimWorld};
use metareason::budget::{BudgetLedger, ChargeCategory};
use metareason::controller::{decide_action, run_episode, select_frontier, ActionKind, ControllerConfig, Decision, MetaState};
use metareason::evaluation::{self, PredictionRecord, ECE_BINS};
use metareason::harness::{self, Policy, RunConfig};
use metareason::oracle::{parse_step_scores, score_with_retry, step_reward, OracleReport, OracleWeights, StepScores};
use metareason::session::Session;
use metareason::trace::{self, TraceKind};
use metareason::tree::{NodeId, NodeStatus, ReasoningTree, Strategy as Mode};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum TreeOp {
    Add(usize),
    Status(usize, u8),
}

fn tree_op() -> impl Strategy<Value = TreeOp> {
    prop_oneof![3 => (0usize..64).prop_map(TreeOp::Add), 1 => (0usize..64, 0u8..5).prop_map(|(n, s)| TreeOp::Status(n, s))]
}

fn status(code: u8) -> NodeStatus {
    [NodeStatus::Active, NodeStatus::Pruned, NodeStatus::Repaired, NodeStatus::Terminal, NodeStatus::AbstainedLeaf][code as usize]
}

fn under_pruned(tree: &ReasoningTree, id: NodeId) -> bool {
    let mut cur = tree.node(id).unwrap().parent;
    while let Some(p) = cur {
        if tree.node(p).unwrap().status == NodeStatus::Pruned {
            return true;
        }
        cur = tree.node(p).unwrap().parent;
    }
    false
}

fn rec(i: usize, conf: f64, correct: bool) -> PredictionRecord {
    common::record(format!("e{i:03}"), conf, correct)
}

fn records() -> impl Strategy<Value = Vec<PredictionRecord>> {
    prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..50).prop_map(|v| v.into_iter().enumerate().map(|(i, (c, ok))| rec(i, c, ok)).collect())
}

proptest! {
    #[test]
    fn tree_stays_connected_and_frontier_exact(ops in prop::collection::vec(tree_op(), 1..80)) {
        let mut tree = ReasoningTree::new();
        for op in ops {
            match op {
                TreeOp::Add(n) => {
                    let parent = NodeId(n % tree.len());
                    let closed = tree.node(parent).unwrap().status.is_closed() || under_pruned(&tree, parent);
                    let added = tree.add_child(parent, "t", Mode::Direct);
                    prop_assert_eq!(added.is_err(), closed);
                    if let Ok(id) = added {
                        prop_assert!(!under_pruned(&tree, id));
                    }
                }
                TreeOp::Status(n, s) => {
                    let _ = tree.set_status(NodeId(n % tree.len()), status(s));
                }
            }
            prop_assert!(tree.check_structure().is_ok());
            prop_assert_eq!(tree.frontier(), &tree.recompute_frontier());
        }
    }

    #[test]
    fn argmax_is_scale_free_without_exploration(values in prop::collection::vec(0.01f64..1.0, 1..12), scale in 0.01f64..100.0) {
        let mut tree = ReasoningTree::new();
        for v in &values {
            let id = tree.add_child(NodeId::ROOT, "t", Mode::Direct).unwrap();
            tree.set_scores(id, StepScores::new(0.0, 0.0, 0.0), *v).unwrap();
        }
        let mut scaled = tree.clone();
        for (i, v) in values.iter().enumerate() {
            scaled.set_scores(NodeId(i + 1), StepScores::new(0.0, 0.0, 0.0), v * scale).unwrap();
        }
        let a = select_frontier(&mut tree.clone(), 0.0).unwrap().0;
        let b = select_frontier(&mut scaled, 0.0).unwrap().0;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn reward_bounded_and_monotone(s in 0.0f64..=1.0, l in 0.0f64..=1.0, f in 0.0f64..=1.0, d in 0.0f64..=1.0, field in 0usize..3) {
        let w = OracleWeights::default();
        let base = step_reward(&StepScores::new(s, l, f), &w);
        prop_assert!((0.0..=1.0).contains(&base));
        let mut bumped = [s, l, f];
        bumped[field] = (bumped[field] + d).min(1.0);
        prop_assert!(step_reward(&StepScores::new(bumped[0], bumped[1], bumped[2]), &w) >= base);
    }

    #[test]
    fn parsing_is_deterministic(raw in ".{0,200}", steps in 1usize..6) {
        prop_assert_eq!(parse_step_scores(&raw, steps), parse_step_scores(&raw, steps));
    }

    #[test]
    fn retry_issues_at_most_two_calls(first in ".{0,120}", second in ".{0,120}", steps in 1usize..5) {
        let mut calls = 0;
        let report: OracleReport = score_with_retry::<()>(steps, &OracleWeights::default(), |a| {
            calls += 1;
            Ok(Some(if a.number() == 1 { first.clone() } else { second.clone() }))
        }).unwrap();
        prop_assert!(calls <= 2);
        prop_assert_eq!(report.steps.len(), steps);
        prop_assert!(report.step_rewards.iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn ledger_conserves(capacity in 1u32..40, ops in prop::collection::vec((0u8..4, 0u32..5, 0u64..100), 1..60)) {
        let mut ledger = BudgetLedger::new(capacity);
        for (op, n, tokens) in ops {
            match op {
                0 => if let Ok(p) = ledger.permit(ChargeCategory::Generation) { ledger.settle(p, tokens, tokens / 2, false) },
                1 => if let Ok(p) = ledger.permit(ChargeCategory::Verify) { ledger.cancel(p) },
                2 => if let Ok(mut r) = ledger.reserve(n) {
                    if let Ok(p) = ledger.permit_from(&mut r, ChargeCategory::ProcessEval) { ledger.settle(p, tokens, 1, true) }
                    ledger.release(r);
                },
                _ => { let _ = ledger.charge(ChargeCategory::Repair, n, tokens, 0); }
            }
            let s = ledger.summary();
            let calls: u32 = ledger.charges().iter().map(|c| c.calls).sum();
            let tin: u64 = ledger.charges().iter().map(|c| c.tokens_in).sum();
            prop_assert_eq!(s.total_calls, calls);
            prop_assert_eq!(s.tokens_in, tin);
            prop_assert_eq!(s.by_category.values().map(|c| c.calls).sum::<u32>(), calls);
            prop_assert!(s.total_calls <= capacity);
            prop_assert_eq!(ledger.remaining(), capacity - s.total_calls - ledger.reserved());
        }
    }

    #[test]
    fn decisions_are_deterministic_and_sound(
        rewards in prop::collection::vec(0.0f64..=1.0, 1..6),
        conf in 0.0f64..=1.0,
        remaining in 0u32..20,
        repairs in 0u32..2,
    ) {
        let cfg = ControllerConfig::default();
        let report = OracleReport { step_rewards: rewards.clone(), process_value: rewards.iter().sum::<f64>() / rewards.len() as f64, ..OracleReport::from_steps(vec![], &cfg.weights, 1, vec![]) };
        let state = MetaState::new(Mode::Direct, rewards.len(), &cfg, &report, conf, repairs);
        let a = decide_action(NodeId(1), &state, &rewards, &cfg, remaining);
        prop_assert_eq!(a, decide_action(NodeId(1), &state, &rewards, &cfg, remaining));
        let v = state.combined_value;
        if let Decision::Act(act) = a {
            match act.kind() {
                ActionKind::Prune => prop_assert!(v < cfg.tau_prune),
                ActionKind::Stop => prop_assert!(v >= cfg.tau_stop),
                ActionKind::Repair => {
                    prop_assert_eq!(act.repair_index(), rewards.iter().position(|&r| r < cfg.theta_health).map(|i| i + 1));
                    prop_assert!(remaining >= 3 && repairs < cfg.repair_cap);
                }
                ActionKind::Expand => prop_assert!(remaining >= 3),
                ActionKind::Abstain => {}
            }
        }
    }

    #[test]
    fn metrics_match_brute_force_and_stay_in_range(recs in records()) {
        let (e, b, a) = (evaluation::ece(&recs, ECE_BINS).unwrap(), evaluation::brier(&recs).unwrap(), evaluation::aurc(&recs).unwrap());
        prop_assert!((e - common::oracle::ece(&recs, ECE_BINS)).abs() <= 1e-12);
        prop_assert!((b - common::oracle::brier(&recs)).abs() <= 1e-12);
        prop_assert!((a - common::oracle::aurc(&recs)).abs() <= 1e-12);
        for m in [e, b, a] {
            prop_assert!((0.0..=1.0).contains(&m));
        }
        let curve = evaluation::selective_curve(&recs).unwrap();
        let last = curve.last().unwrap();
        prop_assert_eq!(last.0, 1.0);
        prop_assert!((last.1 - evaluation::accuracy(&recs).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn bootstrap_is_seeded(recs in records(), seed in any::<u64>()) {
        let metric = |r: &[PredictionRecord]| evaluation::accuracy(r).unwrap();
        let a = evaluation::bootstrap_ci(metric, &recs, 200, 0.95, seed).unwrap();
        prop_assert_eq!(a, evaluation::bootstrap_ci(metric, &recs, 200, 0.95, seed).unwrap());
        prop_assert!(a.0 <= a.1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn error_free_world_returns_truth(budget in 3u32..32, seed in any::<u64>(), idx in 0usize..20) {
        let w = SimWorld { step_error_prob: 0.0, oracle_noise: 0.0, confidence_noise: 0.0, seed, ..SimWorld::default() };
        let p = &w.problems(idx + 1)[idx];
        let b = SimBackend::new(w.clone());
        let mut s = Session::new(&b, p.view(), budget, p.id.clone());
        let run = run_episode(&mut s, &ControllerConfig { budget, ..ControllerConfig::default() });
        prop_assert_eq!(run.outcome.answer, p.gold.clone());
    }

    #[test]
    fn episodes_keep_prefixes_and_stop_spending_at_zero(seed in any::<u64>(), budget in 1u32..33, err in 0.0f64..0.6, fmt in 0.0f64..0.4) {
        let w = SimWorld { step_error_prob: err, format_error_prob: fmt, seed, ..SimWorld::default() };
        let p = &w.problems(1)[0];
        let b = SimBackend::new(w.clone());
        let mut s = Session::new(&b, p.view(), budget, p.id.clone());
        let run = run_episode(&mut s, &ControllerConfig { budget, ..ControllerConfig::default() });
        for r in &run.repairs {
            prop_assert_eq!(&r.prefix_before, &r.prefix_after);
        }
        prop_assert!(run.tree.check_structure().is_ok());
        let mut spent = 0;
        for e in s.trace.events() {
            if spent == budget {
                prop_assert!(!matches!(e.kind, TraceKind::Select | TraceKind::Generate | TraceKind::Repair | TraceKind::Charge), "{:?} after exhaustion", e.kind);
                if e.kind == TraceKind::Action {
                    prop_assert!(["defer", "prune", "stop"].contains(&e.payload["action"].as_str().unwrap()));
                }
            }
            if e.kind == TraceKind::Charge {
                spent += 1;
            }
        }
        prop_assert!(trace::reconcile(s.trace.events(), &s.ledger.summary()).is_ok());
    }

    #[test]
    fn every_policy_reconciles_charges(seed in any::<u64>(), budget in 1u32..20, policy in 0usize..4, fallback in any::<bool>()) {
        let policy = [Policy::Controller, Policy::Greedy, Policy::BestOfN, Policy::Tot][policy];
        let cfg = RunConfig {
            policy,
            fallback,
            sim_problems: 3,
            seeds: vec![seed],
            workers: 1,
            record_transcripts: false,
            controller: ControllerConfig { budget, ..ControllerConfig::default() },
            ..RunConfig::default()
        };
        for run in harness::run_episodes(&cfg, &cfg.problems().unwrap()).unwrap() {
            let ledger = &run.record.result.ledger;
            let charges = run.trace.iter().filter(|e| e.kind == TraceKind::Charge).count();
            prop_assert_eq!(charges as u32, ledger.total_calls);
            prop_assert!(trace::reconcile(&run.trace, ledger).is_ok());
            prop_assert!(run.trace.windows(2).all(|w| w[0].seq < w[1].seq));
            let cap = if ledger.fallback_extended { budget + 16 } else { budget };
            prop_assert!(ledger.total_calls <= cap);
        }
    }
}
