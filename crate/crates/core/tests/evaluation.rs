mod common;

use std::collections::BTreeMap;

use metareason::evaluation::*;
use metareason::problem::{AnswerKind, Problem};

fn problem(id: &str) -> Problem {
    Problem { id: id.into(), prompt: "What is 6*7?".into(), kind: AnswerKind::Math, options: Vec::new(), gold: Some("42".into()) }
}

/// `(id, parent, thought, value, pruned)` rows under an implicit root 0.
fn view(episode: &str, rows: &[(usize, usize, &str, Option<f64>, bool)], chosen: Option<usize>, answer: Option<&str>, stopped_early: bool) -> EpisodeView {
    let mut nodes = BTreeMap::new();
    nodes.insert(0, NodeView { id: 0, parent: None, thought: String::new(), value: None, pruned: false, retired: false, children: Vec::new() });
    for &(id, parent, thought, value, pruned) in rows {
        nodes.insert(id, NodeView { id, parent: Some(parent), thought: thought.into(), value, pruned, retired: false, children: Vec::new() });
        nodes.get_mut(&parent).unwrap().children.push(id);
    }
    EpisodeView { episode: episode.into(), nodes, chosen, answer: answer.map(String::from), stopped_early }
}

fn classify(case: &TriageCase) -> FailureCategory {
    classify_failure(case, &TriageConfig::default())
}

#[test]
fn shadow_solve_through_a_pruned_path_is_f3() {
    let p = problem("p");
    let original = view("e", &[(1, 0, "set up", Some(0.3), true), (2, 0, "Final answer: 7", Some(0.6), false)], Some(2), Some("7"), false);
    let shadow = view("e", &[(1, 0, "set up", Some(0.4), false), (2, 1, "Final answer: 42", Some(0.8), false)], Some(2), Some("42"), false);
    let case = TriageCase { problem: &p, view: &original, shadow: Some(&shadow), baselines_correct: &[false] };
    assert_eq!(classify(&case), FailureCategory::F3);
}

#[test]
fn outscored_correct_leaf_is_f2() {
    let p = problem("p");
    let v = view("e", &[(1, 0, "Final answer: 42", Some(0.5), false), (2, 0, "Final answer: 7", Some(0.8), false)], Some(2), Some("7"), false);
    let case = TriageCase { problem: &p, view: &v, shadow: None, baselines_correct: &[] };
    assert_eq!(classify(&case), FailureCategory::F2);
}

#[test]
fn scattered_unconfident_leaves_are_f1() {
    let p = problem("p");
    let rows = [
        (1, 0, "Final answer: 1", Some(0.5), false),
        (2, 0, "Final answer: 2", Some(0.6), false),
        (3, 0, "Final answer: 3", Some(0.4), false),
        (4, 0, "no answer yet", Some(0.3), false),
    ];
    let v = view("e", &rows, Some(2), Some("2"), false);
    let case = TriageCase { problem: &p, view: &v, shadow: None, baselines_correct: &[false] };
    assert_eq!(classify(&case), FailureCategory::F1);
    let early = view("e", &rows, Some(2), Some("2"), true);
    let case = TriageCase { problem: &p, view: &early, shadow: None, baselines_correct: &[false] };
    assert_eq!(classify(&case), FailureCategory::F4);
}

#[test]
fn baseline_agreement_decides_f4_and_unclassified() {
    let p = problem("p");
    let v = view("e", &[(1, 0, "Final answer: 7", Some(0.95), false)], Some(1), Some("7"), true);
    let all_wrong = TriageCase { problem: &p, view: &v, shadow: None, baselines_correct: &[false, false] };
    assert_eq!(classify(&all_wrong), FailureCategory::F4);
    let one_right = TriageCase { problem: &p, view: &v, shadow: None, baselines_correct: &[false, true] };
    assert_eq!(classify(&one_right), FailureCategory::Unclassified);
    let none = TriageCase { problem: &p, view: &v, shadow: None, baselines_correct: &[] };
    assert_eq!(classify(&none), FailureCategory::Unclassified);
}

#[test]
fn triage_without_failures_counts_nothing() {
    let p = problem("p");
    let v = view("e", &[(1, 0, "Final answer: 42", Some(0.95), false)], Some(1), Some("42"), true);
    let report = failure_triage(&[TriageCase { problem: &p, view: &v, shadow: None, baselines_correct: &[] }], &TriageConfig::default());
    assert_eq!(report.failures, 0);
    assert!(report.assignments.is_empty());
    assert_eq!(report.counts.len(), FailureCategory::ALL.len());
    assert!(report.counts.values().all(|&c| c == 0));
}

#[test]
fn five_node_audit_matches_hand_ranking() {
    let p = problem("p");
    let original = view(
        "e",
        &[
            (1, 0, "a", Some(0.9), false),
            (2, 0, "b", Some(0.3), true),
            (3, 0, "c", Some(0.2), true),
            (4, 0, "d", Some(0.6), false),
            (5, 1, "Final answer: 5", Some(0.7), false),
        ],
        Some(5),
        Some("5"),
        false,
    );
    let shadow = view(
        "e",
        &[
            (1, 0, "a", Some(0.8), false),
            (2, 0, "b", Some(0.4), false),
            (3, 0, "c", Some(0.2), false),
            (4, 0, "d", Some(0.5), false),
            (6, 2, "Final answer: 42", Some(0.85), false),
            (7, 3, "Final answer: 9", Some(0.3), false),
        ],
        Some(6),
        Some("42"),
        false,
    );
    let summary = pruning_audit(&[AuditCase { problem: &p, original: &original, shadow: &shadow }], 4);
    // Hindsight order: 2 (productive), then 1 (.8), 4 (.5), 3 (.3), 5 (unseen).
    let got: Vec<(usize, bool, usize, usize)> = summary.records.iter().map(|r| (r.node, r.productive, r.original_rank, r.hindsight_rank)).collect();
    assert_eq!(got, vec![(2, true, 4, 1), (3, false, 5, 4)]);
    assert_eq!(summary.pruned, 2);
    assert_eq!(summary.precision, Some(0.5));
    assert_eq!(summary.false_prune_rate, 0.5);
    // Top 4 by value [1, 5, 4, 2] against hindsight [2, 1, 4, 5]: 4 of 6 pairs flip.
    assert!((summary.oracle_gap.unwrap() - 4.0 / 6.0).abs() < 1e-12);
}

#[test]
fn kendall_distance_matches_pair_enumeration() {
    let orders: [&[usize]; 4] = [&[1, 2, 3, 4], &[4, 3, 2, 1], &[2, 1, 4, 3], &[1, 3, 2, 4]];
    for a in orders {
        for b in orders {
            let pos = |x: usize| b.iter().position(|&y| y == x).unwrap();
            let mut flips = 0;
            for i in 0..a.len() {
                for j in 0..a.len() {
                    if i < j && pos(a[i]) > pos(a[j]) {
                        flips += 1;
                    }
                }
            }
            assert_eq!(kendall_tau_distance(a, b), flips as f64 / 6.0);
        }
    }
}

#[test]
fn ten_pair_rescue_tally() {
    let mut pairs = Vec::new();
    for (pre, post, n) in [(false, true, 4), (true, false, 1), (false, false, 3), (true, true, 2)] {
        pairs.extend(std::iter::repeat_n(RepairPair { pre_correct: pre, post_correct: post }, n));
    }
    let rh = rescue_hurt(&pairs);
    assert_eq!((rh.rescued, rh.harmed, rh.repairs, rh.net_gain), (4, 1, 10, 3));
    assert_eq!(rh.rescue_rate, Some(0.4));
    assert_eq!(rh.hurt_rate, Some(0.1));
    let empty = rescue_hurt(&[]);
    assert_eq!((empty.rescue_rate, empty.hurt_rate, empty.net_gain), (None, None, 0));
}

#[test]
fn bootstrap_brackets_the_point_estimate_on_symmetric_data() {
    let records: Vec<PredictionRecord> = (0..200).map(|i| common::record(format!("e{i:03}"), 0.5, i % 2 == 0)).collect();
    let acc = |rs: &[PredictionRecord]| accuracy(rs).unwrap();
    let point = acc(&records);
    assert_eq!(point, 0.5);
    let (lo, hi) = bootstrap_ci(acc, &records, BOOTSTRAP_RESAMPLES, 0.95, 7).unwrap();
    assert!(lo < point && point < hi, "{lo} {point} {hi}");
    assert!((point - lo - (hi - point)).abs() < 0.03);
}

#[test]
fn token_efficiency_units() {
    let mut greedy: Vec<PredictionRecord> = (0..4).map(|i| common::record(format!("g{i}"), 0.5, i == 0)).collect();
    let mut ours: Vec<PredictionRecord> = (0..4).map(|i| common::record(format!("o{i}"), 0.5, i < 3)).collect();
    greedy.iter_mut().for_each(|r| r.tokens = 100);
    ours.iter_mut().for_each(|r| r.tokens = 600);
    let te = token_efficiency(&ours, &greedy).unwrap();
    assert!((te.acc_per_1k_tokens - 125.0).abs() < 1e-9);
    assert!((te.delta_tokens_per_point.unwrap() - 10.0).abs() < 1e-9);
    assert_eq!(token_efficiency(&greedy, &ours).unwrap().delta_tokens_per_point, None);
}
