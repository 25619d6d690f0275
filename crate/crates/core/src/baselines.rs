//! Budget-matched comparison policies.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::answer::extract_answer;
use crate::backends::{DecodingParams, RequestKind};
use crate::budget::ChargeCategory;
use crate::session::{AbstainReason, Outcome, Session};
use crate::trace::TraceKind;
use crate::tree::{NodeId, ReasoningTree, Strategy};

/// Size of the fallback voting pass.
pub const FALLBACK_SAMPLES: u32 = 16;

fn record_outcome(s: &mut Session, outcome: &Outcome) {
    match &outcome.answer {
        Some(a) => s.trace.record(TraceKind::Stop, json!({"answer": a, "confidence": outcome.confidence, "reason": "finalize"})),
        None => s.trace.record(TraceKind::Abstain, json!({"reason": outcome.abstain_reason, "confidence": outcome.confidence})),
    }
}

fn extract(s: &Session, chain: &str) -> Option<String> {
    extract_answer(chain, s.problem.kind, &s.problem.options)
}

/// One deterministic chain, answer extracted from it.
pub fn greedy_cot(s: &mut Session) -> Outcome {
    let request = s.request(RequestKind::Sample).with_decoding(DecodingParams::GREEDY);
    let Ok(permit) = s.ledger.permit(ChargeCategory::Generation) else {
        return Outcome::abstained(AbstainReason::NoAnswer, None, None);
    };
    let text = match s.call(permit, &request) {
        Ok(t) => t,
        Err(e) => return Outcome::failed(&e),
    };
    s.trace.record(TraceKind::Generate, json!({"sample_index": 0, "thought": text}));
    let outcome = match extract(s, &text) {
        Some(a) => Outcome::answered(a, None, None),
        None => Outcome::abstained(AbstainReason::NoAnswer, None, None),
    };
    record_outcome(s, &outcome);
    outcome
}

/// Majority vote over extracted answers, ties to the earliest-seen answer.
/// Returns the winner and its vote count.
pub fn majority_vote<'a>(answers: impl IntoIterator<Item = &'a str>) -> Option<(String, usize)> {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, a) in answers.into_iter().enumerate() {
        counts.entry(a).or_insert((0, i)).0 += 1;
    }
    counts.into_iter().max_by(|(_, (ca, fa)), (_, (cb, fb))| ca.cmp(cb).then(fb.cmp(fa))).map(|(a, (c, _))| (a.to_string(), c))
}

/// `n` independent sampled chains with majority voting; confidence is the
/// winner's vote share over issued samples.
pub fn best_of_n(s: &mut Session, n: u32) -> Outcome {
    voting_pass(s, n, ChargeCategory::Generation)
}

fn voting_pass(s: &mut Session, n: u32, category: ChargeCategory) -> Outcome {
    let mut answers = Vec::new();
    let mut issued = 0u32;
    for i in 0..n {
        let Ok(permit) = s.ledger.permit(category) else { break };
        let request = s.request(RequestKind::Sample).with_sample(i);
        let text = match s.call(permit, &request) {
            Ok(t) => t,
            Err(e) => return Outcome::failed(&e),
        };
        issued += 1;
        let answer = extract(s, &text);
        s.trace.record(TraceKind::Generate, json!({"sample_index": i, "thought": text, "answer": answer}));
        answers.extend(answer);
    }
    let outcome = match majority_vote(answers.iter().map(String::as_str)) {
        Some((a, votes)) => {
            let share = votes as f64 / issued as f64;
            Outcome::answered(a, Some(share), Some(share))
        }
        None => Outcome::abstained(AbstainReason::NoAnswer, None, None),
    };
    record_outcome(s, &outcome);
    outcome
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TotConfig {
    pub fanout: usize,
    pub beam: usize,
}

impl Default for TotConfig {
    fn default() -> Self {
        Self { fanout: 3, beam: 2 }
    }
}

fn rank_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)candidate\s*#?\s*(\d+)\s*[:=]\s*(-?\d*\.?\d+)").unwrap())
}

/// Scores from a ranking response, by 1-based candidate number; missing or
/// out-of-range entries count as 0.
pub fn parse_rank(raw: &str, candidates: usize) -> Vec<f64> {
    let mut scores = vec![0.0; candidates];
    for c in rank_re().captures_iter(raw) {
        let (Ok(k), Ok(v)) = (c[1].parse::<usize>(), c[2].parse::<f64>()) else { continue };
        if (1..=candidates).contains(&k) && (0.0..=1.0).contains(&v) {
            scores[k - 1] = v;
        }
    }
    scores
}

/// Breadth-limited expansion without evaluation. Each layer expands the
/// first `beam` unfinished nodes of the previous layer (creation order)
/// under `fanout` modes until one call is left; a chain with an extractable
/// answer is finished and never expanded. A single ranking call then picks
/// among the finished chains and the last layer.
pub fn vanilla_tot(s: &mut Session, cfg: TotConfig) -> Outcome {
    if s.ledger.remaining() < 2 {
        return greedy_cot(s);
    }
    let mut tree = ReasoningTree::new();
    let mut generations = s.ledger.remaining() - 1;
    let mut layer = vec![NodeId::ROOT];
    let mut finished = Vec::new();
    let mut last = Vec::new();
    while generations > 0 && !layer.is_empty() {
        let mut next = Vec::new();
        'layer: for &parent in &layer {
            for &strategy in Strategy::ALL.iter().take(cfg.fanout) {
                if generations == 0 {
                    break 'layer;
                }
                let steps: Vec<String> = tree.thoughts(parent).expect("known node").into_iter().map(String::from).collect();
                let request = s.request(RequestKind::Generate { strategy }).with_trajectory(steps);
                let Ok(permit) = s.ledger.permit(ChargeCategory::Generation) else { break 'layer };
                let text = match s.call(permit, &request) {
                    Ok(t) => t,
                    Err(e) => return Outcome::failed(&e),
                };
                generations -= 1;
                let child = tree.add_child(parent, text.clone(), strategy).expect("open parent");
                s.trace.record(TraceKind::Generate, json!({"node": child, "parent": parent, "strategy": strategy, "thought": text}));
                let chain = tree.thoughts(child).expect("known node").join("\n");
                if extract(s, &chain).is_some() {
                    finished.push(child);
                } else {
                    next.push(child);
                }
            }
        }
        layer = next.iter().copied().take(cfg.beam.max(1)).collect();
        last = next;
    }
    let mut pool = finished;
    pool.extend(last);
    pool.sort();
    let last = pool;
    let candidates: Vec<Vec<String>> = last.iter().map(|&id| tree.thoughts(id).expect("known node").into_iter().map(String::from).collect()).collect();
    let Ok(permit) = s.ledger.permit(ChargeCategory::Verify) else {
        return Outcome::abstained(AbstainReason::NoAnswer, None, None);
    };
    let mut request = s.request(RequestKind::VerifyRank);
    request.candidates = candidates.clone();
    let raw = match s.call(permit, &request) {
        Ok(t) => t,
        Err(e) => return Outcome::failed(&e),
    };
    let scores = parse_rank(&raw, candidates.len());
    s.trace.record(TraceKind::Verify, json!({"candidates": last, "scores": scores}));
    let mut best: Option<(String, f64)> = None;
    for (steps, &score) in candidates.iter().zip(&scores) {
        if let Some(a) = extract(s, &steps.join("\n")) {
            if best.as_ref().is_none_or(|(_, b)| score > *b) {
                best = Some((a, score));
            }
        }
    }
    let outcome = match best {
        Some((a, score)) => Outcome::answered(a, Some(score), Some(score)),
        None => Outcome::abstained(AbstainReason::NoAnswer, None, None),
    };
    record_outcome(s, &outcome);
    outcome
}

/// Runs `primary`; if it abstains or its confidence is below `tau_abs`,
/// extends the budget once and answers with a Best-of-16 voting pass.
pub fn hybrid_cascade(s: &mut Session, primary: impl FnOnce(&mut Session) -> Outcome, tau_abs: f64) -> Outcome {
    let first = primary(s);
    let confident = !first.is_abstained() && first.confidence.is_some_and(|c| c >= tau_abs);
    if confident || first.error.is_some() {
        return first;
    }
    if s.ledger.extend_for_fallback().is_err() {
        return first;
    }
    s.trace.record(
        TraceKind::FallbackStart,
        json!({
            "primary_answer": first.answer,
            "primary_confidence": first.confidence,
            "tau_abs": tau_abs,
            "extension": crate::budget::FALLBACK_EXTENSION_CALLS,
        }),
    );
    let mut outcome = voting_pass(s, FALLBACK_SAMPLES, ChargeCategory::Fallback);
    outcome.fallback_used = true;
    outcome
}
