//! Offline analytics over recorded episodes: calibration, selective risk,
//! repair outcomes, pruning audits, failure triage, and token efficiency.
//!
//! Gold answers enter here and nowhere upstream.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::answer::{answers_match, extract_answer};
use crate::problem::Problem;
use crate::trace::{TraceEvent, TraceKind};

pub const ECE_BINS: usize = 15;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Leaves considered by the entropy rule of the triage.
pub const TRIAGE_TOP_K: usize = 4;
pub const TRIAGE_ENTROPY_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no scored records")]
    Empty,
    #[error("record {0} answered without a confidence")]
    MissingConfidence(String),
    #[error("record {episode} has confidence {value} outside [0, 1]")]
    ConfidenceRange { episode: String, value: f64 },
    #[error("bin count must be positive")]
    ZeroBins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub episode: String,
    /// `None` when the policy abstained.
    pub answer: Option<String>,
    pub confidence: Option<f64>,
    pub correct: bool,
    pub calls: u32,
    pub tokens: u64,
}

impl PredictionRecord {
    pub fn abstained(&self) -> bool {
        self.answer.is_none()
    }
}

/// Answered records with their confidences, validated.
fn scored(records: &[PredictionRecord]) -> Result<Vec<(&PredictionRecord, f64)>, EvalError> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| !r.abstained()) {
        let c = r.confidence.ok_or_else(|| EvalError::MissingConfidence(r.episode.clone()))?;
        if !(0.0..=1.0).contains(&c) {
            return Err(EvalError::ConfidenceRange { episode: r.episode.clone(), value: c });
        }
        out.push((r, c));
    }
    if out.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(out)
}

fn hit(correct: bool) -> f64 {
    if correct {
        1.0
    } else {
        0.0
    }
}

pub fn bin_index(confidence: f64, bins: usize) -> usize {
    ((confidence * bins as f64).floor() as usize).min(bins - 1)
}

/// Expected calibration error over equal-width bins on [0, 1].
pub fn ece(records: &[PredictionRecord], bins: usize) -> Result<f64, EvalError> {
    if bins == 0 {
        return Err(EvalError::ZeroBins);
    }
    let scored = scored(records)?;
    let mut sums = vec![(0usize, 0.0f64, 0.0f64); bins];
    for &(r, c) in &scored {
        let b = &mut sums[bin_index(c, bins)];
        b.0 += 1;
        b.1 += hit(r.correct);
        b.2 += c;
    }
    let n = scored.len() as f64;
    Ok(sums.iter().filter(|b| b.0 > 0).map(|&(k, acc, conf)| (k as f64 / n) * (acc / k as f64 - conf / k as f64).abs()).sum())
}

pub fn brier(records: &[PredictionRecord]) -> Result<f64, EvalError> {
    let scored = scored(records)?;
    Ok(scored.iter().map(|&(r, c)| (c - hit(r.correct)).powi(2)).sum::<f64>() / scored.len() as f64)
}

/// Answered records ordered by confidence descending, ties by episode id.
fn ranked(records: &[PredictionRecord]) -> Result<Vec<(&PredictionRecord, f64)>, EvalError> {
    let mut s = scored(records)?;
    s.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.episode.cmp(&b.0.episode)));
    Ok(s)
}

/// `(coverage, selective accuracy)` for each prefix of the confidence ranking.
pub fn selective_curve(records: &[PredictionRecord]) -> Result<Vec<(f64, f64)>, EvalError> {
    let ranked = ranked(records)?;
    let n = ranked.len() as f64;
    let mut correct = 0.0;
    Ok(ranked
        .iter()
        .enumerate()
        .map(|(i, (r, _))| {
            correct += hit(r.correct);
            ((i + 1) as f64 / n, correct / (i + 1) as f64)
        })
        .collect())
}

/// Area under the risk-coverage curve, trapezoidal over coverages `k/n`,
/// with the curve extended flat to coverage 0 at the first point's risk.
pub fn aurc(records: &[PredictionRecord]) -> Result<f64, EvalError> {
    let curve = selective_curve(records)?;
    let n = curve.len() as f64;
    let mut prev = 1.0 - curve[0].1;
    let mut area = 0.0;
    for &(_, acc) in &curve {
        let risk = 1.0 - acc;
        area += (prev + risk) / 2.0 / n;
        prev = risk;
    }
    Ok(area)
}

pub fn accuracy(records: &[PredictionRecord]) -> Option<f64> {
    (!records.is_empty()).then(|| records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64)
}

/// Linear-interpolated quantile of sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval of `metric` over seeded resamples with replacement.
pub fn bootstrap_ci(
    metric: impl Fn(&[PredictionRecord]) -> f64,
    records: &[PredictionRecord],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), EvalError> {
    if records.is_empty() || resamples == 0 {
        return Err(EvalError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let sample: Vec<PredictionRecord> = (0..records.len()).map(|_| records[rng.gen_range(0..records.len())].clone()).collect();
            metric(&sample)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile(&stats, alpha), quantile(&stats, 1.0 - alpha)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairPair {
    pub pre_correct: bool,
    pub post_correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescueHurt {
    /// Fraction of repaired trajectories that went from wrong to right.
    pub rescue_rate: Option<f64>,
    /// Fraction of repaired trajectories that went from right to wrong.
    pub hurt_rate: Option<f64>,
    pub rescued: usize,
    pub harmed: usize,
    pub repairs: usize,
    pub net_gain: i64,
}

pub fn rescue_hurt(pairs: &[RepairPair]) -> RescueHurt {
    let rescued = pairs.iter().filter(|p| !p.pre_correct && p.post_correct).count();
    let harmed = pairs.iter().filter(|p| p.pre_correct && !p.post_correct).count();
    let n = pairs.len();
    let rate = |k: usize| (n > 0).then(|| k as f64 / n as f64);
    RescueHurt { rescue_rate: rate(rescued), hurt_rate: rate(harmed), rescued, harmed, repairs: n, net_gain: rescued as i64 - harmed as i64 }
}

/// Repair outcomes recorded in a trace, judged against `problem`'s gold answer.
pub fn repair_pairs(events: &[TraceEvent], problem: &Problem) -> Vec<RepairPair> {
    let Some(gold) = problem.gold.as_deref() else { return Vec::new() };
    let correct = |v: &serde_json::Value| v.as_str().is_some_and(|a| answers_match(a, gold, problem.kind, &problem.options));
    events
        .iter()
        .filter(|e| e.kind == TraceKind::Repair && e.payload.get("new_node").is_some())
        .map(|e| RepairPair { pre_correct: correct(&e.payload["pre_answer"]), post_correct: correct(&e.payload["post_answer"]) })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: usize,
    pub parent: Option<usize>,
    pub thought: String,
    /// Combined value at the node's latest decision.
    pub value: Option<f64>,
    pub pruned: bool,
    pub retired: bool,
    pub children: Vec<usize>,
}

/// Search tree and outcome of one episode, rebuilt from its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeView {
    pub episode: String,
    pub nodes: BTreeMap<usize, NodeView>,
    pub chosen: Option<usize>,
    pub answer: Option<String>,
    pub stopped_early: bool,
}

fn as_node(v: &serde_json::Value) -> Option<usize> {
    v.as_u64().map(|n| n as usize)
}

impl EpisodeView {
    pub fn from_events(events: &[TraceEvent]) -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(0, NodeView { id: 0, parent: None, thought: String::new(), value: None, pruned: false, retired: false, children: Vec::new() });
        let mut view =
            EpisodeView { episode: events.first().map(|e| e.episode.clone()).unwrap_or_default(), nodes, chosen: None, answer: None, stopped_early: false };
        for e in events {
            let p = &e.payload;
            match e.kind {
                TraceKind::Generate => {
                    if let (Some(id), Some(parent)) = (as_node(&p["node"]), as_node(&p["parent"])) {
                        view.add(id, parent, p["thought"].as_str().unwrap_or_default());
                    }
                }
                TraceKind::Repair => {
                    if let (Some(id), Some(anchor)) = (as_node(&p["new_node"]), as_node(&p["anchor"])) {
                        view.add(id, anchor, p["thought"].as_str().unwrap_or_default());
                        for r in p["retired"].as_array().into_iter().flatten().filter_map(as_node) {
                            if let Some(n) = view.nodes.get_mut(&r) {
                                n.retired = true;
                            }
                        }
                    }
                }
                TraceKind::Action => {
                    if let Some(n) = as_node(&p["node"]).and_then(|id| view.nodes.get_mut(&id)) {
                        n.value = p["value"].as_f64();
                        n.pruned |= p["action"] == "prune";
                    }
                }
                TraceKind::Stop => {
                    view.chosen = as_node(&p["node"]);
                    view.answer = p["answer"].as_str().map(String::from);
                    view.stopped_early = p["reason"] == "threshold";
                }
                TraceKind::Abstain => view.chosen = as_node(&p["node"]),
                _ => {}
            }
        }
        view
    }

    fn add(&mut self, id: usize, parent: usize, thought: &str) {
        self.nodes
            .insert(id, NodeView { id, parent: Some(parent), thought: thought.to_string(), value: None, pruned: false, retired: false, children: Vec::new() });
        if let Some(p) = self.nodes.get_mut(&parent) {
            p.children.push(id);
        }
    }

    /// Thoughts from the root's first child down to `id`.
    pub fn path(&self, id: usize) -> Vec<&str> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur.filter(|&c| c != 0) {
            let Some(n) = self.nodes.get(&c) else { break };
            out.push(n.thought.as_str());
            cur = n.parent;
        }
        out.reverse();
        out
    }

    /// Content key of the path to `id`, stable across runs that generate the same text.
    pub fn path_key(&self, id: usize) -> String {
        let mut h = Sha256::new();
        for t in self.path(id) {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn answer_at(&self, id: usize, problem: &Problem) -> Option<String> {
        extract_answer(&self.path(id).join("\n"), problem.kind, &problem.options)
    }

    fn correct_at(&self, id: usize, problem: &Problem) -> bool {
        let Some(gold) = problem.gold.as_deref() else { return false };
        self.answer_at(id, problem).is_some_and(|a| answers_match(&a, gold, problem.kind, &problem.options))
    }

    /// Evaluated nodes, by value descending and id ascending.
    pub fn ranked(&self) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self.nodes.values().filter_map(|n| n.value.map(|v| (n.id, v))).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    fn descendants(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut i = 0;
        while i < out.len() {
            if let Some(n) = self.nodes.get(&out[i]) {
                out.extend(&n.children);
            }
            i += 1;
        }
        out
    }

    fn by_key(&self) -> HashMap<String, usize> {
        self.nodes.keys().map(|&id| (self.path_key(id), id)).collect()
    }

    pub fn solved(&self, problem: &Problem) -> bool {
        let Some(gold) = problem.gold.as_deref() else { return false };
        self.answer.as_deref().is_some_and(|a| answers_match(a, gold, problem.kind, &problem.options))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub episode: String,
    pub node: usize,
    /// The shadow run kept this path and reached the gold answer beneath it.
    pub productive: bool,
    pub original_rank: usize,
    pub hindsight_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub pruned: usize,
    /// Absent when nothing was pruned.
    pub precision: Option<f64>,
    pub false_prune_rate: f64,
    /// Mean normalized Kendall-tau distance over episodes with at least two ranked nodes.
    pub oracle_gap: Option<f64>,
    pub records: Vec<AuditRecord>,
}

pub struct AuditCase<'a> {
    pub problem: &'a Problem,
    pub original: &'a EpisodeView,
    pub shadow: &'a EpisodeView,
}

/// Normalized Kendall-tau distance between two orderings of the same items:
/// discordant pairs over all pairs, 0 for fewer than two items.
pub fn kendall_tau_distance(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let pos: HashMap<usize, usize> = b.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut discordant = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if pos[&a[i]] > pos[&a[j]] {
                discordant += 1;
            }
        }
    }
    discordant as f64 / (n * (n - 1) / 2) as f64
}

/// Whether the shadow run kept `key`'s node alive and solved beneath it, and
/// the best shadow value seen in that subtree.
fn hindsight(case: &AuditCase, shadow_keys: &HashMap<String, usize>, key: &str) -> (bool, f64) {
    let Some(&sid) = shadow_keys.get(key) else { return (false, f64::NEG_INFINITY) };
    let desc = case.shadow.descendants(sid);
    let best = desc.iter().filter_map(|d| case.shadow.nodes[d].value).fold(f64::NEG_INFINITY, f64::max);
    let kept = !case.shadow.nodes[&sid].pruned;
    (kept && desc.iter().any(|&d| case.shadow.correct_at(d, case.problem)), best)
}

/// Prune precision, false-prune rate, and top-`k` ranking gap of the
/// original runs against relaxed-pruning shadow runs of the same problems.
pub fn pruning_audit(cases: &[AuditCase], k: usize) -> AuditSummary {
    let mut records = Vec::new();
    let mut gaps = Vec::new();
    for case in cases {
        let shadow_keys = case.shadow.by_key();
        let ranked = case.original.ranked();
        let judged: Vec<(usize, bool, f64)> = ranked
            .iter()
            .map(|&(id, _)| {
                let (productive, best) = hindsight(case, &shadow_keys, &case.original.path_key(id));
                (id, productive, best)
            })
            .collect();
        let mut hind: Vec<&(usize, bool, f64)> = judged.iter().collect();
        hind.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0)));
        let hind_rank: HashMap<usize, usize> = hind.iter().enumerate().map(|(i, j)| (j.0, i + 1)).collect();
        for (rank, &(id, productive, _)) in judged.iter().enumerate() {
            if case.original.nodes[&id].pruned {
                records.push(AuditRecord {
                    episode: case.original.episode.clone(),
                    node: id,
                    productive,
                    original_rank: rank + 1,
                    hindsight_rank: hind_rank[&id],
                });
            }
        }
        let top: Vec<usize> = ranked.iter().take(k).map(|r| r.0).collect();
        if top.len() >= 2 {
            let mut by_hind = top.clone();
            by_hind.sort_by_key(|id| hind_rank[id]);
            gaps.push(kendall_tau_distance(&top, &by_hind));
        }
    }
    let pruned = records.len();
    let productive = records.iter().filter(|r| r.productive).count();
    AuditSummary {
        pruned,
        precision: (pruned > 0).then(|| (pruned - productive) as f64 / pruned as f64),
        false_prune_rate: if pruned == 0 { 0.0 } else { productive as f64 / pruned as f64 },
        oracle_gap: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
        records,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureCategory {
    /// Budget exhausted with no confident leaf and scattered leaf answers.
    F1,
    /// A wrong leaf out-scored a generated correct leaf.
    F2,
    /// The shadow run solved it and the original pruned that path.
    F3,
    /// Every budget-matched baseline failed too.
    F4,
    Unclassified,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 5] = [FailureCategory::F1, FailureCategory::F2, FailureCategory::F3, FailureCategory::F4, FailureCategory::Unclassified];
}

pub struct TriageCase<'a> {
    pub problem: &'a Problem,
    pub view: &'a EpisodeView,
    pub shadow: Option<&'a EpisodeView>,
    /// Correctness of each budget-matched baseline on the same problem.
    pub baselines_correct: &'a [bool],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriageConfig {
    pub tau_stop: f64,
    pub top_k: usize,
    pub entropy_threshold: f64,
}

impl Default for TriageConfig {
    fn default() -> Self {
        Self { tau_stop: 0.9, top_k: TRIAGE_TOP_K, entropy_threshold: TRIAGE_ENTROPY_THRESHOLD }
    }
}

/// Shannon entropy of the labels normalized by `ln(len)`; 0 for fewer than two labels.
pub fn normalized_entropy<T: std::hash::Hash + Eq>(labels: &[T]) -> f64 {
    if labels.len() < 2 {
        return 0.0;
    }
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    let h: f64 = counts.values().map(|&c| c as f64 / n).map(|p| -p * p.ln()).sum();
    h / n.ln()
}

fn is_f3(case: &TriageCase) -> bool {
    let Some(shadow) = case.shadow else { return false };
    let Some(chosen) = shadow.chosen.filter(|_| shadow.solved(case.problem)) else { return false };
    let mut gold_path = Vec::new();
    let mut cur = Some(chosen);
    while let Some(c) = cur.filter(|&c| c != 0) {
        gold_path.push(shadow.path_key(c));
        cur = shadow.nodes.get(&c).and_then(|n| n.parent);
    }
    case.view.nodes.values().any(|n| n.pruned && gold_path.contains(&case.view.path_key(n.id)))
}

fn is_f2(case: &TriageCase) -> bool {
    let mut best_wrong = f64::NEG_INFINITY;
    let mut best_right = None::<f64>;
    for (id, v) in case.view.ranked() {
        if case.view.answer_at(id, case.problem).is_none() {
            continue;
        }
        if case.view.correct_at(id, case.problem) {
            best_right = Some(best_right.map_or(v, |b| b.max(v)));
        } else {
            best_wrong = best_wrong.max(v);
        }
    }
    best_right.is_some_and(|r| best_wrong > r)
}

fn is_f1(case: &TriageCase, cfg: &TriageConfig) -> bool {
    if case.view.stopped_early {
        return false;
    }
    let ranked = case.view.ranked();
    if ranked.iter().any(|&(_, v)| v >= cfg.tau_stop) {
        return false;
    }
    let answers: Vec<Option<String>> = ranked.iter().take(cfg.top_k).map(|&(id, _)| case.view.answer_at(id, case.problem)).collect();
    normalized_entropy(&answers) > cfg.entropy_threshold
}

/// First matching category in the order F3, F2, F1, F4.
pub fn classify_failure(case: &TriageCase, cfg: &TriageConfig) -> FailureCategory {
    if is_f3(case) {
        FailureCategory::F3
    } else if is_f2(case) {
        FailureCategory::F2
    } else if is_f1(case, cfg) {
        FailureCategory::F1
    } else if !case.baselines_correct.is_empty() && case.baselines_correct.iter().all(|c| !c) {
        FailureCategory::F4
    } else {
        FailureCategory::Unclassified
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageReport {
    pub failures: usize,
    pub counts: BTreeMap<FailureCategory, usize>,
    pub assignments: BTreeMap<String, FailureCategory>,
}

/// Classifies every failed episode; solved episodes are skipped.
pub fn failure_triage(cases: &[TriageCase], cfg: &TriageConfig) -> TriageReport {
    let mut counts: BTreeMap<FailureCategory, usize> = FailureCategory::ALL.iter().map(|&c| (c, 0)).collect();
    let mut assignments = BTreeMap::new();
    for case in cases.iter().filter(|c| !c.view.solved(c.problem)) {
        let cat = classify_failure(case, cfg);
        *counts.entry(cat).or_default() += 1;
        assignments.insert(case.view.episode.clone(), cat);
    }
    TriageReport { failures: assignments.len(), counts, assignments }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenEfficiency {
    /// Accuracy in percentage points per thousand mean tokens.
    pub acc_per_1k_tokens: f64,
    /// Extra mean tokens per percentage point gained over the reference;
    /// absent when there is no gain.
    pub delta_tokens_per_point: Option<f64>,
}

fn acc_and_tokens(records: &[PredictionRecord]) -> Option<(f64, f64)> {
    let acc = accuracy(records)? * 100.0;
    let tokens = records.iter().map(|r| r.tokens as f64).sum::<f64>() / records.len() as f64;
    Some((acc, tokens))
}

pub fn token_efficiency(records: &[PredictionRecord], reference: &[PredictionRecord]) -> Option<TokenEfficiency> {
    let (acc, tokens) = acc_and_tokens(records)?;
    let per_1k = if tokens > 0.0 { acc / (tokens / 1000.0) } else { 0.0 };
    let delta = acc_and_tokens(reference).and_then(|(ra, rt)| (acc > ra).then(|| (tokens - rt) / (acc - ra)));
    Some(TokenEfficiency { acc_per_1k_tokens: per_1k, delta_tokens_per_point: delta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, conf: f64, correct: bool) -> PredictionRecord {
        PredictionRecord { episode: id.into(), answer: Some("x".into()), confidence: Some(conf), correct, calls: 1, tokens: 10 }
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(ece(&[rec("a", 1.0, true), rec("b", 0.0, false)], ECE_BINS).unwrap(), 0.0);
        assert!((ece(&[rec("a", 0.8, false)], ECE_BINS).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(brier(&[rec("a", 1.0, true)]).unwrap(), 0.0);
        assert!((brier(&[rec("a", 0.7, false)]).unwrap() - 0.49).abs() < 1e-12);
    }

    #[test]
    fn aurc_extremes_and_mixed() {
        assert_eq!(aurc(&[rec("a", 0.9, true), rec("b", 0.2, true)]).unwrap(), 0.0);
        assert_eq!(aurc(&[rec("a", 0.9, false), rec("b", 0.2, false)]).unwrap(), 1.0);
        // risks 0, 1/2, 1/3 at coverages 1/3, 2/3, 1
        let v = aurc(&[rec("a", 0.9, true), rec("b", 0.5, false), rec("c", 0.1, true)]).unwrap();
        let want = (0.0 + 0.0) / 6.0 + (0.0 + 0.5) / 6.0 + (0.5 + 1.0 / 3.0) / 6.0;
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn abstentions_are_excluded_and_checked() {
        let mut a = rec("a", 0.4, false);
        a.answer = None;
        assert_eq!(brier(&[a.clone()]), Err(EvalError::Empty));
        let mut b = rec("b", 0.4, true);
        b.confidence = None;
        assert!(matches!(brier(&[b]), Err(EvalError::MissingConfidence(_))));
    }

    #[test]
    fn rescue_hurt_cases() {
        let none = rescue_hurt(&[]);
        assert_eq!((none.rescue_rate, none.hurt_rate), (None, None));
        let all = rescue_hurt(&[RepairPair { pre_correct: false, post_correct: true }; 3]);
        assert_eq!((all.rescue_rate, all.hurt_rate, all.net_gain), (Some(1.0), Some(0.0), 3));
    }

    #[test]
    fn kendall_distance() {
        assert_eq!(kendall_tau_distance(&[1, 2, 3], &[1, 2, 3]), 0.0);
        assert_eq!(kendall_tau_distance(&[1, 2, 3], &[3, 2, 1]), 1.0);
        assert!((kendall_tau_distance(&[1, 2, 3], &[2, 1, 3]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_bounds() {
        assert_eq!(normalized_entropy(&["a", "a", "a", "a"]), 0.0);
        assert!((normalized_entropy(&["a", "b", "c", "d"]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_bootstrap_is_degenerate() {
        let recs: Vec<_> = (0..20).map(|i| rec(&i.to_string(), 0.5, true)).collect();
        let ci = bootstrap_ci(|r| accuracy(r).unwrap(), &recs, BOOTSTRAP_RESAMPLES, 0.95, 7).unwrap();
        assert_eq!(ci, (1.0, 1.0));
    }
}
