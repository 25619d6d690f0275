//! Metacognitive control: meta-state, value fusion, frontier selection,
//! the rule policy over {Expand, Prune, Repair, Stop, Abstain}, selective
//! repair, and the episode loop.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::answer::extract_answer;
use crate::backends::{BackendError, RequestKind};
use crate::budget::{BudgetError, ChargeCategory, Reservation};
use crate::oracle::{ConfidenceReading, OracleReport, OracleWeights, StepScores};
use crate::session::{AbstainReason, Outcome, Session};
use crate::trace::TraceKind;
use crate::tree::{NodeId, NodeStatus, ReasoningTree, Strategy, TreeError};

/// Calls needed to generate and score one child: generation, oracle, verify.
pub const CALLS_PER_CHILD: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMode {
    /// Repair only at the earliest unhealthy step.
    #[default]
    Selective,
    /// Repair every branch, at the earliest unhealthy step or else the last step.
    All,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Stop,
    Prune,
    Repair,
    Expand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub lambda: f64,
    pub beta: f64,
    pub tau_prune: f64,
    pub tau_stop: f64,
    pub theta_health: f64,
    pub tau_abs: f64,
    pub budget: u32,
    pub max_modes_per_expand: usize,
    pub max_depth: usize,
    /// Repairs allowed along one branch, inherited by descendants.
    pub repair_cap: u32,
    pub repair_mode: RepairMode,
    pub rule_order: Vec<Rule>,
    pub weights: OracleWeights,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.4,
            beta: 1.25,
            tau_prune: 0.35,
            tau_stop: 0.90,
            theta_health: 0.5,
            tau_abs: 0.6,
            budget: 16,
            max_modes_per_expand: 3,
            max_depth: 12,
            repair_cap: 1,
            repair_mode: RepairMode::Selective,
            rule_order: vec![Rule::Stop, Rule::Prune, Rule::Repair, Rule::Expand],
            weights: OracleWeights::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfUnitRange { name: &'static str, value: f64 },
    #[error("tau_prune ({prune}) must be below tau_stop ({stop})")]
    ThresholdOrder { prune: f64, stop: f64 },
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("max_modes_per_expand must be between 1 and 3")]
    ModeCount,
    #[error("max_depth must be at least 1")]
    ZeroDepth,
    #[error("beta must be finite and non-negative")]
    Beta,
    #[error("rule order lists {0:?} more than once")]
    DuplicateRule(Rule),
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("lambda", self.lambda),
            ("tau_prune", self.tau_prune),
            ("tau_stop", self.tau_stop),
            ("theta_health", self.theta_health),
            ("tau_abs", self.tau_abs),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::OutOfUnitRange { name, value });
            }
        }
        if self.tau_prune >= self.tau_stop {
            return Err(ConfigError::ThresholdOrder { prune: self.tau_prune, stop: self.tau_stop });
        }
        if self.budget == 0 {
            return Err(ConfigError::ZeroBudget);
        }
        if !(1..=3).contains(&self.max_modes_per_expand) {
            return Err(ConfigError::ModeCount);
        }
        if self.max_depth == 0 {
            return Err(ConfigError::ZeroDepth);
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(ConfigError::Beta);
        }
        for (i, r) in self.rule_order.iter().enumerate() {
            if self.rule_order[..i].contains(r) {
                return Err(ConfigError::DuplicateRule(*r));
            }
        }
        Ok(())
    }
}

/// Fixed-schema control summary of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaState {
    pub strategy: Strategy,
    pub depth_norm: f64,
    pub process_value: f64,
    pub outcome_conf: f64,
    pub combined_value: f64,
    pub repair_count: u32,
    pub min_step_reward: f64,
    pub defaulted_fraction: f64,
}

impl MetaState {
    pub fn new(strategy: Strategy, depth: usize, cfg: &ControllerConfig, report: &OracleReport, outcome_conf: f64, repair_count: u32) -> Self {
        let fields = 3 * report.steps.len();
        Self {
            strategy,
            depth_norm: (depth as f64 / cfg.max_depth as f64).min(1.0),
            process_value: report.process_value,
            outcome_conf,
            combined_value: combined_value(outcome_conf, report.process_value, cfg.lambda),
            repair_count,
            min_step_reward: report.min_step_reward(),
            defaulted_fraction: if fields == 0 { 0.0 } else { report.defaulted_fields() as f64 / fields as f64 },
        }
    }
}

pub fn combined_value(v_out: f64, v_proc: f64, lambda: f64) -> f64 {
    lambda * v_out + (1.0 - lambda) * v_proc
}

/// `v + beta * sqrt(ln(N + 1) / (vis + 1))`, natural log.
pub fn ucb_score(v: f64, visits: u64, total_selections: u64, beta: f64) -> f64 {
    v + beta * (((total_selections + 1) as f64).ln() / (visits + 1) as f64).sqrt()
}

/// Picks the frontier node with the highest UCB score (lower id on ties)
/// and records the selection.
pub fn select_frontier(tree: &mut ReasoningTree, beta: f64) -> Result<(NodeId, f64), TreeError> {
    let n = tree.total_selections();
    let mut best: Option<(NodeId, f64)> = None;
    for &id in tree.frontier() {
        let node = tree.node(id)?;
        let score = ucb_score(node.value_cache.unwrap_or(0.0), node.visit_count, n, beta);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((id, score));
        }
    }
    let (id, score) = best.ok_or(TreeError::EmptyFrontier)?;
    tree.record_selection(id)?;
    Ok((id, score))
}

/// Earliest 1-based step whose reward is below `theta_health`.
pub fn repair_point(rewards: &[f64], theta_health: f64) -> Option<usize> {
    rewards.iter().position(|&r| r < theta_health).map(|i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Expand,
    Prune,
    Repair,
    Stop,
    Abstain,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Expand => "expand",
            ActionKind::Prune => "prune",
            ActionKind::Repair => "repair",
            ActionKind::Stop => "stop",
            ActionKind::Abstain => "abstain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlAction {
    kind: ActionKind,
    target: NodeId,
    repair_index: Option<usize>,
}

impl ControlAction {
    pub fn new(kind: ActionKind, target: NodeId) -> Self {
        assert!(kind != ActionKind::Repair, "repair actions need a step index");
        Self { kind, target, repair_index: None }
    }

    pub fn repair(target: NodeId, step: usize) -> Self {
        Self { kind: ActionKind::Repair, target, repair_index: Some(step) }
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    pub fn target(&self) -> NodeId {
        self.target
    }

    pub fn repair_index(&self) -> Option<usize> {
        self.repair_index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Act(ControlAction),
    /// No rule fired; the node waits for episode-level finalization.
    Defer,
}

/// Deterministic rule policy, evaluated in `cfg.rule_order`.
pub fn decide_action(target: NodeId, state: &MetaState, rewards: &[f64], cfg: &ControllerConfig, budget_remaining: u32) -> Decision {
    let v = state.combined_value;
    for rule in &cfg.rule_order {
        match rule {
            Rule::Stop if v >= cfg.tau_stop => return Decision::Act(ControlAction::new(ActionKind::Stop, target)),
            Rule::Prune if v < cfg.tau_prune => return Decision::Act(ControlAction::new(ActionKind::Prune, target)),
            Rule::Repair if state.repair_count < cfg.repair_cap && budget_remaining >= CALLS_PER_CHILD && !rewards.is_empty() => {
                let point = match cfg.repair_mode {
                    RepairMode::Selective => repair_point(rewards, cfg.theta_health),
                    RepairMode::All => repair_point(rewards, cfg.theta_health).or(Some(rewards.len())),
                    RepairMode::Off => None,
                };
                if let Some(i) = point {
                    return Decision::Act(ControlAction::repair(target, i));
                }
            }
            Rule::Expand if budget_remaining >= CALLS_PER_CHILD && state.depth_norm < 1.0 => {
                return Decision::Act(ControlAction::new(ActionKind::Expand, target));
            }
            _ => {}
        }
    }
    Decision::Defer
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
}

/// Scores and decision for one evaluated node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEval {
    pub report: OracleReport,
    pub confidence: ConfidenceReading,
    pub state: MetaState,
    pub decision: Option<Decision>,
    /// Remaining unreserved budget when the decision was taken.
    pub budget_remaining: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub leaf: NodeId,
    pub step: usize,
    pub anchor: NodeId,
    pub new_node: NodeId,
    pub prefix_before: Vec<String>,
    pub prefix_after: Vec<String>,
    pub pre_answer: Option<String>,
    pub post_answer: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ControllerRun {
    pub outcome: Outcome,
    pub tree: ReasoningTree,
    pub evals: BTreeMap<NodeId, NodeEval>,
    pub repairs: Vec<RepairRecord>,
    pub chosen: Option<NodeId>,
}

struct EpisodeState {
    tree: ReasoningTree,
    evals: BTreeMap<NodeId, NodeEval>,
    repair_counts: BTreeMap<NodeId, u32>,
    repairs: Vec<RepairRecord>,
}

fn digest(steps: &[String]) -> String {
    let mut h = Sha256::new();
    for s in steps {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

fn owned_thoughts(tree: &ReasoningTree, id: NodeId) -> Result<Vec<String>, TreeError> {
    Ok(tree.thoughts(id)?.into_iter().map(String::from).collect())
}

impl EpisodeState {
    fn answer_of(&self, session: &Session, id: NodeId) -> Result<Option<String>, TreeError> {
        let chain = self.tree.thoughts(id)?.join("\n");
        Ok(extract_answer(&chain, session.problem.kind, &session.problem.options))
    }

    fn evaluate(&mut self, s: &mut Session, cfg: &ControllerConfig, id: NodeId, mut res: Option<&mut Reservation>) -> Result<(), ControllerError> {
        let steps = owned_thoughts(&self.tree, id)?;
        let report = s.oracle(&steps, &cfg.weights, res.as_deref_mut())?;
        s.trace.record(
            TraceKind::OracleScore,
            json!({
                "node": id,
                "rewards": report.step_rewards,
                "process_value": report.process_value,
                "attempts": report.parse_attempts,
                "defaulted": report.defaulted_fields(),
                "parse_failures": report.failures.len(),
            }),
        );
        let confidence = s.confidence(&steps, res)?;
        s.trace
            .record(TraceKind::Verify, json!({"node": id, "confidence": confidence.value, "attempts": confidence.attempts, "defaulted": confidence.defaulted}));
        let node = self.tree.node(id)?;
        let repair_count = self.repair_counts.get(&id).copied().unwrap_or(0);
        let state = MetaState::new(node.strategy, node.depth, cfg, &report, confidence.value, repair_count);
        let own = report.steps.last().cloned().unwrap_or_else(|| StepScores::new(0.0, 0.0, 0.0));
        self.tree.set_scores(id, own, state.combined_value)?;
        self.evals.insert(id, NodeEval { report, confidence, state, decision: None, budget_remaining: 0 });
        Ok(())
    }

    /// Applies the policy to a freshly evaluated node, following repairs.
    /// Returns the node that triggered a stop, if any.
    fn settle(&mut self, s: &mut Session, cfg: &ControllerConfig, mut id: NodeId) -> Result<Option<NodeId>, ControllerError> {
        loop {
            let remaining = s.ledger.remaining();
            let eval = self.evals.get_mut(&id).expect("settled nodes are evaluated");
            let decision = decide_action(id, &eval.state, &eval.report.step_rewards, cfg, remaining);
            eval.decision = Some(decision);
            eval.budget_remaining = remaining;
            let value = eval.state.combined_value;
            let (action, index) = match decision {
                Decision::Act(a) => (a.kind().to_string(), a.repair_index()),
                Decision::Defer => ("defer".to_string(), None),
            };
            s.trace.record(
                TraceKind::Action,
                json!({
                    "node": id,
                    "action": action,
                    "value": value,
                    "outcome_conf": eval.state.outcome_conf,
                    "rewards": eval.report.step_rewards,
                    "repair_index": index,
                    "budget_remaining": remaining,
                }),
            );
            match decision {
                Decision::Act(a) => match a.kind() {
                    ActionKind::Stop => {
                        self.tree.set_status(id, NodeStatus::Terminal)?;
                        return Ok(Some(id));
                    }
                    ActionKind::Prune => {
                        self.tree.set_status(id, NodeStatus::Pruned)?;
                        return Ok(None);
                    }
                    ActionKind::Repair => match self.repair_branch(s, cfg, id, a.repair_index().expect("repair index"))? {
                        Some(new) => id = new,
                        None => return Ok(None),
                    },
                    ActionKind::Expand | ActionKind::Abstain => return Ok(None),
                },
                Decision::Defer => {
                    if self.tree.node(id)?.depth >= cfg.max_depth {
                        self.tree.set_status(id, NodeStatus::Terminal)?;
                    }
                    return Ok(None);
                }
            }
        }
    }

    /// Regenerates the suffix of `leaf` from step `step` as a new sibling
    /// branch under the preserved prefix, then re-scores it.
    fn repair_branch(&mut self, s: &mut Session, cfg: &ControllerConfig, leaf: NodeId, step: usize) -> Result<Option<NodeId>, ControllerError> {
        let path = self.tree.ancestry(leaf)?;
        if step == 0 || step > path.len() {
            return Err(TreeError::UnknownNode(leaf).into());
        }
        let Ok(mut res) = s.ledger.reserve(CALLS_PER_CHILD) else {
            s.trace.record(TraceKind::Repair, json!({"leaf": leaf, "step": step, "abandoned": true}));
            return Ok(None);
        };
        let steps = owned_thoughts(&self.tree, leaf)?;
        let anchor = if step == 1 { NodeId::ROOT } else { path[step - 2] };
        let head_strategy = self.tree.node(path[step - 1])?.strategy;
        let request = s.request(RequestKind::RepairSuffix { from_step: step }).with_trajectory(steps.clone());
        let permit = s.ledger.permit_from(&mut res, ChargeCategory::Repair)?;
        let text = match s.call(permit, &request) {
            Ok(t) => t,
            Err(e) => {
                s.ledger.release(res);
                return Err(e.into());
            }
        };
        let pre_answer = self.answer_of(s, leaf)?;
        // retire the defective suffix from the leaf upward, stopping at nodes
        // that still carry other live branches
        let mut retired = Vec::new();
        for &id in path[step - 1..].iter().rev() {
            let node = self.tree.node(id)?;
            let others_closed = node.children.iter().all(|c| self.tree.node(*c).map_or(true, |n| n.status.is_closed()));
            if node.status != NodeStatus::Active || !others_closed {
                break;
            }
            self.tree.set_status(id, NodeStatus::Repaired)?;
            retired.push(id);
        }
        let new = self.tree.add_child(anchor, text.clone(), head_strategy)?;
        let count = self.repair_counts.get(&leaf).copied().unwrap_or(0) + 1;
        self.repair_counts.insert(new, count);
        let prefix_before = steps[..step - 1].to_vec();
        let new_steps = owned_thoughts(&self.tree, new)?;
        let prefix_after = new_steps[..step - 1].to_vec();
        let post_answer = self.answer_of(s, new)?;
        s.trace.record(
            TraceKind::Repair,
            json!({
                "leaf": leaf,
                "step": step,
                "anchor": anchor,
                "new_node": new,
                "strategy": head_strategy,
                "thought": text,
                "retired": retired,
                "prefix_len": step - 1,
                "prefix_digest_before": digest(&prefix_before),
                "prefix_digest_after": digest(&prefix_after),
                "pre_answer": pre_answer,
                "post_answer": post_answer,
            }),
        );
        self.repairs.push(RepairRecord { leaf, step, anchor, new_node: new, prefix_before, prefix_after, pre_answer, post_answer });
        let evaluated = self.evaluate(s, cfg, new, Some(&mut res));
        s.ledger.release(res);
        evaluated?;
        Ok(Some(new))
    }

    fn expand_child(
        &mut self,
        s: &mut Session,
        cfg: &ControllerConfig,
        parent: NodeId,
        strategy: Strategy,
        res: &mut Reservation,
    ) -> Result<Option<NodeId>, ControllerError> {
        let steps = owned_thoughts(&self.tree, parent)?;
        let sample = self.tree.node(parent)?.visit_count as u32;
        let request = s.request(RequestKind::Generate { strategy }).with_trajectory(steps).with_sample(sample);
        let permit = s.ledger.permit_from(res, ChargeCategory::Generation)?;
        let text = s.call(permit, &request)?;
        let child = self.tree.add_child(parent, text.clone(), strategy)?;
        let inherited = self.repair_counts.get(&parent).copied().unwrap_or(0);
        self.repair_counts.insert(child, inherited);
        s.trace.record(TraceKind::Generate, json!({"node": child, "parent": parent, "strategy": strategy, "sample_index": sample, "thought": text}));
        self.evaluate(s, cfg, child, Some(res))?;
        self.settle(s, cfg, child)
    }

    fn search(&mut self, s: &mut Session, cfg: &ControllerConfig) -> Result<Option<NodeId>, ControllerError> {
        loop {
            let k = (cfg.max_modes_per_expand as u32).min(s.ledger.remaining() / CALLS_PER_CHILD);
            if k == 0 || self.tree.frontier().is_empty() {
                return Ok(None);
            }
            let (selected, score) = select_frontier(&mut self.tree, cfg.beta)?;
            let node = self.tree.node(selected)?;
            s.trace.record(
                TraceKind::Select,
                json!({
                    "node": selected,
                    "score": score,
                    "value": node.value_cache,
                    "visits": node.visit_count,
                    "total_selections": self.tree.total_selections(),
                    "modes": k,
                }),
            );
            let mut res = s.ledger.reserve(k * CALLS_PER_CHILD)?;
            for &strategy in &Strategy::ALL[..k as usize] {
                if self.tree.node(selected)?.status != NodeStatus::Active {
                    break;
                }
                match self.expand_child(s, cfg, selected, strategy, &mut res) {
                    Ok(None) => {}
                    other => {
                        s.ledger.release(res);
                        return other;
                    }
                }
            }
            s.ledger.release(res);
        }
    }

    fn finish(&mut self, s: &mut Session, cfg: &ControllerConfig, stopped: Option<NodeId>) -> Result<(Outcome, Option<NodeId>), TreeError> {
        let (id, value, stopped_early) = match stopped {
            Some(id) => (id, self.tree.node(id)?.value_cache.unwrap_or(0.0), true),
            None => match self.tree.best_surviving() {
                Some((id, v)) => (id, v, false),
                None => {
                    s.trace.record(TraceKind::Abstain, json!({"reason": AbstainReason::NoSurvivor, "node": null}));
                    return Ok((Outcome::abstained(AbstainReason::NoSurvivor, None, None), None));
                }
            },
        };
        let conf = self.evals.get(&id).map(|e| e.confidence.value);
        let answer = self.answer_of(s, id)?;
        let reason = if !stopped_early && conf.unwrap_or(0.0) < cfg.tau_abs {
            Some(AbstainReason::LowConfidence)
        } else if answer.is_none() {
            Some(AbstainReason::NoAnswer)
        } else {
            None
        };
        if let Some(reason) = reason {
            if self.tree.node(id)?.status == NodeStatus::Active {
                self.tree.set_status(id, NodeStatus::AbstainedLeaf)?;
            }
            s.trace.record(TraceKind::Abstain, json!({"reason": reason, "node": id, "value": value, "confidence": conf}));
            return Ok((Outcome::abstained(reason, conf, Some(value)), Some(id)));
        }
        if self.tree.node(id)?.status == NodeStatus::Active {
            self.tree.set_status(id, NodeStatus::Terminal)?;
        }
        let answer = answer.expect("checked above");
        s.trace.record(
            TraceKind::Stop,
            json!({
                "node": id,
                "value": value,
                "confidence": conf,
                "answer": answer,
                "reason": if stopped_early { "threshold" } else { "finalize" },
            }),
        );
        let mut outcome = Outcome::answered(answer, conf, Some(value));
        outcome.stopped_early = stopped_early;
        Ok((outcome, Some(id)))
    }
}

/// Runs one controller episode inside `session`, whose ledger capacity is the budget.
pub fn run_episode(session: &mut Session, cfg: &ControllerConfig) -> ControllerRun {
    let mut st = EpisodeState { tree: ReasoningTree::new(), evals: BTreeMap::new(), repair_counts: BTreeMap::new(), repairs: Vec::new() };
    let searched = st.search(session, cfg);
    let (outcome, chosen) = match searched {
        Ok(stopped) => match st.finish(session, cfg, stopped) {
            Ok(done) => done,
            Err(e) => (Outcome::failed(&BackendError::Protocol(e.to_string())), None),
        },
        Err(e) => {
            let mut outcome = Outcome::abstained(AbstainReason::BackendFailure, None, None);
            outcome.error = Some(e.to_string());
            session.trace.record(TraceKind::Abstain, json!({"reason": AbstainReason::BackendFailure, "error": e.to_string()}));
            (outcome, None)
        }
    };
    ControllerRun { outcome, tree: st.tree, evals: st.evals, repairs: st.repairs, chosen }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(v: f64, repairs: u32) -> MetaState {
        MetaState {
            strategy: Strategy::Direct,
            depth_norm: 0.1,
            process_value: v,
            outcome_conf: v,
            combined_value: v,
            repair_count: repairs,
            min_step_reward: 0.0,
            defaulted_fraction: 0.0,
        }
    }

    #[test]
    fn value_fusion_examples() {
        assert!((combined_value(0.5, 0.5, 0.4) - 0.5).abs() < 1e-12);
        assert!((combined_value(1.0, 0.0, 0.4) - 0.4).abs() < 1e-12);
        assert!((combined_value(0.0, 1.0, 0.4) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn ucb_examples() {
        assert_eq!(ucb_score(0.5, 0, 0, 1.25), 0.5);
        assert!((ucb_score(0.5, 0, 1, 1.25) - 1.5407).abs() < 1e-4);
        assert!(ucb_score(0.5, 0, 7, 1.25) > ucb_score(0.5, 5, 7, 1.25));
    }

    #[test]
    fn repair_point_examples() {
        assert_eq!(repair_point(&[0.9, 0.4, 0.3], 0.5), Some(2));
        assert_eq!(repair_point(&[0.6, 0.7], 0.5), None);
        assert_eq!(repair_point(&[0.1, 0.9], 0.5), Some(1));
    }

    #[test]
    fn decision_examples() {
        let cfg = ControllerConfig::default();
        let t = NodeId(3);
        assert_eq!(decide_action(t, &state(0.95, 0), &[0.9], &cfg, 10), Decision::Act(ControlAction::new(ActionKind::Stop, t)));
        assert_eq!(decide_action(t, &state(0.20, 0), &[0.9], &cfg, 10), Decision::Act(ControlAction::new(ActionKind::Prune, t)));
        assert_eq!(decide_action(t, &state(0.60, 0), &[0.9, 0.3], &cfg, 10), Decision::Act(ControlAction::repair(t, 2)));
        assert_eq!(decide_action(t, &state(0.60, 1), &[0.9, 0.3], &cfg, 10), Decision::Act(ControlAction::new(ActionKind::Expand, t)));
        assert_eq!(decide_action(t, &state(0.60, 0), &[0.9, 0.3], &cfg, 2), Decision::Defer);
    }

    #[test]
    fn repair_all_targets_last_step_when_healthy() {
        let cfg = ControllerConfig { repair_mode: RepairMode::All, ..ControllerConfig::default() };
        assert_eq!(decide_action(NodeId(1), &state(0.6, 0), &[0.8, 0.7], &cfg, 9), Decision::Act(ControlAction::repair(NodeId(1), 2)));
        let off = ControllerConfig { repair_mode: RepairMode::Off, ..ControllerConfig::default() };
        assert_eq!(decide_action(NodeId(1), &state(0.6, 0), &[0.1], &off, 9), Decision::Act(ControlAction::new(ActionKind::Expand, NodeId(1))));
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::default().validate().is_ok());
        let bad = ControllerConfig { tau_prune: 0.95, ..ControllerConfig::default() };
        assert!(matches!(bad.validate(), Err(ConfigError::ThresholdOrder { .. })));
        let bad = ControllerConfig { budget: 0, ..ControllerConfig::default() };
        assert_eq!(bad.validate(), Err(ConfigError::ZeroBudget));
    }
}
