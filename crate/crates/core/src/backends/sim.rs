//! Deterministic simulated reasoning world.
//!
//! Each problem has a hidden solution of `solution_len` sub-steps and an
//! integer answer. Generated thoughts carry a machine-readable tag
//! (`{{sim:...}}`) recording whether the step is sound, how many sub-steps
//! it covers, and whether a defect in it can be repaired. The simulated
//! oracle and verifier read those tags and report noisy scores around
//! fixed bases. Every draw is seeded from `(seed, request fingerprint)`, so
//! responses do not depend on call order or concurrency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, BackendResponse, GenerationRequest, RequestKind, Usage};
use crate::budget::{estimate_tokens, CallPermit};
use crate::oracle::Attempt;
use crate::problem::{AnswerKind, Problem};
use crate::tree::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBase {
    pub semantic: f64,
    pub logical: f64,
    pub fix: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBase {
    pub complete_correct: f64,
    pub complete_wrong: f64,
    pub partial_sound: f64,
    pub partial_defective: f64,
}

impl Default for ConfidenceBase {
    fn default() -> Self {
        Self { complete_correct: 0.95, complete_wrong: 0.7, partial_sound: 0.5, partial_defective: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimWorld {
    pub seed: u64,
    pub solution_len: usize,
    pub step_error_prob: f64,
    /// Standard deviation of the Gaussian perturbation on oracle step scores.
    pub oracle_noise: f64,
    /// Standard deviation of the perturbation on verify-style confidences.
    pub confidence_noise: f64,
    pub repairable_fraction: f64,
    pub correct_scores: ScoreBase,
    pub defect_scores: ScoreBase,
    /// Fix score for a step that corrects an earlier defect.
    pub ack_fix: f64,
    pub confidence: ConfidenceBase,
    /// Chance that a first-attempt oracle or verify response is malformed.
    pub format_error_prob: f64,
    /// Number of distinct wrong answers a defective chain can land on.
    pub wrong_answer_spread: u32,
}

impl Default for SimWorld {
    fn default() -> Self {
        Self {
            seed: 0,
            solution_len: 3,
            step_error_prob: 0.3,
            oracle_noise: 0.05,
            confidence_noise: 0.15,
            repairable_fraction: 0.7,
            correct_scores: ScoreBase { semantic: 0.85, logical: 0.9, fix: 0.1 },
            defect_scores: ScoreBase { semantic: 0.6, logical: 0.3, fix: 0.1 },
            ack_fix: 0.8,
            confidence: ConfidenceBase::default(),
            format_error_prob: 0.0,
            wrong_answer_spread: 4,
        }
    }
}

/// Hidden state of one simulated step, as encoded in its tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepTag {
    pub ok: bool,
    pub cover: usize,
    pub repairable: bool,
    /// The step corrects an earlier defect (raises the Fix signal).
    pub ack: bool,
    /// The step cancels the most recent uncleared defect before it.
    pub clears: bool,
    pub nonce: u32,
}

fn letters(mut n: u64) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

fn unletters(s: &str) -> Option<u64> {
    if s.is_empty() {
        return None;
    }
    s.bytes().try_fold(0u64, |acc, b| b.is_ascii_lowercase().then(|| acc * 26 + (b - b'a') as u64))
}

impl StepTag {
    pub fn encode(&self) -> String {
        format!(
            "{{{{sim:{}:c{}:{}{}{}:{}}}}}",
            if self.ok { "ok" } else { "err" },
            letters(self.cover as u64),
            if self.repairable { 'r' } else { '-' },
            if self.ack { 'a' } else { '-' },
            if self.clears { 'x' } else { '-' },
            letters(self.nonce as u64)
        )
    }

    pub fn decode(text: &str) -> Option<StepTag> {
        let start = text.find("{{sim:")?;
        let rest = &text[start + 6..];
        let body = &rest[..rest.find("}}")?];
        let parts: Vec<&str> = body.split(':').collect();
        if parts.len() != 4 {
            return None;
        }
        let ok = match parts[0] {
            "ok" => true,
            "err" => false,
            _ => return None,
        };
        let cover = unletters(parts[1].strip_prefix('c')?)? as usize;
        let flags: Vec<char> = parts[2].chars().collect();
        if flags.len() != 3 {
            return None;
        }
        let nonce = unletters(parts[3])? as u32;
        Some(StepTag { ok, cover, repairable: flags[0] == 'r', ack: flags[1] == 'a', clears: flags[2] == 'x', nonce })
    }
}

/// Folded state of a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    pub progress: usize,
    /// Nonces of defects not yet cleared, oldest first.
    pub open_defects: Vec<u32>,
    pub last: Option<StepTag>,
}

impl SimState {
    pub fn fold<S: AsRef<str>>(steps: &[S]) -> Self {
        let mut state = SimState { progress: 0, open_defects: Vec::new(), last: None };
        for step in steps {
            // untagged text counts as a sound step covering nothing
            let tag = StepTag::decode(step.as_ref()).unwrap_or(StepTag { ok: true, cover: 0, repairable: false, ack: false, clears: false, nonce: 0 });
            if tag.clears {
                state.open_defects.pop();
            }
            if !tag.ok {
                state.open_defects.push(tag.nonce);
            }
            state.progress += tag.cover;
            state.last = Some(tag);
        }
        state
    }

    pub fn sound(&self) -> bool {
        self.open_defects.is_empty()
    }
}

fn hash64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

impl SimWorld {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Ground-truth answer; depends on the problem id only, never on the seed.
    pub fn truth(&self, problem_id: &str) -> u64 {
        10 + hash64(&[b"truth", problem_id.as_bytes()]) % 990
    }

    pub fn answer_for(&self, problem_id: &str, state: &SimState) -> u64 {
        let truth = self.truth(problem_id);
        match state.open_defects.first() {
            None => truth,
            Some(nonce) => truth + 1 + (*nonce as u64 % self.wrong_answer_spread.max(1) as u64),
        }
    }

    pub fn is_complete(&self, state: &SimState) -> bool {
        state.progress >= self.solution_len
    }

    /// `count` problems with gold answers, ids `sim-0000`, `sim-0001`, ...
    pub fn problems(&self, count: usize) -> Vec<Problem> {
        (0..count)
            .map(|i| {
                let id = format!("sim-{i:04}");
                Problem {
                    prompt: format!("Simulated task {id}: combine the hidden quantities and report the total."),
                    gold: Some(self.truth(&id).to_string()),
                    kind: AnswerKind::Math,
                    options: Vec::new(),
                    id,
                }
            })
            .collect()
    }

    fn rng(&self, request: &GenerationRequest) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(hash64(&[&self.seed.to_le_bytes(), request.fingerprint().as_bytes()]))
    }

    fn draw_step(&self, rng: &mut ChaCha8Rng, cover: usize, error_prob: f64) -> StepTag {
        let ok = (0..cover.max(1)).all(|_| rng.gen::<f64>() >= error_prob);
        let repairable = !ok && rng.gen::<f64>() < self.repairable_fraction;
        StepTag { ok, cover, repairable, ack: false, clears: false, nonce: rng.gen::<u16>() as u32 }
    }

    fn write_step(&self, problem_id: &str, prior: &[String], tag: StepTag, body: &str) -> String {
        let mut all: Vec<&str> = prior.iter().map(String::as_str).collect();
        let encoded = tag.encode();
        all.push(&encoded);
        let state = SimState::fold(&all);
        if self.is_complete(&state) {
            format!("{encoded} {body} Final answer: {}", self.answer_for(problem_id, &state))
        } else {
            format!("{encoded} {body}")
        }
    }

    fn generate(&self, request: &GenerationRequest, strategy: Strategy, rng: &mut ChaCha8Rng) -> String {
        let steps = &request.trajectory;
        let state = SimState::fold(steps);
        let remaining = self.solution_len.saturating_sub(state.progress);
        let p = self.step_error_prob;
        let restate = StepTag { ok: true, cover: 0, repairable: false, ack: false, clears: false, nonce: rng.gen::<u16>() as u32 };
        let (tag, body) = match strategy {
            _ if remaining == 0 && strategy != Strategy::Verify => (restate, "Restate the result."),
            Strategy::Direct => (self.draw_step(rng, remaining, p), "Direct: carry the remaining work through to the end."),
            Strategy::Decompose => (self.draw_step(rng, 1, p), "Decompose: settle the next subgoal."),
            Strategy::Verify => {
                let last_open = state.last.is_some_and(|t| !t.ok) && !state.open_defects.is_empty();
                if last_open && state.last.is_some_and(|t| t.repairable) {
                    let tag = StepTag { ok: true, cover: 0, repairable: false, ack: true, clears: true, nonce: rng.gen::<u16>() as u32 };
                    (tag, "Verify: the previous step was wrong; corrected it.")
                } else if remaining == 0 {
                    (restate, "Verify: checked the work so far.")
                } else {
                    (self.draw_step(rng, 1, p / 2.0), "Verify: checked the previous step and settled the next subgoal.")
                }
            }
        };
        self.write_step(&request.problem_id, steps, tag, body)
    }

    fn repair(&self, request: &GenerationRequest, from_step: usize, rng: &mut ChaCha8Rng) -> String {
        let steps = &request.trajectory;
        let cut = from_step.saturating_sub(1).min(steps.len());
        let (prefix, suffix) = steps.split_at(cut);
        let cover: usize = suffix.iter().filter_map(|s| StepTag::decode(s)).map(|t| t.cover).sum();
        let head = suffix.first().and_then(|s| StepTag::decode(s));
        let tag = match head {
            Some(h) if !h.ok && h.repairable => StepTag { ok: true, cover, repairable: false, ack: true, clears: false, nonce: rng.gen::<u16>() as u32 },
            Some(h) if !h.ok => StepTag { ok: false, cover, repairable: false, ack: false, clears: false, nonce: rng.gen::<u16>() as u32 },
            _ if cover == 0 => StepTag { ok: true, cover, repairable: false, ack: false, clears: false, nonce: rng.gen::<u16>() as u32 },
            _ => self.draw_step(rng, cover, self.step_error_prob),
        };
        self.write_step(&request.problem_id, prefix, tag, "Repair: redo the work from this point.")
    }

    fn noisy(&self, base: f64, normal: &Option<Normal<f64>>, rng: &mut ChaCha8Rng) -> f64 {
        let v = base + normal.as_ref().map_or(0.0, |n| n.sample(rng));
        v.clamp(0.0, 1.0)
    }

    fn normal(sd: f64) -> Option<Normal<f64>> {
        (sd > 0.0).then(|| Normal::new(0.0, sd).expect("valid noise"))
    }

    fn oracle(&self, request: &GenerationRequest, rng: &mut ChaCha8Rng) -> String {
        let normal = Self::normal(self.oracle_noise);
        let mut lines = Vec::new();
        for (i, step) in request.trajectory.iter().enumerate() {
            let tag = StepTag::decode(step);
            let base = match tag {
                Some(t) if !t.ok => self.defect_scores,
                Some(t) if t.ack => ScoreBase { fix: self.ack_fix, ..self.correct_scores },
                _ => self.correct_scores,
            };
            let s = self.noisy(base.semantic, &normal, rng);
            let l = self.noisy(base.logical, &normal, rng);
            let f = self.noisy(base.fix, &normal, rng);
            lines.push(format!("Step {}: Semantic={s:.2}, Logical={l:.2}, Fix={f:.2}", i + 1));
        }
        if request.attempt == Attempt::First && rng.gen::<f64>() < self.format_error_prob {
            return malformed(rng, &lines);
        }
        lines.join("\n")
    }

    fn confidence_of(&self, problem_id: &str, steps: &[String], normal: &Option<Normal<f64>>, rng: &mut ChaCha8Rng) -> f64 {
        let state = SimState::fold(steps);
        let c = &self.confidence;
        let base = match (self.is_complete(&state), state.sound()) {
            (true, true) => c.complete_correct,
            (true, false) => c.complete_wrong,
            (false, true) => c.partial_sound,
            (false, false) => c.partial_defective,
        };
        let _ = problem_id;
        self.noisy(base, normal, rng)
    }

    fn verify(&self, request: &GenerationRequest, rng: &mut ChaCha8Rng) -> String {
        let normal = Self::normal(self.confidence_noise);
        let conf = self.confidence_of(&request.problem_id, &request.trajectory, &normal, rng);
        if request.attempt == Attempt::First && rng.gen::<f64>() < self.format_error_prob {
            return "The reasoning looks mostly plausible.".to_string();
        }
        format!("Confidence: {conf:.2}")
    }

    fn rank(&self, request: &GenerationRequest, rng: &mut ChaCha8Rng) -> String {
        let normal = Self::normal(self.confidence_noise);
        request
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| format!("Candidate {}: {:.2}", i + 1, self.confidence_of(&request.problem_id, c, &normal, rng)))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Response text for a request; a pure function of `(self, request)`.
    pub fn respond(&self, request: &GenerationRequest) -> String {
        let mut rng = self.rng(request);
        match request.kind {
            RequestKind::Generate { strategy } => self.generate(request, strategy, &mut rng),
            RequestKind::Sample => {
                let fresh = GenerationRequest { trajectory: Vec::new(), ..request.clone() };
                self.generate(&fresh, Strategy::Direct, &mut rng)
            }
            RequestKind::RepairSuffix { from_step } => self.repair(request, from_step, &mut rng),
            RequestKind::OracleScore => self.oracle(request, &mut rng),
            RequestKind::VerifyConfidence => self.verify(request, &mut rng),
            RequestKind::VerifyRank => self.rank(request, &mut rng),
        }
    }
}

fn malformed(rng: &mut ChaCha8Rng, lines: &[String]) -> String {
    match rng.gen_range(0..4) {
        0 => "The trajectory looks reasonable overall.".to_string(),
        1 => lines.iter().map(|l| l.replace("Logical=", "Logic: ")).collect::<Vec<_>>().join("\n"),
        2 => lines.iter().skip(1).cloned().collect::<Vec<_>>().join("\n"),
        _ => lines.iter().map(|l| l.replace("Fix=0.", "Fix=~")).collect::<Vec<_>>().join("\n"),
    }
}

/// [`SimWorld`] as a [`Backend`].
#[derive(Debug, Clone)]
pub struct SimBackend {
    world: SimWorld,
}

impl SimBackend {
    pub fn new(world: SimWorld) -> Self {
        Self { world }
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }
}

impl Backend for SimBackend {
    fn invoke(&self, request: &GenerationRequest, _permit: &CallPermit) -> Result<BackendResponse, BackendError> {
        let text = self.world.respond(request);
        let prompt_tokens = estimate_tokens(&request.problem) + estimate_tokens(&request.trajectory_context());
        Ok(BackendResponse { usage: Some(Usage { prompt_tokens, completion_tokens: estimate_tokens(&text) }), text, transport_retries: 0 })
    }

    fn name(&self) -> &str {
        "sim"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::parse_step_scores;

    fn req(kind: RequestKind, steps: Vec<String>) -> GenerationRequest {
        GenerationRequest::new(kind, "sim-0007", "task", AnswerKind::Math).with_trajectory(steps)
    }

    #[test]
    fn tag_round_trip() {
        let t = StepTag { ok: false, cover: 2, repairable: true, ack: false, clears: true, nonce: 40_000 };
        assert_eq!(StepTag::decode(&format!("{} some text", t.encode())), Some(t));
        assert!(!t.encode().chars().any(|c| c.is_ascii_digit()));
    }

    #[test]
    fn error_free_world_always_reaches_truth() {
        let world = SimWorld { step_error_prob: 0.0, ..SimWorld::default() };
        for sample in 0..20 {
            let text = world.respond(&req(RequestKind::Generate { strategy: Strategy::Direct }, vec![]).with_sample(sample));
            let state = SimState::fold(std::slice::from_ref(&text));
            assert!(world.is_complete(&state));
            assert!(text.ends_with(&format!("Final answer: {}", world.truth("sim-0007"))));
        }
    }

    #[test]
    fn noiseless_oracle_reports_bases_in_canonical_format() {
        let world = SimWorld { step_error_prob: 0.0, oracle_noise: 0.0, ..SimWorld::default() };
        let step = world.respond(&req(RequestKind::Generate { strategy: Strategy::Decompose }, vec![]));
        let raw = world.respond(&req(RequestKind::OracleScore, vec![step]));
        assert_eq!(raw, "Step 1: Semantic=0.85, Logical=0.90, Fix=0.10");
        let parsed = parse_step_scores(&raw, 1).unwrap();
        assert_eq!(parsed[0].logical, 0.9);
    }

    #[test]
    fn identical_requests_are_byte_identical() {
        let world = SimWorld::default().with_seed(11);
        let r = req(RequestKind::Generate { strategy: Strategy::Direct }, vec![]);
        assert_eq!(world.respond(&r), world.respond(&r));
        let o = req(RequestKind::OracleScore, vec![world.respond(&r)]);
        assert_eq!(world.respond(&o), world.respond(&o));
    }

    #[test]
    fn repair_of_repairable_defect_is_correct() {
        let world = SimWorld { step_error_prob: 1.0, repairable_fraction: 1.0, ..SimWorld::default() };
        let bad = world.respond(&req(RequestKind::Generate { strategy: Strategy::Direct }, vec![]));
        assert!(!StepTag::decode(&bad).unwrap().ok);
        let fixed = world.respond(&req(RequestKind::RepairSuffix { from_step: 1 }, vec![bad]));
        let tag = StepTag::decode(&fixed).unwrap();
        assert!(tag.ok && tag.ack);
        assert!(fixed.ends_with(&format!("Final answer: {}", world.truth("sim-0007"))));
    }

    #[test]
    fn verify_mode_clears_repairable_defect() {
        let world = SimWorld { step_error_prob: 1.0, repairable_fraction: 1.0, ..SimWorld::default() };
        let bad = world.respond(&req(RequestKind::Generate { strategy: Strategy::Direct }, vec![]));
        let fix = world.respond(&req(RequestKind::Generate { strategy: Strategy::Verify }, vec![bad.clone()]));
        let state = SimState::fold(&[bad, fix]);
        assert!(state.sound());
    }

    #[test]
    fn wrong_answers_differ_from_truth() {
        let world = SimWorld { step_error_prob: 1.0, ..SimWorld::default() };
        let state = SimState { progress: 3, open_defects: vec![5], last: None };
        assert_ne!(world.answer_for("sim-0001", &state), world.truth("sim-0001"));
    }
}
