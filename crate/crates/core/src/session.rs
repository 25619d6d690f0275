//! Per-episode call plumbing shared by the controller and the baselines.
//!
//! A [`Session`] owns the episode's ledger and trace. Every backend call
//! goes through [`Session::call`], which requires a permit, settles it
//! against the ledger, and records a matching charge event.

use serde::{Deserialize, Serialize};

use crate::backends::{Backend, BackendError, GenerationRequest, RequestKind};
use crate::budget::{estimate_tokens, BudgetLedger, BudgetSummary, CallPermit, ChargeCategory, Reservation};
use crate::oracle::{confidence_with_retry, score_with_retry, Attempt, ConfidenceReading, OracleReport, OracleWeights};
use crate::problem::ProblemView;
use crate::trace::{ChargeRecord, Clock, TraceEvent, TraceKind, TraceRecorder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstainReason {
    NoSurvivor,
    LowConfidence,
    NoAnswer,
    BackendFailure,
}

/// What a policy produced, before ledger and identity are attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub answer: Option<String>,
    pub confidence: Option<f64>,
    pub value: Option<f64>,
    pub abstain_reason: Option<AbstainReason>,
    /// Ended on the stop threshold rather than budget exhaustion.
    pub stopped_early: bool,
    pub fallback_used: bool,
    pub error: Option<String>,
}

impl Outcome {
    pub fn answered(answer: String, confidence: Option<f64>, value: Option<f64>) -> Self {
        Self { answer: Some(answer), confidence, value, abstain_reason: None, stopped_early: false, fallback_used: false, error: None }
    }

    pub fn abstained(reason: AbstainReason, confidence: Option<f64>, value: Option<f64>) -> Self {
        Self { answer: None, confidence, value, abstain_reason: Some(reason), stopped_early: false, fallback_used: false, error: None }
    }

    pub fn failed(error: &BackendError) -> Self {
        Self { error: Some(error.to_string()), ..Self::abstained(AbstainReason::BackendFailure, None, None) }
    }

    pub fn is_abstained(&self) -> bool {
        self.answer.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: String,
    pub problem_id: String,
    pub policy: String,
    pub seed: u64,
    pub answer: Option<String>,
    pub abstained: bool,
    pub confidence: Option<f64>,
    pub best_value: Option<f64>,
    pub abstain_reason: Option<AbstainReason>,
    pub stopped_early: bool,
    pub fallback_used: bool,
    pub error: Option<String>,
    pub ledger: BudgetSummary,
}

pub fn episode_id(problem_id: &str, seed: u64) -> String {
    format!("{problem_id}-s{seed}")
}

pub struct Session<'a> {
    backend: &'a dyn Backend,
    pub problem: ProblemView,
    pub ledger: BudgetLedger,
    pub trace: TraceRecorder,
}

impl<'a> Session<'a> {
    pub fn new(backend: &'a dyn Backend, problem: ProblemView, capacity: u32, episode: impl Into<String>) -> Self {
        Self::with_clock(backend, problem, capacity, episode, Clock::Logical)
    }

    pub fn with_clock(backend: &'a dyn Backend, problem: ProblemView, capacity: u32, episode: impl Into<String>, clock: Clock) -> Self {
        Self { backend, problem, ledger: BudgetLedger::new(capacity), trace: TraceRecorder::with_clock(episode, clock) }
    }

    pub fn request(&self, kind: RequestKind) -> GenerationRequest {
        GenerationRequest::new(kind, self.problem.id.clone(), self.problem.rendered_prompt(), self.problem.kind)
    }

    /// Issues one backend call under `permit`. Failed calls are cancelled, not charged.
    pub fn call(&mut self, permit: CallPermit, request: &GenerationRequest) -> Result<String, BackendError> {
        let response = match self.backend.invoke(request, &permit) {
            Ok(r) => r,
            Err(e) => {
                self.ledger.cancel(permit);
                return Err(e);
            }
        };
        let (tokens_in, tokens_out, estimated) = match response.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens, false),
            None => (estimate_tokens(&request.problem) + estimate_tokens(&request.trajectory_context()), estimate_tokens(&response.text), true),
        };
        let category = permit.category();
        self.ledger.settle(permit, tokens_in, tokens_out, estimated);
        self.trace.record(
            TraceKind::Charge,
            ChargeRecord {
                category,
                calls: 1,
                tokens_in,
                tokens_out,
                estimated,
                request: Some(request.kind.to_string()),
                fingerprint: Some(request.fingerprint()),
                transport_retries: response.transport_retries,
            },
        );
        Ok(response.text)
    }

    fn permit_for(&mut self, reservation: Option<&mut Reservation>, category: ChargeCategory) -> Option<CallPermit> {
        match reservation {
            Some(r) => self.ledger.permit_from(r, category).ok(),
            None => self.ledger.permit(category).ok(),
        }
    }

    /// Oracle evaluation of `steps` under the parse-failure protocol. The first
    /// attempt draws on `reservation` when given; a re-prompt always draws on
    /// unreserved capacity.
    pub fn oracle(&mut self, steps: &[String], weights: &OracleWeights, mut reservation: Option<&mut Reservation>) -> Result<OracleReport, BackendError> {
        let base = self.request(RequestKind::OracleScore).with_trajectory(steps.to_vec());
        score_with_retry(steps.len(), weights, |attempt| {
            let permit = match attempt {
                Attempt::First => self.permit_for(reservation.as_deref_mut(), ChargeCategory::ProcessEval),
                Attempt::Reprompt => self.permit_for(None, ChargeCategory::ProcessEval),
            };
            match permit {
                Some(p) => self.call(p, &base.clone().with_attempt(attempt)).map(Some),
                None => Ok(None),
            }
        })
    }

    /// Verify-style confidence of `steps`, same protocol as [`Session::oracle`].
    pub fn confidence(&mut self, steps: &[String], mut reservation: Option<&mut Reservation>) -> Result<ConfidenceReading, BackendError> {
        let base = self.request(RequestKind::VerifyConfidence).with_trajectory(steps.to_vec());
        confidence_with_retry(|attempt| {
            let permit = match attempt {
                Attempt::First => self.permit_for(reservation.as_deref_mut(), ChargeCategory::Verify),
                Attempt::Reprompt => self.permit_for(None, ChargeCategory::Verify),
            };
            match permit {
                Some(p) => self.call(p, &base.clone().with_attempt(attempt)).map(Some),
                None => Ok(None),
            }
        })
    }

    pub fn finish(self, policy: &str, seed: u64, outcome: Outcome) -> (EpisodeResult, Vec<TraceEvent>) {
        let result = EpisodeResult {
            episode: self.trace.episode().to_string(),
            problem_id: self.problem.id.clone(),
            policy: policy.to_string(),
            seed,
            abstained: outcome.is_abstained(),
            answer: outcome.answer,
            confidence: outcome.confidence,
            best_value: outcome.value,
            abstain_reason: outcome.abstain_reason,
            stopped_early: outcome.stopped_early,
            fallback_used: outcome.fallback_used,
            error: outcome.error,
            ledger: self.ledger.summary(),
        };
        (result, self.trace.into_events())
    }
}
