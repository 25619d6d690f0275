//! Generator and oracle providers.
//!
//! All providers implement [`Backend`]. A call requires a [`CallPermit`]
//! minted by the episode's [`BudgetLedger`](crate::budget::BudgetLedger),
//! so nothing reaches a model without being charged.

mod http;
pub mod prompts;
mod scripted;
pub mod sim;
mod transcript;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::budget::CallPermit;
use crate::oracle::Attempt;
use crate::problem::AnswerKind;
use crate::tree::Strategy;

pub use http::{parse_completion, HttpBackend, HttpConfig};
pub use prompts::{ChatPrompt, PromptSet};
pub use scripted::ScriptedBackend;
pub use sim::{SimBackend, SimWorld};
pub use transcript::{write_transcript, RecordingBackend, ReplayBackend, TranscriptEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RequestKind {
    Generate {
        strategy: Strategy,
    },
    OracleScore,
    VerifyConfidence,
    RepairSuffix {
        from_step: usize,
    },
    /// A complete chain from scratch, for single-chain and voting policies.
    Sample,
    /// One verify call ranking several finished candidates.
    VerifyRank,
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestKind::Generate { strategy } => write!(f, "generate:{strategy}"),
            RequestKind::OracleScore => f.write_str("oracle"),
            RequestKind::VerifyConfidence => f.write_str("verify"),
            RequestKind::RepairSuffix { from_step } => write!(f, "repair:{from_step}"),
            RequestKind::Sample => f.write_str("sample"),
            RequestKind::VerifyRank => f.write_str("rank"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl DecodingParams {
    /// Object-level generation.
    pub const OBJECT: DecodingParams = DecodingParams { temperature: 0.4, top_p: 0.95, max_tokens: 2048 };
    /// Oracle and verification calls.
    pub const META: DecodingParams = DecodingParams { temperature: 0.0, top_p: 1.0, max_tokens: 512 };
    /// Single-chain greedy decoding.
    pub const GREEDY: DecodingParams = DecodingParams { temperature: 0.0, top_p: 1.0, max_tokens: 2048 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub kind: RequestKind,
    pub problem_id: String,
    pub problem: String,
    pub answer_kind: AnswerKind,
    /// Thoughts of the trajectory under consideration, in order.
    pub trajectory: Vec<String>,
    /// Finished trajectories for [`RequestKind::VerifyRank`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<Vec<String>>,
    pub decoding: DecodingParams,
    /// Distinguishes repeated requests with otherwise identical inputs.
    pub sample_index: u32,
    pub attempt: Attempt,
}

impl GenerationRequest {
    pub fn new(kind: RequestKind, problem_id: impl Into<String>, problem: impl Into<String>, answer_kind: AnswerKind) -> Self {
        let decoding = match kind {
            RequestKind::OracleScore | RequestKind::VerifyConfidence | RequestKind::VerifyRank => DecodingParams::META,
            _ => DecodingParams::OBJECT,
        };
        Self {
            kind,
            problem_id: problem_id.into(),
            problem: problem.into(),
            answer_kind,
            trajectory: Vec::new(),
            candidates: Vec::new(),
            decoding,
            sample_index: 0,
            attempt: Attempt::First,
        }
    }

    pub fn with_trajectory(mut self, steps: Vec<String>) -> Self {
        self.trajectory = steps;
        self
    }

    pub fn with_sample(mut self, index: u32) -> Self {
        self.sample_index = index;
        self
    }

    pub fn with_attempt(mut self, attempt: Attempt) -> Self {
        self.attempt = attempt;
        self
    }

    pub fn with_decoding(mut self, decoding: DecodingParams) -> Self {
        self.decoding = decoding;
        self
    }

    /// Numbered rendering of the trajectory, one step per block.
    pub fn trajectory_context(&self) -> String {
        render_steps(&self.trajectory)
    }

    /// Stable identity of the request, used for transcript replay and
    /// for deriving simulator randomness.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            kind: &'a RequestKind,
            problem_id: &'a str,
            context: String,
            candidates: Vec<String>,
            decoding: &'a DecodingParams,
            sample_index: u32,
            attempt: u32,
        }
        let key = Key {
            kind: &self.kind,
            problem_id: &self.problem_id,
            context: self.trajectory_context(),
            candidates: self.candidates.iter().map(|c| render_steps(c)).collect(),
            decoding: &self.decoding,
            sample_index: self.sample_index,
            attempt: self.attempt.number(),
        };
        let bytes = serde_json::to_vec(&key).expect("fingerprint key serializes");
        hex::encode(&Sha256::digest(&bytes)[..16])
    }
}

pub fn render_steps(steps: &[String]) -> String {
    if steps.is_empty() {
        return "(no steps yet)".to_string();
    }
    steps.iter().enumerate().map(|(i, s)| format!("Step {}: {}", i + 1, s.trim())).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    /// Token usage reported by the provider, when it reports any.
    pub usage: Option<Usage>,
    /// Transport-level retries spent on this call; never charged to the budget.
    #[serde(default)]
    pub transport_retries: u32,
}

impl BackendResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), usage: None, transport_retries: 0 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("unexpected provider response: {0}")]
    Protocol(String),
    #[error("no recorded response for fingerprint {fingerprint} ({kind})")]
    UnmatchedFingerprint { fingerprint: String, kind: String },
    #[error("transcript i/o: {0}")]
    Io(String),
}

pub trait Backend: Send + Sync {
    fn invoke(&self, request: &GenerationRequest, permit: &CallPermit) -> Result<BackendResponse, BackendError>;

    fn name(&self) -> &str;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn invoke(&self, request: &GenerationRequest, permit: &CallPermit) -> Result<BackendResponse, BackendError> {
        (**self).invoke(request, permit)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn invoke(&self, request: &GenerationRequest, permit: &CallPermit) -> Result<BackendResponse, BackendError> {
        (**self).invoke(request, permit)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn invoke(&self, request: &GenerationRequest, permit: &CallPermit) -> Result<BackendResponse, BackendError> {
        (**self).invoke(request, permit)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}
