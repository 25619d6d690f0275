//! Prompt templates, loaded from a TOML asset and rendered per request.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{render_steps, GenerationRequest, RequestKind};
use crate::oracle::Attempt;
use crate::problem::AnswerKind;
use crate::tree::Strategy;

const DEFAULT_PROMPTS: &str = include_str!("../../assets/prompts.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub direct: Template,
    pub decompose: Template,
    pub verify: Template,
    pub oracle: Template,
    pub oracle_reprompt: Template,
    pub confidence: Template,
    pub confidence_reprompt: Template,
    pub repair: Template,
    pub rank: Template,
    pub sample: Template,
}

impl Default for PromptSet {
    fn default() -> Self {
        toml::from_str(DEFAULT_PROMPTS).expect("bundled prompt templates parse")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatPrompt {
    pub system: String,
    pub user: String,
}

impl PromptSet {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn template(&self, request: &GenerationRequest) -> &Template {
        match (request.kind, request.attempt) {
            (RequestKind::Generate { strategy: Strategy::Direct }, _) => &self.direct,
            (RequestKind::Generate { strategy: Strategy::Decompose }, _) => &self.decompose,
            (RequestKind::Generate { strategy: Strategy::Verify }, _) => &self.verify,
            (RequestKind::OracleScore, Attempt::First) => &self.oracle,
            (RequestKind::OracleScore, Attempt::Reprompt) => &self.oracle_reprompt,
            (RequestKind::VerifyConfidence, Attempt::First) => &self.confidence,
            (RequestKind::VerifyConfidence, Attempt::Reprompt) => &self.confidence_reprompt,
            (RequestKind::RepairSuffix { .. }, _) => &self.repair,
            (RequestKind::VerifyRank, _) => &self.rank,
            (RequestKind::Sample, _) => &self.sample,
        }
    }

    pub fn render(&self, request: &GenerationRequest) -> ChatPrompt {
        let t = self.template(request);
        let repair_step = match request.kind {
            RequestKind::RepairSuffix { from_step } => from_step,
            _ => 0,
        };
        let prefix_len = repair_step.saturating_sub(1).min(request.trajectory.len());
        let candidates =
            request.candidates.iter().enumerate().map(|(i, c)| format!("### Candidate {}\n{}", i + 1, render_steps(c))).collect::<Vec<_>>().join("\n\n");
        let answer_format = match request.answer_kind {
            AnswerKind::Math => "When the answer is reached, state it as \"Final answer: <value>\".",
            AnswerKind::MultipleChoice => "When the answer is reached, state it as \"Final answer: <option letter>\".",
            AnswerKind::FreeText => "When the answer is reached, state it as \"Final answer: <answer>\".",
        };
        let fill = |s: &str| {
            s.replace("{problem}", &request.problem)
                .replace("{trajectory}", &request.trajectory_context())
                .replace("{step_count}", &request.trajectory.len().to_string())
                .replace("{repair_step}", &repair_step.to_string())
                .replace("{prefix}", &render_steps(&request.trajectory[..prefix_len]))
                .replace("{candidates}", &candidates)
                .replace("{answer_format}", answer_format)
        };
        ChatPrompt { system: fill(&t.system), user: fill(&t.user) }
    }
}
