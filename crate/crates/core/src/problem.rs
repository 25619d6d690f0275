//! Problems and the online/offline split.
//!
//! [`Problem`] carries the gold answer. The controller, baselines, and
//! backends only ever receive a [`ProblemView`], which has no gold field.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    #[default]
    Math,
    MultipleChoice,
    FreeText,
}

/// One dataset record (JSON lines: `id`, `prompt`, `kind`, `gold`, optional `options`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub prompt: String,
    #[serde(default)]
    pub kind: AnswerKind,
    /// Option texts for multiple choice, labelled A, B, C, ... in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

impl Problem {
    pub fn view(&self) -> ProblemView {
        ProblemView { id: self.id.clone(), prompt: self.prompt.clone(), kind: self.kind, options: self.options.clone() }
    }
}

/// What online components are allowed to see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemView {
    pub id: String,
    pub prompt: String,
    pub kind: AnswerKind,
    pub options: Vec<String>,
}

impl ProblemView {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>, kind: AnswerKind) -> Self {
        Self { id: id.into(), prompt: prompt.into(), kind, options: Vec::new() }
    }

    /// Prompt text with lettered options appended for multiple choice.
    pub fn rendered_prompt(&self) -> String {
        if self.options.is_empty() {
            return self.prompt.clone();
        }
        let mut out = self.prompt.clone();
        for (i, opt) in self.options.iter().enumerate() {
            out.push_str(&format!("\n({}) {}", option_label(i), opt));
        }
        out
    }
}

pub fn option_label(index: usize) -> char {
    (b'A' + index as u8) as char
}
