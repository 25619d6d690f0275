//! Process-oracle output parsing, step rewards, and the parse-failure protocol.
//!
//! The oracle returns one line per step:
//!
//! ```text
//! Step 1: Semantic=0.90, Logical=0.80, Fix=0.00
//! ```
//!
//! Parsing is line oriented and tolerant of case and surrounding whitespace,
//! but any missing, non-numeric, or out-of-range field fails the whole parse,
//! as does a step count that differs from the controller's segmentation.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the three per-step oracle signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreField {
    Semantic,
    Logical,
    Fix,
}

impl ScoreField {
    pub const ALL: [ScoreField; 3] = [ScoreField::Semantic, ScoreField::Logical, ScoreField::Fix];

    fn token(self) -> &'static str {
        match self {
            ScoreField::Semantic => "semantic",
            ScoreField::Logical => "logical",
            ScoreField::Fix => "fix",
        }
    }
}

impl fmt::Display for ScoreField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreField::Semantic => "Semantic",
            ScoreField::Logical => "Logical",
            ScoreField::Fix => "Fix",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScores {
    pub semantic: f64,
    pub logical: f64,
    pub fix: f64,
    /// Fields substituted with 0 after a second parse failure.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub defaulted: BTreeSet<ScoreField>,
}

impl StepScores {
    pub fn new(semantic: f64, logical: f64, fix: f64) -> Self {
        Self { semantic, logical, fix, defaulted: BTreeSet::new() }
    }

    pub fn get(&self, field: ScoreField) -> f64 {
        match field {
            ScoreField::Semantic => self.semantic,
            ScoreField::Logical => self.logical,
            ScoreField::Fix => self.fix,
        }
    }

    fn from_partial(partial: [Option<f64>; 3]) -> Self {
        let mut scores = StepScores::new(0.0, 0.0, 0.0);
        for (field, value) in ScoreField::ALL.into_iter().zip(partial) {
            match value {
                Some(v) => match field {
                    ScoreField::Semantic => scores.semantic = v,
                    ScoreField::Logical => scores.logical = v,
                    ScoreField::Fix => scores.fix = v,
                },
                None => {
                    scores.defaulted.insert(field);
                }
            }
        }
        scores
    }
}

/// Convex weights for combining the three signals into a step reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleWeights {
    pub semantic: f64,
    pub logical: f64,
    pub fix: f64,
}

impl Default for OracleWeights {
    fn default() -> Self {
        Self { semantic: 0.2, logical: 0.5, fix: 0.3 }
    }
}

/// `r = w_sem·Sem + w_log·Log + w_fix·Fix`.
pub fn step_reward(scores: &StepScores, weights: &OracleWeights) -> f64 {
    weights.semantic * scores.semantic + weights.logical * scores.logical + weights.fix * scores.fix
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("process value of an empty trajectory")]
    EmptyTrajectory,
}

/// Mean step reward over the trajectory.
pub fn process_value(rewards: &[f64]) -> Result<f64, OracleError> {
    if rewards.is_empty() {
        return Err(OracleError::EmptyTrajectory);
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParseFailureKind {
    MissingField,
    NonNumeric(String),
    OutOfRange(f64),
    StepCountMismatch { expected: usize, found: usize },
    StepOutOfOrder { expected: usize, found: usize },
    NoConfidence,
}

/// First offending location in an oracle response. `line` is 1-based; 0
/// when the failure concerns the response as a whole.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("parse failure at line {line}{}: {kind:?}", field.map(|f| format!(" ({f})")).unwrap_or_default())]
pub struct ParseFailure {
    pub line: usize,
    pub field: Option<ScoreField>,
    pub kind: ParseFailureKind,
}

fn step_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*\**\s*step\s*(\d+)\s*\**\s*[:.)\-]?\s*(.*)$").unwrap())
}

fn field_re(field: ScoreField) -> &'static Regex {
    static RES: OnceLock<[Regex; 3]> = OnceLock::new();
    let res = RES.get_or_init(|| ScoreField::ALL.map(|f| Regex::new(&format!(r"(?i)\b{}\s*=\s*([^,;\s]*)", f.token())).unwrap()));
    &res[field as usize]
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?").unwrap())
}

fn parse_bounded(token: &str) -> Result<f64, ParseFailureKind> {
    let cleaned = token.trim().trim_end_matches(['.', ')']);
    let value: f64 = cleaned.parse().map_err(|_| ParseFailureKind::NonNumeric(token.to_string()))?;
    if !value.is_finite() {
        return Err(ParseFailureKind::NonNumeric(token.to_string()));
    }
    if !(0.0..=1.0).contains(&value) {
        return Err(ParseFailureKind::OutOfRange(value));
    }
    Ok(value)
}

/// Field values recovered from a response, step by step, plus the first
/// failure encountered (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct PartialParse {
    pub steps: Vec<[Option<f64>; 3]>,
    pub failure: Option<ParseFailure>,
}

/// Recovers whatever valid fields are present for steps `1..=expected_steps`.
pub fn parse_partial(raw: &str, expected_steps: usize) -> PartialParse {
    let mut steps = vec![[None; 3]; expected_steps];
    let mut seen = vec![false; expected_steps];
    let mut failure: Option<ParseFailure> = None;
    let mut found = 0usize;
    let record = |f: ParseFailure, failure: &mut Option<ParseFailure>| {
        if failure.is_none() {
            *failure = Some(f);
        }
    };

    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        let Some(caps) = step_line_re().captures(line) else { continue };
        found += 1;
        let number: usize = caps[1].parse().unwrap_or(0);
        if number != found {
            record(ParseFailure { line: line_no, field: None, kind: ParseFailureKind::StepOutOfOrder { expected: found, found: number } }, &mut failure);
        }
        let slot = number.checked_sub(1).filter(|&i| i < expected_steps && !seen[i]);
        let rest = caps.get(2).map_or("", |m| m.as_str());
        let mut values = [None; 3];
        for field in ScoreField::ALL {
            match field_re(field).captures(rest) {
                None => record(ParseFailure { line: line_no, field: Some(field), kind: ParseFailureKind::MissingField }, &mut failure),
                Some(c) => match parse_bounded(&c[1]) {
                    Ok(v) => values[field as usize] = Some(v),
                    Err(kind) => record(ParseFailure { line: line_no, field: Some(field), kind }, &mut failure),
                },
            }
        }
        if let Some(i) = slot {
            seen[i] = true;
            steps[i] = values;
        }
    }
    if found != expected_steps {
        // A count mismatch outranks any later field problem only when no
        // field problem has been seen yet.
        record(ParseFailure { line: 0, field: None, kind: ParseFailureKind::StepCountMismatch { expected: expected_steps, found } }, &mut failure);
    }
    PartialParse { steps, failure }
}

/// Strict parse: exactly `expected_steps` fully valid lines, in order.
pub fn parse_step_scores(raw: &str, expected_steps: usize) -> Result<Vec<StepScores>, ParseFailure> {
    let partial = parse_partial(raw, expected_steps);
    if let Some(f) = partial.failure {
        return Err(f);
    }
    Ok(partial.steps.into_iter().map(StepScores::from_partial).collect())
}

/// First numeric token in `[0, 1]`.
pub fn parse_confidence(raw: &str) -> Result<f64, ParseFailure> {
    for m in number_re().find_iter(raw) {
        // skip digits glued to letters, e.g. "Step2" labels
        let before = raw[..m.start()].chars().next_back();
        if before.is_some_and(|c| c.is_alphabetic() || c == '_') {
            continue;
        }
        if let Ok(v) = parse_bounded(m.as_str()) {
            return Ok(v);
        }
    }
    Err(ParseFailure { line: 0, field: None, kind: ParseFailureKind::NoConfidence })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub steps: Vec<StepScores>,
    pub step_rewards: Vec<f64>,
    pub process_value: f64,
    /// Oracle calls actually issued for this evaluation.
    pub parse_attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ParseFailure>,
}

impl OracleReport {
    pub fn from_steps(steps: Vec<StepScores>, weights: &OracleWeights, parse_attempts: u32, failures: Vec<ParseFailure>) -> Self {
        let step_rewards: Vec<f64> = steps.iter().map(|s| step_reward(s, weights)).collect();
        let process_value = process_value(&step_rewards).unwrap_or(0.0);
        Self { steps, step_rewards, process_value, parse_attempts, failures }
    }

    pub fn defaulted_fields(&self) -> usize {
        self.steps.iter().map(|s| s.defaulted.len()).sum()
    }

    pub fn min_step_reward(&self) -> f64 {
        self.step_rewards.iter().copied().fold(f64::INFINITY, f64::min).clamp(0.0, 1.0)
    }
}

/// Which attempt of a scoring exchange is being requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attempt {
    First,
    /// The single format-constrained re-prompt after a parse failure.
    Reprompt,
}

impl Attempt {
    pub fn number(self) -> u32 {
        match self {
            Attempt::First => 1,
            Attempt::Reprompt => 2,
        }
    }
}

/// Runs the parse-failure protocol around an oracle query.
///
/// `query` performs one backend call and returns `Ok(None)` when the budget
/// cannot cover it. On a first parse failure exactly one re-prompt is
/// issued; if that also fails, fields still missing or invalid in the
/// re-prompt's answer are set to 0 and recorded as defaulted.
pub fn score_with_retry<E>(
    expected_steps: usize,
    weights: &OracleWeights,
    mut query: impl FnMut(Attempt) -> Result<Option<String>, E>,
) -> Result<OracleReport, E> {
    let Some(first) = query(Attempt::First)? else {
        let steps = vec![StepScores::from_partial([None; 3]); expected_steps];
        return Ok(OracleReport::from_steps(steps, weights, 0, Vec::new()));
    };
    let mut failures = Vec::new();
    match parse_step_scores(&first, expected_steps) {
        Ok(steps) => return Ok(OracleReport::from_steps(steps, weights, 1, failures)),
        Err(f) => failures.push(f),
    }
    let (fallback_text, attempts) = match query(Attempt::Reprompt)? {
        Some(second) => match parse_step_scores(&second, expected_steps) {
            Ok(steps) => return Ok(OracleReport::from_steps(steps, weights, 2, failures)),
            Err(f) => {
                failures.push(f);
                (second, 2)
            }
        },
        None => (first, 1),
    };
    let partial = parse_partial(&fallback_text, expected_steps);
    let steps = partial.steps.into_iter().map(StepScores::from_partial).collect();
    Ok(OracleReport::from_steps(steps, weights, attempts, failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReading {
    pub value: f64,
    pub attempts: u32,
    pub defaulted: bool,
}

/// Same protocol for verify-style confidence: one re-prompt, then 0.
pub fn confidence_with_retry<E>(mut query: impl FnMut(Attempt) -> Result<Option<String>, E>) -> Result<ConfidenceReading, E> {
    let Some(first) = query(Attempt::First)? else {
        return Ok(ConfidenceReading { value: 0.0, attempts: 0, defaulted: true });
    };
    if let Ok(v) = parse_confidence(&first) {
        return Ok(ConfidenceReading { value: v, attempts: 1, defaulted: false });
    }
    match query(Attempt::Reprompt)? {
        Some(second) => match parse_confidence(&second) {
            Ok(v) => Ok(ConfidenceReading { value: v, attempts: 2, defaulted: false }),
            Err(_) => Ok(ConfidenceReading { value: 0.0, attempts: 2, defaulted: true }),
        },
        None => Ok(ConfidenceReading { value: 0.0, attempts: 1, defaulted: true }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn w() -> OracleWeights {
        OracleWeights::default()
    }

    #[test]
    fn parses_canonical_line() {
        let s = parse_step_scores("Step 1: Semantic=0.90, Logical=0.80, Fix=0.00", 1).unwrap();
        assert_eq!(s, vec![StepScores::new(0.90, 0.80, 0.00)]);
    }

    #[test]
    fn tolerant_of_case_and_spacing() {
        let raw = "  step 1 :  semantic = 0.5 , LOGICAL=1, fix=0\nSTEP 2: Semantic=.25, Logical=0.75, Fix=1.0\n";
        let s = parse_step_scores(raw, 2).unwrap();
        assert_eq!(s[0], StepScores::new(0.5, 1.0, 0.0));
        assert_eq!(s[1], StepScores::new(0.25, 0.75, 1.0));
    }

    #[test]
    fn non_numeric_field_fails() {
        let err = parse_step_scores("Step 1: Semantic=0.9, Logical=abc, Fix=0.1", 1).unwrap_err();
        assert_eq!(err.field, Some(ScoreField::Logical));
        assert_eq!(err.kind, ParseFailureKind::NonNumeric("abc".into()));
        assert_eq!(err.line, 1);
    }

    #[test]
    fn out_of_range_field_fails() {
        let err = parse_step_scores("Step 1: Semantic=1.20, Logical=0.5, Fix=0.5", 1).unwrap_err();
        assert_eq!(err.field, Some(ScoreField::Semantic));
        assert_eq!(err.kind, ParseFailureKind::OutOfRange(1.2));
    }

    #[test]
    fn missing_field_and_count_mismatch() {
        let err = parse_step_scores("Step 1: Semantic=0.9, Fix=0.1", 1).unwrap_err();
        assert_eq!(err.kind, ParseFailureKind::MissingField);
        assert_eq!(err.field, Some(ScoreField::Logical));
        let err = parse_step_scores("Step 1: Semantic=0.9, Logical=0.2, Fix=0.1", 2).unwrap_err();
        assert_eq!(err.kind, ParseFailureKind::StepCountMismatch { expected: 2, found: 1 });
        let err = parse_step_scores("Step 2: Semantic=0.9, Logical=0.2, Fix=0.1", 1).unwrap_err();
        assert!(matches!(err.kind, ParseFailureKind::StepOutOfOrder { .. }));
    }

    #[test]
    fn template_placeholder_is_not_a_number() {
        assert!(parse_step_scores("Step 1: Semantic=0.xx, Logical=0.xx, Fix=0.xx", 1).is_err());
    }

    #[test]
    fn step_reward_examples() {
        assert!((step_reward(&StepScores::new(1.0, 1.0, 1.0), &w()) - 1.0).abs() < 1e-12);
        assert_eq!(step_reward(&StepScores::new(0.0, 0.0, 0.0), &w()), 0.0);
        // 0.2*0.5 + 0.5*0.8 + 0.3*0.2 = 0.1 + 0.4 + 0.06
        assert!((step_reward(&StepScores::new(0.5, 0.8, 0.2), &w()) - 0.56).abs() < 1e-12);
    }

    #[test]
    fn process_value_examples() {
        assert_eq!(process_value(&[0.7]).unwrap(), 0.7);
        assert_eq!(process_value(&[1.0, 0.0]).unwrap(), 0.5);
        // (0.56 + 0.9 + 0.4) / 3 = 1.86 / 3
        assert!((process_value(&[0.56, 0.9, 0.4]).unwrap() - 0.62).abs() < 1e-12);
        assert_eq!(process_value(&[]), Err(OracleError::EmptyTrajectory));
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(parse_confidence("0.85").unwrap(), 0.85);
        assert_eq!(parse_confidence("Confidence: 0.72 because the steps check out").unwrap(), 0.72);
        assert!(parse_confidence("very confident").is_err());
        assert_eq!(parse_confidence("Step2 is fine. confidence 1").unwrap(), 1.0);
        assert!(parse_confidence("Confidence: 85").is_err());
    }

    #[test]
    fn retry_clean_first_attempt() {
        let mut calls = 0;
        let report = score_with_retry::<Infallible>(1, &w(), |_| {
            calls += 1;
            Ok(Some("Step 1: Semantic=0.9, Logical=0.9, Fix=0.1".into()))
        })
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(report.parse_attempts, 1);
        assert_eq!(report.defaulted_fields(), 0);
    }

    #[test]
    fn retry_recovers_on_reprompt() {
        let report = score_with_retry::<Infallible>(1, &w(), |a| {
            Ok(Some(match a {
                Attempt::First => "I think the step is fine".into(),
                Attempt::Reprompt => "Step 1: Semantic=0.9, Logical=0.9, Fix=0.1".into(),
            }))
        })
        .unwrap();
        assert_eq!(report.parse_attempts, 2);
        assert_eq!(report.defaulted_fields(), 0);
        assert_eq!(report.failures.len(), 1);
    }

    #[test]
    fn retry_defaults_to_zero_after_second_failure() {
        let report = score_with_retry::<Infallible>(2, &w(), |a| {
            Ok(Some(match a {
                Attempt::First => "garbage".into(),
                Attempt::Reprompt => "Step 1: Semantic=0.9, Logical=oops, Fix=0.4".into(),
            }))
        })
        .unwrap();
        assert_eq!(report.parse_attempts, 2);
        assert_eq!(report.steps[0].semantic, 0.9);
        assert_eq!(report.steps[0].logical, 0.0);
        assert!(report.steps[0].defaulted.contains(&ScoreField::Logical));
        assert_eq!(report.steps[1].defaulted.len(), 3);
        for s in &report.steps {
            for f in &s.defaulted {
                assert_eq!(s.get(*f), 0.0);
            }
        }
        let expected = (step_reward(&report.steps[0], &w()) + 0.0) / 2.0;
        assert!((report.process_value - expected).abs() < 1e-12);
    }

    #[test]
    fn confidence_retry_protocol() {
        let r = confidence_with_retry::<Infallible>(|a| Ok(Some(if a == Attempt::First { "hmm".into() } else { "0.4".into() }))).unwrap();
        assert_eq!((r.value, r.attempts, r.defaulted), (0.4, 2, false));
        let r = confidence_with_retry::<Infallible>(|_| Ok(Some("no idea".into()))).unwrap();
        assert_eq!((r.value, r.attempts, r.defaulted), (0.0, 2, true));
        let r = confidence_with_retry::<Infallible>(|a| Ok(if a == Attempt::First { Some("?".into()) } else { None })).unwrap();
        assert_eq!((r.value, r.attempts, r.defaulted), (0.0, 1, true));
    }
}
