//! Final-answer extraction and normalization.

use std::sync::OnceLock;

use regex::Regex;

use crate::problem::{option_label, AnswerKind};

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:final\s+answer|the\s+answer\s+is)\s*(?:is)?\s*[:=]?\s*").unwrap())
}

fn numeric_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:,\d{3})*(?:\.\d+)?(?:\s*/\s*\d+(?:\.\d+)?)?|-?\.\d+").unwrap())
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\(?([A-Za-z])\)?(?:[.:)\s]|$)").unwrap())
}

fn standalone_label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(([A-Z])\)|\b([A-Z])\b").unwrap())
}

/// Contents of the last `\boxed{...}`, with nested braces balanced.
fn last_boxed(text: &str) -> Option<&str> {
    let start = text.rfind("\\boxed{")? + "\\boxed{".len();
    let mut depth = 1usize;
    for (i, c) in text[start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Text after the last final-answer marker, up to the end of its line.
fn after_marker(text: &str) -> Option<&str> {
    let m = marker_re().find_iter(text).last()?;
    let rest = &text[m.end()..];
    let line = rest.lines().next().unwrap_or("").trim();
    (!line.is_empty()).then_some(line)
}

fn last_segment(text: &str) -> Option<&str> {
    text.lines().map(str::trim).rfind(|l| !l.is_empty())
}

fn last_numeric(text: &str) -> Option<&str> {
    numeric_re().find_iter(text).last().map(|m| m.as_str())
}

/// Canonical form of a simple number: no grouping commas, no trailing zeros.
fn canonical_number(s: &str) -> Option<String> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace() && *c != ',').collect();
    if let Some((num, den)) = compact.split_once('/') {
        let n = canonical_number(num)?;
        let d = canonical_number(den)?;
        return Some(format!("{n}/{d}"));
    }
    let v: f64 = compact.parse().ok()?;
    if !v.is_finite() {
        return None;
    }
    if v == v.trunc() && v.abs() < 1e15 {
        return Some(format!("{}", v as i64));
    }
    let mut out = format!("{v}");
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
    }
    Some(out)
}

/// Lowercases, drops whitespace and surrounding punctuation, and
/// canonicalizes plain numbers.
pub fn normalize(raw: &str) -> String {
    let stripped = raw.trim().trim_start_matches('$').trim_end_matches(['$', '.', ',', ';', '!']).trim();
    if let Some(n) = canonical_number(stripped) {
        return n;
    }
    let lowered: String = stripped.to_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
    lowered.trim_matches(|c: char| c.is_ascii_punctuation() && c != '-' && c != '/').to_string()
}

fn extract_math(text: &str) -> Option<String> {
    if let Some(b) = last_boxed(text) {
        return Some(normalize(b)).filter(|s| !s.is_empty());
    }
    if let Some(m) = after_marker(text) {
        return Some(normalize(last_numeric(m).unwrap_or(m))).filter(|s| !s.is_empty());
    }
    last_segment(text).and_then(last_numeric).map(normalize)
}

fn extract_choice(text: &str, options: &[String]) -> Option<String> {
    let valid = |c: char| {
        let idx = (c.to_ascii_uppercase() as u8).wrapping_sub(b'A') as usize;
        options.is_empty() && c.is_ascii_alphabetic() || idx < options.len()
    };
    let candidate = last_boxed(text).or_else(|| after_marker(text)).or_else(|| last_segment(text))?;
    if let Some(c) = label_re().captures(candidate).and_then(|c| c[1].chars().next()) {
        if valid(c) {
            return Some(c.to_ascii_uppercase().to_string());
        }
    }
    let norm = normalize(candidate);
    if let Some(i) = options.iter().position(|o| normalize(o) == norm) {
        return Some(option_label(i).to_string());
    }
    if let Some(i) = options.iter().position(|o| !normalize(o).is_empty() && norm.contains(&normalize(o))) {
        return Some(option_label(i).to_string());
    }
    standalone_label_re()
        .captures_iter(candidate)
        .filter_map(|c| c.get(1).or_else(|| c.get(2)).and_then(|m| m.as_str().chars().next()))
        .filter(|c| *c != 'I' || options.len() > 8)
        .filter(|c| valid(*c))
        .last()
        .map(|c| c.to_string())
}

/// Extracts and normalizes the final answer of a reasoning chain.
///
/// Math: boxed expression, else final-answer marker, else the last numeric
/// expression of the last non-empty line. Multiple choice: a canonical
/// option label, mapping option text back to its label.
pub fn extract_answer(chain: &str, kind: AnswerKind, options: &[String]) -> Option<String> {
    match kind {
        AnswerKind::Math => extract_math(chain),
        AnswerKind::MultipleChoice => extract_choice(chain, options),
        AnswerKind::FreeText => {
            let raw = last_boxed(chain).or_else(|| after_marker(chain)).or_else(|| last_segment(chain))?;
            Some(normalize(raw)).filter(|s| !s.is_empty())
        }
    }
}

/// Exact match after normalization on both sides.
pub fn answers_match(predicted: &str, gold: &str, kind: AnswerKind, options: &[String]) -> bool {
    let gold_norm = match kind {
        AnswerKind::MultipleChoice => extract_choice(gold, options).unwrap_or_else(|| normalize(gold)),
        _ => normalize(gold),
    };
    let pred_norm = match kind {
        AnswerKind::MultipleChoice => predicted.to_ascii_uppercase(),
        _ => normalize(predicted),
    };
    pred_norm == gold_norm
}
