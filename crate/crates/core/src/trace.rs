//! Append-only decision trace, serialized as newline-delimited JSON.

use std::fmt;
use std::io::{BufRead, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::budget::{BudgetSummary, ChargeCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Select,
    Generate,
    OracleScore,
    Verify,
    Action,
    Repair,
    Stop,
    Abstain,
    FallbackStart,
    Charge,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub episode: String,
    pub seq: u64,
    pub kind: TraceKind,
    pub payload: Value,
    /// Logical clock (equal to `seq`) unless wall-clock stamping is enabled,
    /// in which case milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    #[default]
    Logical,
    Wall,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {source}")]
    Decode { line: usize, source: serde_json::Error },
    #[error("sequence numbers not strictly increasing at line {0}")]
    OutOfOrder(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeRecord {
    pub category: ChargeCategory,
    pub calls: u32,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub estimated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    /// Transport-level retries behind this call; not charged.
    #[serde(default)]
    pub transport_retries: u32,
}

#[derive(Debug, Clone)]
pub struct TraceRecorder {
    episode: String,
    clock: Clock,
    events: Vec<TraceEvent>,
}

impl TraceRecorder {
    pub fn new(episode: impl Into<String>) -> Self {
        Self::with_clock(episode, Clock::Logical)
    }

    pub fn with_clock(episode: impl Into<String>, clock: Clock) -> Self {
        Self { episode: episode.into(), clock, events: Vec::new() }
    }

    pub fn episode(&self) -> &str {
        &self.episode
    }

    pub fn record(&mut self, kind: TraceKind, payload: impl Serialize) {
        let seq = self.events.len() as u64;
        let timestamp = match self.clock {
            Clock::Logical => seq,
            Clock::Wall => SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
        };
        let payload = serde_json::to_value(payload).unwrap_or(Value::Null);
        self.events.push(TraceEvent { episode: self.episode.clone(), seq, kind, payload, timestamp });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}

pub fn write_ndjson<W: Write>(mut out: W, events: &[TraceEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_ndjson(events: &[TraceEvent]) -> String {
    let mut buf = Vec::new();
    write_ndjson(&mut buf, events).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events: Vec<TraceEvent> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: TraceEvent = serde_json::from_str(&line).map_err(|source| TraceError::Decode { line: i + 1, source })?;
        if events.last().is_some_and(|prev| prev.episode == event.episode && prev.seq >= event.seq) {
            return Err(TraceError::OutOfOrder(i + 1));
        }
        events.push(event);
    }
    Ok(events)
}

/// Charge events of a trace, in order.
pub fn charges(events: &[TraceEvent]) -> Vec<ChargeRecord> {
    events.iter().filter(|e| e.kind == TraceKind::Charge).filter_map(|e| serde_json::from_value(e.payload.clone()).ok()).collect()
}

/// Checks that the trace's charge events add up to the ledger summary.
pub fn reconcile(events: &[TraceEvent], summary: &BudgetSummary) -> Result<(), String> {
    let recs = charges(events);
    let calls: u32 = recs.iter().map(|c| c.calls).sum();
    if calls != summary.total_calls {
        return Err(format!("trace charges {calls} call(s), ledger {}", summary.total_calls));
    }
    for cat in ChargeCategory::ALL {
        let c: u32 = recs.iter().filter(|r| r.category == cat).map(|r| r.calls).sum();
        if c != summary.calls(cat) {
            return Err(format!("{cat}: trace {c}, ledger {}", summary.calls(cat)));
        }
    }
    let tokens: u64 = recs.iter().map(|c| c.tokens_in + c.tokens_out).sum();
    if tokens != summary.total_tokens() {
        return Err(format!("trace tokens {tokens}, ledger {}", summary.total_tokens()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn logical_clock_round_trip() {
        let mut t = TraceRecorder::new("p-s0");
        t.record(TraceKind::Select, json!({"node": 0}));
        t.record(
            TraceKind::Charge,
            ChargeRecord {
                category: ChargeCategory::Generation,
                calls: 1,
                tokens_in: 3,
                tokens_out: 4,
                estimated: true,
                request: None,
                fingerprint: None,
                transport_retries: 0,
            },
        );
        let text = to_ndjson(t.events());
        assert_eq!(text.lines().count(), 2);
        let back = read_ndjson(text.as_bytes()).unwrap();
        assert_eq!(back, t.events());
        assert_eq!(back[1].timestamp, 1);
        assert_eq!(charges(&back).len(), 1);
    }

    #[test]
    fn rejects_out_of_order() {
        let mut t = TraceRecorder::new("e");
        t.record(TraceKind::Stop, json!({}));
        t.record(TraceKind::Stop, json!({}));
        let mut lines: Vec<&str> = Vec::new();
        let text = to_ndjson(t.events());
        lines.extend(text.lines().rev());
        assert!(matches!(read_ndjson(lines.join("\n").as_bytes()), Err(TraceError::OutOfOrder(2))));
    }
}
