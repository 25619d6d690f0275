//! Shared test support: independent brute-force reference implementations
//! and a minimal chat-completions server.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use metareason::evaluation::PredictionRecord;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub mod oracle {
    use super::PredictionRecord;

    pub fn step_reward(sem: f64, log: f64, fix: f64) -> f64 {
        [(2.0, sem), (5.0, log), (3.0, fix)].iter().map(|(w, x)| w * x).sum::<f64>() / 10.0
    }

    pub fn process_value(rewards: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, r) in rewards.iter().enumerate() {
            acc += (r - acc) / (i + 1) as f64;
        }
        acc
    }

    pub fn combined(v_out: f64, v_proc: f64, lambda: f64) -> f64 {
        v_proc + lambda * (v_out - v_proc)
    }

    pub fn ucb(v: f64, visits: u64, total: u64, beta: f64) -> f64 {
        v + beta * ((1.0 + total as f64).ln() / (1.0 + visits as f64)).sqrt()
    }

    fn answered(records: &[PredictionRecord]) -> Vec<(String, f64, bool)> {
        records.iter().filter(|r| r.answer.is_some()).map(|r| (r.episode.clone(), r.confidence.unwrap(), r.correct)).collect()
    }

    /// Bins scanned one by one; bin `b` holds confidences with
    /// `b <= c * bins < b + 1`, and the last bin also holds `c = 1`.
    pub fn ece(records: &[PredictionRecord], bins: usize) -> f64 {
        let rs = answered(records);
        let n = rs.len() as f64;
        let mut total = 0.0;
        for b in 0..bins {
            let members: Vec<&(String, f64, bool)> = rs
                .iter()
                .filter(|(_, c, _)| {
                    let x = c * bins as f64;
                    (x >= b as f64 && x < (b + 1) as f64) || (b == bins - 1 && x >= bins as f64)
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            let k = members.len() as f64;
            let acc = members.iter().filter(|m| m.2).count() as f64 / k;
            let conf = members.iter().map(|m| m.1).sum::<f64>() / k;
            total += k / n * (acc - conf).abs();
        }
        total
    }

    pub fn brier(records: &[PredictionRecord]) -> f64 {
        let rs = answered(records);
        rs.iter().map(|(_, c, ok)| (c - if *ok { 1.0 } else { 0.0 }).powi(2)).sum::<f64>() / rs.len() as f64
    }

    /// Builds each covered set by repeatedly taking the most confident
    /// remaining record (lowest id on ties), then integrates the explicit
    /// point list `(0, risk_1), (1/n, risk_1), ..., (1, risk_n)`.
    pub fn aurc(records: &[PredictionRecord]) -> f64 {
        let mut pool = answered(records);
        let n = pool.len();
        let mut order = Vec::new();
        while !pool.is_empty() {
            let mut best = 0;
            for i in 1..pool.len() {
                let (a, b) = (&pool[i], &pool[best]);
                if a.1 > b.1 || (a.1 == b.1 && a.0 < b.0) {
                    best = i;
                }
            }
            order.push(pool.remove(best));
        }
        let mut points = Vec::new();
        for k in 1..=n {
            let errors = order[..k].iter().filter(|r| !r.2).count();
            points.push((k as f64 / n as f64, errors as f64 / k as f64));
        }
        points.insert(0, (0.0, points[0].1));
        points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
    }
}

pub fn record(episode: impl Into<String>, confidence: f64, correct: bool) -> PredictionRecord {
    PredictionRecord { episode: episode.into(), answer: Some("a".into()), confidence: Some(confidence), correct, calls: 1, tokens: 1 }
}

fn digest_u64(text: &str) -> u64 {
    let d = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Deterministic completion text for a rendered request, keyed on its content.
pub fn mock_completion(user: &str) -> String {
    let h = digest_u64(user);
    let score = |salt: u64| 0.3 + ((h >> (salt * 7)) % 65) as f64 / 100.0;
    if user.contains("Semantic=0.xx") {
        let steps = user.split("Trajectory (").nth(1).and_then(|rest| rest.split(' ').next()).and_then(|n| n.parse::<usize>().ok()).unwrap_or(1);
        return (1..=steps)
            .map(|i| format!("Step {i}: Semantic={:.2}, Logical={:.2}, Fix={:.2}", score(i as u64), score(i as u64 + 3), score(i as u64 + 5) - 0.3))
            .collect::<Vec<_>>()
            .join("\n");
    }
    if user.contains("Candidate reasoning trajectories") {
        let n = user.matches("Candidate ").count().saturating_sub(1).max(1);
        return (1..=n).map(|k| format!("Candidate {k}: {:.2}", score(k as u64))).collect::<Vec<_>>().join("\n");
    }
    if user.contains("Reasoning trajectory:") {
        return format!("Confidence: {:.2}", score(1));
    }
    match h % 4 {
        0 => "Let me set up the quantities first.".to_string(),
        k => format!("Combining the parts gives the total.\nFinal answer: {}", 10 + k),
    }
}

/// Serves chat completions on a loopback port until the process exits.
/// The very first request gets HTTP 500 to exercise transport retries.
pub struct MockServer {
    pub endpoint: String,
    pub requests: Arc<AtomicUsize>,
}

pub fn spawn_mock_server() -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&requests);
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let counter = Arc::clone(&counter);
            thread::spawn(move || serve(stream, &counter));
        }
    });
    MockServer { endpoint, requests }
}

fn serve(stream: TcpStream, counter: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut out = stream;
    loop {
        let mut length = 0usize;
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let l = line.trim_end();
            if l.is_empty() {
                break;
            }
            if let Some(v) = l.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
        let mut body = vec![0u8; length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let n = counter.fetch_add(1, Ordering::SeqCst);
        let (status, payload) = if n == 0 {
            ("500 Internal Server Error", json!({"error": "warming up"}))
        } else {
            let req: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let user = req.pointer("/messages/1/content").and_then(Value::as_str).unwrap_or_default();
            let text = mock_completion(user);
            let usage = json!({"prompt_tokens": user.split_whitespace().count(), "completion_tokens": text.split_whitespace().count()});
            ("200 OK", json!({"choices": [{"message": {"role": "assistant", "content": text}}], "usage": usage}))
        };
        let body = payload.to_string();
        let head = format!("HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n", body.len());
        if out.write_all(head.as_bytes()).and_then(|_| out.write_all(body.as_bytes())).is_err() {
            return;
        }
    }
}
