#![allow(dead_code)]

//! Shared test support: a minimal mock chat-completion HTTP server.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

pub type Responder = dyn Fn(usize, &str) -> String + Send + Sync;

/// Minimal blocking HTTP/1.1 server answering chat-completion posts. The
/// responder sees (per-batch request counter, user prompt) and returns the
/// assistant content.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

pub fn spawn_mock(per_batch_responder: Arc<Responder>) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
    let addr = listener.local_addr().unwrap();
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&requests);
    let batch_counters: Arc<Mutex<BTreeMap<String, usize>>> =
        Arc::new(Mutex::new(BTreeMap::new()));
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let responder = Arc::clone(&per_batch_responder);
            let counter = Arc::clone(&counter);
            let batch_counters = Arc::clone(&batch_counters);
            std::thread::spawn(move || {
                let mut buf = Vec::new();
                let mut tmp = [0u8; 4096];
                let body_start;
                loop {
                    match stream.read(&mut tmp) {
                        Ok(0) => return,
                        Ok(n) => buf.extend_from_slice(&tmp[..n]),
                        Err(_) => return,
                    }
                    if let Some(pos) = find_subsequence(&buf, b"\r\n\r\n") {
                        body_start = pos + 4;
                        break;
                    }
                }
                let header_text = String::from_utf8_lossy(&buf[..body_start]).to_string();
                let content_length: usize = header_text
                    .lines()
                    .find_map(|l| {
                        let l = l.to_ascii_lowercase();
                        l.strip_prefix("content-length:")
                            .map(|v| v.trim().parse().unwrap_or(0))
                    })
                    .unwrap_or(0);
                while buf.len() < body_start + content_length {
                    match stream.read(&mut tmp) {
                        Ok(0) => break,
                        Ok(n) => buf.extend_from_slice(&tmp[..n]),
                        Err(_) => return,
                    }
                }
                let body = String::from_utf8_lossy(&buf[body_start..]).to_string();
                counter.fetch_add(1, Ordering::SeqCst);

                let parsed: serde_json::Value = serde_json::from_str(&body).unwrap_or_default();
                let user = parsed["messages"][1]["content"].as_str().unwrap_or("");
                // key the per-batch counter by the feature list in the prompt
                let batch_key = user
                    .rsplit_once('[')
                    .map(|(_, tail)| tail.to_string())
                    .unwrap_or_default();
                let attempt_no = {
                    let mut map = batch_counters.lock().unwrap();
                    let e = map.entry(batch_key).or_insert(0);
                    let v = *e;
                    *e += 1;
                    v
                };
                let content = responder(attempt_no, user);
                let envelope = serde_json::json!({
                    "choices": [{"message": {"role": "assistant", "content": content}}]
                })
                .to_string();
                let response = format!(
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    envelope.len(),
                    envelope
                );
                let _ = stream.write_all(response.as_bytes());
            });
        }
    });
    MockServer {
        url: format!("http://{addr}/v1/chat/completions"),
        requests,
    }
}

fn find_subsequence(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|window| window == needle)
}


/// Feature names mentioned in a rendered user prompt, in order.
pub fn names_in_prompt(user: &str, all_names: &[String]) -> Vec<String> {
    all_names
        .iter()
        .filter(|n| user.contains(&format!("\"{n}\"")))
        .cloned()
        .collect()
}

pub fn scores_json(names: &[String], value_of: impl Fn(&str) -> f64) -> String {
    let entries: Vec<String> = names
        .iter()
        .map(|n| format!("\"{n}\": {}", value_of(n)))
        .collect();
    format!("{{\"scores\": {{{}}}}}", entries.join(", "))
}

/// Deterministic per-feature base score in [0.1, 0.9].
pub fn base_value(name: &str) -> f64 {
    let h: u32 = name.bytes().map(u32::from).sum();
    0.1 + 0.8 * ((h % 64) as f64) / 63.0
}
