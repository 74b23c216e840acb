//! Chat-completions stand-in on a local socket. Answers come from the
//! oracle; every fifth of the first 50 distinct prompts gets a malformed
//! reply instead.
#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};
use specforge_core::backend::{OracleBackend, ReasoningBackend, ReasoningRequest, ResponseBody};
use specforge_core::{BackendKind, Derivation, Pipeline, RunConfig, RunReport};

use super::checks::{corpus_backend, corpus_config};

pub const CANNED: usize = 50;

const MALFORMED: [&str; 5] = [
    "I am not able to answer that.",
    "```json\n{\"verdict\": 42, \"pre\": 7}\n```",
    "```json\n{\"verdict\": \"holds\"",
    "```json\n{}\n```\n```json\n{}\n```",
    "```json\n[]\n```",
];

#[derive(Default)]
struct Book {
    /// Prompt text to (slot, reply).
    replies: HashMap<String, (usize, String)>,
    malformed: usize,
    http_requests: usize,
}

pub struct Stub {
    pub endpoint: String,
    book: Arc<Mutex<Book>>,
}

impl Stub {
    pub fn start(oracle: OracleBackend) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let endpoint = format!("http://{}/v1", listener.local_addr().unwrap());
        let book = Arc::new(Mutex::new(Book::default()));
        let oracle = Arc::new(oracle);
        let b = book.clone();
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                let Ok(conn) = conn else { continue };
                let (b, o) = (b.clone(), oracle.clone());
                std::thread::spawn(move || serve(conn, &b, &o));
            }
        });
        Stub { endpoint, book }
    }

    /// Distinct prompts answered so far.
    pub fn distinct(&self) -> usize {
        self.book.lock().unwrap().replies.len()
    }

    pub fn malformed_served(&self) -> usize {
        self.book.lock().unwrap().malformed
    }
}

fn serve(conn: TcpStream, book: &Mutex<Book>, oracle: &OracleBackend) {
    let mut reader = BufReader::new(conn.try_clone().unwrap());
    let mut conn = conn;
    loop {
        let mut len = 0usize;
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        loop {
            line.clear();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let l = line.trim_end();
            if l.is_empty() {
                break;
            }
            if let Some((k, v)) = l.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0u8; len];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let reply = answer(&body, book, oracle);
        let head = format!(
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            reply.len()
        );
        if conn.write_all(head.as_bytes()).and_then(|_| conn.write_all(reply.as_bytes())).is_err() {
            return;
        }
    }
}

fn answer(body: &[u8], book: &Mutex<Book>, oracle: &OracleBackend) -> String {
    let v: Value = serde_json::from_slice(body).unwrap_or(Value::Null);
    let prompt = v["messages"][1]["content"].as_str().unwrap_or_default().to_string();
    let content = {
        let mut b = book.lock().unwrap();
        b.http_requests += 1;
        let next = b.replies.len();
        if let Some((_, r)) = b.replies.get(&prompt) {
            r.clone()
        } else {
            let (content, bad) = if next < CANNED && next % 5 == 4 {
                (MALFORMED[(next / 5) % MALFORMED.len()].to_string(), true)
            } else {
                (well_formed(&prompt, oracle), false)
            };
            if bad {
                b.malformed += 1;
            }
            b.replies.insert(prompt, (next, content.clone()));
            content
        }
    };
    let tokens = 100 + content.len() as u64 / 4;
    json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"total_tokens": tokens},
    })
    .to_string()
}

fn requests_in(prompt: &str) -> Vec<ReasoningRequest> {
    const OPEN: &str = "## Request\n\n```json\n";
    let mut out = Vec::new();
    let mut rest = prompt;
    while let Some(i) = rest.find(OPEN) {
        let after = &rest[i + OPEN.len()..];
        let end = after.find("\n```").unwrap_or(after.len());
        if let Ok(r) = serde_json::from_str(&after[..end]) {
            out.push(r);
        }
        rest = &after[end..];
    }
    out
}

fn wire(body: &ResponseBody) -> Value {
    match body {
        ResponseBody::Specs { spec, expectations, notes } => json!({
            "pre": spec.pre,
            "post": spec.post,
            "expectations": expectations.iter().map(|e| json!({
                "callee": e.callee, "call_site": e.call_site, "pre": e.pre, "post": e.post,
            })).collect::<Vec<_>>(),
            "notes": notes,
        }),
        ResponseBody::Condition(c) | ResponseBody::Invariant(c) | ResponseBody::Merged(c) | ResponseBody::Formalized(c) => {
            json!(c)
        }
        ResponseBody::Verdict { verdict, counterexample, .. } => json!({"verdict": verdict, "counterexample": counterexample}),
        ResponseBody::TestCase {
            input,
            expected_signal,
            rationale,
        } => json!({"input": input, "expected_signal": expected_signal, "rationale": rationale}),
        ResponseBody::Partition { groups } => json!({"groups": groups}),
        ResponseBody::Unparsed { reason } => json!(reason),
    }
}

fn well_formed(prompt: &str, oracle: &OracleBackend) -> String {
    let reqs = requests_in(prompt);
    let items: Vec<Value> = reqs
        .iter()
        .map(|r| match oracle.submit(r) {
            Ok(resp) => wire(&resp.body),
            Err(e) => json!(format!("no answer: {e}")),
        })
        .collect();
    let v = if reqs.len() == 1 && !prompt.contains("# Request 1") {
        items.into_iter().next().unwrap()
    } else {
        json!({ "items": items })
    };
    format!("Here you go.\n```json\n{}\n```\n", serde_json::to_string_pretty(&v).unwrap())
}

pub fn remote_config(out: &Path, cache: &Path, endpoint: &str) -> RunConfig {
    let mut cfg = corpus_config("corpus", out, Derivation::TopDown);
    cfg.backend = BackendKind::Remote;
    cfg.backend_config.endpoint = endpoint.to_string();
    cfg.backend_config.cache_dir = Some(cache.to_path_buf());
    cfg.backend_config.retries = 1;
    cfg.backend_config.backoff_ms = 1;
    cfg.backend_config.timeout_secs = 30;
    cfg
}

pub fn malformed(response: &str) -> bool {
    !response.starts_with("Here you go.")
}

/// Corpus run against a fresh stub under `root/out`, caching in `root/cache`.
pub fn stub_run(root: &Path) -> Result<(RunReport, Stub), String> {
    let (_, oracle) = corpus_backend();
    let stub = Stub::start(oracle);
    let cfg = remote_config(&root.join("out"), &root.join("cache"), &stub.endpoint);
    let report = Pipeline::new(cfg).map_err(|e| e.to_string())?.run().map_err(|e| e.to_string())?;
    Ok((report, stub))
}
