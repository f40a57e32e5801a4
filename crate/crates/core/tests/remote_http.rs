//! Wire-level tests for the remote backends against a local stub endpoint.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use evadebench_core::detectors::Direction;
use evadebench_core::gateway::remote::{RemoteConfig, RemoteRewriter, RemoteScoringBackend};
use evadebench_core::gateway::{RewriteBackend, RewriteRequest, ScoringBackend};
use evadebench_core::model_detectors::ExternalDetector;

/// Minimal HTTP/1.1 stub: each request body (JSON) goes through the handler,
/// which returns (status, body). Requests are logged.
struct StubServer {
    addr: String,
    requests: Arc<Mutex<Vec<serde_json::Value>>>,
    hits: Arc<AtomicUsize>,
}

impl StubServer {
    fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &serde_json::Value) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let addr = format!("http://{}/", listener.local_addr().unwrap());
        let requests: Arc<Mutex<Vec<serde_json::Value>>> = Arc::new(Mutex::new(Vec::new()));
        let hits = Arc::new(AtomicUsize::new(0));
        let log = requests.clone();
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0usize;
                let mut line = String::new();
                // request line + headers
                loop {
                    line.clear();
                    if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(rest) = lower.strip_prefix("content-length:") {
                        content_length = rest.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0u8; content_length];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                let value: serde_json::Value =
                    serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
                log.lock().unwrap().push(value.clone());
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let (status, response_body) = handler(n, &value);
                let reason = if status == 200 { "OK" } else { "ERR" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{response_body}",
                    response_body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        StubServer {
            addr,
            requests,
            hits,
        }
    }

    fn config(&self, top_k: usize) -> RemoteConfig {
        RemoteConfig {
            endpoint: self.addr.clone(),
            model: "stub-model".into(),
            auth_token: None,
            top_k,
            timeout_ms: 5_000,
            max_retries: 2,
            max_in_flight: 2,
        }
    }
}

fn echo_scoring_body() -> String {
    serde_json::json!({
        "choices": [{
            "text": "",
            "logprobs": {
                "tokens": ["the", "cat", "sat"],
                "token_logprobs": [null, -0.5, -1.2],
                "top_logprobs": [
                    null,
                    {"cat": -0.5, "dog": -1.6, "rat": -2.3},
                    {"on": -0.9, "sat": -1.2}
                ]
            }
        }],
        "memory_bytes": 2048
    })
    .to_string()
}

#[test]
fn scoring_parses_completions_with_logprobs_shape() {
    let server = StubServer::start(|_, _| (200, echo_scoring_body()));
    let backend = RemoteScoringBackend::new("remote", server.config(3)).unwrap();
    let scored = backend.score_text("the cat sat").unwrap();

    // position 0 has a null logprob and is skipped
    assert_eq!(scored.tokens.len(), 2);
    let cat = &scored.tokens[0];
    assert_eq!(cat.token, "cat");
    assert_eq!(cat.logprob, -0.5);
    assert_eq!(cat.rank, 1);
    assert!(cat.rank_exact);
    // entropy over top entries plus tail pseudo-symbol
    let probs = [(-0.5f64).exp(), (-1.6f64).exp(), (-2.3f64).exp()];
    let tail: f64 = 1.0 - probs.iter().sum::<f64>();
    let mut expected = -probs.iter().map(|p| p * p.ln()).sum::<f64>();
    expected -= tail * tail.ln();
    assert!((cat.entropy - expected).abs() < 1e-9);

    // the request carried the protocol fields
    let req = server.requests.lock().unwrap()[0].clone();
    assert_eq!(req["model"], "stub-model");
    assert_eq!(req["max_tokens"], 0);
    assert_eq!(req["echo"], true);
    assert_eq!(req["logprobs"], 3);

    // endpoint-reported memory captured
    assert_eq!(ScoringBackend::reported_peak_memory(&backend), Some(2048));
}

#[test]
fn realized_token_outside_top_k_gets_bucket_rank() {
    let server = StubServer::start(|_, _| (200, echo_scoring_body()));
    let backend = RemoteScoringBackend::new("remote", server.config(2)).unwrap();
    let scored = backend.score_text("the cat sat").unwrap();
    let sat = &scored.tokens[1];
    // "sat" IS in its top map; "cat" is in its map too. Check rank_exact logic
    // via a token absent from the map instead:
    assert!(sat.rank_exact);

    // now a response whose top map lacks the realized token
    let server2 = StubServer::start(|_, _| {
        (
            200,
            serde_json::json!({
                "choices": [{
                    "logprobs": {
                        "tokens": ["x", "y"],
                        "token_logprobs": [null, -3.0],
                        "top_logprobs": [null, {"a": -0.2, "b": -1.8}]
                    }
                }]
            })
            .to_string(),
        )
    });
    let backend2 = RemoteScoringBackend::new("remote2", server2.config(2)).unwrap();
    let scored2 = backend2.score_text("x y").unwrap();
    let y = &scored2.tokens[0];
    assert_eq!(y.rank, 3); // top_k + 1
    assert!(!y.rank_exact);
}

#[test]
fn next_token_distribution_has_top_k_entries_plus_tail() {
    let server = StubServer::start(|_, _| {
        (
            200,
            serde_json::json!({
                "choices": [{
                    "logprobs": {
                        "tokens": ["next"],
                        "token_logprobs": [-0.7],
                        "top_logprobs": [
                            {"a": -1.0, "b": -1.5, "c": -2.2, "d": -3.0, "e": -3.5}
                        ]
                    }
                }]
            })
            .to_string(),
        )
    });
    let backend = RemoteScoringBackend::new("remote", server.config(5)).unwrap();
    let dist = backend.next_token_distribution("some prefix").unwrap();
    assert_eq!(dist.entries.len(), 5);
    let mass: f64 = dist.entries.iter().map(|(_, lp)| lp.exp()).sum();
    assert!((dist.tail_mass - (1.0 - mass)).abs() < 1e-12);
    assert!(dist.tail_mass > 0.0);
    // request used max_tokens 1, no echo
    let req = server.requests.lock().unwrap()[0].clone();
    assert_eq!(req["max_tokens"], 1);
    assert_eq!(req["echo"], false);
}

#[test]
fn transport_failure_retries_idempotently() {
    // first request gets a 500, the retry succeeds; the scored result equals a
    // clean first-try run
    let flaky = StubServer::start(|n, _| {
        if n == 0 {
            (500, "{\"error\": \"transient\"}".to_string())
        } else {
            (200, echo_scoring_body())
        }
    });
    let clean = StubServer::start(|_, _| (200, echo_scoring_body()));
    let flaky_backend = RemoteScoringBackend::new("remote", flaky.config(3)).unwrap();
    let clean_backend = RemoteScoringBackend::new("remote", clean.config(3)).unwrap();
    let a = flaky_backend.score_text("the cat sat").unwrap();
    let b = clean_backend.score_text("the cat sat").unwrap();
    assert_eq!(a, b);
    assert_eq!(flaky.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn rewrite_uses_completion_text_and_rejects_empty() {
    let server = StubServer::start(|_, req| {
        let prompt = req["prompt"].as_str().unwrap_or("");
        (
            200,
            serde_json::json!({
                "choices": [{"text": format!("rewritten: {prompt}")}]
            })
            .to_string(),
        )
    });
    let rewriter = RemoteRewriter::new("remote-rw", server.config(5)).unwrap();
    let out = rewriter
        .rewrite(
            &RewriteRequest::new("original text")
                .with_instruction("Paraphrase.")
                .with_seed(7),
        )
        .unwrap();
    assert!(out.starts_with("rewritten: Paraphrase."));
    assert!(out.contains("original text"));

    let empty = StubServer::start(|_, _| {
        (200, serde_json::json!({"choices": [{"text": "  "}]}).to_string())
    });
    let rewriter2 = RemoteRewriter::new("remote-rw", empty.config(5)).unwrap();
    assert!(rewriter2.rewrite(&RewriteRequest::new("x")).is_err());
}

#[test]
fn external_detector_contract() {
    let server = StubServer::start(|_, req| {
        let text = req["text"].as_str().unwrap_or("");
        // echo a fixed score, encoding order in a side channel for the batch test
        let score = if text.contains("second") { 0.3 } else { 0.7 };
        (200, serde_json::json!({"score": score}).to_string())
    });
    let det = ExternalDetector::register(
        "radar",
        server.addr.clone(),
        Direction::HigherIsMgt,
        5_000,
    )
    .unwrap();
    assert_eq!(det.score_text("first text").unwrap(), 0.7);

    // batch preserves request order (verified against the stub's request log)
    let log_before = server.requests.lock().unwrap().len();
    let texts = ["first text", "second text", "third text"];
    let scores = det.score_batch(&texts).unwrap();
    assert_eq!(scores, vec![0.7, 0.3, 0.7]);
    let log = server.requests.lock().unwrap();
    let logged: Vec<&str> = log[log_before..]
        .iter()
        .map(|r| r["text"].as_str().unwrap())
        .collect();
    assert_eq!(logged, texts);
}

#[test]
fn external_detector_rejects_out_of_range_score() {
    let server = StubServer::start(|n, _| {
        if n == 0 {
            // health check passes
            (200, serde_json::json!({"score": 0.5}).to_string())
        } else {
            (200, serde_json::json!({"score": 1.3}).to_string())
        }
    });
    let det = ExternalDetector::register(
        "radar",
        server.addr.clone(),
        Direction::HigherIsMgt,
        5_000,
    )
    .unwrap();
    assert!(det.score_text("anything").is_err());
}

#[test]
fn external_detector_cache_hits_only_byte_exact_inputs() {
    let server = StubServer::start(|_, _| (200, serde_json::json!({"score": 0.5}).to_string()));
    let det = ExternalDetector::register(
        "radar",
        server.addr.clone(),
        Direction::HigherIsMgt,
        5_000,
    )
    .unwrap()
    .with_cache();
    let before = det.request_count();
    det.score_text("same text").unwrap();
    det.score_text("same text").unwrap(); // cache hit
    det.score_text("same text ").unwrap(); // byte-distinct: new request
    assert_eq!(det.request_count() - before, 2);

    // without the cache every byte-distinct input always produces a request
    let det2 = ExternalDetector::register(
        "radar2",
        server.addr.clone(),
        Direction::HigherIsMgt,
        5_000,
    )
    .unwrap();
    let before2 = det2.request_count();
    det2.score_text("same text").unwrap();
    det2.score_text("same text").unwrap();
    assert_eq!(det2.request_count() - before2, 2);
}

#[test]
fn registration_health_check_rejects_unreachable_endpoints() {
    // nothing listens on this port
    let result = ExternalDetector::register(
        "dead",
        "http://127.0.0.1:9/",
        Direction::HigherIsMgt,
        500,
    );
    match result {
        Err(evadebench_core::Error::Http { .. }) => {}
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("registration against a dead endpoint must fail"),
    }
}
