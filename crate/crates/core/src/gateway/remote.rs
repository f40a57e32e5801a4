//! HTTP client for remote language-model endpoints.
//!
//! Scoring, rewriting, and next-token access all use one wire shape, the
//! completions-with-logprobs protocol: POST a JSON body
//!
//! ```json
//! {"model": "...", "prompt": "...", "max_tokens": 0, "temperature": 0.0,
//!  "logprobs": 5, "echo": true}
//! ```
//!
//! and read `choices[0].logprobs.tokens / token_logprobs / top_logprobs` from
//! the response. Scoring echoes the prompt with `max_tokens: 0`; rewriting
//! sends a non-zero `max_tokens` and reads `choices[0].text`; next-token access
//! sends `max_tokens: 1` and reads `top_logprobs[0]`.
//!
//! Remote distributions are truncated to `top_k` entries. The rank of a
//! realized token outside the top-k is reported as `top_k + 1` with
//! `rank_exact = false`, and entropies are computed over the top-k entries
//! plus one pseudo-symbol carrying the residual mass.
//!
//! Responses may carry an optional top-level `memory_bytes` field; the client
//! keeps the maximum seen so overhead records can tag endpoint-reported
//! accelerator memory.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::gateway::{
    BackendDescriptor, EmbeddingBackend, NextTokenDistribution, PositionDistribution,
    RewriteBackend, RewriteRequest, ScoredText, ScoringBackend, TokenScore,
};
use crate::{Error, Result};

/// Connection settings shared by the remote adapters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub auth_token: Option<String>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_top_k() -> usize {
    5
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_retries() -> usize {
    2
}
fn default_max_in_flight() -> usize {
    4
}

/// Counting semaphore bounding concurrent in-flight requests.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.sem.permits.lock().unwrap();
        *n += 1;
        self.sem.cv.notify_one();
    }
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<usize>,
    echo: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    memory_bytes: Option<u64>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    text: String,
    #[serde(default)]
    logprobs: Option<LogprobBlock>,
}

#[derive(Deserialize)]
struct LogprobBlock {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Vec<Option<BTreeMap<String, f64>>>,
}

/// Shared HTTP plumbing: bounded concurrency, per-request timeout, and
/// idempotent retries on transport failures and 5xx responses.
struct HttpClient {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    semaphore: Semaphore,
    peak_memory: AtomicU64,
}

impl HttpClient {
    fn new(cfg: RemoteConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| Error::Http {
                url: cfg.endpoint.clone(),
                message: e.to_string(),
            })?;
        Ok(HttpClient {
            semaphore: Semaphore::new(cfg.max_in_flight),
            peak_memory: AtomicU64::new(0),
            cfg,
            client,
        })
    }

    fn post_json<T: serde::de::DeserializeOwned>(&self, body: &impl Serialize) -> Result<T> {
        let _permit = self.semaphore.acquire();
        let mut last_err = String::new();
        for _attempt in 0..=self.cfg.max_retries {
            let mut req = self.client.post(&self.cfg.endpoint).json(body);
            if let Some(token) = &self.cfg.auth_token {
                req = req.header("Authorization", format!("Bearer {token}"));
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_server_error() {
                        last_err = format!("server error {status}");
                        continue;
                    }
                    if !status.is_success() {
                        let text = resp.text().unwrap_or_default();
                        return Err(Error::Http {
                            url: self.cfg.endpoint.clone(),
                            message: format!("status {status}: {text}"),
                        });
                    }
                    return resp.json::<T>().map_err(|e| Error::Http {
                        url: self.cfg.endpoint.clone(),
                        message: format!("invalid response body: {e}"),
                    });
                }
                Err(e) => {
                    last_err = e.to_string();
                }
            }
        }
        Err(Error::Http {
            url: self.cfg.endpoint.clone(),
            message: format!(
                "transport failed after {} attempts: {last_err}",
                self.cfg.max_retries + 1
            ),
        })
    }

    fn completion(&self, body: &CompletionBody<'_>) -> Result<CompletionResponse> {
        let resp: CompletionResponse = self.post_json(body)?;
        if let Some(mem) = resp.memory_bytes {
            self.peak_memory.fetch_max(mem, Ordering::SeqCst);
        }
        Ok(resp)
    }

    fn reported_peak_memory(&self) -> Option<u64> {
        match self.peak_memory.load(Ordering::SeqCst) {
            0 => None,
            v => Some(v),
        }
    }
}

/// Remote scoring backend (truncated next-token distributions).
pub struct RemoteScoringBackend {
    descriptor: BackendDescriptor,
    http: HttpClient,
}

impl RemoteScoringBackend {
    pub fn new(id: impl Into<String>, cfg: RemoteConfig) -> Result<Self> {
        let descriptor = BackendDescriptor::remote_endpoint(id, cfg.top_k);
        Ok(RemoteScoringBackend {
            descriptor,
            http: HttpClient::new(cfg)?,
        })
    }

    fn top_k(&self) -> usize {
        self.descriptor.top_k.unwrap_or(default_top_k())
    }

    fn echo_logprobs(&self, text: &str) -> Result<LogprobBlock> {
        let body = CompletionBody {
            model: &self.http.cfg.model,
            prompt: text,
            max_tokens: 0,
            temperature: 0.0,
            logprobs: Some(self.top_k()),
            echo: true,
            seed: None,
        };
        let resp = self.http.completion(&body)?;
        let choice = resp.choices.into_iter().next().ok_or_else(|| {
            Error::backend(&self.descriptor.id, "response contained no choices")
        })?;
        choice.logprobs.ok_or_else(|| {
            Error::backend(&self.descriptor.id, "response missing logprobs block")
        })
    }

    fn dist_from_top(&self, top: &BTreeMap<String, f64>) -> NextTokenDistribution {
        let entries: Vec<(String, f64)> = top.iter().map(|(t, lp)| (t.clone(), *lp)).collect();
        let mass: f64 = entries.iter().map(|(_, lp)| lp.exp()).sum();
        NextTokenDistribution::new(entries, (1.0 - mass).max(0.0))
    }
}

impl ScoringBackend for RemoteScoringBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn score_text(&self, text: &str) -> Result<ScoredText> {
        if text.trim().is_empty() {
            return Err(Error::backend(&self.descriptor.id, "cannot score empty text"));
        }
        let block = self.echo_logprobs(text)?;
        let top_k = self.top_k() as u32;
        let mut tokens = Vec::new();
        for (i, tok) in block.tokens.iter().enumerate() {
            // positions without a logprob (typically the first) are skipped
            let Some(Some(lp)) = block.token_logprobs.get(i) else {
                continue;
            };
            let top = block.top_logprobs.get(i).and_then(|t| t.as_ref());
            let (rank, rank_exact, entropy) = match top {
                Some(map) => {
                    let dist = self.dist_from_top(map);
                    match dist.rank_of(tok) {
                        Some(r) => (r, true, dist.entropy()),
                        None => (top_k + 1, false, dist.entropy()),
                    }
                }
                None => (top_k + 1, false, 0.0),
            };
            tokens.push(TokenScore {
                token: tok.clone(),
                logprob: lp.min(0.0),
                rank,
                entropy,
                rank_exact,
            });
        }
        if tokens.is_empty() {
            return Err(Error::backend(
                &self.descriptor.id,
                "endpoint returned no scored tokens",
            ));
        }
        Ok(ScoredText {
            tokens,
            backend_id: self.descriptor.id.clone(),
        })
    }

    fn next_token_distribution(&self, prefix: &str) -> Result<NextTokenDistribution> {
        let body = CompletionBody {
            model: &self.http.cfg.model,
            prompt: prefix,
            max_tokens: 1,
            temperature: 0.0,
            logprobs: Some(self.top_k()),
            echo: false,
            seed: None,
        };
        let resp = self.http.completion(&body)?;
        let choice = resp.choices.into_iter().next().ok_or_else(|| {
            Error::backend(&self.descriptor.id, "response contained no choices")
        })?;
        let block = choice.logprobs.ok_or_else(|| {
            Error::backend(&self.descriptor.id, "response missing logprobs block")
        })?;
        let top = block
            .top_logprobs
            .first()
            .and_then(|t| t.as_ref())
            .ok_or_else(|| {
                Error::backend(&self.descriptor.id, "response missing top_logprobs")
            })?;
        Ok(self.dist_from_top(top))
    }

    fn position_distributions(&self, text: &str) -> Result<Vec<PositionDistribution>> {
        let block = self.echo_logprobs(text)?;
        let mut out = Vec::new();
        for (i, tok) in block.tokens.iter().enumerate() {
            let Some(Some(lp)) = block.token_logprobs.get(i) else {
                continue;
            };
            let Some(Some(map)) = block.top_logprobs.get(i) else {
                continue;
            };
            out.push(PositionDistribution {
                realized: tok.clone(),
                realized_logprob: lp.min(0.0),
                dist: self.dist_from_top(map),
            });
        }
        if out.is_empty() {
            return Err(Error::backend(
                &self.descriptor.id,
                "endpoint returned no scored positions",
            ));
        }
        Ok(out)
    }

    fn reported_peak_memory(&self) -> Option<u64> {
        self.http.reported_peak_memory()
    }
}

/// Remote rewriter using the same completions endpoint with `max_tokens > 0`.
pub struct RemoteRewriter {
    id: String,
    http: HttpClient,
}

impl RemoteRewriter {
    pub fn new(id: impl Into<String>, cfg: RemoteConfig) -> Result<Self> {
        Ok(RemoteRewriter {
            id: id.into(),
            http: HttpClient::new(cfg)?,
        })
    }
}

impl RewriteBackend for RemoteRewriter {
    fn id(&self) -> &str {
        &self.id
    }

    fn rewrite(&self, req: &RewriteRequest) -> Result<String> {
        req.validate()?;
        let prompt = match &req.instruction {
            Some(instruction) => format!("{instruction}\n\n{}", req.text),
            None => req.text.clone(),
        };
        let body = CompletionBody {
            model: &self.http.cfg.model,
            prompt: &prompt,
            max_tokens: req.max_tokens,
            temperature: req.temperature,
            logprobs: None,
            echo: false,
            seed: req.seed,
        };
        let resp = self.http.completion(&body)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .unwrap_or_default();
        if text.trim().is_empty() {
            return Err(Error::EmptyCompletion { id: self.id.clone() });
        }
        Ok(text)
    }

    fn reported_peak_memory(&self) -> Option<u64> {
        self.http.reported_peak_memory()
    }
}

#[derive(Serialize)]
struct EmbeddingBody<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    embedding: Vec<f64>,
}

/// Remote embedder: POST `{"model", "input"}` -> `{"embedding": [..]}`.
pub struct RemoteEmbedder {
    id: String,
    dim: usize,
    http: HttpClient,
}

impl RemoteEmbedder {
    /// `dim` is the endpoint's fixed embedding dimension, verified per response.
    pub fn new(id: impl Into<String>, dim: usize, cfg: RemoteConfig) -> Result<Self> {
        Ok(RemoteEmbedder {
            id: id.into(),
            dim,
            http: HttpClient::new(cfg)?,
        })
    }
}

impl EmbeddingBackend for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(Error::backend(&self.id, "cannot embed empty text"));
        }
        let body = EmbeddingBody {
            model: &self.http.cfg.model,
            input: text,
        };
        let resp: EmbeddingResponse = self.http.post_json(&body)?;
        if resp.embedding.len() != self.dim {
            return Err(Error::backend(
                &self.id,
                format!(
                    "endpoint returned dimension {}, expected {}",
                    resp.embedding.len(),
                    self.dim
                ),
            ));
        }
        if resp.embedding.iter().all(|v| *v == 0.0) {
            return Err(Error::backend(&self.id, "endpoint returned an all-zero embedding"));
        }
        Ok(resp.embedding)
    }

    fn reported_peak_memory(&self) -> Option<u64> {
        self.http.reported_peak_memory()
    }
}
