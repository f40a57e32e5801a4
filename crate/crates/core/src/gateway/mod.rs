//! Uniform access to language-model capabilities: per-token scoring, rewriting,
//! next-token distributions, and embeddings.
//!
//! Two backend families implement the traits here: the trained n-gram reference
//! model ([`ngram::NgramModel`]) for deterministic desk-scale runs, and the
//! HTTP client ([`remote`]) for production endpoints speaking the
//! completions-with-logprobs protocol.

pub mod embed;
pub mod ngram;
pub mod remote;
pub mod rewrite;
pub mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-token scoring record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token: String,
    /// Natural-log probability of the realized token, always <= 0.
    pub logprob: f64,
    /// 1-based rank of the realized token under the predictive distribution.
    pub rank: u32,
    /// Entropy of the predictive distribution in nats.
    pub entropy: f64,
    /// False when the rank is a lower-bound bucket from a truncated remote
    /// distribution (realized token outside top_k).
    pub rank_exact: bool,
}

/// Scored text: one [`TokenScore`] per model token, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredText {
    pub tokens: Vec<TokenScore>,
    pub backend_id: String,
}

impl ScoredText {
    pub fn mean_logprob(&self) -> f64 {
        self.tokens.iter().map(|t| t.logprob).sum::<f64>() / self.tokens.len() as f64
    }
}

/// Backend family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    NgramReference,
    RemoteEndpoint,
}

/// Identity and capability advertisement for a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub id: String,
    pub kind: BackendKind,
    /// Set for reference backends (full-vocabulary distributions).
    pub vocab_size: Option<usize>,
    /// Set for remote backends (distribution truncation).
    pub top_k: Option<usize>,
}

impl BackendDescriptor {
    pub fn ngram_reference(id: impl Into<String>, vocab_size: usize) -> Self {
        BackendDescriptor {
            id: id.into(),
            kind: BackendKind::NgramReference,
            vocab_size: Some(vocab_size),
            top_k: None,
        }
    }

    pub fn remote_endpoint(id: impl Into<String>, top_k: usize) -> Self {
        BackendDescriptor {
            id: id.into(),
            kind: BackendKind::RemoteEndpoint,
            vocab_size: None,
            top_k: Some(top_k),
        }
    }
}

/// A rewriting/generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRequest {
    pub text: String,
    pub instruction: Option<String>,
    pub max_tokens: usize,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl RewriteRequest {
    pub fn new(text: impl Into<String>) -> Self {
        RewriteRequest {
            text: text.into(),
            instruction: None,
            max_tokens: 1024,
            temperature: 0.0,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction = Some(instruction.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::InvalidArgument("max_tokens must be >= 1".into()));
        }
        if self.temperature < 0.0 {
            return Err(Error::InvalidArgument(
                "temperature must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A next-token distribution: `(token, logprob)` entries sorted by descending
/// logprob (ties broken by ascending token), plus any residual mass a truncated
/// remote backend could not enumerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextTokenDistribution {
    pub entries: Vec<(String, f64)>,
    pub tail_mass: f64,
}

impl NextTokenDistribution {
    /// Sort entries into the canonical order and clamp the tail.
    pub fn new(mut entries: Vec<(String, f64)>, tail_mass: f64) -> Self {
        entries.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        NextTokenDistribution {
            entries,
            tail_mass: tail_mass.max(0.0),
        }
    }

    pub fn logprob_of(&self, token: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(t, _)| t == token)
            .map(|(_, lp)| *lp)
    }

    /// 1-based rank under the tie rule: the realized token takes the best rank
    /// among equal-probability entries.
    pub fn rank_of(&self, token: &str) -> Option<u32> {
        let lp = self.logprob_of(token)?;
        let better = self.entries.iter().filter(|(_, l)| *l > lp).count();
        Some(better as u32 + 1)
    }

    /// Entropy in nats over the enumerated entries plus a single pseudo-symbol
    /// carrying the tail mass.
    pub fn entropy(&self) -> f64 {
        let mut h = 0.0;
        for (_, lp) in &self.entries {
            let p = lp.exp();
            if p > 0.0 {
                h -= p * lp;
            }
        }
        if self.tail_mass > 1e-12 {
            h -= self.tail_mass * self.tail_mass.ln();
        }
        h
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, lp)| lp.exp()).sum::<f64>() + self.tail_mass
    }

    /// Sample a token by CDF inversion over the enumerated entries.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<&str> {
        if self.entries.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot sample from an empty distribution".into(),
            ));
        }
        let enumerated: f64 = self.entries.iter().map(|(_, lp)| lp.exp()).sum();
        let u: f64 = rng.gen::<f64>() * enumerated;
        let mut acc = 0.0;
        for (tok, lp) in &self.entries {
            acc += lp.exp();
            if u < acc {
                return Ok(tok);
            }
        }
        Ok(&self.entries.last().unwrap().0)
    }
}

/// Realized token plus the predictive distribution at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionDistribution {
    pub realized: String,
    /// Exact logprob of the realized token (covers out-of-vocabulary tokens the
    /// enumerated distribution does not list).
    pub realized_logprob: f64,
    pub dist: NextTokenDistribution,
}

/// Token-level scoring capability.
pub trait ScoringBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// One [`TokenScore`] per model token, in order.
    fn score_text(&self, text: &str) -> Result<ScoredText>;

    /// Predictive distribution after `prefix`.
    fn next_token_distribution(&self, prefix: &str) -> Result<NextTokenDistribution>;

    /// Realized token and predictive distribution at every position of `text`.
    fn position_distributions(&self, text: &str) -> Result<Vec<PositionDistribution>>;

    /// Stable fingerprint of the emission vocabulary, when fully known.
    /// Token-level ensembles require equal fingerprints.
    fn vocab_fingerprint(&self) -> Option<u64> {
        None
    }

    /// Peak accelerator memory reported by the endpoint, if any.
    fn reported_peak_memory(&self) -> Option<u64> {
        None
    }
}

/// Free-form rewriting capability.
pub trait RewriteBackend: Send + Sync {
    fn id(&self) -> &str;
    fn rewrite(&self, req: &RewriteRequest) -> Result<String>;
    fn reported_peak_memory(&self) -> Option<u64> {
        None
    }
}

/// Text embedding capability.
pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
    fn reported_peak_memory(&self) -> Option<u64> {
        None
    }
}

/// Shared monotonic counter for backend invocations. Attacks wrap their
/// backends with the `Counting*` adapters so overhead measurement can report
/// `backend_calls` without instrumenting the backends themselves.
#[derive(Debug, Clone, Default)]
pub struct CallCounter(Arc<AtomicU64>);

impl CallCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::SeqCst);
    }
}

/// Call-counting wrapper for scoring backends.
pub struct CountingScoring {
    pub inner: Arc<dyn ScoringBackend>,
    pub counter: CallCounter,
}

impl ScoringBackend for CountingScoring {
    fn descriptor(&self) -> &BackendDescriptor {
        self.inner.descriptor()
    }
    fn score_text(&self, text: &str) -> Result<ScoredText> {
        self.counter.bump();
        self.inner.score_text(text)
    }
    fn next_token_distribution(&self, prefix: &str) -> Result<NextTokenDistribution> {
        self.counter.bump();
        self.inner.next_token_distribution(prefix)
    }
    fn position_distributions(&self, text: &str) -> Result<Vec<PositionDistribution>> {
        self.counter.bump();
        self.inner.position_distributions(text)
    }
    fn vocab_fingerprint(&self) -> Option<u64> {
        self.inner.vocab_fingerprint()
    }
    fn reported_peak_memory(&self) -> Option<u64> {
        self.inner.reported_peak_memory()
    }
}

/// Call-counting wrapper for rewriters.
pub struct CountingRewrite {
    pub inner: Arc<dyn RewriteBackend>,
    pub counter: CallCounter,
}

impl RewriteBackend for CountingRewrite {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn rewrite(&self, req: &RewriteRequest) -> Result<String> {
        self.counter.bump();
        self.inner.rewrite(req)
    }
    fn reported_peak_memory(&self) -> Option<u64> {
        self.inner.reported_peak_memory()
    }
}

/// Call-counting wrapper for embedders.
pub struct CountingEmbedding {
    pub inner: Arc<dyn EmbeddingBackend>,
    pub counter: CallCounter,
}

impl EmbeddingBackend for CountingEmbedding {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.counter.bump();
        self.inner.embed(text)
    }
    fn reported_peak_memory(&self) -> Option<u64> {
        self.inner.reported_peak_memory()
    }
}

/// Sample `count` tokens from `backend`, extending `prefix_tokens`.
pub fn sample_tokens(
    backend: &dyn ScoringBackend,
    prefix_tokens: &[String],
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<String>> {
    let mut tokens: Vec<String> = prefix_tokens.to_vec();
    let mut generated = Vec::with_capacity(count);
    for _ in 0..count {
        let prefix = crate::text::detokenize(&tokens);
        let dist = backend.next_token_distribution(&prefix)?;
        let tok = dist.sample(rng)?.to_string();
        tokens.push(tok.clone());
        generated.push(tok);
    }
    Ok(generated)
}
