//! Evading attacks behind one interface: a [`TextSample`] goes in, an
//! [`AttackOutcome`] comes out, parameterized and backend-agnostic.
//!
//! Registry names: `dipper, recursion, prompt, raft, hmgc, toblend`.
//!
//! Every attack is reproducible: identical (sample, params, seeds, backends)
//! produce identical attacked text. Per-run randomness derives from the
//! attack's configured seed mixed with the sample id.

mod hmgc;
mod paraphrase;
mod prompt;
mod raft;
mod toblend;

pub use hmgc::{HmgcAttack, LexiconSynonyms, SynonymSource};
pub use paraphrase::{DipperParams, ParaphraseAttack, RecursionAttack};
pub use prompt::{PromptAttack, PromptTemplate};
pub use raft::{RaftAttack, RaftQpa};
pub use toblend::{ToblendAttack, ToblendQpa};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::TextSample;
use crate::gateway::CallCounter;
use crate::overhead::{read_process_peak_rss, MemorySource, OverheadRecord};
use crate::text::tokenize;
use crate::Result;

/// Attacked text plus the resource/timing record and full parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub sample_id: String,
    pub attack_id: String,
    pub params: BTreeMap<String, Value>,
    pub attacked_text: String,
    pub resource: OverheadRecord,
    pub trace: Option<Vec<TraceStep>>,
}

impl AttackOutcome {
    /// Minimal outcome for unit tests that only need text fields.
    pub fn identity_for_tests(sample_id: &str, text: &str) -> Self {
        AttackOutcome {
            sample_id: sample_id.to_string(),
            attack_id: "identity".to_string(),
            params: BTreeMap::new(),
            attacked_text: text.to_string(),
            resource: OverheadRecord {
                attack_id: "identity".into(),
                sample_id: sample_id.into(),
                token_length: tokenize(text).len().max(1),
                wall_time_secs: 0.0,
                peak_memory: None,
                memory_source: MemorySource::Unavailable,
                backend_calls: 0,
            },
            trace: None,
        }
    }
}

/// Quality-constraint evaluation of one candidate (recorded in traces).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpaCandidateCheck {
    pub candidate: String,
    pub ppl_rel_change: f64,
    pub fre_rel_change: f64,
    pub similarity: f64,
    pub passed: bool,
}

/// One candidate evaluated during a word-substitution step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEval {
    pub candidate: String,
    /// Proxy MGT-score of the text with this candidate applied.
    pub proxy_score: Option<f64>,
    pub qpa: Option<QpaCandidateCheck>,
}

/// A step in an attack's decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceStep {
    /// One rewriter invocation (paraphrase / recursion iterations).
    Rewrite {
        iteration: usize,
        input: String,
        output: String,
    },
    /// Full prompt sent to the rewriting backend.
    Prompt { prompt: String },
    /// One word-substitution decision (RAFT and HMGC).
    WordSubstitution {
        word: String,
        position: usize,
        candidates: Vec<CandidateEval>,
        chosen: Option<String>,
        score_before: f64,
        score_after: f64,
    },
    /// One token-ensemble step.
    TokenStep {
        step: usize,
        backend_id: String,
        token: String,
        /// Candidate checks when quality-preserving selection is active.
        qpa_candidates: Option<Vec<TokenCandidateCheck>>,
        /// Set when every candidate failed the similarity constraint and the
        /// unconstrained host choice was used.
        fallback: bool,
    },
    /// Segment assignment made by attack blending.
    Segment {
        index: usize,
        attack_id: String,
        steps: Vec<TraceStep>,
    },
    /// Free-form flag (e.g. no-op attacks).
    Flag { message: String },
}

/// Similarity/perplexity check of one ensemble token candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCandidateCheck {
    pub backend_id: String,
    pub token: String,
    pub similarity: f64,
    pub ppl_diff: Option<f64>,
    pub passed_similarity: bool,
}

/// Body returned by an attack implementation; the provided [`Attack::attack`]
/// wraps it with timing and call counting.
pub struct AttackBody {
    pub attacked_text: String,
    pub trace: Option<Vec<TraceStep>>,
    pub extra_params: Vec<(String, Value)>,
}

static ACTIVE_RUNS: AtomicUsize = AtomicUsize::new(0);
static RUN_WATERMARK: AtomicUsize = AtomicUsize::new(0);

pub(crate) struct RunGuard;

impl RunGuard {
    pub(crate) fn enter() -> Self {
        let now = ACTIVE_RUNS.fetch_add(1, Ordering::SeqCst) + 1;
        RUN_WATERMARK.fetch_max(now, Ordering::SeqCst);
        RunGuard
    }
}

impl Drop for RunGuard {
    fn drop(&mut self) {
        ACTIVE_RUNS.fetch_sub(1, Ordering::SeqCst);
    }
}

pub(crate) fn active_runs() -> usize {
    ACTIVE_RUNS.load(Ordering::SeqCst)
}

pub(crate) fn reset_run_watermark() -> usize {
    RUN_WATERMARK.swap(0, Ordering::SeqCst)
}

pub(crate) fn run_watermark() -> usize {
    RUN_WATERMARK.load(Ordering::SeqCst)
}

/// Common attack interface.
pub trait Attack: Send + Sync {
    /// Registry id, or a derived label such as `qpa(raft)`.
    fn id(&self) -> &str;

    /// Full parameterization (seeds included) for reproducibility.
    fn params(&self) -> BTreeMap<String, Value>;

    /// Counter shared with this attack's backends.
    fn call_counter(&self) -> &CallCounter;

    /// Peak accelerator memory reported by this attack's backends, if any.
    fn backends_peak_memory(&self) -> Option<u64> {
        None
    }

    /// The attack itself. Implementations must be deterministic given the
    /// sample, the configured params, and the seed.
    fn run_body(&self, sample: &TextSample, trace: bool) -> Result<AttackBody>;

    /// Like [`Attack::run_body`] with optional surrounding context (used by
    /// blending when a context window is configured). Attacks that cannot
    /// condition on context ignore it.
    fn run_body_with_context(
        &self,
        sample: &TextSample,
        trace: bool,
        _context: Option<&str>,
    ) -> Result<AttackBody> {
        self.run_body(sample, trace)
    }

    /// Run with timing and backend-call metering.
    fn attack(&self, sample: &TextSample, trace: bool) -> Result<AttackOutcome> {
        let _guard = RunGuard::enter();
        let calls_before = self.call_counter().get();
        let started = Instant::now();
        let body = self.run_body(sample, trace)?;
        let wall_time_secs = started.elapsed().as_secs_f64();
        let backend_calls = self.call_counter().get() - calls_before;
        let (peak_memory, memory_source) = match self.backends_peak_memory() {
            Some(bytes) => (Some(bytes), MemorySource::EndpointReported),
            None => match read_process_peak_rss() {
                Some(bytes) => (Some(bytes), MemorySource::ProcessPeakRss),
                None => (None, MemorySource::Unavailable),
            },
        };
        let mut params = self.params();
        for (k, v) in body.extra_params {
            params.insert(k, v);
        }
        Ok(AttackOutcome {
            sample_id: sample.id.clone(),
            attack_id: self.id().to_string(),
            params,
            attacked_text: body.attacked_text,
            resource: OverheadRecord {
                attack_id: self.id().to_string(),
                sample_id: sample.id.clone(),
                token_length: tokenize(&sample.text).len().max(1),
                wall_time_secs,
                peak_memory,
                memory_source,
                backend_calls,
            },
            trace: body.trace,
        })
    }
}

/// Derive the per-run seed from an attack seed and the sample id.
pub(crate) fn run_seed(attack_seed: u64, sample_id: &str) -> u64 {
    crate::hashing::seed_for(attack_seed, &["attack-run", sample_id])
}

/// No-op attack: the outcome text equals the input. Useful as a baseline and
/// in adversarial-training scenarios where the "known attack" is none.
pub struct IdentityAttack {
    counter: CallCounter,
}

impl IdentityAttack {
    pub fn new() -> Self {
        IdentityAttack {
            counter: CallCounter::new(),
        }
    }
}

impl Default for IdentityAttack {
    fn default() -> Self {
        Self::new()
    }
}

impl Attack for IdentityAttack {
    fn id(&self) -> &str {
        "identity"
    }

    fn params(&self) -> BTreeMap<String, Value> {
        BTreeMap::new()
    }

    fn call_counter(&self) -> &CallCounter {
        &self.counter
    }

    fn run_body(&self, sample: &TextSample, _trace: bool) -> Result<AttackBody> {
        Ok(AttackBody {
            attacked_text: sample.text.clone(),
            trace: None,
            extra_params: Vec::new(),
        })
    }
}
