//! Model-based detectors: a locally trained embedding-plus-head detector
//! (binary or multiclass attribution), the surrogate used by humanization
//! attacks, and the wire adapter for external pretrained classifier endpoints.
//!
//! Registry names: `lm_d` plus any configured external ids (`radar`,
//! `openai_d`, `chatgpt_d`, `conda`).

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label, TextSample};
use crate::detectors::{
    classify, train_classifier, Direction, LogisticClassifier, ScoreValue, TextScorer, TrainConfig,
};
use crate::gateway::EmbeddingBackend;
use crate::hashing::seed_for;
use crate::{Error, Result};

/// Frozen-embedding detector with one logistic head (binary) or a one-vs-rest
/// bundle (multiclass attribution).
pub struct HeadDetector {
    pub classes: Vec<String>,
    heads: Vec<(String, LogisticClassifier)>,
    embedder: Arc<dyn EmbeddingBackend>,
    pub diagnostics: TrainingDiagnostics,
}

/// Held-out-fold diagnostics reported by training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDiagnostics {
    pub heldout_accuracy: f64,
    pub heldout_n: usize,
    pub seed: u64,
}

/// Class of one training sample for the head detector.
fn sample_class(sample: &TextSample, binary: bool) -> Result<String> {
    if binary {
        Ok(match sample.label {
            Label::Human => "human".to_string(),
            Label::Machine => "machine".to_string(),
        })
    } else {
        sample.generator.clone().ok_or_else(|| {
            Error::detector("lm_d", format!("sample {} has no generator for attribution", sample.id))
        })
    }
}

fn embed_all(
    corpus: &Corpus,
    embedder: &Arc<dyn EmbeddingBackend>,
    binary: bool,
) -> Result<Vec<(Vec<f64>, String)>> {
    corpus
        .iter()
        .map(|s| Ok((embedder.embed(&s.text)?, sample_class(s, binary)?)))
        .collect()
}

/// Train a head detector over frozen embeddings.
///
/// `classes` must all be present in the corpus. `["human", "machine"]` selects
/// binary mode; any other class list is treated as generator attribution. A
/// seeded 80/20 fold provides held-out diagnostics; the final heads train on
/// all data.
pub fn train_head_detector(
    train: &Corpus,
    embedder: Arc<dyn EmbeddingBackend>,
    classes: &[String],
    seed: u64,
) -> Result<HeadDetector> {
    if classes.len() < 2 {
        return Err(Error::detector("lm_d", "need at least two classes"));
    }
    let binary = classes == ["human", "machine"];
    let data = embed_all(train, &embedder, binary)?;
    for class in classes {
        if !data.iter().any(|(_, c)| c == class) {
            return Err(Error::detector(
                "lm_d",
                format!("class {class:?} missing from training corpus"),
            ));
        }
    }

    // held-out fold for diagnostics
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &["head-detector-fold"]));
    order.shuffle(&mut rng);
    let fold = (data.len() as f64 * 0.8).round() as usize;
    let (fit_idx, hold_idx) = order.split_at(fold.clamp(1, data.len().saturating_sub(1).max(1)));

    let train_heads = |indices: &[usize]| -> Result<Vec<(String, LogisticClassifier)>> {
        classes
            .iter()
            .map(|class| {
                let labeled: Vec<(Vec<f64>, bool)> = indices
                    .iter()
                    .map(|&i| (data[i].0.clone(), data[i].1 == *class))
                    .collect();
                let cfg = TrainConfig {
                    seed,
                    ..TrainConfig::default()
                };
                Ok((class.clone(), train_classifier(&labeled, &cfg)?))
            })
            .collect()
    };

    let diagnostics = match train_heads(fit_idx) {
        Ok(fold_heads) => {
            let mut correct = 0usize;
            for &i in hold_idx {
                let (features, class) = &data[i];
                let mut best = (f64::MIN, "");
                for (c, clf) in &fold_heads {
                    let p = classify(clf, features)?;
                    if p > best.0 {
                        best = (p, c);
                    }
                }
                if best.1 == class {
                    correct += 1;
                }
            }
            TrainingDiagnostics {
                heldout_accuracy: if hold_idx.is_empty() {
                    f64::NAN
                } else {
                    correct as f64 / hold_idx.len() as f64
                },
                heldout_n: hold_idx.len(),
                seed,
            }
        }
        // the fold can lose a class entirely; diagnostics are best-effort
        Err(_) => TrainingDiagnostics {
            heldout_accuracy: f64::NAN,
            heldout_n: 0,
            seed,
        },
    };

    let all: Vec<usize> = (0..data.len()).collect();
    Ok(HeadDetector {
        classes: classes.to_vec(),
        heads: train_heads(&all)?,
        embedder,
        diagnostics,
    })
}

impl HeadDetector {
    /// Probability that `text` belongs to `class` (one-vs-rest head).
    pub fn prob_class(&self, class: &str, text: &str) -> Result<f64> {
        let features = self.embedder.embed(text)?;
        let (_, clf) = self
            .heads
            .iter()
            .find(|(c, _)| c == class)
            .ok_or_else(|| Error::detector("lm_d", format!("unknown class {class:?}")))?;
        classify(clf, &features)
    }

    /// Probability of the machine class (binary heads only).
    pub fn prob_machine(&self, text: &str) -> Result<f64> {
        self.prob_class("machine", text)
    }

    /// Argmax class.
    pub fn predict(&self, text: &str) -> Result<String> {
        let features = self.embedder.embed(text)?;
        let mut best: Option<(f64, &str)> = None;
        for (c, clf) in &self.heads {
            let p = classify(clf, &features)?;
            if best.is_none_or(|(bp, _)| p > bp) {
                best = Some((p, c));
            }
        }
        Ok(best.expect("classes nonempty").1.to_string())
    }
}

impl TextScorer for HeadDetector {
    fn id(&self) -> &str {
        "lm_d"
    }

    fn direction(&self) -> Direction {
        Direction::HigherIsMgt
    }

    fn score(&self, text: &str) -> Result<ScoreValue> {
        Ok(ScoreValue::Scalar(self.prob_machine(text)?))
    }
}

/// Binary head detector plus the provenance needed to label attack runs as
/// standard (surrogate trained on the attacked corpus) or mismatched.
pub struct SurrogateDetector {
    head: HeadDetector,
    trained_on: String,
}

/// Attack-run provenance relative to the surrogate's training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateRegime {
    Standard,
    Mismatched,
}

/// Train the surrogate used by humanization attacks; records the training
/// corpus name for regime labeling.
pub fn train_surrogate(
    train: &Corpus,
    embedder: Arc<dyn EmbeddingBackend>,
    seed: u64,
) -> Result<SurrogateDetector> {
    let head = train_head_detector(
        train,
        embedder,
        &["human".to_string(), "machine".to_string()],
        seed,
    )?;
    Ok(SurrogateDetector {
        head,
        trained_on: train.name.clone(),
    })
}

impl SurrogateDetector {
    pub fn prob_machine(&self, text: &str) -> Result<f64> {
        self.head.prob_machine(text)
    }

    pub fn trained_on(&self) -> &str {
        &self.trained_on
    }

    pub fn diagnostics(&self) -> &TrainingDiagnostics {
        &self.head.diagnostics
    }

    pub fn regime(&self, target_corpus: &str) -> SurrogateRegime {
        if self.trained_on == target_corpus {
            SurrogateRegime::Standard
        } else {
            SurrogateRegime::Mismatched
        }
    }

    pub fn regime_label(&self, target_corpus: &str) -> &'static str {
        match self.regime(target_corpus) {
            SurrogateRegime::Standard => "standard",
            SurrogateRegime::Mismatched => "mismatched",
        }
    }
}

/// Reference to an external pretrained detector endpoint.
///
/// Wire shape: POST `{"text": "..."}` -> `{"score": p}` with `p` in `[0, 1]`.
pub struct ExternalDetector {
    pub id: String,
    pub endpoint: String,
    pub score_direction: Direction,
    client: reqwest::blocking::Client,
    timeout: Duration,
    cache: Option<Mutex<BTreeMap<String, f64>>>,
    calls: AtomicU64,
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ExternalResponse {
    score: f64,
}

impl ExternalDetector {
    /// Register an endpoint; performs a health-check probe and fails when the
    /// endpoint is unreachable or answers with a malformed score.
    pub fn register(
        id: impl Into<String>,
        endpoint: impl Into<String>,
        score_direction: Direction,
        timeout_ms: u64,
    ) -> Result<Self> {
        let det = ExternalDetector {
            id: id.into(),
            endpoint: endpoint.into(),
            score_direction,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_millis(timeout_ms))
                .build()
                .map_err(|e| Error::Http {
                    url: String::new(),
                    message: e.to_string(),
                })?,
            timeout: Duration::from_millis(timeout_ms),
            cache: None,
            calls: AtomicU64::new(0),
        };
        det.score_text("health check probe")?;
        Ok(det)
    }

    /// Enable the byte-exact response cache (off by default; distinct inputs
    /// always produce requests).
    pub fn with_cache(mut self) -> Self {
        self.cache = Some(Mutex::new(BTreeMap::new()));
        self
    }

    pub fn request_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Score one text; value validated to [0, 1].
    pub fn score_text(&self, text: &str) -> Result<f64> {
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lock().unwrap().get(text) {
                return Ok(*hit);
            }
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let _ = self.timeout;
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&ExternalRequest { text })
            .send()
            .map_err(|e| Error::Http {
                url: self.endpoint.clone(),
                message: e.to_string(),
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Http {
                url: self.endpoint.clone(),
                message: format!("status {status}"),
            });
        }
        let body: ExternalResponse = resp.json().map_err(|e| Error::Http {
            url: self.endpoint.clone(),
            message: format!("non-numeric or malformed score: {e}"),
        })?;
        if !(0.0..=1.0).contains(&body.score) || !body.score.is_finite() {
            return Err(Error::detector(
                &self.id,
                format!("score {} outside [0, 1]", body.score),
            ));
        }
        if let Some(cache) = &self.cache {
            cache.lock().unwrap().insert(text.to_string(), body.score);
        }
        Ok(body.score)
    }

    /// Score texts in order; the response order matches the request order.
    pub fn score_batch(&self, texts: &[&str]) -> Result<Vec<f64>> {
        texts.iter().map(|t| self.score_text(t)).collect()
    }
}

impl TextScorer for ExternalDetector {
    fn id(&self) -> &str {
        &self.id
    }

    fn direction(&self) -> Direction {
        self.score_direction
    }

    fn score(&self, text: &str) -> Result<ScoreValue> {
        Ok(ScoreValue::Scalar(self.score_text(text)?))
    }
}
