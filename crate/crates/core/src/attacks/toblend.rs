//! Token-level ensemble generation: at every step a backend is drawn uniformly
//! at random (seeded) and its next token is sampled and appended.
//!
//! All backends must share the reference tokenizer vocabulary (fingerprints are
//! compared at construction); blending heterogeneous vocabularies is
//! unsupported. With quality-preserving selection active, each backend
//! proposes one token and the candidate keeping the sentence closest in
//! perplexity to the original (above the similarity floor) wins; when every
//! candidate fails the floor the step falls back to the unconstrained uniform
//! choice and is flagged.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::attacks::{run_seed, Attack, AttackBody, TraceStep};
use crate::corpus::TextSample;
use crate::gateway::{CallCounter, CountingScoring, EmbeddingBackend, ScoringBackend};
use crate::qpa::{qpa_select_token, QpaConstraints};
use crate::text::{detokenize, tokenize};
use crate::{Error, Result};

/// Quality-preserving configuration for token selection.
pub struct ToblendQpa {
    pub constraints: QpaConstraints,
    pub quality_backend: Arc<dyn ScoringBackend>,
    pub embedder: Arc<dyn EmbeddingBackend>,
}

pub struct ToblendAttack {
    id: String,
    backends: Vec<CountingScoring>,
    /// Tokens of the sample used to prime generation.
    prefix_tokens: usize,
    /// Output length in tokens; None generates as many tokens as the sample has.
    length: Option<usize>,
    seed: u64,
    counter: CallCounter,
    qpa: Option<ToblendQpa>,
}

impl ToblendAttack {
    pub fn new(
        backends: Vec<Arc<dyn ScoringBackend>>,
        prefix_tokens: usize,
        length: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if backends.is_empty() {
            return Err(Error::InvalidArgument(
                "token ensemble needs at least one backend".into(),
            ));
        }
        let fingerprints: Vec<Option<u64>> =
            backends.iter().map(|b| b.vocab_fingerprint()).collect();
        let first = fingerprints[0].ok_or_else(|| {
            Error::backend(
                &backends[0].descriptor().id,
                "backend does not expose a full vocabulary; token ensembles need one",
            )
        })?;
        for (b, fp) in backends.iter().zip(&fingerprints) {
            match fp {
                Some(f) if *f == first => {}
                Some(_) => {
                    return Err(Error::backend(
                        &b.descriptor().id,
                        "incompatible vocabulary: all ensemble backends must share one vocabulary",
                    ))
                }
                None => {
                    return Err(Error::backend(
                        &b.descriptor().id,
                        "backend does not expose a full vocabulary; token ensembles need one",
                    ))
                }
            }
        }
        let counter = CallCounter::new();
        Ok(ToblendAttack {
            id: "toblend".to_string(),
            backends: backends
                .into_iter()
                .map(|inner| CountingScoring {
                    inner,
                    counter: counter.clone(),
                })
                .collect(),
            prefix_tokens,
            length,
            seed,
            counter,
            qpa: None,
        })
    }

    pub fn with_qpa(mut self, qpa: ToblendQpa) -> Self {
        self.qpa = Some(qpa);
        self.id = "qpa(toblend)".to_string();
        self
    }

    pub fn backend_ids(&self) -> Vec<String> {
        self.backends
            .iter()
            .map(|b| b.descriptor().id.clone())
            .collect()
    }
}

impl Attack for ToblendAttack {
    fn id(&self) -> &str {
        &self.id
    }

    fn params(&self) -> BTreeMap<String, Value> {
        let mut p = BTreeMap::from([
            ("backends".into(), json!(self.backend_ids())),
            ("prefix_tokens".into(), json!(self.prefix_tokens)),
            ("seed".into(), json!(self.seed)),
            ("qpa".into(), json!(self.qpa.is_some())),
        ]);
        if let Some(l) = self.length {
            p.insert("length".into(), json!(l));
        }
        p
    }

    fn call_counter(&self) -> &CallCounter {
        &self.counter
    }

    fn backends_peak_memory(&self) -> Option<u64> {
        self.backends
            .iter()
            .filter_map(|b| b.reported_peak_memory())
            .max()
    }

    fn run_body(&self, sample: &TextSample, trace: bool) -> Result<AttackBody> {
        let sample_tokens = tokenize(&sample.text);
        if sample_tokens.is_empty() {
            return Err(Error::attack(&self.id, "sample has no tokens"));
        }
        let prefix_len = self.prefix_tokens.min(sample_tokens.len());
        let total = self.length.unwrap_or(sample_tokens.len());
        let steps_to_generate = total.saturating_sub(prefix_len);
        let mut tokens: Vec<String> = sample_tokens[..prefix_len].to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(self.seed, &sample.id));
        let mut steps = Vec::new();

        for step in 0..steps_to_generate {
            let prefix_text = detokenize(&tokens);
            let (backend_id, token, qpa_candidates, fallback) = match &self.qpa {
                None => {
                    let pick = rng.gen_range(0..self.backends.len());
                    let backend = &self.backends[pick];
                    let dist = backend.next_token_distribution(&prefix_text)?;
                    let token = dist.sample(&mut rng)?.to_string();
                    (backend.descriptor().id.clone(), token, None, false)
                }
                Some(q) => {
                    // one proposal per backend, sampled in backend order
                    let mut candidates: Vec<(String, String)> = Vec::new();
                    for backend in &self.backends {
                        let dist = backend.next_token_distribution(&prefix_text)?;
                        let token = dist.sample(&mut rng)?.to_string();
                        candidates.push((backend.descriptor().id.clone(), token));
                    }
                    let selection = qpa_select_token(
                        &prefix_text,
                        &sample.text,
                        &candidates,
                        &q.constraints,
                        q.quality_backend.as_ref(),
                        q.embedder.as_ref(),
                    )?;
                    match selection.chosen {
                        Some(idx) => {
                            let (bid, tok) = candidates[idx].clone();
                            (bid, tok, Some(selection.checks), false)
                        }
                        None => {
                            // unconstrained host choice, flagged
                            let pick = rng.gen_range(0..candidates.len());
                            let (bid, tok) = candidates[pick].clone();
                            (bid, tok, Some(selection.checks), true)
                        }
                    }
                }
            };
            tokens.push(token.clone());
            if trace {
                steps.push(TraceStep::TokenStep {
                    step,
                    backend_id,
                    token,
                    qpa_candidates,
                    fallback,
                });
            }
        }

        Ok(AttackBody {
            attacked_text: detokenize(&tokens),
            trace: trace.then_some(steps),
            extra_params: vec![("generated_tokens".into(), json!(steps_to_generate))],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::tests::sample;
    use crate::gateway::scripted::ScriptedBackend;
    use crate::gateway::sample_tokens;

    fn const_backend(id: &str, token: &str) -> Arc<dyn ScoringBackend> {
        // shared two-token vocabulary, all mass on one token
        let other = if token == "ping" { "pong" } else { "ping" };
        Arc::new(ScriptedBackend::context_free(
            id,
            vec![(token, 1.0), (other, 0.0)],
        ))
    }

    #[test]
    fn single_backend_equals_direct_sampling() {
        let b: Arc<dyn ScoringBackend> = Arc::new(ScriptedBackend::context_free(
            "solo",
            vec![("a", 0.5), ("b", 0.3), ("c", 0.2)],
        ));
        let attack = ToblendAttack::new(vec![b.clone()], 1, Some(9), 11).unwrap();
        let s = sample("s1", "a a a a a a a a a");
        let out = attack.attack(&s, false).unwrap();

        // replay: same derived seed, burn one draw per step for the (trivial)
        // backend choice, then sample
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(11, "s1"));
        let mut tokens = vec!["a".to_string()];
        for _ in 0..8 {
            let _pick: usize = rng.gen_range(0..1);
            let next = sample_tokens(b.as_ref(), &tokens, 1, &mut rng).unwrap();
            tokens.extend(next);
        }
        assert_eq!(out.attacked_text, detokenize(&tokens));
    }

    #[test]
    fn four_backends_selected_near_uniformly() {
        let backends: Vec<Arc<dyn ScoringBackend>> = (0..4)
            .map(|i| {
                Arc::new(ScriptedBackend::context_free(
                    format!("b{i}"),
                    vec![("a", 0.5), ("b", 0.5)],
                )) as Arc<dyn ScoringBackend>
            })
            .collect();
        let attack = ToblendAttack::new(backends, 1, Some(10_001), 3).unwrap();
        let s = sample("s1", "a");
        let out = attack.attack(&s, true).unwrap();
        let mut counts = BTreeMap::new();
        for step in out.trace.unwrap() {
            if let TraceStep::TokenStep { backend_id, .. } = step {
                *counts.entry(backend_id).or_insert(0usize) += 1;
            }
        }
        let n = 10_000f64;
        let p = 0.25f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        for (_, c) in counts {
            let c = c as f64;
            assert!(
                (c - n * p).abs() < 3.0 * sigma,
                "backend count {c} outside 3-sigma of {}",
                n * p
            );
        }
    }

    #[test]
    fn deterministic_backends_reveal_choice_sequence() {
        let attack = ToblendAttack::new(
            vec![const_backend("bp", "ping"), const_backend("bq", "pong")],
            0,
            Some(12),
            21,
        )
        .unwrap();
        let s = sample("s1", "ping");
        let out = attack.attack(&s, true).unwrap();

        // replay the seeded choice sequence
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(21, "s1"));
        let mut expected = Vec::new();
        for _ in 0..12 {
            let pick = rng.gen_range(0..2usize);
            let _burn: f64 = rng.gen(); // token sampling draw
            expected.push(if pick == 0 { "ping" } else { "pong" });
        }
        let got: Vec<String> = tokenize(&out.attacked_text);
        assert_eq!(got, expected);
        // trace backend ids match the choices
        for (step, exp) in out.trace.unwrap().iter().zip(&expected) {
            if let TraceStep::TokenStep { token, .. } = step {
                assert_eq!(token, exp);
            }
        }
    }

    #[test]
    fn incompatible_vocabularies_rejected() {
        let a: Arc<dyn ScoringBackend> =
            Arc::new(ScriptedBackend::context_free("a", vec![("x", 1.0)]));
        let b: Arc<dyn ScoringBackend> =
            Arc::new(ScriptedBackend::context_free("b", vec![("y", 1.0)]));
        assert!(ToblendAttack::new(vec![a, b], 0, Some(5), 1).is_err());
    }
}
