//! Surrogate-guided humanization: rank words by leave-one-out surrogate-score
//! drop, replace the most important word with the synonym minimizing the
//! surrogate's MGT probability, and stop once the surrogate flips below 0.5 or
//! the iteration budget runs out.
//!
//! Replacements are only accepted when they do not increase the surrogate
//! probability, so the probability over iterations is non-increasing.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::attacks::{Attack, AttackBody, CandidateEval, TraceStep};
use crate::corpus::TextSample;
use crate::gateway::CallCounter;
use crate::model_detectors::SurrogateDetector;
use crate::text::{replace_span_preserving_case, word_tokens};
use crate::{Error, Result};

/// Source of replacement candidates per word.
pub trait SynonymSource: Send + Sync {
    fn id(&self) -> &str;
    /// Synonyms for a lower-cased word; empty when none are known.
    fn synonyms(&self, word: &str) -> Vec<String>;
}

/// Table-backed synonym source.
pub struct LexiconSynonyms {
    id: String,
    table: BTreeMap<String, Vec<String>>,
}

impl LexiconSynonyms {
    pub fn new(id: impl Into<String>, table: BTreeMap<String, Vec<String>>) -> Self {
        LexiconSynonyms {
            id: id.into(),
            table,
        }
    }

    /// Load from a JSON object file: `{"word": ["synonym", ...], ...}`.
    pub fn from_json_file(id: impl Into<String>, path: impl AsRef<std::path::Path>) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        let table: BTreeMap<String, Vec<String>> = serde_json::from_str(&data)?;
        Ok(Self::new(id, table))
    }
}

impl SynonymSource for LexiconSynonyms {
    fn id(&self) -> &str {
        &self.id
    }
    fn synonyms(&self, word: &str) -> Vec<String> {
        self.table.get(word).cloned().unwrap_or_default()
    }
}

pub struct HmgcAttack {
    id: String,
    surrogate: Arc<SurrogateDetector>,
    synonyms: Arc<dyn SynonymSource>,
    max_iters: usize,
    seed: u64,
    counter: CallCounter,
}

impl HmgcAttack {
    pub fn new(
        surrogate: Arc<SurrogateDetector>,
        synonyms: Arc<dyn SynonymSource>,
        max_iters: usize,
        seed: u64,
    ) -> Result<Self> {
        if max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        Ok(HmgcAttack {
            id: "hmgc".to_string(),
            surrogate,
            synonyms,
            max_iters,
            seed,
            counter: CallCounter::new(),
        })
    }

    fn prob(&self, text: &str) -> Result<f64> {
        self.counter.bump();
        self.surrogate.prob_machine(text)
    }
}

fn remove_span(text: &str, span: &Range<usize>) -> String {
    let before = &text[..span.start];
    let after = &text[span.end..];
    if before.ends_with(' ') && after.starts_with(' ') {
        format!("{before}{}", &after[1..])
    } else if before.is_empty() && after.starts_with(' ') {
        after[1..].to_string()
    } else {
        format!("{before}{after}")
    }
}

impl Attack for HmgcAttack {
    fn id(&self) -> &str {
        &self.id
    }

    fn params(&self) -> BTreeMap<String, Value> {
        BTreeMap::from([
            ("surrogate".into(), json!(self.surrogate.trained_on())),
            ("synonyms".into(), json!(self.synonyms.id())),
            ("max_iters".into(), json!(self.max_iters)),
            ("seed".into(), json!(self.seed)),
        ])
    }

    fn call_counter(&self) -> &CallCounter {
        &self.counter
    }

    fn run_body(&self, sample: &TextSample, trace: bool) -> Result<AttackBody> {
        let mut text = sample.text.clone();
        let mut prob = self.prob(&text)?;
        let mut steps = Vec::new();
        let mut tried: Vec<String> = Vec::new();
        let mut any_synonyms = false;
        let mut iterations = 0usize;

        while prob >= 0.5 && iterations < self.max_iters {
            iterations += 1;
            let words = word_tokens(&text);
            if words.is_empty() {
                break;
            }
            // leave-one-out importance over words not yet handled
            let mut best: Option<(usize, f64)> = None;
            for (i, w) in words.iter().enumerate() {
                if tried.contains(&w.text) {
                    continue;
                }
                let without = remove_span(&text, &w.span);
                if without.trim().is_empty() {
                    continue;
                }
                let drop = prob - self.prob(&without)?;
                if best.is_none_or(|(_, d)| drop > d) {
                    best = Some((i, drop));
                }
            }
            let Some((word_idx, _)) = best else {
                break; // every word tried
            };
            let word = words[word_idx].clone();
            tried.push(word.text.clone());

            let candidates = self.synonyms.synonyms(&word.text);
            if candidates.is_empty() {
                if trace {
                    steps.push(TraceStep::WordSubstitution {
                        word: word.text.clone(),
                        position: word_idx,
                        candidates: Vec::new(),
                        chosen: None,
                        score_before: prob,
                        score_after: prob,
                    });
                }
                continue;
            }
            any_synonyms = true;

            let mut evals = Vec::new();
            let mut best_cand: Option<(String, String, f64)> = None;
            for cand in &candidates {
                let cand_text = replace_span_preserving_case(&text, &word.span, cand);
                let cand_prob = self.prob(&cand_text)?;
                evals.push(CandidateEval {
                    candidate: cand.clone(),
                    proxy_score: Some(cand_prob),
                    qpa: None,
                });
                if best_cand.as_ref().is_none_or(|(_, _, p)| cand_prob < *p) {
                    best_cand = Some((cand.clone(), cand_text, cand_prob));
                }
            }
            let (cand, cand_text, cand_prob) = best_cand.expect("candidates nonempty");
            let prob_before = prob;
            let mut chosen = None;
            if cand_prob <= prob {
                text = cand_text;
                prob = cand_prob;
                chosen = Some(cand);
            }
            if trace {
                steps.push(TraceStep::WordSubstitution {
                    word: word.text,
                    position: word_idx,
                    candidates: evals,
                    chosen,
                    score_before: prob_before,
                    score_after: prob,
                });
            }
        }

        let no_op = text == sample.text && !any_synonyms;
        if no_op && trace {
            steps.push(TraceStep::Flag {
                message: "no_op: no word had any synonym".into(),
            });
        }
        Ok(AttackBody {
            attacked_text: text,
            trace: trace.then_some(steps),
            extra_params: vec![
                ("iterations".into(), json!(iterations)),
                ("final_surrogate_prob".into(), json!(prob)),
                ("no_op".into(), json!(no_op)),
                ("regime".into(), json!(self.surrogate.regime_label(&sample.dataset))),
            ],
        })
    }
}
