//! Greedy word-substitution attack.
//!
//! Pipeline per sample: (a) rank words by leave-one-out proxy-score drop,
//! (b) select the top `ceil(proportion * word_count)`, (c) ask the candidate
//! backend for `top_k` in-context replacements per word, (d) greedily keep the
//! candidate minimizing the proxy MGT-score, keeping the original word when no
//! candidate improves it. The trace records every decision.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::attacks::{Attack, AttackBody, CandidateEval, TraceStep};
use crate::corpus::TextSample;
use crate::detectors::MgtScorer;
use crate::gateway::{CallCounter, CountingScoring, EmbeddingBackend, ScoringBackend};
use crate::qpa::{qpa_filter_word_candidates, QpaConstraints};
use crate::text::{replace_span_preserving_case, segment_sentences, word_tokens};
use crate::{Error, Result};

/// Quality-preserving configuration for the word filter.
pub struct RaftQpa {
    pub constraints: QpaConstraints,
    pub quality_backend: Arc<dyn ScoringBackend>,
    pub embedder: Arc<dyn EmbeddingBackend>,
}

pub struct RaftAttack {
    id: String,
    proxy: Arc<dyn MgtScorer>,
    candidates: CountingScoring,
    proportion: f64,
    top_k: usize,
    seed: u64,
    qpa: Option<RaftQpa>,
}

impl RaftAttack {
    pub fn new(
        proxy: Arc<dyn MgtScorer>,
        candidate_backend: Arc<dyn ScoringBackend>,
        proportion: f64,
        top_k: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(proportion > 0.0 && proportion <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "proportion must be in (0, 1], got {proportion}"
            )));
        }
        if top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be >= 1".into()));
        }
        Ok(RaftAttack {
            id: "raft".to_string(),
            proxy,
            candidates: CountingScoring {
                inner: candidate_backend,
                counter: CallCounter::new(),
            },
            proportion,
            top_k,
            seed,
            qpa: None,
        })
    }

    pub fn with_qpa(mut self, qpa: RaftQpa) -> Self {
        self.qpa = Some(qpa);
        self.id = "qpa(raft)".to_string();
        self
    }

    /// Number of words entering the substitution stage for a given word count.
    pub fn selection_count(&self, word_count: usize) -> usize {
        (self.proportion * word_count as f64).ceil() as usize
    }

    fn candidate_words(&self, prefix: &str, original_lower: &str) -> Result<Vec<String>> {
        let dist = self.candidates.next_token_distribution(prefix)?;
        let mut out = Vec::new();
        for (tok, _) in &dist.entries {
            if out.len() >= self.top_k {
                break;
            }
            let is_word = tok.chars().all(char::is_alphanumeric) && !tok.is_empty();
            if is_word && tok != original_lower {
                out.push(tok.clone());
            }
        }
        Ok(out)
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

/// Sentence of `text` containing byte `pos`, with its byte offset.
fn sentence_at(text: &str, pos: usize) -> (String, usize) {
    let segs = segment_sentences(text);
    let mut offset = segs.leading.len();
    for (sentence, gap) in &segs.items {
        let end = offset + sentence.len();
        if pos < end + gap.len() {
            return (sentence.clone(), offset);
        }
        offset = end + gap.len();
    }
    (text.to_string(), 0)
}

impl Attack for RaftAttack {
    fn id(&self) -> &str {
        &self.id
    }

    fn params(&self) -> BTreeMap<String, Value> {
        let mut p = BTreeMap::from([
            ("proxy".into(), json!(self.proxy.id())),
            ("candidate_backend".into(), json!(self.candidates.descriptor().id)),
            ("proportion".into(), json!(self.proportion)),
            ("top_k".into(), json!(self.top_k)),
            ("seed".into(), json!(self.seed)),
            ("qpa".into(), json!(self.qpa.is_some())),
        ]);
        if let Some(q) = &self.qpa {
            p.insert("qpa_constraints".into(), json!(q.constraints));
        }
        p
    }

    fn call_counter(&self) -> &CallCounter {
        &self.candidates.counter
    }

    fn backends_peak_memory(&self) -> Option<u64> {
        self.candidates.reported_peak_memory()
    }

    fn run_body(&self, sample: &TextSample, trace: bool) -> Result<AttackBody> {
        let words = word_tokens(&sample.text);
        if words.is_empty() {
            return Err(Error::attack(&self.id, "sample has no word tokens"));
        }
        let base_score = self
            .proxy
            .mgt_score(&sample.text)
            .map_err(|e| Error::attack(&self.id, format!("proxy failed: {e}")))?;

        // (a) leave-one-out importance
        let mut importance: Vec<(usize, f64)> = Vec::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            let without = remove_span(&sample.text, &w.span);
            let drop = if without.trim().is_empty() {
                f64::NEG_INFINITY
            } else {
                base_score - self.proxy.mgt_score(&without)?
            };
            importance.push((i, drop));
        }

        // (b) top ceil(proportion * word_count), ties to earlier position
        let n_sel = self.selection_count(words.len()).min(words.len());
        importance.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut selected: Vec<usize> = importance.iter().take(n_sel).map(|(i, _)| *i).collect();
        selected.sort_unstable();

        // (c)+(d) greedy left-to-right substitution
        let mut text = sample.text.clone();
        let mut offset: isize = 0;
        let mut current_score = base_score;
        let mut steps = Vec::new();
        for idx in selected {
            let word = &words[idx];
            let span = Range {
                start: (word.span.start as isize + offset) as usize,
                end: (word.span.end as isize + offset) as usize,
            };
            let prefix = text[..span.start].to_string();
            let candidate_words = self.candidate_words(&prefix, &word.text)?;
            let mut evaluated: Vec<(String, String, f64)> = Vec::new();
            for cand in &candidate_words {
                let cand_text = replace_span_preserving_case(&text, &span, cand);
                let score = self.proxy.mgt_score(&cand_text)?;
                evaluated.push((cand.clone(), cand_text, score));
            }
            // objective order: ascending proxy score, stable on ties
            evaluated.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());

            let mut evals: Vec<CandidateEval> = evaluated
                .iter()
                .map(|(cand, _, score)| CandidateEval {
                    candidate: cand.clone(),
                    proxy_score: Some(*score),
                    qpa: None,
                })
                .collect();

            let chosen_idx = match &self.qpa {
                None => (!evaluated.is_empty()).then_some(0),
                Some(q) => {
                    let (sentence_before, sent_off) = sentence_at(&text, span.start);
                    let rel = Range {
                        start: span.start - sent_off,
                        end: span.end - sent_off,
                    };
                    let candidate_sentences: Vec<String> = evaluated
                        .iter()
                        .map(|(cand, _, _)| {
                            replace_span_preserving_case(&sentence_before, &rel, cand)
                        })
                        .collect();
                    let selection = qpa_filter_word_candidates(
                        &sentence_before,
                        &candidate_sentences,
                        &q.constraints,
                        q.quality_backend.as_ref(),
                        q.embedder.as_ref(),
                    )?;
                    for (eval, check) in evals.iter_mut().zip(&selection.checks) {
                        eval.qpa = Some(check.clone());
                    }
                    selection.chosen
                }
            };

            let mut chosen = None;
            let mut score_after = current_score;
            if let Some(ci) = chosen_idx {
                let (cand, cand_text, score) = &evaluated[ci];
                // keep the original unless the candidate strictly improves
                if *score < current_score {
                    offset += cand_text.len() as isize - text.len() as isize;
                    text = cand_text.clone();
                    score_after = *score;
                    chosen = Some(cand.clone());
                }
            }
            if trace {
                steps.push(TraceStep::WordSubstitution {
                    word: word.text.clone(),
                    position: idx,
                    candidates: evals,
                    chosen,
                    score_before: current_score,
                    score_after,
                });
            }
            current_score = score_after;
        }

        Ok(AttackBody {
            attacked_text: text,
            trace: trace.then_some(steps),
            extra_params: vec![("final_proxy_score".into(), json!(current_score))],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::tests::sample;
    use crate::gateway::scripted::ScriptedBackend;

    /// Proxy that counts occurrences of the token "zz" (higher = more MGT).
    struct ZzCounter;
    impl MgtScorer for ZzCounter {
        fn id(&self) -> &str {
            "zz_counter"
        }
        fn mgt_score(&self, text: &str) -> Result<f64> {
            Ok(crate::text::tokenize(text)
                .iter()
                .filter(|t| t.as_str() == "zz")
                .count() as f64)
        }
    }

    fn qq_backend() -> Arc<dyn ScoringBackend> {
        Arc::new(ScriptedBackend::context_free(
            "cands",
            vec![("qq", 0.6), ("rr", 0.4)],
        ))
    }

    #[test]
    fn proportion_015_selects_15_of_100() {
        let attack = RaftAttack::new(Arc::new(ZzCounter), qq_backend(), 0.15, 3, 1).unwrap();
        assert_eq!(attack.selection_count(100), 15);
    }

    #[test]
    fn ceiling_forces_one_word_minimum() {
        let attack = RaftAttack::new(Arc::new(ZzCounter), qq_backend(), 0.05, 3, 1).unwrap();
        assert_eq!(attack.selection_count(1), 1);
        let s = sample("s1", "zz");
        let out = attack.attack(&s, true).unwrap();
        // the single word was selected and substituted away
        assert_eq!(out.attacked_text, "qq");
    }

    #[test]
    fn sweep_is_monotone_in_proportion() {
        let mut last = 0;
        for p in [0.05, 0.10, 0.15, 0.20, 0.25] {
            let attack = RaftAttack::new(Arc::new(ZzCounter), qq_backend(), p, 3, 1).unwrap();
            let n = attack.selection_count(100);
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn greedy_matches_brute_force_on_zz_lattice() {
        // 4 words, proportion 0.75 -> 3 selected; proxy counts "zz"
        let attack = RaftAttack::new(Arc::new(ZzCounter), qq_backend(), 0.75, 2, 1).unwrap();
        let s = sample("s1", "zz aa zz bb");
        let out = attack.attack(&s, true).unwrap();
        let final_score = ZzCounter.mgt_score(&out.attacked_text).unwrap();

        // brute force over the candidate lattice restricted to selected words:
        // the selected words are the three with highest leave-one-out drop;
        // every zz is substitutable by {keep, qq, rr}, so the min is 0
        assert_eq!(final_score, 0.0);
        // greedy never increases the proxy score step to step
        let mut prev = f64::INFINITY;
        for step in out.trace.unwrap() {
            if let TraceStep::WordSubstitution {
                score_before,
                score_after,
                ..
            } = step
            {
                assert!(score_after <= score_before);
                assert!(score_before <= prev || prev == f64::INFINITY);
                prev = score_after;
            }
        }
    }

    #[test]
    fn keeps_original_when_no_candidate_improves() {
        // text has no zz: score 0 everywhere, candidates cannot improve
        let attack = RaftAttack::new(Arc::new(ZzCounter), qq_backend(), 1.0, 2, 1).unwrap();
        let s = sample("s1", "aa bb cc");
        let out = attack.attack(&s, false).unwrap();
        assert_eq!(out.attacked_text, "aa bb cc");
    }

    #[test]
    fn casing_preserved_when_substituting() {
        let attack = RaftAttack::new(Arc::new(ZzCounter), qq_backend(), 1.0, 2, 1).unwrap();
        let s = sample("s1", "Zz aa");
        let out = attack.attack(&s, false).unwrap();
        assert!(out.attacked_text.starts_with("Qq") || out.attacked_text.starts_with("Rr"));
    }
}
