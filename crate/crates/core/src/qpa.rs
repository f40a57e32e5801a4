//! Quality-preserving attack plug-in: constraint filters and ranking rules
//! wrapped around the prompt, word-substitution, and token-ensemble attacks.
//!
//! Three integration points:
//! - word candidates are dropped unless the edited sentence stays within the
//!   perplexity/readability change bounds and above the similarity floor;
//! - ensemble token candidates are filtered by similarity to the original
//!   sentence and ranked by smallest perplexity difference;
//! - prompts get a fixed quality instruction appended.

use serde::{Deserialize, Serialize};

use crate::attacks::{QpaCandidateCheck, TokenCandidateCheck};
use crate::gateway::{EmbeddingBackend, ScoringBackend};
use crate::quality::{cosine_similarity, flesch_reading_ease, perplexity, rouge_l};
use crate::Result;

/// Constraint thresholds. Defaults: 5% relative perplexity change, 5% relative
/// readability change, 0.95 word-substitution similarity, 0.70 token-ensemble
/// similarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpaConstraints {
    pub max_ppl_rel_change: f64,
    pub max_fre_rel_change: f64,
    pub min_similarity_word: f64,
    pub min_similarity_token: f64,
}

impl Default for QpaConstraints {
    fn default() -> Self {
        QpaConstraints {
            max_ppl_rel_change: 0.05,
            max_fre_rel_change: 0.05,
            min_similarity_word: 0.95,
            min_similarity_token: 0.70,
        }
    }
}

impl QpaConstraints {
    /// Pass-everything constraints; wrapping an attack with these reproduces
    /// the unconstrained attack bit-for-bit.
    pub fn disabled() -> Self {
        QpaConstraints {
            max_ppl_rel_change: f64::INFINITY,
            max_fre_rel_change: f64::INFINITY,
            min_similarity_word: f64::NEG_INFINITY,
            min_similarity_token: f64::NEG_INFINITY,
        }
    }
}

/// `|after - before| / max(|before|, 1)`.
///
/// The guard keeps the ratio defined for readability scores at or near zero;
/// perplexities are always >= 1, so the guard is inert there.
pub fn relative_change(before: f64, after: f64) -> f64 {
    (after - before).abs() / before.abs().max(1.0)
}

/// Word-substitution similarity: the smaller of embedding cosine and ROUGE-L
/// between the sentence before and after the edit, so both semantic metrics
/// must clear the threshold.
pub fn word_similarity(
    embedder: &dyn EmbeddingBackend,
    before: &str,
    after: &str,
) -> Result<f64> {
    let cs = cosine_similarity(embedder, before, after)?;
    let rl = rouge_l(before, after);
    Ok(cs.min(rl))
}

/// Outcome of filtering one word-substitution candidate pool.
#[derive(Debug, Clone, PartialEq)]
pub struct WordCandidateSelection {
    /// Index into the caller's candidate list, or None to keep the original.
    pub chosen: Option<usize>,
    pub checks: Vec<QpaCandidateCheck>,
}

/// Filter candidate sentences against the constraints; the first survivor in
/// the host attack's objective order is chosen. When every candidate violates
/// a constraint the original is kept and all rejection evaluations are
/// returned.
///
/// `candidate_sentences` must already be ordered by the host attack's
/// objective (best first).
pub fn qpa_filter_word_candidates(
    sentence_before: &str,
    candidate_sentences: &[String],
    constraints: &QpaConstraints,
    backend: &dyn ScoringBackend,
    embedder: &dyn EmbeddingBackend,
) -> Result<WordCandidateSelection> {
    let ppl_before = perplexity(backend, sentence_before)?;
    let fre_before = flesch_reading_ease(sentence_before)?;
    let mut checks = Vec::with_capacity(candidate_sentences.len());
    let mut chosen = None;
    for (idx, candidate) in candidate_sentences.iter().enumerate() {
        let ppl_rel = relative_change(ppl_before, perplexity(backend, candidate)?);
        let fre_rel = relative_change(fre_before, flesch_reading_ease(candidate)?);
        let similarity = word_similarity(embedder, sentence_before, candidate)?;
        let passed = ppl_rel < constraints.max_ppl_rel_change
            && fre_rel < constraints.max_fre_rel_change
            && similarity > constraints.min_similarity_word;
        if passed && chosen.is_none() {
            chosen = Some(idx);
        }
        checks.push(QpaCandidateCheck {
            candidate: candidate.clone(),
            ppl_rel_change: ppl_rel,
            fre_rel_change: fre_rel,
            similarity,
            passed,
        });
    }
    Ok(WordCandidateSelection { chosen, checks })
}

/// Outcome of quality-ranked token selection.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSelection {
    /// Index into the caller's candidate list; None means every candidate
    /// failed the similarity floor and the host must fall back to its
    /// unconstrained choice (the step is flagged).
    pub chosen: Option<usize>,
    pub checks: Vec<TokenCandidateCheck>,
}

/// Rank ensemble token candidates: keep those whose candidate sentence stays
/// similar to the original sentence, then pick the smallest absolute
/// perplexity difference versus the original. Ties resolve to the lower
/// candidate index (backend order).
pub fn qpa_select_token(
    sentence_so_far: &str,
    original_sentence: &str,
    token_candidates: &[(String, String)],
    constraints: &QpaConstraints,
    backend: &dyn ScoringBackend,
    embedder: &dyn EmbeddingBackend,
) -> Result<TokenSelection> {
    let ppl_original = perplexity(backend, original_sentence)?;
    let mut checks = Vec::with_capacity(token_candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (idx, (backend_id, token)) in token_candidates.iter().enumerate() {
        let candidate_sentence = if sentence_so_far.is_empty() {
            token.clone()
        } else {
            format!("{sentence_so_far} {token}")
        };
        let similarity = cosine_similarity(embedder, &candidate_sentence, original_sentence)?;
        let passed = similarity > constraints.min_similarity_token;
        let ppl_diff = if passed {
            let d = (perplexity(backend, &candidate_sentence)? - ppl_original).abs();
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((idx, d));
            }
            Some(d)
        } else {
            None
        };
        checks.push(TokenCandidateCheck {
            backend_id: backend_id.clone(),
            token: token.clone(),
            similarity,
            ppl_diff,
            passed_similarity: passed,
        });
    }
    Ok(TokenSelection {
        chosen: best.map(|(idx, _)| idx),
        checks,
    })
}

/// The canonical quality instruction block appended to prompts.
pub const QPA_INSTRUCTION: &str = include_str!("qpa_instruction.txt");

/// Append the quality instruction to a prompt; an empty base yields the
/// instruction block alone, otherwise the base is preserved verbatim.
pub fn qpa_prompt_augment(base_prompt: &str) -> String {
    if base_prompt.is_empty() {
        QPA_INSTRUCTION.to_string()
    } else {
        format!("{base_prompt}\n{QPA_INSTRUCTION}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::embed::HashingEmbedder;
    use crate::gateway::ngram::NgramModel;

    fn backend() -> NgramModel {
        // all words appear in varied contexts; candidates swap near-synonyms
        let texts: Vec<String> = (0..8)
            .map(|_| "the quick brown fox jumps over the lazy dog near the quiet river bank today while the bright sun shines over the green field".to_string())
            .chain((0..8).map(|_| {
                "the quick brown fox jumps over the sleepy dog near the quiet river bank today while the bright sun shines over the green field".to_string()
            }))
            .collect();
        NgramModel::train("toy", 2, &texts).unwrap()
    }

    #[test]
    fn identical_candidate_always_survives() {
        let b = backend();
        let e = HashingEmbedder::new("bow", 256).unwrap();
        let sentence = "the quick brown fox jumps over the lazy dog near the quiet river bank today while the bright sun shines over the green field";
        let sel = qpa_filter_word_candidates(
            sentence,
            &[sentence.to_string()],
            &QpaConstraints::default(),
            &b,
            &e,
        )
        .unwrap();
        assert_eq!(sel.chosen, Some(0));
        let c = &sel.checks[0];
        assert_eq!(c.ppl_rel_change, 0.0);
        assert_eq!(c.fre_rel_change, 0.0);
        assert_eq!(c.similarity, 1.0);
    }

    #[test]
    fn low_similarity_candidate_rejected() {
        let b = backend();
        let e = HashingEmbedder::new("bow", 256).unwrap();
        let sentence = "the quick brown fox jumps over the lazy dog near the quiet river bank today while the bright sun shines over the green field";
        // replacing many words tanks similarity well below 0.95
        let candidate = "a slow red cat walks under a lazy dog close by a noisy road gate now while a dim moon glows over a gray field";
        let sel = qpa_filter_word_candidates(
            sentence,
            &[candidate.to_string()],
            &QpaConstraints::default(),
            &b,
            &e,
        )
        .unwrap();
        assert_eq!(sel.chosen, None);
        assert!(!sel.checks[0].passed);
        assert!(sel.checks[0].similarity < 0.95);
    }

    #[test]
    fn exactly_one_survivor_matches_brute_force() {
        let b = backend();
        let e = HashingEmbedder::new("bow", 256).unwrap();
        let sentence = "the quick brown fox jumps over the lazy dog near the quiet river bank today while the bright sun shines over the green field";
        let candidates = [
            // near-identical single-word swap seen in training: survives
            "the quick brown fox jumps over the sleepy dog near the quiet river bank today while the bright sun shines over the green field"
                .to_string(),
            // heavy rewrite: fails similarity
            "completely different words everywhere breaking all three constraints badly today"
                .to_string(),
        ];
        // order candidates so the surviving one is NOT first, proving the
        // filter skips failed candidates
        let ordered = vec![candidates[1].clone(), candidates[0].clone()];
        let sel = qpa_filter_word_candidates(
            sentence,
            &ordered,
            &QpaConstraints::default(),
            &b,
            &e,
        )
        .unwrap();
        // brute-force re-check of every candidate
        let ppl0 = perplexity(&b, sentence).unwrap();
        let fre0 = flesch_reading_ease(sentence).unwrap();
        let mut expected = None;
        for (i, c) in ordered.iter().enumerate() {
            let ok = relative_change(ppl0, perplexity(&b, c).unwrap()) < 0.05
                && relative_change(fre0, flesch_reading_ease(c).unwrap()) < 0.05
                && word_similarity(&e, sentence, c).unwrap() > 0.95;
            if ok && expected.is_none() {
                expected = Some(i);
            }
        }
        assert_eq!(sel.chosen, expected);
        assert_eq!(sel.chosen, Some(1));
    }

    #[test]
    fn token_selection_filters_then_argmins() {
        let b = backend();
        let e = HashingEmbedder::new("bow", 256).unwrap();
        let original = "the quick brown fox jumps over the lazy dog";
        let so_far = "the quick brown fox jumps over the lazy";
        let candidates = vec![
            ("b0".to_string(), "dog".to_string()),
            ("b1".to_string(), "zebra".to_string()),
        ];
        let sel = qpa_select_token(
            so_far,
            original,
            &candidates,
            &QpaConstraints::default(),
            &b,
            &e,
        )
        .unwrap();
        // brute force: evaluate both candidates by hand
        let ppl_orig = perplexity(&b, original).unwrap();
        let mut surviving: Vec<(usize, f64)> = Vec::new();
        for (i, (_, tok)) in candidates.iter().enumerate() {
            let cand = format!("{so_far} {tok}");
            let sim = cosine_similarity(&e, &cand, original).unwrap();
            if sim > 0.70 {
                surviving.push((i, (perplexity(&b, &cand).unwrap() - ppl_orig).abs()));
            }
        }
        surviving.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        assert_eq!(sel.chosen, surviving.first().map(|(i, _)| *i));
    }

    #[test]
    fn token_selection_single_low_similarity_candidate_falls_back() {
        let b = backend();
        let e = HashingEmbedder::new("bow", 256).unwrap();
        let sel = qpa_select_token(
            "the",
            "a completely unrelated reference sentence about other things entirely",
            &[("b0".to_string(), "quick".to_string())],
            &QpaConstraints::default(),
            &b,
            &e,
        )
        .unwrap();
        assert_eq!(sel.chosen, None);
        assert!(!sel.checks[0].passed_similarity);
        assert!(sel.checks[0].similarity <= 0.70);
    }

    #[test]
    fn argmin_breaks_ties_to_lower_index() {
        let b = backend();
        let e = HashingEmbedder::new("bow", 256).unwrap();
        let original = "the quick brown fox jumps over the lazy dog";
        let so_far = "the quick brown fox jumps over the lazy";
        // identical tokens from two backends: equal ppl_diff, lower index wins
        let sel = qpa_select_token(
            so_far,
            original,
            &[
                ("b0".to_string(), "dog".to_string()),
                ("b1".to_string(), "dog".to_string()),
            ],
            &QpaConstraints::default(),
            &b,
            &e,
        )
        .unwrap();
        assert_eq!(sel.chosen, Some(0));
    }

    #[test]
    fn prompt_augment_empty_base_is_block_exactly() {
        assert_eq!(qpa_prompt_augment(""), QPA_INSTRUCTION);
    }

    #[test]
    fn instruction_block_matches_canonical_fixture_bytes() {
        let fixture = include_str!("../tests/fixtures/qpa_instruction.txt");
        assert_eq!(QPA_INSTRUCTION.as_bytes(), fixture.as_bytes());
        assert!(qpa_prompt_augment("any base").ends_with(fixture));
    }

    #[test]
    fn prompt_augment_preserves_base_and_appends_block() {
        let base = "Rewrite the following.";
        let out = qpa_prompt_augment(base);
        assert!(out.starts_with(base));
        assert!(out.ends_with(QPA_INSTRUCTION));
    }

    #[test]
    fn disabled_constraints_pass_everything() {
        let b = backend();
        let e = HashingEmbedder::new("bow", 256).unwrap();
        let sentence = "the quick brown fox jumps over the lazy dog";
        let wild = "completely different words everywhere now".to_string();
        let sel = qpa_filter_word_candidates(
            sentence,
            &[wild],
            &QpaConstraints::disabled(),
            &b,
            &e,
        )
        .unwrap();
        assert_eq!(sel.chosen, Some(0));
    }
}
