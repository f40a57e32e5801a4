//! Text-quality metrics: fluency (perplexity), semantic consistency (embedding
//! cosine and ROUGE-L), and complexity (Flesch Reading Ease), plus the paired
//! before/after report for one attack outcome.

use serde::{Deserialize, Serialize};

use crate::attacks::AttackOutcome;
use crate::corpus::TextSample;
use crate::gateway::{EmbeddingBackend, ScoringBackend};
use crate::text::{segment_sentences, syllables, word_tokens};
use crate::{Error, Result};

/// Paired quality metrics for one original/attacked pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub sample_id: String,
    pub attack_id: String,
    pub ppl_before: f64,
    pub ppl_after: f64,
    pub cs: f64,
    pub rouge_l: f64,
    pub fre_before: f64,
    pub fre_after: f64,
    pub ppl_delta: f64,
    pub fre_delta: f64,
}

/// `exp(-mean token logprob)` under the given backend.
pub fn perplexity(backend: &dyn ScoringBackend, text: &str) -> Result<f64> {
    let scored = backend.score_text(text)?;
    if scored.tokens.is_empty() {
        return Err(Error::degenerate("perplexity", "text tokenizes to nothing"));
    }
    Ok((-scored.mean_logprob()).exp())
}

/// Cosine similarity of the two texts' embeddings.
pub fn cosine_similarity(embedder: &dyn EmbeddingBackend, a: &str, b: &str) -> Result<f64> {
    let va = embedder.embed(a)?;
    let vb = embedder.embed(b)?;
    cosine(&va, &vb)
}

pub(crate) fn cosine(va: &[f64], vb: &[f64]) -> Result<f64> {
    let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
    let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::degenerate("cosine_similarity", "zero-norm embedding"));
    }
    Ok(dot / (na * nb))
}

/// Length of the longest common subsequence of two token slices (single-row
/// dynamic program).
pub(crate) fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for &ta in a {
        let mut diag = 0usize; // previous row's value at j
        for (j, &tb) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if ta == tb {
                diag + 1
            } else {
                above.max(row[j])
            };
            diag = above;
        }
    }
    row[b.len()]
}

/// ROUGE-L F-measure (beta = 1) over lower-cased word tokens.
///
/// `P = LCS/|candidate|`, `R = LCS/|reference|`, `F = 2PR/(P+R)`. An empty
/// side yields 0 by convention.
pub fn rouge_l(reference: &str, candidate: &str) -> f64 {
    let ref_tokens: Vec<String> = word_tokens(reference).into_iter().map(|t| t.text).collect();
    let cand_tokens: Vec<String> = word_tokens(candidate).into_iter().map(|t| t.text).collect();
    rouge_l_tokens(
        &ref_tokens.iter().map(String::as_str).collect::<Vec<_>>(),
        &cand_tokens.iter().map(String::as_str).collect::<Vec<_>>(),
    )
}

/// ROUGE-L over pre-tokenized sequences.
pub fn rouge_l_tokens(reference: &[&str], candidate: &[&str]) -> f64 {
    if reference.is_empty() || candidate.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(reference, candidate) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Flesch Reading Ease:
/// `206.835 - 1.015 * (words/sentences) - 84.6 * (syllables/words)`.
///
/// Sentences come from [`segment_sentences`]; syllables from the vowel-group
/// heuristic in [`crate::text::syllables`].
pub fn flesch_reading_ease(text: &str) -> Result<f64> {
    let words = word_tokens(text);
    if words.is_empty() {
        return Err(Error::degenerate("flesch_reading_ease", "no words detected"));
    }
    let sentences = segment_sentences(text).len();
    if sentences == 0 {
        return Err(Error::degenerate(
            "flesch_reading_ease",
            "no sentences detected",
        ));
    }
    let syllable_count: usize = words.iter().map(|w| syllables(&w.text)).sum();
    let w = words.len() as f64;
    let s = sentences as f64;
    Ok(206.835 - 1.015 * (w / s) - 84.6 * (syllable_count as f64 / w))
}

/// Assemble the four quality metrics for one attack outcome.
pub fn quality_report(
    original: &TextSample,
    outcome: &AttackOutcome,
    backend: &dyn ScoringBackend,
    embedder: &dyn EmbeddingBackend,
) -> Result<QualityReport> {
    let before = &original.text;
    let after = &outcome.attacked_text;
    let ppl_before = perplexity(backend, before)?;
    let ppl_after = perplexity(backend, after)?;
    let fre_before = flesch_reading_ease(before)?;
    let fre_after = flesch_reading_ease(after)?;
    Ok(QualityReport {
        sample_id: original.id.clone(),
        attack_id: outcome.attack_id.clone(),
        ppl_before,
        ppl_after,
        cs: cosine_similarity(embedder, before, after)?,
        rouge_l: rouge_l(before, after),
        fre_before,
        fre_after,
        ppl_delta: ppl_after - ppl_before,
        fre_delta: fre_after - fre_before,
    })
}
