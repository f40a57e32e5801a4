//! Add-one-smoothed n-gram reference backend.
//!
//! The model is trained on the reference tokenizer's output, orders 1 through
//! 3. Conditional probabilities are `(count(ctx, t) + 1) / (count(ctx) + V)`
//! over the closed training vocabulary, so unseen continuations stay finite
//! and unseen contexts fall back to the uniform distribution.
//!
//! Scoring conventions for tokens outside the vocabulary: the realized logprob
//! is the zero-count smoothed value `ln(1 / (count(ctx) + V))` and the rank is
//! `V + 1` (worse than every vocabulary token). Context positions holding
//! out-of-vocabulary tokens are mapped to a reserved marker, which makes those
//! contexts unseen.
//!
//! Persistence is a versioned JSON file with deterministic key order, so
//! retraining on identical input reproduces the file byte-for-byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gateway::{
    BackendDescriptor, NextTokenDistribution, PositionDistribution, ScoredText, ScoringBackend,
    TokenScore,
};
use crate::hashing::fnv1a64;
use crate::text::tokenize;
use crate::{Error, Result};

const FORMAT_VERSION: u32 = 1;
const BOS: u32 = u32::MAX;
const OOV: u32 = u32::MAX - 1;

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<u32, u64>,
}

/// Trained n-gram model; immutable and freely shareable after training.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    descriptor: BackendDescriptor,
    order: usize,
    vocab: Vec<String>,
    index: BTreeMap<String, u32>,
    contexts: BTreeMap<Vec<u32>, ContextCounts>,
}

/// (context ids, total count, per-continuation counts).
type PersistedContext = (Vec<u32>, u64, Vec<(u32, u64)>);

#[derive(Serialize, Deserialize)]
struct PersistedModel {
    format_version: u32,
    id: String,
    order: usize,
    vocab: Vec<String>,
    /// Context rows; start-of-text markers keep their sentinel ids.
    contexts: Vec<PersistedContext>,
}

impl NgramModel {
    /// Train an order-`order` model (1..=3) on the given texts.
    pub fn train(id: impl Into<String>, order: usize, texts: &[String]) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "n-gram order must be 1..=3, got {order}"
            )));
        }
        let id = id.into();
        let mut vocab_set: BTreeMap<String, ()> = BTreeMap::new();
        let mut token_streams: Vec<Vec<String>> = Vec::new();
        for text in texts {
            let toks = tokenize(text);
            for t in &toks {
                vocab_set.insert(t.clone(), ());
            }
            if !toks.is_empty() {
                token_streams.push(toks);
            }
        }
        if vocab_set.is_empty() {
            return Err(Error::backend(&id, "training corpus is empty after tokenization"));
        }
        let vocab: Vec<String> = vocab_set.into_keys().collect();
        let index: BTreeMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();

        let mut contexts: BTreeMap<Vec<u32>, ContextCounts> = BTreeMap::new();
        for stream in &token_streams {
            let ids: Vec<u32> = stream.iter().map(|t| index[t]).collect();
            for (pos, &tok) in ids.iter().enumerate() {
                let ctx = context_key(&ids, pos, order);
                let entry = contexts.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(tok).or_default() += 1;
            }
        }

        let descriptor = BackendDescriptor::ngram_reference(id, vocab.len());
        Ok(NgramModel {
            descriptor,
            order,
            vocab,
            index,
            contexts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Serialize to the versioned JSON format (deterministic byte output).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let persisted = PersistedModel {
            format_version: FORMAT_VERSION,
            id: self.descriptor.id.clone(),
            order: self.order,
            vocab: self.vocab.clone(),
            contexts: self
                .contexts
                .iter()
                .map(|(ctx, counts)| {
                    (
                        ctx.clone(),
                        counts.total,
                        counts.next.iter().map(|(k, v)| (*k, *v)).collect(),
                    )
                })
                .collect(),
        };
        let json = serde_json::to_string(&persisted)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Load a model saved by [`NgramModel::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let data = std::fs::read_to_string(path.as_ref())?;
        let persisted: PersistedModel = serde_json::from_str(&data)?;
        if persisted.format_version != FORMAT_VERSION {
            return Err(Error::backend(
                &persisted.id,
                format!(
                    "unsupported model format version {} (expected {FORMAT_VERSION})",
                    persisted.format_version
                ),
            ));
        }
        let index: BTreeMap<String, u32> = persisted
            .vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let contexts = persisted
            .contexts
            .into_iter()
            .map(|(ctx, total, next)| {
                (
                    ctx,
                    ContextCounts {
                        total,
                        next: next.into_iter().collect(),
                    },
                )
            })
            .collect();
        Ok(NgramModel {
            descriptor: BackendDescriptor::ngram_reference(persisted.id, persisted.vocab.len()),
            order: persisted.order,
            vocab: persisted.vocab,
            index,
            contexts,
        })
    }

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn token_id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    fn counts_for(&self, ctx: &[u32]) -> (u64, Option<&ContextCounts>) {
        match self.contexts.get(ctx) {
            Some(c) => (c.total, Some(c)),
            None => (0, None),
        }
    }

    /// Smoothed conditional probability of token id `tok` (or an OOV token) in
    /// context `ctx`.
    fn conditional(&self, ctx: &[u32], tok: u32) -> f64 {
        let v = self.vocab_size() as f64;
        let (total, counts) = self.counts_for(ctx);
        let count = counts
            .and_then(|c| c.next.get(&tok).copied())
            .unwrap_or(0) as f64;
        (count + 1.0) / (total as f64 + v)
    }

    fn distribution_for(&self, ctx: &[u32]) -> NextTokenDistribution {
        let v = self.vocab_size() as f64;
        let (total, counts) = self.counts_for(ctx);
        let denom = total as f64 + v;
        let entries: Vec<(String, f64)> = self
            .vocab
            .iter()
            .enumerate()
            .map(|(i, tok)| {
                let count = counts
                    .and_then(|c| c.next.get(&(i as u32)).copied())
                    .unwrap_or(0) as f64;
                (tok.clone(), ((count + 1.0) / denom).ln())
            })
            .collect();
        NextTokenDistribution::new(entries, 0.0)
    }

    fn token_ids(&self, text: &str) -> Vec<(String, u32)> {
        tokenize(text)
            .into_iter()
            .map(|t| {
                let id = self.token_id(&t);
                (t, id)
            })
            .collect()
    }
}

fn context_key(ids: &[u32], pos: usize, order: usize) -> Vec<u32> {
    let ctx_len = order - 1;
    let mut ctx = Vec::with_capacity(ctx_len);
    for back in (1..=ctx_len).rev() {
        if pos >= back {
            ctx.push(ids[pos - back]);
        } else {
            ctx.push(BOS);
        }
    }
    ctx
}

impl ScoringBackend for NgramModel {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn score_text(&self, text: &str) -> Result<ScoredText> {
        if text.trim().is_empty() {
            return Err(Error::backend(&self.descriptor.id, "cannot score empty text"));
        }
        let toks = self.token_ids(text);
        let ids: Vec<u32> = toks.iter().map(|(_, id)| *id).collect();
        let v = self.vocab_size();
        let mut scores = Vec::with_capacity(toks.len());
        for (pos, (token, id)) in toks.iter().enumerate() {
            let ctx = context_key(&ids, pos, self.order);
            let dist = self.distribution_for(&ctx);
            let (logprob, rank) = if *id == OOV {
                let (total, _) = self.counts_for(&ctx);
                ((1.0 / (total as f64 + v as f64)).ln(), v as u32 + 1)
            } else {
                let lp = self.conditional(&ctx, *id).ln();
                let rank = dist.rank_of(token).expect("vocab token present");
                (lp, rank)
            };
            scores.push(TokenScore {
                token: token.clone(),
                logprob,
                rank,
                entropy: dist.entropy(),
                rank_exact: true,
            });
        }
        Ok(ScoredText {
            tokens: scores,
            backend_id: self.descriptor.id.clone(),
        })
    }

    fn next_token_distribution(&self, prefix: &str) -> Result<NextTokenDistribution> {
        let ids: Vec<u32> = tokenize(prefix)
            .iter()
            .map(|t| self.token_id(t))
            .collect();
        let ctx = context_key(&ids, ids.len(), self.order);
        Ok(self.distribution_for(&ctx))
    }

    fn position_distributions(&self, text: &str) -> Result<Vec<PositionDistribution>> {
        if text.trim().is_empty() {
            return Err(Error::backend(&self.descriptor.id, "cannot score empty text"));
        }
        let toks = self.token_ids(text);
        let ids: Vec<u32> = toks.iter().map(|(_, id)| *id).collect();
        let v = self.vocab_size() as f64;
        let mut out = Vec::with_capacity(toks.len());
        for (pos, (token, id)) in toks.iter().enumerate() {
            let ctx = context_key(&ids, pos, self.order);
            let dist = self.distribution_for(&ctx);
            let realized_logprob = if *id == OOV {
                let (total, _) = self.counts_for(&ctx);
                (1.0 / (total as f64 + v)).ln()
            } else {
                self.conditional(&ctx, *id).ln()
            };
            out.push(PositionDistribution {
                realized: token.clone(),
                realized_logprob,
                dist,
            });
        }
        Ok(out)
    }

    fn vocab_fingerprint(&self) -> Option<u64> {
        let joined = self.vocab.join("\u{1f}");
        Some(fnv1a64(joined.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform16() -> NgramModel {
        // every token appears exactly once: add-one keeps the distribution uniform
        let text = (0..16).map(|i| format!("t{i:02}")).collect::<Vec<_>>().join(" ");
        NgramModel::train("uniform16", 1, &[text]).unwrap()
    }

    #[test]
    fn uniform_unigram_scores() {
        let model = uniform16();
        let scored = model.score_text("t00 t05 t11 t03 t07").unwrap();
        assert_eq!(scored.tokens.len(), 5);
        for ts in &scored.tokens {
            assert!((ts.logprob - (1.0f64 / 16.0).ln()).abs() < 1e-12);
            assert!((ts.entropy - (16.0f64).ln()).abs() < 1e-12);
            // all probabilities tie, so the realized token takes the best rank
            assert_eq!(ts.rank, 1);
            assert!(ts.rank_exact);
        }
    }

    #[test]
    fn unigram_add_one_hand_count() {
        // corpus "a a b": vocab {a, b}; P(a) = (2+1)/(3+2), P(b) = (1+1)/5
        let model = NgramModel::train("toy", 1, &["a a b".to_string()]).unwrap();
        let scored = model.score_text("a b").unwrap();
        assert!((scored.tokens[0].logprob - (3.0f64 / 5.0).ln()).abs() < 1e-12);
        assert!((scored.tokens[1].logprob - (2.0f64 / 5.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn bigram_hand_computed_mle_with_add_one() {
        // corpus "a b a b a": vocab {a, b}
        // positions: a(BOS) b(a) a(b) b(a) a(b)
        //   ctx BOS: total 1, a:1
        //   ctx a:   total 2, b:2
        //   ctx b:   total 2, a:2
        let model = NgramModel::train("toy2", 2, &["a b a b a".to_string()]).unwrap();
        let scored = model.score_text("a b a").unwrap();
        // P(a|BOS) = (1+1)/(1+2) = 2/3
        assert!((scored.tokens[0].logprob - (2.0f64 / 3.0).ln()).abs() < 1e-12);
        // P(b|a) = (2+1)/(2+2) = 3/4
        assert!((scored.tokens[1].logprob - (3.0f64 / 4.0).ln()).abs() < 1e-12);
        // P(a|b) = (2+1)/(2+2) = 3/4
        assert!((scored.tokens[2].logprob - (3.0f64 / 4.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn distribution_after_token_matches_hand_normalized_counts() {
        let model = NgramModel::train("toy2", 2, &["a b a b a".to_string()]).unwrap();
        let dist = model.next_token_distribution("x a").unwrap();
        // ctx a: total 2, b:2 -> P(b|a)=3/4, P(a|a)=1/4
        assert!((dist.logprob_of("b").unwrap() - (0.75f64).ln()).abs() < 1e-12);
        assert!((dist.logprob_of("a").unwrap() - (0.25f64).ln()).abs() < 1e-12);
        assert!((dist.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_vocab_distribution_sums_to_one() {
        let model = uniform16();
        let dist = model.next_token_distribution("t00").unwrap();
        assert_eq!(dist.entries.len(), 16);
        assert!((dist.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn oov_token_gets_floor_logprob_and_worst_rank() {
        let model = NgramModel::train("toy", 1, &["a a b".to_string()]).unwrap();
        let scored = model.score_text("a zzz").unwrap();
        let oov = &scored.tokens[1];
        assert!((oov.logprob - (1.0f64 / 5.0).ln()).abs() < 1e-12);
        assert_eq!(oov.rank, 3); // vocab size 2 + 1
    }

    #[test]
    fn joint_probability_matches_hand_product() {
        // vocab {a,b,c}; order 2; exhaustively check a short text
        let model = NgramModel::train("toy3", 2, &["a b c a b".to_string()]).unwrap();
        let text = "a b c";
        let scored = model.score_text(text).unwrap();
        let joint: f64 = scored.tokens.iter().map(|t| t.logprob).sum();
        // hand product: P(a|BOS) * P(b|a) * P(c|b)
        // ctx BOS: total 1 {a:1}; ctx a: total 2 {b:2}; ctx b: total 1 {c:1}
        let hand = (2.0f64 / 4.0) * (3.0 / 5.0) * (2.0 / 4.0);
        assert!((joint.exp() - hand).abs() < 1e-9);
    }

    #[test]
    fn joint_probability_matches_count_oracle_exhaustively() {
        // vocab {a, b}; every text up to 4 tokens, each logprob sum checked
        // against conditionals recomputed from raw counts
        let corpus = "a b b a a b a";
        let model = NgramModel::train("toy", 2, &[corpus.to_string()]).unwrap();

        // independent count oracle
        let toks: Vec<&str> = corpus.split(' ').collect();
        let count_after = |ctx: Option<&str>, tok: &str| -> (u64, u64) {
            let mut hit = 0;
            let mut total = 0;
            for (i, &t) in toks.iter().enumerate() {
                let prev = if i == 0 { None } else { Some(toks[i - 1]) };
                if prev == ctx {
                    total += 1;
                    if t == tok {
                        hit += 1;
                    }
                }
            }
            (hit, total)
        };

        let vocab = ["a", "b"];
        let mut texts: Vec<Vec<&str>> = vec![vec![]];
        for _ in 0..4 {
            texts = texts
                .iter()
                .flat_map(|t| {
                    vocab.iter().map(move |v| {
                        let mut next = t.clone();
                        next.push(*v);
                        next
                    })
                })
                .collect();
            for text in &texts {
                let joined = text.join(" ");
                let scored = model.score_text(&joined).unwrap();
                let joint: f64 = scored.tokens.iter().map(|t| t.logprob).sum();
                let mut hand = 1.0f64;
                for (i, tok) in text.iter().enumerate() {
                    let ctx = if i == 0 { None } else { Some(text[i - 1]) };
                    let (hit, total) = count_after(ctx, tok);
                    hand *= (hit as f64 + 1.0) / (total as f64 + 2.0);
                }
                assert!(
                    (joint.exp() - hand).abs() < 1e-9,
                    "joint probability mismatch on {joined:?}: {} vs {hand}",
                    joint.exp()
                );
            }
        }
    }

    #[test]
    fn retrain_is_bit_identical_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let texts = vec!["a b c a b c".to_string(), "c b a".to_string()];
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        NgramModel::train("m", 2, &texts).unwrap().save(&p1).unwrap();
        NgramModel::train("m", 2, &texts).unwrap().save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let loaded = NgramModel::load(&p1).unwrap();
        assert_eq!(loaded, NgramModel::train("m", 2, &texts).unwrap());
    }

    #[test]
    fn single_token_corpus_is_valid() {
        let model = NgramModel::train("one", 1, &["solo".to_string()]).unwrap();
        let scored = model.score_text("solo").unwrap();
        assert_eq!(scored.tokens[0].rank, 1);
        // P(solo) = (1+1)/(1+1) = 1 -> maximal
        assert!((scored.tokens[0].logprob - 0.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_matches_distribution_entropy_per_position() {
        let model = NgramModel::train("toy", 2, &["a b a c a b".to_string()]).unwrap();
        let text = "a b c a";
        let scored = model.score_text(text).unwrap();
        let toks = tokenize(text);
        for (i, ts) in scored.tokens.iter().enumerate() {
            let prefix = crate::text::detokenize(&toks[..i]);
            let dist = model.next_token_distribution(&prefix).unwrap();
            assert!((ts.entropy - dist.entropy()).abs() < 1e-9, "position {i}");
        }
    }
}
