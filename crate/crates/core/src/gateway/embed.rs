//! Hashed bag-of-words reference embedder.

use crate::gateway::EmbeddingBackend;
use crate::hashing::fnv1a64;
use crate::text::word_tokens;
use crate::{Error, Result};

/// Deterministic hashed-feature embedder. With `ngram_order` 1 this is a pure
/// bag of words (word order does not matter); order 2 additionally hashes
/// adjacent word pairs, which makes the vectors order-sensitive, so trained
/// heads can tell coherent text from shuffled text.
pub struct HashingEmbedder {
    id: String,
    dim: usize,
    ngram_order: usize,
}

impl HashingEmbedder {
    /// Unigram (bag-of-words) embedder.
    pub fn new(id: impl Into<String>, dim: usize) -> Result<Self> {
        Self::with_order(id, dim, 1)
    }

    /// Embedder hashing all n-grams up to `ngram_order` (1 or 2).
    pub fn with_order(id: impl Into<String>, dim: usize, ngram_order: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be > 0".into()));
        }
        if !(1..=2).contains(&ngram_order) {
            return Err(Error::InvalidArgument(
                "embedder ngram_order must be 1 or 2".into(),
            ));
        }
        Ok(HashingEmbedder {
            id: id.into(),
            dim,
            ngram_order,
        })
    }

    /// Coordinate assigned to a token; exposed so tests can verify the absence
    /// of collisions on their fixtures.
    pub fn slot(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dim as u64) as usize
    }
}

impl EmbeddingBackend for HashingEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let words = word_tokens(text);
        if words.is_empty() {
            return Err(Error::backend(
                &self.id,
                "text has no word tokens to embed",
            ));
        }
        let mut v = vec![0.0; self.dim];
        for tok in &words {
            v[self.slot(&tok.text)] += 1.0;
        }
        if self.ngram_order >= 2 {
            for pair in words.windows(2) {
                let joined = format!("{}\u{1f}{}", pair[0].text, pair[1].text);
                v[self.slot(&joined)] += 1.0;
            }
        }
        Ok(v)
    }
}
