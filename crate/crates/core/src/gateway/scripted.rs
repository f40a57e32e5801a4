//! Scripted scoring backend with hand-specified conditional distributions.
//!
//! Useful wherever a test or example needs exact control of the predictive
//! distribution (degenerate, uniform, or arbitrary tables) without training.

use std::collections::BTreeMap;

use crate::gateway::{
    BackendDescriptor, NextTokenDistribution, PositionDistribution, ScoredText, ScoringBackend,
    TokenScore,
};
use crate::hashing::fnv1a64;
use crate::text::tokenize;
use crate::{Error, Result};

/// Backend whose next-token distribution is looked up from a fixed table keyed
/// by the last `order - 1` tokens, with a default for unlisted contexts.
pub struct ScriptedBackend {
    descriptor: BackendDescriptor,
    order: usize,
    table: BTreeMap<Vec<String>, Vec<(String, f64)>>,
    default: Vec<(String, f64)>,
}

impl ScriptedBackend {
    /// Context-free backend: every position uses `dist` (probabilities).
    pub fn context_free(id: impl Into<String>, dist: Vec<(&str, f64)>) -> Self {
        let default: Vec<(String, f64)> = dist.into_iter().map(|(t, p)| (t.into(), p)).collect();
        ScriptedBackend {
            descriptor: BackendDescriptor::ngram_reference(id, default.len()),
            order: 1,
            table: BTreeMap::new(),
            default,
        }
    }

    /// Emits `token` with probability 1 at every position.
    pub fn deterministic(id: impl Into<String>, token: &str) -> Self {
        Self::context_free(id, vec![(token, 1.0)])
    }

    /// Backend with per-context distributions (order 2: context = previous token).
    pub fn with_table(
        id: impl Into<String>,
        order: usize,
        table: BTreeMap<Vec<String>, Vec<(String, f64)>>,
        default: Vec<(String, f64)>,
    ) -> Self {
        let vocab = default.len();
        ScriptedBackend {
            descriptor: BackendDescriptor::ngram_reference(id, vocab),
            order,
            table,
            default,
        }
    }

    fn dist_for_ctx(&self, ctx: &[String]) -> NextTokenDistribution {
        let probs = self.table.get(ctx).unwrap_or(&self.default);
        let entries = probs
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(t, p)| (t.clone(), p.ln()))
            .collect();
        NextTokenDistribution::new(entries, 0.0)
    }

    fn context(&self, tokens: &[String], pos: usize) -> Vec<String> {
        let ctx_len = self.order.saturating_sub(1);
        let start = pos.saturating_sub(ctx_len);
        tokens[start..pos].to_vec()
    }
}

impl ScoringBackend for ScriptedBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn score_text(&self, text: &str) -> Result<ScoredText> {
        let positions = self.position_distributions(text)?;
        let tokens = positions
            .into_iter()
            .map(|p| {
                let rank = p.dist.rank_of(&p.realized).ok_or_else(|| {
                    Error::backend(
                        &self.descriptor.id,
                        format!("token {:?} not in scripted distribution", p.realized),
                    )
                })?;
                Ok(TokenScore {
                    token: p.realized,
                    logprob: p.realized_logprob,
                    rank,
                    entropy: p.dist.entropy(),
                    rank_exact: true,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoredText {
            tokens,
            backend_id: self.descriptor.id.clone(),
        })
    }

    fn next_token_distribution(&self, prefix: &str) -> Result<NextTokenDistribution> {
        let tokens = tokenize(prefix);
        let ctx = self.context(&tokens, tokens.len());
        Ok(self.dist_for_ctx(&ctx))
    }

    fn position_distributions(&self, text: &str) -> Result<Vec<PositionDistribution>> {
        if text.trim().is_empty() {
            return Err(Error::backend(&self.descriptor.id, "cannot score empty text"));
        }
        let tokens = tokenize(text);
        let mut out = Vec::with_capacity(tokens.len());
        for (pos, token) in tokens.iter().enumerate() {
            let ctx = self.context(&tokens, pos);
            let dist = self.dist_for_ctx(&ctx);
            let realized_logprob = dist.logprob_of(token).ok_or_else(|| {
                Error::backend(
                    &self.descriptor.id,
                    format!("token {token:?} not in scripted distribution"),
                )
            })?;
            out.push(PositionDistribution {
                realized: token.clone(),
                realized_logprob,
                dist,
            });
        }
        Ok(out)
    }

    fn vocab_fingerprint(&self) -> Option<u64> {
        let mut names: Vec<&str> = self.default.iter().map(|(t, _)| t.as_str()).collect();
        names.sort_unstable();
        Some(fnv1a64(names.join("\u{1f}").as_bytes()))
    }
}
