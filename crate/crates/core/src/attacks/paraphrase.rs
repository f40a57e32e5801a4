//! Whole-text paraphrase attacks: a single rewrite pass with diversity knobs
//! ("dipper") and its recursive variant.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::attacks::{run_seed, Attack, AttackBody, TraceStep};
use crate::corpus::TextSample;
use crate::gateway::{CallCounter, CountingRewrite, RewriteBackend, RewriteRequest};
use crate::{Error, Result};

/// Lexical/order diversity knobs passed to the rewriter as an instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct DipperParams {
    /// 0..=100; how aggressively wording may change.
    pub lex_diversity: u8,
    /// 0..=100; how aggressively content may be reordered.
    pub order_diversity: u8,
    pub max_tokens: usize,
    pub temperature: f64,
}

impl Default for DipperParams {
    fn default() -> Self {
        DipperParams {
            lex_diversity: 60,
            order_diversity: 20,
            max_tokens: 1024,
            temperature: 0.7,
        }
    }
}

impl DipperParams {
    fn instruction(&self) -> String {
        format!(
            "Paraphrase the following text. lexical_diversity={}; order_diversity={}.",
            self.lex_diversity, self.order_diversity
        )
    }
}

/// Single rewrite pass over the whole text.
pub struct ParaphraseAttack {
    id: String,
    rewriter: CountingRewrite,
    params: DipperParams,
    seed: u64,
    /// When set, the rewriter receives the diversity instruction; reference
    /// rewriters ignore instructions, remote paraphrasers honor them.
    send_instruction: bool,
}

impl ParaphraseAttack {
    pub fn new(rewriter: Arc<dyn RewriteBackend>, params: DipperParams, seed: u64) -> Self {
        let counter = CallCounter::new();
        ParaphraseAttack {
            id: "dipper".to_string(),
            rewriter: CountingRewrite {
                inner: rewriter,
                counter,
            },
            params,
            seed,
            send_instruction: true,
        }
    }

    pub(crate) fn rewrite_once(
        &self,
        text: &str,
        seed: u64,
        context: Option<&str>,
    ) -> Result<String> {
        let mut req = RewriteRequest {
            text: text.to_string(),
            instruction: self.send_instruction.then(|| self.params.instruction()),
            max_tokens: self.params.max_tokens,
            temperature: self.params.temperature,
            seed: Some(seed),
        };
        if let Some(ctx) = context {
            let base = req.instruction.take().unwrap_or_default();
            req.instruction = Some(format!("{base}\nContext: {ctx}").trim().to_string());
        }
        let out = self.rewriter.rewrite(&req)?;
        if out.trim().is_empty() {
            return Err(Error::EmptyCompletion {
                id: self.rewriter.id().to_string(),
            });
        }
        Ok(out)
    }
}

impl Attack for ParaphraseAttack {
    fn id(&self) -> &str {
        &self.id
    }

    fn params(&self) -> BTreeMap<String, Value> {
        BTreeMap::from([
            ("rewriter".into(), json!(self.rewriter.id())),
            ("lex_diversity".into(), json!(self.params.lex_diversity)),
            ("order_diversity".into(), json!(self.params.order_diversity)),
            ("max_tokens".into(), json!(self.params.max_tokens)),
            ("temperature".into(), json!(self.params.temperature)),
            ("seed".into(), json!(self.seed)),
        ])
    }

    fn call_counter(&self) -> &CallCounter {
        &self.rewriter.counter
    }

    fn backends_peak_memory(&self) -> Option<u64> {
        self.rewriter.reported_peak_memory()
    }

    fn run_body(&self, sample: &TextSample, trace: bool) -> Result<AttackBody> {
        self.run_body_with_context(sample, trace, None)
    }

    fn run_body_with_context(
        &self,
        sample: &TextSample,
        trace: bool,
        context: Option<&str>,
    ) -> Result<AttackBody> {
        let seed = run_seed(self.seed, &sample.id);
        let output = self.rewrite_once(&sample.text, seed, context)?;
        Ok(AttackBody {
            trace: trace.then(|| {
                vec![TraceStep::Rewrite {
                    iteration: 1,
                    input: sample.text.clone(),
                    output: output.clone(),
                }]
            }),
            attacked_text: output,
            extra_params: Vec::new(),
        })
    }
}

/// Iterated paraphrasing: the rewriter runs exactly `depth` times, each output
/// feeding the next input.
pub struct RecursionAttack {
    id: String,
    inner: ParaphraseAttack,
    depth: usize,
}

impl RecursionAttack {
    /// Default depth is 5.
    pub fn new(
        rewriter: Arc<dyn RewriteBackend>,
        params: DipperParams,
        depth: usize,
        seed: u64,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("recursion depth must be >= 1".into()));
        }
        Ok(RecursionAttack {
            id: "recursion".to_string(),
            inner: ParaphraseAttack::new(rewriter, params, seed),
            depth,
        })
    }
}

impl Attack for RecursionAttack {
    fn id(&self) -> &str {
        &self.id
    }

    fn params(&self) -> BTreeMap<String, Value> {
        let mut p = self.inner.params();
        p.insert("depth".into(), json!(self.depth));
        p
    }

    fn call_counter(&self) -> &CallCounter {
        self.inner.call_counter()
    }

    fn backends_peak_memory(&self) -> Option<u64> {
        self.inner.backends_peak_memory()
    }

    fn run_body(&self, sample: &TextSample, trace: bool) -> Result<AttackBody> {
        let mut steps = Vec::new();
        let mut current = sample.text.clone();
        for iteration in 1..=self.depth {
            // depth 1 must replay the single-pass attack exactly, so the
            // first iteration uses the same derived seed
            let seed = if iteration == 1 {
                run_seed(self.inner.seed, &sample.id)
            } else {
                crate::hashing::seed_for(
                    self.inner.seed,
                    &["attack-run", &sample.id, &iteration.to_string()],
                )
            };
            let output = self.inner.rewrite_once(&current, seed, None)?;
            if trace {
                steps.push(TraceStep::Rewrite {
                    iteration,
                    input: current.clone(),
                    output: output.clone(),
                });
            }
            current = output;
        }
        Ok(AttackBody {
            attacked_text: current,
            trace: trace.then_some(steps),
            extra_params: Vec::new(),
        })
    }
}
