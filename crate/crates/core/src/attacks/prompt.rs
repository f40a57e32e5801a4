//! Prompt-based paraphrase attack: a three-part prompt (original input, attack
//! objective, attack guidance) sent to a rewriting backend in one call.
//!
//! The shipped template wording is non-normative; any template with the three
//! components in order satisfies the contract.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::attacks::{run_seed, Attack, AttackBody, TraceStep};
use crate::corpus::TextSample;
use crate::gateway::{CallCounter, CountingRewrite, RewriteBackend, RewriteRequest};
use crate::qpa::qpa_prompt_augment;
use crate::{Error, Result};

/// A prompt template: objective and guidance blocks wrapped around the
/// original sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: String,
    pub objective: String,
    pub guidance: String,
}

impl PromptTemplate {
    /// The default template.
    pub fn standard() -> Self {
        PromptTemplate {
            id: "standard".into(),
            objective: "Rewrite the text so an automated detector would judge it \
                        human-written, while keeping the original meaning intact."
                .into(),
            guidance: "Rephrase at the word, phrase, and sentence level. Vary sentence \
                       length and structure, prefer common wording, and keep the content \
                       accurate."
                .into(),
        }
    }

    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            "standard" => Ok(Self::standard()),
            _ => Err(Error::UnknownRegistryName {
                registry: "prompt_template".into(),
                name: id.into(),
            }),
        }
    }

    /// Assemble the three components in order; the original text appears
    /// verbatim.
    pub fn render(&self, text: &str, label: &str) -> String {
        format!(
            "Original Input:\nText: {text}\nLabel: {label}\n\nAttack Objective:\n{}\n\nAttack Guidance:\n{}",
            self.objective, self.guidance
        )
    }
}

/// One rewrite call with the assembled prompt.
pub struct PromptAttack {
    id: String,
    rewriter: CountingRewrite,
    template: PromptTemplate,
    max_tokens: usize,
    temperature: f64,
    seed: u64,
    qpa_augment: bool,
}

impl PromptAttack {
    pub fn new(rewriter: Arc<dyn RewriteBackend>, template: PromptTemplate, seed: u64) -> Self {
        PromptAttack {
            id: "prompt".to_string(),
            rewriter: CountingRewrite {
                inner: rewriter,
                counter: CallCounter::new(),
            },
            template,
            max_tokens: 1024,
            temperature: 0.7,
            seed,
            qpa_augment: false,
        }
    }

    /// Append the quality-preserving instruction block to every prompt.
    pub fn with_qpa(mut self) -> Self {
        self.qpa_augment = true;
        self.id = "qpa(prompt)".to_string();
        self
    }

    pub fn rendered_prompt(&self, sample: &TextSample) -> String {
        let label = match sample.label {
            crate::corpus::Label::Machine => "machine-generated",
            crate::corpus::Label::Human => "human-written",
        };
        let base = self.template.render(&sample.text, label);
        if self.qpa_augment {
            qpa_prompt_augment(&base)
        } else {
            base
        }
    }
}

impl Attack for PromptAttack {
    fn id(&self) -> &str {
        &self.id
    }

    fn params(&self) -> BTreeMap<String, Value> {
        BTreeMap::from([
            ("rewriter".into(), json!(self.rewriter.id())),
            ("template".into(), json!(self.template.id)),
            ("max_tokens".into(), json!(self.max_tokens)),
            ("temperature".into(), json!(self.temperature)),
            ("seed".into(), json!(self.seed)),
            ("qpa".into(), json!(self.qpa_augment)),
        ])
    }

    fn call_counter(&self) -> &CallCounter {
        &self.rewriter.counter
    }

    fn backends_peak_memory(&self) -> Option<u64> {
        self.rewriter.reported_peak_memory()
    }

    fn run_body(&self, sample: &TextSample, trace: bool) -> Result<AttackBody> {
        let prompt = self.rendered_prompt(sample);
        let req = RewriteRequest {
            text: prompt.clone(),
            instruction: None,
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            seed: Some(run_seed(self.seed, &sample.id)),
        };
        let output = self.rewriter.rewrite(&req)?;
        Ok(AttackBody {
            attacked_text: output,
            trace: trace.then(|| vec![TraceStep::Prompt { prompt }]),
            extra_params: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::tests::sample;
    use crate::gateway::rewrite::IdentityRewriter;
    use std::sync::Mutex;

    #[test]
    fn template_contains_text_and_blocks_in_order() {
        let t = PromptTemplate::standard();
        let rendered = t.render("THE ORIGINAL SAMPLE", "machine-generated");
        let text_at = rendered.find("THE ORIGINAL SAMPLE").unwrap();
        let objective_at = rendered.find("Attack Objective:").unwrap();
        let guidance_at = rendered.find("Attack Guidance:").unwrap();
        assert!(text_at < objective_at && objective_at < guidance_at);
    }

    #[test]
    fn echo_rewriter_trace_prompt_equals_output() {
        // the identity rewriter echoes the supplied prompt text
        let attack = PromptAttack::new(
            Arc::new(IdentityRewriter::new("echo")),
            PromptTemplate::standard(),
            1,
        );
        let s = sample("s1", "body text");
        let out = attack.attack(&s, true).unwrap();
        match &out.trace.unwrap()[0] {
            TraceStep::Prompt { prompt } => assert_eq!(prompt, &out.attacked_text),
            other => panic!("unexpected step {other:?}"),
        }
    }

    #[test]
    fn exactly_one_request_per_sample() {
        struct RecordingRewriter {
            log: Mutex<Vec<String>>,
        }
        impl RewriteBackend for RecordingRewriter {
            fn id(&self) -> &str {
                "recording"
            }
            fn rewrite(&self, req: &RewriteRequest) -> crate::Result<String> {
                self.log.lock().unwrap().push(req.text.clone());
                Ok("rewritten".into())
            }
        }
        let rw = Arc::new(RecordingRewriter {
            log: Mutex::new(Vec::new()),
        });
        let attack = PromptAttack::new(rw.clone(), PromptTemplate::standard(), 1);
        for i in 0..3 {
            let s = sample(&format!("s{i}"), "text");
            attack.attack(&s, false).unwrap();
        }
        assert_eq!(rw.log.lock().unwrap().len(), 3);
        assert_eq!(attack.call_counter().get(), 3);
    }
}
