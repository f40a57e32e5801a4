//! Attack blending: sentence-level composition of two or more attacks.
//!
//! The text is segmented by the shared sentence splitter, each segment is
//! assigned an attack by the policy (the alternating policy applies attack
//! `i mod n` to segment `i`), segments are attacked independently, and the
//! result is reassembled with every byte of the original inter-sentence
//! whitespace preserved.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::attacks::{Attack, AttackBody, TraceStep};
use crate::corpus::TextSample;
use crate::gateway::CallCounter;
use crate::text::segment_sentences;
use crate::{Error, Result};

/// Per-segment metrics a custom policy may consult.
pub type SegmentScores = BTreeMap<String, f64>;

/// Custom assignment function: (segment index, segment text, optional scores)
/// to an attack id.
pub type PolicyFn = dyn Fn(usize, &str, Option<&SegmentScores>) -> String + Send + Sync;

/// Segment-assignment policy.
#[derive(Clone)]
pub enum BlendPolicy {
    /// Segment `i` gets attack `i mod n`; the alternation starts with the
    /// first listed attack.
    Alternate,
    /// Pure function of (segment index, segment text, optional scores)
    /// returning a registered attack id.
    Custom {
        name: String,
        assign: Arc<PolicyFn>,
    },
}

impl BlendPolicy {
    pub fn name(&self) -> &str {
        match self {
            BlendPolicy::Alternate => "alternate",
            BlendPolicy::Custom { name, .. } => name,
        }
    }
}

/// A resolved segmentation plus per-segment attack assignment.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlendPlan {
    pub segments: Vec<String>,
    pub assignment: Vec<String>,
    pub policy: String,
}

/// Assign an attack id to every segment.
pub fn assign_by_policy(
    segments: &[String],
    attack_ids: &[String],
    scores: Option<&[SegmentScores]>,
    policy: &BlendPolicy,
) -> Result<BlendPlan> {
    if attack_ids.is_empty() {
        return Err(Error::InvalidArgument("no attacks to assign".into()));
    }
    if matches!(policy, BlendPolicy::Alternate) && attack_ids.len() < 2 {
        return Err(Error::InvalidArgument(
            "the alternating policy needs at least 2 attacks".into(),
        ));
    }
    let assignment = segments
        .iter()
        .enumerate()
        .map(|(i, segment)| match policy {
            BlendPolicy::Alternate => Ok(attack_ids[i % attack_ids.len()].clone()),
            BlendPolicy::Custom { assign, .. } => {
                let id = assign(i, segment, scores.and_then(|s| s.get(i)));
                if attack_ids.contains(&id) {
                    Ok(id)
                } else {
                    Err(Error::UnknownRegistryName {
                        registry: "attack".into(),
                        name: id,
                    })
                }
            }
        })
        .collect::<Result<Vec<String>>>()?;
    Ok(BlendPlan {
        segments: segments.to_vec(),
        assignment,
        policy: policy.name().to_string(),
    })
}

/// Sentence-level composition of the configured attacks.
pub struct BlendAttack {
    id: String,
    attacks: Vec<Arc<dyn Attack>>,
    policy: BlendPolicy,
    /// Number of neighboring sentences passed as context to attacks that can
    /// condition on it. Default 0: each segment sees only itself.
    pub context_window: usize,
    counter: CallCounter,
}

impl BlendAttack {
    pub fn new(attacks: Vec<Arc<dyn Attack>>, policy: BlendPolicy) -> Result<Self> {
        if attacks.is_empty() {
            return Err(Error::InvalidArgument("blend needs at least one attack".into()));
        }
        if matches!(policy, BlendPolicy::Alternate) && attacks.len() < 2 {
            return Err(Error::InvalidArgument(
                "the alternating policy needs at least 2 attacks".into(),
            ));
        }
        let names: Vec<&str> = attacks.iter().map(|a| a.id()).collect();
        Ok(BlendAttack {
            id: format!("blend({})", names.join("+")),
            attacks,
            policy,
            context_window: 0,
            counter: CallCounter::new(),
        })
    }

    pub fn with_context_window(mut self, sentences: usize) -> Self {
        self.context_window = sentences;
        self
    }

    fn attack_by_id(&self, id: &str) -> Result<&Arc<dyn Attack>> {
        self.attacks
            .iter()
            .find(|a| a.id() == id)
            .ok_or_else(|| Error::UnknownRegistryName {
                registry: "attack".into(),
                name: id.to_string(),
            })
    }

    /// Build the plan for a text without running anything.
    pub fn plan(&self, text: &str) -> Result<BlendPlan> {
        let segments: Vec<String> = segment_sentences(text)
            .sentences()
            .iter()
            .map(|s| s.to_string())
            .collect();
        let ids: Vec<String> = self.attacks.iter().map(|a| a.id().to_string()).collect();
        assign_by_policy(&segments, &ids, None, &self.policy)
    }
}

impl Attack for BlendAttack {
    fn id(&self) -> &str {
        &self.id
    }

    fn params(&self) -> BTreeMap<String, Value> {
        BTreeMap::from([
            (
                "attacks".into(),
                json!(self.attacks.iter().map(|a| a.id()).collect::<Vec<_>>()),
            ),
            ("policy".into(), json!(self.policy.name())),
            ("context_window".into(), json!(self.context_window)),
        ])
    }

    fn call_counter(&self) -> &CallCounter {
        &self.counter
    }

    fn backends_peak_memory(&self) -> Option<u64> {
        self.attacks.iter().filter_map(|a| a.backends_peak_memory()).max()
    }

    fn run_body(&self, sample: &TextSample, trace: bool) -> Result<AttackBody> {
        let segs = segment_sentences(&sample.text);
        if segs.is_empty() {
            return Err(Error::attack(&self.id, "sample has no sentences"));
        }
        let sentences: Vec<String> = segs.sentences().iter().map(|s| s.to_string()).collect();
        let ids: Vec<String> = self.attacks.iter().map(|a| a.id().to_string()).collect();
        let plan = assign_by_policy(&sentences, &ids, None, &self.policy)?;

        let before_counts: Vec<u64> = self.attacks.iter().map(|a| a.call_counter().get()).collect();
        let mut attacked_segments = Vec::with_capacity(sentences.len());
        let mut steps = Vec::new();
        for (i, (segment, attack_id)) in sentences.iter().zip(&plan.assignment).enumerate() {
            let attack = self.attack_by_id(attack_id)?;
            let seg_sample = TextSample {
                id: format!("{}#seg{i}", sample.id),
                text: segment.clone(),
                ..sample.clone()
            };
            let context = (self.context_window > 0).then(|| {
                let lo = i.saturating_sub(self.context_window);
                let hi = (i + self.context_window + 1).min(sentences.len());
                sentences[lo..hi].join(" ")
            });
            let body = attack
                .run_body_with_context(&seg_sample, trace, context.as_deref())
                .map_err(|e| Error::SegmentAttack {
                    id: self.id.clone(),
                    segment: i,
                    message: e.to_string(),
                })?;
            if trace {
                steps.push(TraceStep::Segment {
                    index: i,
                    attack_id: attack_id.clone(),
                    steps: body.trace.unwrap_or_default(),
                });
            }
            attacked_segments.push(body.attacked_text);
        }
        // whole-run backend calls = sum of constituent attack deltas
        let delta: u64 = self
            .attacks
            .iter()
            .zip(before_counts)
            .map(|(a, b)| a.call_counter().get() - b)
            .sum();
        self.counter.add(delta);

        Ok(AttackBody {
            attacked_text: segs.reassemble_with(&attacked_segments),
            trace: trace.then_some(steps),
            extra_params: vec![("plan".into(), json!(plan))],
        })
    }
}
