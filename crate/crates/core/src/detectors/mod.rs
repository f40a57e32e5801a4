//! Metric-based detectors and the logistic-regression classifier.
//!
//! Each detector maps a scored text (or a pair of backends plus raw text) to a
//! scalar with a declared direction, except GLTR, which produces a 4-vector of
//! rank-bucket fractions that is classified by logistic regression before
//! evaluation.
//!
//! Registry names: `log_likelihood, rank, log_rank, entropy, gltr, lrr,
//! fast_detect_gpt, binoculars`.

pub mod logistic;
pub mod metrics;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gateway::{ScoringBackend, ScoredText};
use crate::{Error, Result};

pub use logistic::{
    classify, loss_and_grad, train_classifier, LogisticClassifier, TrainConfig, TrainingMeta,
};
pub use metrics::{Binoculars, FastDetectGpt, MetricDetector};

/// Score orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsMgt,
    LowerIsMgt,
    FeatureVector,
}

/// Scalar score or feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ScoreValue {
    pub fn as_scalar(&self) -> Result<f64> {
        match self {
            ScoreValue::Scalar(v) => Ok(*v),
            ScoreValue::Vector(_) => Err(Error::InvalidArgument(
                "expected a scalar detector score, got a feature vector".into(),
            )),
        }
    }

    pub fn as_vector(&self) -> Result<&[f64]> {
        match self {
            ScoreValue::Vector(v) => Ok(v),
            ScoreValue::Scalar(_) => Err(Error::InvalidArgument(
                "expected a feature vector, got a scalar".into(),
            )),
        }
    }
}

/// One detector evaluation of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorScore {
    pub detector_id: String,
    pub sample_id: String,
    pub value: ScoreValue,
    pub direction: Direction,
}

/// A detector that scores raw text (resolving its own backends).
pub trait TextScorer: Send + Sync {
    fn id(&self) -> &str;
    fn direction(&self) -> Direction;
    fn score(&self, text: &str) -> Result<ScoreValue>;
}

/// Scalar score oriented so that higher always means "more machine-like".
pub fn mgt_oriented_score(scorer: &dyn TextScorer, text: &str) -> Result<f64> {
    let value = scorer.score(text)?.as_scalar()?;
    Ok(match scorer.direction() {
        Direction::HigherIsMgt => value,
        Direction::LowerIsMgt => -value,
        Direction::FeatureVector => {
            return Err(Error::detector(
                scorer.id(),
                "feature-vector detectors need a classifier before orientation",
            ))
        }
    })
}

/// MGT-score proxy used by greedy attacks: higher means more machine-like.
pub trait MgtScorer: Send + Sync {
    fn id(&self) -> &str;
    fn mgt_score(&self, text: &str) -> Result<f64>;
}

impl<T: TextScorer> MgtScorer for T {
    fn id(&self) -> &str {
        TextScorer::id(self)
    }
    fn mgt_score(&self, text: &str) -> Result<f64> {
        mgt_oriented_score(self, text)
    }
}

/// Adapter turning a shared detector into an MGT-score proxy.
pub struct OrientedScorer(pub Arc<dyn TextScorer>);

impl MgtScorer for OrientedScorer {
    fn id(&self) -> &str {
        self.0.id()
    }
    fn mgt_score(&self, text: &str) -> Result<f64> {
        mgt_oriented_score(self.0.as_ref(), text)
    }
}

/// Evaluation-side score for a text whose every token has rank 1: the
/// log-likelihood/log-rank ratio diverges toward maximal machine-likeness
/// there, so the evaluation caller substitutes this finite sentinel. The
/// underlying operation still reports the explicit degenerate error.
pub const LRR_ALL_RANK_ONE_SCORE: f64 = f64::MAX;

/// A single-backend metric detector bound to its scoring backend.
pub struct BackendMetricDetector {
    pub metric: MetricDetector,
    pub backend: Arc<dyn ScoringBackend>,
}

impl BackendMetricDetector {
    pub fn new(metric: MetricDetector, backend: Arc<dyn ScoringBackend>) -> Self {
        BackendMetricDetector { metric, backend }
    }

    pub fn score_scored_text(&self, st: &ScoredText) -> Result<ScoreValue> {
        self.metric.compute(st)
    }
}

impl TextScorer for BackendMetricDetector {
    fn id(&self) -> &str {
        self.metric.id()
    }

    fn direction(&self) -> Direction {
        self.metric.direction()
    }

    fn score(&self, text: &str) -> Result<ScoreValue> {
        let st = self.backend.score_text(text)?;
        match self.metric.compute(&st) {
            Err(Error::Degenerate { .. }) if self.metric == MetricDetector::Lrr => {
                Ok(ScoreValue::Scalar(LRR_ALL_RANK_ONE_SCORE))
            }
            other => other,
        }
    }
}

/// GLTR features routed through a trained logistic classifier; the resulting
/// probability is a higher-is-MGT scalar.
pub struct GltrClassifierDetector {
    pub backend: Arc<dyn ScoringBackend>,
    pub classifier: LogisticClassifier,
}

impl TextScorer for GltrClassifierDetector {
    fn id(&self) -> &str {
        "gltr"
    }

    fn direction(&self) -> Direction {
        Direction::HigherIsMgt
    }

    fn score(&self, text: &str) -> Result<ScoreValue> {
        let st = self.backend.score_text(text)?;
        let features = MetricDetector::Gltr.compute(&st)?;
        Ok(ScoreValue::Scalar(classify(&self.classifier, features.as_vector()?)?))
    }
}

/// Stable registry names for the metric detectors.
pub const METRIC_DETECTOR_IDS: &[&str] = &[
    "log_likelihood",
    "rank",
    "log_rank",
    "entropy",
    "gltr",
    "lrr",
    "fast_detect_gpt",
    "binoculars",
];

/// Scalar metric detectors computable from a single scored text.
pub const SCALAR_SINGLE_BACKEND_IDS: &[&str] =
    &["log_likelihood", "rank", "log_rank", "entropy", "lrr"];
