//! The eight metric detectors.
//!
//! Six are pure functions of a [`ScoredText`]; Fast-DetectGPT and Binoculars
//! consult two backends' per-position distributions directly.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::detectors::{Direction, ScoreValue};
use crate::gateway::{PositionDistribution, ScoredText, ScoringBackend};
use crate::{Error, Result};

/// Detectors computable from one scored text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricDetector {
    /// Mean token logprob; higher is MGT.
    LogLikelihood,
    /// Mean token rank; lower is MGT.
    Rank,
    /// Mean ln(rank); lower is MGT.
    LogRank,
    /// Mean predictive entropy; lower is MGT.
    Entropy,
    /// Fractions of ranks in the buckets <=10, 11-100, 101-1000, >1000.
    Gltr,
    /// |mean logprob| / mean ln(rank); higher is MGT.
    Lrr,
}

impl MetricDetector {
    pub fn id(&self) -> &'static str {
        match self {
            MetricDetector::LogLikelihood => "log_likelihood",
            MetricDetector::Rank => "rank",
            MetricDetector::LogRank => "log_rank",
            MetricDetector::Entropy => "entropy",
            MetricDetector::Gltr => "gltr",
            MetricDetector::Lrr => "lrr",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Some(match id {
            "log_likelihood" => MetricDetector::LogLikelihood,
            "rank" => MetricDetector::Rank,
            "log_rank" => MetricDetector::LogRank,
            "entropy" => MetricDetector::Entropy,
            "gltr" => MetricDetector::Gltr,
            "lrr" => MetricDetector::Lrr,
            _ => return None,
        })
    }

    pub fn direction(&self) -> Direction {
        match self {
            MetricDetector::LogLikelihood | MetricDetector::Lrr => Direction::HigherIsMgt,
            MetricDetector::Rank | MetricDetector::LogRank | MetricDetector::Entropy => {
                Direction::LowerIsMgt
            }
            MetricDetector::Gltr => Direction::FeatureVector,
        }
    }

    pub fn compute(&self, st: &ScoredText) -> Result<ScoreValue> {
        if st.tokens.is_empty() {
            return Err(Error::detector(self.id(), "scored text is empty"));
        }
        let n = st.tokens.len() as f64;
        Ok(match self {
            MetricDetector::LogLikelihood => {
                ScoreValue::Scalar(st.tokens.iter().map(|t| t.logprob).sum::<f64>() / n)
            }
            MetricDetector::Rank => {
                ScoreValue::Scalar(st.tokens.iter().map(|t| f64::from(t.rank)).sum::<f64>() / n)
            }
            MetricDetector::LogRank => ScoreValue::Scalar(
                st.tokens
                    .iter()
                    .map(|t| f64::from(t.rank).ln())
                    .sum::<f64>()
                    / n,
            ),
            MetricDetector::Entropy => {
                ScoreValue::Scalar(st.tokens.iter().map(|t| t.entropy).sum::<f64>() / n)
            }
            MetricDetector::Gltr => {
                let mut buckets = [0usize; 4];
                for t in &st.tokens {
                    // an inexact rank that could fall on either side of a
                    // bucket boundary makes the fractions undefined
                    if !t.rank_exact && t.rank <= 1000 {
                        return Err(Error::detector(
                            "gltr",
                            format!(
                                "inexact rank {} straddles a bucket boundary (token {:?})",
                                t.rank, t.token
                            ),
                        ));
                    }
                    let b = match t.rank {
                        1..=10 => 0,
                        11..=100 => 1,
                        101..=1000 => 2,
                        _ => 3,
                    };
                    buckets[b] += 1;
                }
                ScoreValue::Vector(buckets.iter().map(|&c| c as f64 / n).collect())
            }
            MetricDetector::Lrr => {
                let mean_lp = st.tokens.iter().map(|t| t.logprob).sum::<f64>() / n;
                let mean_lr = st
                    .tokens
                    .iter()
                    .map(|t| f64::from(t.rank).ln())
                    .sum::<f64>()
                    / n;
                if mean_lr == 0.0 {
                    return Err(Error::degenerate(
                        "lrr",
                        "all ranks are 1; mean log-rank denominator is zero",
                    ));
                }
                ScoreValue::Scalar(mean_lp.abs() / mean_lr)
            }
        })
    }
}

/// Align two backends' position lists over one text; both must tokenize it
/// identically.
fn aligned_positions(
    a: &dyn ScoringBackend,
    b: &dyn ScoringBackend,
    text: &str,
) -> Result<Vec<(PositionDistribution, PositionDistribution)>> {
    let pa = a.position_distributions(text)?;
    let pb = b.position_distributions(text)?;
    if pa.len() != pb.len() {
        return Err(Error::detector(
            "paired_backends",
            format!(
                "backends {} and {} tokenized the text into {} vs {} positions",
                a.descriptor().id,
                b.descriptor().id,
                pa.len(),
                pb.len()
            ),
        ));
    }
    Ok(pa.into_iter().zip(pb).collect())
}

/// Sampling-discrepancy detector: compares the realized logprob under a
/// scoring backend with the analytic mean/variance of that logprob under a
/// reference backend's next-token distribution.
///
/// Statistic: `(sum_i s_i - sum_i mu_i) / sqrt(sum_i var_i)` over positions
/// with nonzero variance. Higher is MGT.
pub struct FastDetectGpt {
    pub scoring: Arc<dyn ScoringBackend>,
    pub reference: Arc<dyn ScoringBackend>,
}

pub const FAST_DETECT_GPT_ID: &str = "fast_detect_gpt";

impl FastDetectGpt {
    pub fn new(scoring: Arc<dyn ScoringBackend>, reference: Arc<dyn ScoringBackend>) -> Self {
        FastDetectGpt { scoring, reference }
    }

    pub fn compute(&self, text: &str) -> Result<f64> {
        let pairs = aligned_positions(self.scoring.as_ref(), self.reference.as_ref(), text)?;
        let mut sum_realized = 0.0;
        let mut sum_mu = 0.0;
        let mut sum_var = 0.0;
        let mut used = 0usize;
        let mut degenerate_delta = 0.0;
        for (score_pos, ref_pos) in &pairs {
            // scoring logprobs by token, restricted to tokens both sides know
            let lp: BTreeMap<&str, f64> = score_pos
                .dist
                .entries
                .iter()
                .map(|(t, l)| (t.as_str(), *l))
                .collect();
            let common: Vec<(&str, f64)> = ref_pos
                .dist
                .entries
                .iter()
                .filter(|(t, _)| lp.contains_key(t.as_str()))
                .map(|(t, l)| (t.as_str(), l.exp()))
                .collect();
            let mass: f64 = common.iter().map(|(_, p)| p).sum();
            if mass <= 0.0 {
                continue;
            }
            let mut mu = 0.0;
            for (tok, p) in &common {
                mu += (p / mass) * lp[tok];
            }
            let mut var = 0.0;
            for (tok, p) in &common {
                let d = lp[tok] - mu;
                var += (p / mass) * d * d;
            }
            let s = score_pos.realized_logprob;
            if var < 1e-12 {
                degenerate_delta += s - mu;
                continue;
            }
            sum_realized += s;
            sum_mu += mu;
            sum_var += var;
            used += 1;
        }
        if used == 0 {
            // a fully degenerate text is well-defined only when the realized
            // logprobs coincide with the expectations
            if degenerate_delta.abs() < 1e-9 {
                return Ok(0.0);
            }
            return Err(Error::degenerate(
                FAST_DETECT_GPT_ID,
                "zero sampling variance at every position",
            ));
        }
        Ok((sum_realized - sum_mu) / sum_var.sqrt())
    }
}

impl crate::detectors::TextScorer for FastDetectGpt {
    fn id(&self) -> &str {
        FAST_DETECT_GPT_ID
    }
    fn direction(&self) -> crate::detectors::Direction {
        crate::detectors::Direction::HigherIsMgt
    }
    fn score(&self, text: &str) -> Result<ScoreValue> {
        Ok(ScoreValue::Scalar(self.compute(text)?))
    }
}

/// Perplexity-to-cross-perplexity ratio over two backends. Lower is MGT.
pub struct Binoculars {
    pub observer: Arc<dyn ScoringBackend>,
    pub performer: Arc<dyn ScoringBackend>,
}

pub const BINOCULARS_ID: &str = "binoculars";

impl Binoculars {
    pub fn new(observer: Arc<dyn ScoringBackend>, performer: Arc<dyn ScoringBackend>) -> Self {
        Binoculars {
            observer,
            performer,
        }
    }

    pub fn compute(&self, text: &str) -> Result<f64> {
        let pairs = aligned_positions(self.observer.as_ref(), self.performer.as_ref(), text)?;
        let n = pairs.len() as f64;
        let mut sum_obs_logprob = 0.0;
        let mut sum_cross_entropy = 0.0;
        for (obs_pos, perf_pos) in &pairs {
            sum_obs_logprob += obs_pos.realized_logprob;
            let obs_lp: BTreeMap<&str, f64> = obs_pos
                .dist
                .entries
                .iter()
                .map(|(t, l)| (t.as_str(), *l))
                .collect();
            let common: Vec<(f64, f64)> = perf_pos
                .dist
                .entries
                .iter()
                .filter_map(|(t, l)| obs_lp.get(t.as_str()).map(|olp| (l.exp(), *olp)))
                .collect();
            let mass: f64 = common.iter().map(|(p, _)| p).sum();
            if mass <= 0.0 {
                return Err(Error::detector(
                    BINOCULARS_ID,
                    "backends share no distribution support at some position",
                ));
            }
            let mut ce = 0.0;
            for (p, obs) in &common {
                ce -= (p / mass) * obs;
            }
            sum_cross_entropy += ce;
        }
        let log_ppl = -sum_obs_logprob / n;
        let log_xppl = sum_cross_entropy / n;
        let score = (log_ppl - log_xppl).exp();
        debug_assert!(score.is_finite() && score > 0.0);
        Ok(score)
    }
}

impl crate::detectors::TextScorer for Binoculars {
    fn id(&self) -> &str {
        BINOCULARS_ID
    }
    fn direction(&self) -> crate::detectors::Direction {
        crate::detectors::Direction::LowerIsMgt
    }
    fn score(&self, text: &str) -> Result<ScoreValue> {
        Ok(ScoreValue::Scalar(self.compute(text)?))
    }
}
