//! Detection-quality evaluation: rank-based AUC, threshold metrics at the
//! train-optimal-F1 threshold, multiclass attribution, the adversarial
//! known-attack/unknown-attack scenario, and cell aggregation.
//!
//! Human negatives are never attacked; attacks only transform the
//! machine-labeled side.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attacks::Attack;
use crate::corpus::{Corpus, FilterSpec, Label, Split};
use crate::detectors::{
    classify, train_classifier, Direction, TextScorer, TrainConfig,
};
use crate::gateway::EmbeddingBackend;
use crate::model_detectors::HeadDetector;
use crate::{Error, Result};

/// One evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    /// Generator name or "all" for aggregates.
    pub generator: String,
    pub detector_id: String,
    /// Attack registry id or "clean".
    pub attack_id: String,
    pub auc: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Decision threshold (in higher-is-MGT oriented score space) used for
    /// the threshold metrics.
    pub threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Number of cells averaged into this report (1 for raw cells).
    #[serde(default = "one")]
    pub cells: usize,
    /// Present for adversarial-training scenario cells: the attack the
    /// detector was retrained on.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scenario_train_attack: Option<String>,
}

fn one() -> usize {
    1
}

/// Probability that a random positive outranks a random negative, ties at 0.5
/// (Mann-Whitney), computed in O(n log n) via tie-averaged ranks.
pub fn compute_auc(pos: &[f64], neg: &[f64], direction: Direction) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidArgument(
            "AUC needs non-empty positive and negative score sets".into(),
        ));
    }
    if pos.iter().chain(neg).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("AUC scores must be finite".into()));
    }
    let orient: fn(f64) -> f64 = match direction {
        Direction::HigherIsMgt => |v| v,
        Direction::LowerIsMgt => |v| -v,
        Direction::FeatureVector => {
            return Err(Error::InvalidArgument(
                "feature-vector detectors have no direct AUC; classify them first".into(),
            ))
        }
    };
    let mut combined: Vec<(f64, bool)> = pos
        .iter()
        .map(|&v| (orient(v), true))
        .chain(neg.iter().map(|&v| (orient(v), false)))
        .collect();
    combined.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0usize;
    while i < combined.len() {
        let mut j = i;
        while j + 1 < combined.len() && combined[j + 1].0 == combined[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share the average rank
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &combined[i..=j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

/// Threshold source for the accuracy/precision/recall/F1 block.
pub enum ThresholdSpec {
    /// Pick the threshold maximizing F1 on oriented train-split scores.
    TrainOptimalF1 {
        train_pos: Vec<f64>,
        train_neg: Vec<f64>,
    },
    /// Use a fixed oriented threshold.
    Fixed(f64),
}

/// Scan distinct candidate thresholds (predict MGT when score >= t) and return
/// the one maximizing F1; ties resolve to the smallest threshold.
pub fn optimal_f1_threshold(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidArgument(
            "threshold selection needs both classes".into(),
        ));
    }
    let mut candidates: Vec<f64> = pos.iter().chain(neg).copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let mut best = (f64::MIN, candidates[0]);
    for &t in &candidates {
        let m = binary_metrics_at(pos, neg, t);
        if m.f1 > best.0 {
            best = (m.f1, t);
        }
    }
    Ok(best.1)
}

/// Threshold metrics at a fixed oriented threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn binary_metrics_at(pos: &[f64], neg: &[f64], threshold: f64) -> ThresholdMetrics {
    let tp = pos.iter().filter(|&&s| s >= threshold).count() as f64;
    let fn_ = pos.len() as f64 - tp;
    let fp = neg.iter().filter(|&&s| s >= threshold).count() as f64;
    let tn = neg.len() as f64 - fp;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ThresholdMetrics {
        accuracy: (tp + tn) / (pos.len() + neg.len()) as f64,
        precision,
        recall,
        f1,
    }
}

/// Metrics block shared by all binary evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMetrics {
    pub auc: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Evaluate oriented scores (higher = MGT) against a threshold spec.
pub fn evaluate_binary_scores(
    pos: &[f64],
    neg: &[f64],
    threshold: &ThresholdSpec,
) -> Result<BinaryMetrics> {
    let auc = compute_auc(pos, neg, Direction::HigherIsMgt)?;
    let threshold = match threshold {
        ThresholdSpec::Fixed(t) => *t,
        ThresholdSpec::TrainOptimalF1 {
            train_pos,
            train_neg,
        } => optimal_f1_threshold(train_pos, train_neg)?,
    };
    let m = binary_metrics_at(pos, neg, threshold);
    Ok(BinaryMetrics {
        auc,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        threshold,
        n_pos: pos.len(),
        n_neg: neg.len(),
    })
}

/// Score every text with the detector (failing the whole cell on any scoring
/// error) and evaluate. Positives are machine/attacked texts, negatives are
/// (unattacked) human texts.
pub fn evaluate_binary(
    scorer: &dyn TextScorer,
    human_texts: &[&str],
    machine_texts: &[&str],
    threshold: &ThresholdSpec,
) -> Result<BinaryMetrics> {
    let orient = |v: f64| match scorer.direction() {
        Direction::LowerIsMgt => -v,
        _ => v,
    };
    let pos = machine_texts
        .iter()
        .map(|t| Ok(orient(scorer.score(t)?.as_scalar()?)))
        .collect::<Result<Vec<f64>>>()?;
    let neg = human_texts
        .iter()
        .map(|t| Ok(orient(scorer.score(t)?.as_scalar()?)))
        .collect::<Result<Vec<f64>>>()?;
    evaluate_binary_scores(&pos, &neg, threshold)
}

/// Per-class and macro one-vs-rest AUC for generator attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub per_class: Vec<(String, f64)>,
    pub macro_auc: f64,
    pub n: usize,
}

/// One-vs-rest AUC per generator class over machine-labeled test samples,
/// scored with texts optionally substituted by an attack (pass original texts
/// for the clean cell).
pub fn evaluate_attribution(
    detector: &HeadDetector,
    test: &[(String, String)],
) -> Result<AttributionReport> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("attribution test set is empty".into()));
    }
    let classes: BTreeSet<&str> = test.iter().map(|(g, _)| g.as_str()).collect();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(
            "attribution needs at least two generator classes in the test set".into(),
        ));
    }
    for class in &classes {
        if !detector.classes.iter().any(|c| c == class) {
            return Err(Error::detector(
                "lm_d",
                format!("test generator {class:?} missing from detector classes"),
            ));
        }
    }
    let mut per_class = Vec::new();
    for class in &classes {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (generator, text) in test {
            let p = detector.prob_class(class, text)?;
            if generator == class {
                pos.push(p);
            } else {
                neg.push(p);
            }
        }
        per_class.push((class.to_string(), compute_auc(&pos, &neg, Direction::HigherIsMgt)?));
    }
    let macro_auc = per_class.iter().map(|(_, a)| a).sum::<f64>() / per_class.len() as f64;
    Ok(AttributionReport {
        per_class,
        macro_auc,
        n: test.len(),
    })
}

/// Feature extraction for retrainable detectors (scenario evaluation).
pub trait FeatureExtractor: Send + Sync {
    fn id(&self) -> &str;
    fn features(&self, text: &str) -> Result<Vec<f64>>;
}

/// Features from a detector's score (scalar becomes a 1-vector).
pub struct ScorerFeatures(pub Arc<dyn TextScorer>);

impl FeatureExtractor for ScorerFeatures {
    fn id(&self) -> &str {
        self.0.id()
    }
    fn features(&self, text: &str) -> Result<Vec<f64>> {
        Ok(match self.0.score(text)? {
            crate::detectors::ScoreValue::Scalar(v) => vec![v],
            crate::detectors::ScoreValue::Vector(v) => v,
        })
    }
}

/// Raw embedding features (the head-detector analog).
pub struct EmbeddingFeatures(pub Arc<dyn EmbeddingBackend>);

impl FeatureExtractor for EmbeddingFeatures {
    fn id(&self) -> &str {
        "lm_d"
    }
    fn features(&self, text: &str) -> Result<Vec<f64>> {
        self.0.embed(text)
    }
}

/// Adversarial-training scenario: which attack the detector's classifier is
/// retrained on, and which attacks it is tested against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub detector_id: String,
    /// "clean" retrains on unattacked data only.
    pub train_attack_id: String,
    /// Test attacks; "clean" evaluates unattacked machine text.
    pub test_attack_ids: Vec<String>,
    pub dataset: String,
    pub seed: u64,
}

/// Everything a scenario run needs.
pub struct ScenarioEnv<'a> {
    pub corpus: &'a Corpus,
    pub attacks: &'a BTreeMap<String, Arc<dyn Attack>>,
    pub features: Arc<dyn FeatureExtractor>,
}

fn attack_texts(
    attack: &Arc<dyn Attack>,
    samples: &[&crate::corpus::TextSample],
) -> Result<Vec<(String, String)>> {
    samples
        .iter()
        .map(|s| Ok((s.id.clone(), attack.attack(s, false)?.attacked_text)))
        .collect()
}

/// Retrain the detector's classifier with train-split machine text augmented
/// by the train attack's outcomes (byte-identical duplicates dropped), then
/// evaluate against every test attack. Returns one row of the
/// known-attack/unknown-attack matrix.
pub fn run_scenario(spec: &ScenarioSpec, env: &ScenarioEnv<'_>) -> Result<Vec<EvalReport>> {
    let resolve = |id: &str| -> Result<Option<Arc<dyn Attack>>> {
        if id == "clean" {
            return Ok(None);
        }
        env.attacks.get(id).cloned().map(Some).ok_or_else(|| {
            Error::UnknownRegistryName {
                registry: "attack".into(),
                name: id.to_string(),
            }
        })
    };
    let train_attack = resolve(&spec.train_attack_id)?;
    let dataset_filter = FilterSpec {
        dataset: Some(spec.dataset.clone()),
        ..Default::default()
    };
    let dataset_corpus = env.corpus.filter(&dataset_filter);
    let pick = |label: Label, split: Split| -> Vec<&crate::corpus::TextSample> {
        dataset_corpus
            .iter()
            .filter(|s| s.label == label && s.split == split)
            .collect()
    };
    let train_human = pick(Label::Human, Split::Train);
    let train_mgt = pick(Label::Machine, Split::Train);
    let test_human = pick(Label::Human, Split::Test);
    let test_mgt = pick(Label::Machine, Split::Test);
    if train_human.is_empty() || train_mgt.is_empty() || test_human.is_empty() || test_mgt.is_empty()
    {
        return Err(Error::InvalidArgument(format!(
            "dataset {} lacks one of train/test x human/machine",
            spec.dataset
        )));
    }

    // augmented machine training texts, deduplicated byte-exactly
    let mut mgt_texts: Vec<(String, String)> = train_mgt
        .iter()
        .map(|s| (s.id.clone(), s.text.clone()))
        .collect();
    if let Some(attack) = &train_attack {
        mgt_texts.extend(attack_texts(attack, &train_mgt)?);
    }
    let mut seen = BTreeSet::new();
    mgt_texts.retain(|(id, text)| seen.insert((id.clone(), text.clone())));

    // classifier training data
    let mut data: Vec<(Vec<f64>, bool)> = Vec::new();
    for s in &train_human {
        data.push((env.features.features(&s.text)?, false));
    }
    for (_, text) in &mgt_texts {
        data.push((env.features.features(text)?, true));
    }
    let clf = train_classifier(
        &data,
        &TrainConfig {
            seed: spec.seed,
            ..TrainConfig::default()
        },
    )?;

    // train-optimal threshold from classifier probabilities
    let train_pos: Vec<f64> = mgt_texts
        .iter()
        .map(|(_, t)| classify(&clf, &env.features.features(t)?))
        .collect::<Result<Vec<_>>>()?;
    let train_neg: Vec<f64> = train_human
        .iter()
        .map(|s| classify(&clf, &env.features.features(&s.text)?))
        .collect::<Result<Vec<_>>>()?;
    let threshold = optimal_f1_threshold(&train_pos, &train_neg)?;

    let neg: Vec<f64> = test_human
        .iter()
        .map(|s| classify(&clf, &env.features.features(&s.text)?))
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    for test_id in &spec.test_attack_ids {
        let test_attack = resolve(test_id)?;
        let texts: Vec<(String, String)> = match &test_attack {
            None => test_mgt.iter().map(|s| (s.id.clone(), s.text.clone())).collect(),
            Some(attack) => attack_texts(attack, &test_mgt)?,
        };
        let pos: Vec<f64> = texts
            .iter()
            .map(|(_, t)| classify(&clf, &env.features.features(t)?))
            .collect::<Result<Vec<_>>>()?;
        let metrics = evaluate_binary_scores(&pos, &neg, &ThresholdSpec::Fixed(threshold))?;
        reports.push(EvalReport {
            dataset: spec.dataset.clone(),
            generator: "all".into(),
            detector_id: env.features.id().to_string(),
            attack_id: test_id.clone(),
            auc: metrics.auc,
            accuracy: metrics.accuracy,
            precision: metrics.precision,
            recall: metrics.recall,
            f1: metrics.f1,
            threshold,
            n_pos: metrics.n_pos,
            n_neg: metrics.n_neg,
            cells: 1,
            scenario_train_attack: Some(spec.train_attack_id.clone()),
        });
    }
    Ok(reports)
}

/// Which key fields define aggregation groups; cleared fields average to "all".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupBy {
    pub dataset: bool,
    pub generator: bool,
    pub detector: bool,
    pub attack: bool,
}

impl GroupBy {
    pub fn over_generators() -> Self {
        GroupBy {
            dataset: true,
            generator: false,
            detector: true,
            attack: true,
        }
    }
}

/// Unweighted mean of metric fields per group; counts are summed and the cell
/// count recorded.
pub fn aggregate(cells: &[EvalReport], group_by: GroupBy) -> Result<Vec<EvalReport>> {
    if cells.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate an empty group".into()));
    }
    let key = |c: &EvalReport| {
        (
            group_by.dataset.then(|| c.dataset.clone()),
            group_by.generator.then(|| c.generator.clone()),
            group_by.detector.then(|| c.detector_id.clone()),
            group_by.attack.then(|| c.attack_id.clone()),
        )
    };
    let mut groups: BTreeMap<_, Vec<&EvalReport>> = BTreeMap::new();
    for c in cells {
        groups.entry(key(c)).or_default().push(c);
    }
    Ok(groups
        .into_iter()
        .map(|((dataset, generator, detector, attack), group)| {
            let n = group.len() as f64;
            let mean = |f: fn(&EvalReport) -> f64| group.iter().map(|c| f(c)).sum::<f64>() / n;
            EvalReport {
                dataset: dataset.unwrap_or_else(|| "all".into()),
                generator: generator.unwrap_or_else(|| "all".into()),
                detector_id: detector.unwrap_or_else(|| "all".into()),
                attack_id: attack.unwrap_or_else(|| "all".into()),
                auc: mean(|c| c.auc),
                accuracy: mean(|c| c.accuracy),
                precision: mean(|c| c.precision),
                recall: mean(|c| c.recall),
                f1: mean(|c| c.f1),
                threshold: mean(|c| c.threshold),
                n_pos: group.iter().map(|c| c.n_pos).sum(),
                n_neg: group.iter().map(|c| c.n_neg).sum(),
                cells: group.iter().map(|c| c.cells).sum(),
                scenario_train_attack: None,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force pairwise Mann-Whitney oracle.
    pub(crate) fn brute_force_auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut total = 0.0;
        for &p in pos {
            for &n in neg {
                total += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn perfect_separation_is_one() {
        let auc = compute_auc(&[0.9, 0.8], &[0.1, 0.2], Direction::HigherIsMgt).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn all_tied_is_half() {
        let auc = compute_auc(&[0.5], &[0.5], Direction::HigherIsMgt).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn random_scores_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let np = rng.gen_range(1..=20);
            let nn = rng.gen_range(1..=20);
            // quantized scores to force ties
            let pos: Vec<f64> = (0..np).map(|_| (rng.gen::<f64>() * 8.0).round() / 8.0).collect();
            let neg: Vec<f64> = (0..nn).map(|_| (rng.gen::<f64>() * 8.0).round() / 8.0).collect();
            let fast = compute_auc(&pos, &neg, Direction::HigherIsMgt).unwrap();
            let brute = brute_force_auc(&pos, &neg);
            assert!((fast - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn direction_flip_complements() {
        let pos = [0.3, 0.9, 0.5, 0.5];
        let neg = [0.2, 0.5, 0.8];
        let a = compute_auc(&pos, &neg, Direction::HigherIsMgt).unwrap();
        let b = compute_auc(&pos, &neg, Direction::LowerIsMgt).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let pos = [0.3, 0.9, 0.55];
        let neg = [0.2, 0.5, 0.8, 0.1];
        let a = compute_auc(&pos, &neg, Direction::HigherIsMgt).unwrap();
        let tp: Vec<f64> = pos.iter().map(|v| (3.0 * v + 1.0).exp()).collect();
        let tn: Vec<f64> = neg.iter().map(|v| (3.0 * v + 1.0).exp()).collect();
        let b = compute_auc(&tp, &tn, Direction::HigherIsMgt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_side_and_nan_error() {
        assert!(compute_auc(&[], &[0.1], Direction::HigherIsMgt).is_err());
        assert!(compute_auc(&[f64::NAN], &[0.1], Direction::HigherIsMgt).is_err());
    }

    #[test]
    fn oracle_detector_and_constant_detector() {
        // oracle scores: machine 1.0, human 0.0
        let m = evaluate_binary_scores(
            &[1.0, 1.0, 1.0],
            &[0.0, 0.0],
            &ThresholdSpec::Fixed(0.5),
        )
        .unwrap();
        assert_eq!(m.auc, 1.0);
        assert_eq!(m.accuracy, 1.0);
        // constant detector
        let c = evaluate_binary_scores(&[0.7; 4], &[0.7; 4], &ThresholdSpec::Fixed(0.5)).unwrap();
        assert_eq!(c.auc, 0.5);
    }

    #[test]
    fn threshold_maximizes_f1_on_train() {
        let train_pos = vec![0.9, 0.8, 0.6];
        let train_neg = vec![0.1, 0.2, 0.55];
        let t = optimal_f1_threshold(&train_pos, &train_neg).unwrap();
        // predicting at 0.6 captures all positives and one false positive?
        // brute force all candidate thresholds
        let mut best = (f64::MIN, f64::NAN);
        for &cand in train_pos.iter().chain(&train_neg) {
            let m = binary_metrics_at(&train_pos, &train_neg, cand);
            if m.f1 > best.0 {
                best = (m.f1, cand);
            }
        }
        assert_eq!(t, best.1);
    }

    #[test]
    fn aggregate_means_and_counts() {
        let mk = |auc: f64, generator: &str| EvalReport {
            dataset: "d".into(),
            generator: generator.into(),
            detector_id: "det".into(),
            attack_id: "clean".into(),
            auc,
            accuracy: auc,
            precision: auc,
            recall: auc,
            f1: auc,
            threshold: 0.5,
            n_pos: 10,
            n_neg: 10,
            cells: 1,
            scenario_train_attack: None,
        };
        let cells = vec![mk(0.4, "g1"), mk(0.6, "g2")];
        let agg = aggregate(&cells, GroupBy::over_generators()).unwrap();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].generator, "all");
        assert!((agg[0].auc - 0.5).abs() < 1e-12);
        assert_eq!(agg[0].cells, 2);
        assert_eq!(agg[0].n_pos, 20);

        let single = aggregate(&cells[..1], GroupBy::over_generators()).unwrap();
        assert_eq!(single[0].auc, 0.4);

        let six: Vec<EvalReport> = (0..6).map(|i| mk(i as f64 / 10.0, "g")).collect();
        let agg6 = aggregate(&six, GroupBy::over_generators()).unwrap();
        let brute: f64 = six.iter().map(|c| c.auc).sum::<f64>() / 6.0;
        assert!((agg6[0].auc - brute).abs() < 1e-12);
    }

    #[test]
    fn aggregate_empty_errors() {
        assert!(aggregate(&[], GroupBy::over_generators()).is_err());
    }

    mod attribution_and_scenario {
        use super::super::*;
        use crate::attacks::IdentityAttack;
        use crate::corpus::TextSample;
        use crate::gateway::embed::HashingEmbedder;
        use crate::model_detectors::train_head_detector;
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        use std::sync::Arc;

        fn mk(id: &str, text: &str, label: Label, generator: Option<&str>, split: Split) -> TextSample {
            TextSample {
                id: id.into(),
                text: text.into(),
                label,
                generator: generator.map(str::to_string),
                dataset: "d".into(),
                domain: String::new(),
                split,
            }
        }

        /// Three generators with disjoint vocabularies.
        fn attribution_corpus(n_per_class: usize) -> (Corpus, Vec<(String, String)>) {
            let mut samples = Vec::new();
            let mut test = Vec::new();
            for i in 0..n_per_class {
                for (g, stem) in [("gen_a", "aa"), ("gen_b", "bb"), ("gen_c", "cc")] {
                    let text = format!(
                        "{stem}w{} {stem}x{} {stem}y{} {stem}z{}",
                        i % 5,
                        (i + 1) % 5,
                        (i + 2) % 5,
                        (i + 3) % 5
                    );
                    if i < n_per_class * 2 / 3 {
                        samples.push(mk(
                            &format!("{g}{i}"),
                            &text,
                            Label::Machine,
                            Some(g),
                            Split::Train,
                        ));
                    } else {
                        test.push((g.to_string(), text));
                    }
                }
            }
            (Corpus::new("d", samples).unwrap(), test)
        }

        #[test]
        fn disjoint_vocabulary_generators_reach_macro_auc_one() {
            let (train, test) = attribution_corpus(30);
            let embedder = Arc::new(HashingEmbedder::new("bow", 512).unwrap());
            let classes: Vec<String> =
                ["gen_a", "gen_b", "gen_c"].iter().map(|s| s.to_string()).collect();
            let head = train_head_detector(&train, embedder, &classes, 3).unwrap();
            let report = evaluate_attribution(&head, &test).unwrap();
            assert_eq!(report.macro_auc, 1.0, "per-class: {:?}", report.per_class);
        }

        #[test]
        fn permuted_test_labels_give_chance_level_macro_auc() {
            // permutation baseline: scores come from a real detector but the
            // test labels are shuffled, so macro one-vs-rest AUC sits at 0.5
            // within 3 sigma
            let (train, mut test) = attribution_corpus(200);
            let embedder = Arc::new(HashingEmbedder::new("bow", 512).unwrap());
            let classes: Vec<String> =
                ["gen_a", "gen_b", "gen_c"].iter().map(|s| s.to_string()).collect();
            let head = train_head_detector(&train, embedder, &classes, 3).unwrap();
            assert!(test.len() >= 200);
            let mut labels: Vec<String> = test.iter().map(|(g, _)| g.clone()).collect();
            labels.shuffle(&mut ChaCha8Rng::seed_from_u64(17));
            for (pair, label) in test.iter_mut().zip(labels) {
                pair.0 = label;
            }
            let report = evaluate_attribution(&head, &test).unwrap();
            // loose 3-sigma band for a ~200-sample macro OvR AUC
            assert!(
                (report.macro_auc - 0.5).abs() < 0.13,
                "macro AUC {} too far from chance",
                report.macro_auc
            );
        }

        #[test]
        fn single_class_test_set_errors() {
            let (train, test) = attribution_corpus(12);
            let embedder = Arc::new(HashingEmbedder::new("bow", 256).unwrap());
            let classes: Vec<String> =
                ["gen_a", "gen_b", "gen_c"].iter().map(|s| s.to_string()).collect();
            let head = train_head_detector(&train, embedder, &classes, 3).unwrap();
            let single: Vec<(String, String)> = test
                .into_iter()
                .filter(|(g, _)| g == "gen_a")
                .collect();
            assert!(evaluate_attribution(&head, &single).is_err());
        }

        fn scenario_corpus() -> Corpus {
            let mut samples = Vec::new();
            for i in 0..30 {
                let (split, offset) = if i < 22 { (Split::Train, 0) } else { (Split::Test, 100) };
                samples.push(mk(
                    &format!("m{i}"),
                    &format!("mach{} mach{} mach{}", i + offset, i + 1, i + 2),
                    Label::Machine,
                    Some("g"),
                    split,
                ));
                samples.push(mk(
                    &format!("h{i}"),
                    &format!("hum{} hum{} hum{}", i + offset, i + 1, i + 2),
                    Label::Human,
                    None,
                    split,
                ));
            }
            Corpus::new("d", samples).unwrap()
        }

        #[test]
        fn identity_train_attack_reproduces_clean_cells_bit_exactly() {
            let corpus = scenario_corpus();
            let embedder = Arc::new(HashingEmbedder::new("bow", 256).unwrap());
            let mut attacks: BTreeMap<String, Arc<dyn crate::attacks::Attack>> = BTreeMap::new();
            attacks.insert("identity".into(), Arc::new(IdentityAttack::new()));
            let env = ScenarioEnv {
                corpus: &corpus,
                attacks: &attacks,
                features: Arc::new(EmbeddingFeatures(embedder)),
            };
            let clean = run_scenario(
                &ScenarioSpec {
                    detector_id: "lm_d".into(),
                    train_attack_id: "clean".into(),
                    test_attack_ids: vec!["clean".into()],
                    dataset: "d".into(),
                    seed: 5,
                },
                &env,
            )
            .unwrap();
            let identity = run_scenario(
                &ScenarioSpec {
                    detector_id: "lm_d".into(),
                    train_attack_id: "identity".into(),
                    test_attack_ids: vec!["identity".into(), "clean".into()],
                    dataset: "d".into(),
                    seed: 5,
                },
                &env,
            )
            .unwrap();
            // identical training set after dedup, identical test texts:
            // every metric value must be bit-equal to the clean run
            for cell in &identity {
                assert_eq!(cell.auc.to_bits(), clean[0].auc.to_bits());
                assert_eq!(cell.f1.to_bits(), clean[0].f1.to_bits());
                assert_eq!(cell.threshold.to_bits(), clean[0].threshold.to_bits());
            }
        }

        #[test]
        fn unregistered_attack_errors() {
            let corpus = scenario_corpus();
            let embedder = Arc::new(HashingEmbedder::new("bow", 128).unwrap());
            let attacks: BTreeMap<String, Arc<dyn crate::attacks::Attack>> = BTreeMap::new();
            let env = ScenarioEnv {
                corpus: &corpus,
                attacks: &attacks,
                features: Arc::new(EmbeddingFeatures(embedder)),
            };
            let err = run_scenario(
                &ScenarioSpec {
                    detector_id: "lm_d".into(),
                    train_attack_id: "ghost".into(),
                    test_attack_ids: vec!["clean".into()],
                    dataset: "d".into(),
                    seed: 5,
                },
                &env,
            )
            .unwrap_err();
            assert!(matches!(err, Error::UnknownRegistryName { .. }));
        }
    }
}
