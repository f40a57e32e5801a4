//! Subcommand implementations. Each reads the streams it declares, writes its
//! own, and leaves everything append-only.

use std::collections::BTreeMap;
use std::sync::Arc;

use evadebench_core::attacks::AttackOutcome;
use evadebench_core::config::{config_hash, RunConfig};
use evadebench_core::corpus::{Corpus, FilterSpec, IngestFormat, Label, Split, TextSample};
use evadebench_core::detectors::{
    train_classifier, Direction, GltrClassifierDetector, MetricDetector, ScoreValue, TextScorer,
    TrainConfig,
};
use evadebench_core::evaluation::{
    self, evaluate_attribution, evaluate_binary_scores, run_scenario, EmbeddingFeatures,
    EvalReport, FeatureExtractor, ScenarioSpec, ScorerFeatures, ThresholdSpec,
};
use evadebench_core::hashing::seed_for;
use evadebench_core::overhead::{self, LengthBucketPlan, OverheadRecord};
use evadebench_core::quality::{quality_report, QualityReport};
use evadebench_core::report::{
    aggregate_quality, eval_csv, normalize_summary, overhead_csv, quality_csv,
};
use evadebench_core::store::{read_corpus, read_latest, ResultsStore, ScoreRecord, Stream};
use evadebench_core::{Error, Result};

use crate::runtime::Runtime;

pub struct Session {
    pub config: RunConfig,
    pub config_sha256: String,
}

impl Session {
    pub fn load(config_path: &str) -> Result<Self> {
        let (config, config_sha256) = RunConfig::load(config_path)?;
        Ok(Session {
            config,
            config_sha256,
        })
    }

    /// Re-hash after CLI flag overrides so the store stays bound to the
    /// effective configuration.
    pub fn rehash(&mut self) -> Result<()> {
        let raw = serde_json::to_string(&self.config)?;
        self.config_sha256 = config_hash(&raw)?;
        Ok(())
    }

    fn store(&self, command: &str) -> Result<ResultsStore> {
        ResultsStore::open(&self.config.out_dir, &self.config_sha256, command)
    }

    fn corpus(&self) -> Result<Corpus> {
        read_corpus(&self.config.out_dir, "benchmark")
    }

    pub fn ingest(&self) -> Result<String> {
        let store = self.store("ingest")?;
        let mut total = 0usize;
        for dataset in &self.config.datasets {
            let corpus = Corpus::ingest(&dataset.path, IngestFormat::Jsonl)?;
            // dataset field in records wins; the file name is not normative
            let split =
                corpus.assign_splits(self.config.split.ratio, self.config.split.seed)?;
            for sample in split.iter() {
                store.append(Stream::Corpus, sample)?;
            }
            total += split.len();
        }
        Ok(format!(
            "ingested {total} samples across {} dataset(s) into {} ({})",
            self.config.datasets.len(),
            self.config.out_dir,
            store.run_id()
        ))
    }

    pub fn score(&self) -> Result<String> {
        let corpus = self.corpus()?;
        let rt = Runtime::build(self.config.clone(), Some(&corpus))?;
        let store = self.store("score")?;
        let mut n = 0usize;
        for dataset in corpus.datasets() {
            let subset = corpus.filter(&FilterSpec {
                dataset: Some(dataset.clone()),
                ..Default::default()
            });
            for detector in &self.config.detectors {
                let records = score_dataset(&rt, &subset, &dataset, detector)?;
                n += records.len();
                store.append_all(Stream::DetectorScores, &records)?;
            }
        }
        Ok(format!("scored {n} (sample, detector) pairs ({})", store.run_id()))
    }

    pub fn attack(&self, only: Option<&[String]>) -> Result<String> {
        let corpus = self.corpus()?;
        let rt = Runtime::build(self.config.clone(), Some(&corpus))?;
        let attacks = rt.build_attacks(&corpus, only)?;
        if attacks.is_empty() {
            return Err(Error::Config("no attacks configured".into()));
        }
        let store = self.store("attack")?;
        let mut n = 0usize;
        for attack in attacks.values() {
            let machines = corpus.filter(&FilterSpec {
                label: Some(Label::Machine),
                split: Some(Split::Test),
                ..Default::default()
            });
            for sample in machines.iter() {
                let outcome = attack.attack(sample, self.config.trace)?;
                store.append(Stream::AttackOutcomes, &outcome)?;
                n += 1;
            }
        }
        Ok(format!(
            "ran {} attack(s) over machine test samples, {n} outcomes ({})",
            attacks.len(),
            store.run_id()
        ))
    }

    pub fn quality(&self) -> Result<String> {
        let corpus = self.corpus()?;
        let outcomes: Vec<AttackOutcome> =
            read_latest(&self.config.out_dir, Stream::AttackOutcomes)?;
        let rt = Runtime::build(self.config.clone(), Some(&corpus))?;
        let store = self.store("quality")?;
        let mut n = 0usize;
        for outcome in &outcomes {
            let original = corpus.get(&outcome.sample_id).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "outcome references unknown sample {}",
                    outcome.sample_id
                ))
            })?;
            let report = quality_report(
                original,
                outcome,
                rt.quality_scoring.as_ref(),
                rt.embedder.as_ref(),
            )?;
            store.append(Stream::QualityReports, &report)?;
            n += 1;
        }
        Ok(format!("computed {n} quality reports ({})", store.run_id()))
    }

    pub fn eval(&self) -> Result<String> {
        let corpus = self.corpus()?;
        let scores: Vec<ScoreRecord> = read_latest(&self.config.out_dir, Stream::DetectorScores)?;
        let outcomes: Vec<AttackOutcome> =
            read_latest(&self.config.out_dir, Stream::AttackOutcomes)?;
        let rt = Runtime::build(self.config.clone(), Some(&corpus))?;
        let store = self.store("eval")?;
        let mut cells = 0usize;

        for dataset in corpus.datasets() {
            let subset = corpus.filter(&FilterSpec {
                dataset: Some(dataset.clone()),
                ..Default::default()
            });
            let humans_test: Vec<&TextSample> = subset
                .iter()
                .filter(|s| s.label == Label::Human && s.split == Split::Test)
                .collect();
            let generators = subset.generators();
            let dataset_outcomes: Vec<&AttackOutcome> = outcomes
                .iter()
                .filter(|o| subset.get(&o.sample_id).is_some())
                .collect();
            for detector in &self.config.detectors {
                match self.eval_detector(
                    &rt,
                    &store,
                    &subset,
                    &dataset,
                    detector,
                    &scores,
                    &humans_test,
                    &generators,
                    &dataset_outcomes,
                ) {
                    Ok(n) => cells += n,
                    // a missing upstream stream is the caller's mistake
                    Err(e @ Error::MissingStream { .. }) => return Err(e),
                    // a scoring failure marks the cell failed; nothing partial
                    // is averaged and the remaining cells still run
                    Err(e) => {
                        eprintln!("warning: cell ({dataset}, {detector}) failed: {e}");
                    }
                }
            }
            // attribution requires at least two generator classes
            if generators.len() >= 2 && self.config.detectors.iter().any(|d| d == "lm_d") {
                cells += self.eval_attribution(&rt, &store, &subset, &dataset, &dataset_outcomes)?;
            }
        }
        Ok(format!("evaluated {cells} cells ({})", store.run_id()))
    }

    #[allow(clippy::too_many_arguments)]
    fn eval_detector(
        &self,
        rt: &Runtime,
        store: &ResultsStore,
        subset: &Corpus,
        dataset: &str,
        detector: &str,
        scores: &[ScoreRecord],
        humans_test: &[&TextSample],
        generators: &[String],
        outcomes: &[&AttackOutcome],
    ) -> Result<usize> {
        // clean scores from the score stream, keyed by sample
        let mine: BTreeMap<&str, &ScoreRecord> = scores
            .iter()
            .filter(|r| r.detector_id == detector && r.dataset == dataset)
            .map(|r| (r.sample_id.as_str(), r))
            .collect();
        if mine.is_empty() {
            return Err(Error::MissingStream {
                name: format!("detector_scores.jsonl (detector {detector}, dataset {dataset})"),
            });
        }

        // live scorer for attacked texts; gltr goes through a classifier
        // trained on the train-split features and its probability also
        // re-scores the stored clean feature vectors
        enum EvalScorer {
            Gltr(GltrClassifierDetector),
            Plain(Arc<dyn TextScorer>),
        }
        let scorer = if detector == "gltr" {
            let data = gltr_training_data(subset, &mine)?;
            let clf = train_classifier(
                &data,
                &TrainConfig {
                    seed: seed_for(self.config.seed, &["gltr-clf", dataset]),
                    feature_spec: vec![
                        "rank<=10".into(),
                        "rank<=100".into(),
                        "rank<=1000".into(),
                        "rank>1000".into(),
                    ],
                    ..TrainConfig::default()
                },
            )?;
            EvalScorer::Gltr(GltrClassifierDetector {
                backend: rt.scoring.clone(),
                classifier: clf,
            })
        } else if detector == "lm_d" {
            EvalScorer::Plain(Arc::new(rt.train_lm_d(subset, dataset)?))
        } else if self
            .config
            .backends
            .external_detectors
            .iter()
            .any(|e| e.id == *detector)
        {
            EvalScorer::Plain(rt.external_detector(detector)?)
        } else {
            EvalScorer::Plain(rt.scalar_detector(detector)?)
        };

        // oriented score of a stream record (clean path)
        let oriented_record = |r: &ScoreRecord| -> Result<f64> {
            match (&scorer, &r.value) {
                (EvalScorer::Gltr(g), ScoreValue::Vector(features)) => {
                    evadebench_core::detectors::classify(&g.classifier, features)
                }
                (EvalScorer::Gltr(_), ScoreValue::Scalar(_)) => Err(Error::InvalidArgument(
                    "gltr stream records must carry feature vectors".into(),
                )),
                (EvalScorer::Plain(_), value) => {
                    let v = value.as_scalar()?;
                    Ok(match r.direction {
                        Direction::LowerIsMgt => -v,
                        _ => v,
                    })
                }
            }
        };

        // threshold from train-split scores
        let mut train_pos = Vec::new();
        let mut train_neg = Vec::new();
        for r in mine.values().filter(|r| r.split == Split::Train) {
            let v = oriented_record(r)?;
            match r.label {
                Label::Machine => train_pos.push(v),
                Label::Human => train_neg.push(v),
            }
        }
        let threshold = ThresholdSpec::TrainOptimalF1 {
            train_pos,
            train_neg,
        };

        let neg: Vec<f64> = humans_test
            .iter()
            .map(|s| {
                let r = mine.get(s.id.as_str()).ok_or_else(|| {
                    Error::MissingStream {
                        name: format!("detector_scores.jsonl (sample {})", s.id),
                    }
                })?;
                oriented_record(r)
            })
            .collect::<Result<_>>()?;

        let orient_live = |text: &str| -> Result<f64> {
            match &scorer {
                EvalScorer::Gltr(g) => Ok(g.score(text)?.as_scalar()?),
                EvalScorer::Plain(s) => {
                    let v = s.score(text)?.as_scalar()?;
                    Ok(match s.direction() {
                        Direction::LowerIsMgt => -v,
                        _ => v,
                    })
                }
            }
        };

        let mut cells = 0usize;
        for generator in generators {
            let machines_test: Vec<&TextSample> = subset
                .iter()
                .filter(|s| {
                    s.label == Label::Machine
                        && s.split == Split::Test
                        && s.generator.as_deref() == Some(generator)
                })
                .collect();
            if machines_test.is_empty() {
                continue;
            }
            // clean cell from the score stream
            let pos_clean: Vec<f64> = machines_test
                .iter()
                .map(|s| {
                    let r = mine.get(s.id.as_str()).ok_or_else(|| Error::MissingStream {
                        name: format!("detector_scores.jsonl (sample {})", s.id),
                    })?;
                    oriented_record(r)
                })
                .collect::<Result<_>>()?;
            let clean = evaluate_binary_scores(&pos_clean, &neg, &threshold)?;
            store.append(
                Stream::EvalReports,
                &report_row(dataset, generator, detector, "clean", &clean, None),
            )?;
            cells += 1;

            // one cell per attack present in the outcomes
            let mut by_attack: BTreeMap<&str, Vec<&AttackOutcome>> = BTreeMap::new();
            for o in outcomes {
                let Some(sample) = subset.get(&o.sample_id) else {
                    continue;
                };
                if sample.split == Split::Test && sample.generator.as_deref() == Some(generator) {
                    by_attack.entry(&o.attack_id).or_default().push(o);
                }
            }
            for (attack_id, group) in by_attack {
                let pos: Vec<f64> = group
                    .iter()
                    .map(|o| orient_live(&o.attacked_text))
                    .collect::<Result<_>>()?;
                let metrics = evaluate_binary_scores(&pos, &neg, &threshold)?;
                store.append(
                    Stream::EvalReports,
                    &report_row(dataset, generator, detector, attack_id, &metrics, None),
                )?;
                cells += 1;
            }
        }
        Ok(cells)
    }

    fn eval_attribution(
        &self,
        rt: &Runtime,
        store: &ResultsStore,
        subset: &Corpus,
        dataset: &str,
        outcomes: &[&AttackOutcome],
    ) -> Result<usize> {
        let train = subset.filter(&FilterSpec {
            split: Some(Split::Train),
            label: Some(Label::Machine),
            ..Default::default()
        });
        let classes = train.generators();
        let head = evadebench_core::model_detectors::train_head_detector(
            &train,
            rt.embedder.clone(),
            &classes,
            seed_for(self.config.seed, &["attribution", dataset]),
        )?;
        let mut cells = 0usize;
        let mut emit = |attack_id: &str, test: &[(String, String)]| -> Result<()> {
            let report = evaluate_attribution(&head, test)?;
            for (class, auc) in &report.per_class {
                store.append(
                    Stream::EvalReports,
                    &attribution_row(dataset, class, attack_id, *auc, test.len()),
                )?;
            }
            store.append(
                Stream::EvalReports,
                &attribution_row(dataset, "macro", attack_id, report.macro_auc, test.len()),
            )?;
            cells += report.per_class.len() + 1;
            Ok(())
        };

        let clean_test: Vec<(String, String)> = subset
            .iter()
            .filter(|s| s.label == Label::Machine && s.split == Split::Test)
            .map(|s| (s.generator.clone().unwrap_or_default(), s.text.clone()))
            .collect();
        emit("clean", &clean_test)?;

        let mut by_attack: BTreeMap<&str, Vec<(String, String)>> = BTreeMap::new();
        for o in outcomes {
            let Some(sample) = subset.get(&o.sample_id) else {
                continue;
            };
            if sample.label == Label::Machine && sample.split == Split::Test {
                by_attack.entry(&o.attack_id).or_default().push((
                    sample.generator.clone().unwrap_or_default(),
                    o.attacked_text.clone(),
                ));
            }
        }
        for (attack_id, test) in by_attack {
            emit(attack_id, &test)?;
        }
        Ok(cells)
    }

    pub fn overhead(&self, only: Option<&[String]>) -> Result<String> {
        let corpus = self.corpus()?;
        let rt = Runtime::build(self.config.clone(), Some(&corpus))?;
        let attacks = rt.build_attacks(&corpus, only)?;
        let plan = LengthBucketPlan {
            targets: self.config.overhead.targets.clone(),
            per_bucket_cap: self.config.overhead.per_bucket_cap,
        };
        let buckets = overhead::sample_length_buckets(
            &corpus,
            &plan,
            seed_for(self.config.seed, &["overhead-buckets"]),
        )?;
        if buckets.is_empty() {
            return Err(Error::InvalidArgument(
                "no samples fell into any length bucket".into(),
            ));
        }
        let store = self.store("overhead")?;
        let mut n = 0usize;
        for attack in attacks.values() {
            for bucket in &buckets {
                let (_, record) = overhead::measure(attack.as_ref(), &bucket.sample, false)?;
                store.append(Stream::OverheadRecords, &record)?;
                n += 1;
            }
        }
        Ok(format!(
            "measured {n} (attack, sample) runs over {} bucket samples ({})",
            buckets.len(),
            store.run_id()
        ))
    }

    pub fn scenario(&self) -> Result<String> {
        if self.config.scenarios.is_empty() {
            return Err(Error::Config("no scenarios configured".into()));
        }
        let corpus = self.corpus()?;
        let rt = Runtime::build(self.config.clone(), Some(&corpus))?;
        let attacks = rt.build_attacks(&corpus, None)?;
        let store = self.store("scenario")?;
        let mut cells = 0usize;
        for scenario in &self.config.scenarios {
            let features: Arc<dyn FeatureExtractor> = match scenario.detector.as_str() {
                "lm_d" => Arc::new(EmbeddingFeatures(rt.embedder.clone())),
                "gltr" => Arc::new(ScorerFeatures(Arc::new(
                    evadebench_core::detectors::BackendMetricDetector::new(
                        MetricDetector::Gltr,
                        rt.scoring.clone(),
                    ),
                ))),
                name => Arc::new(ScorerFeatures(rt.scalar_detector(name)?)),
            };
            let env = evaluation::ScenarioEnv {
                corpus: &corpus,
                attacks: &attacks,
                features,
            };
            for train_attack in &scenario.train_attacks {
                let resolved_train = resolve_scenario_attack(train_attack, &attacks)?;
                let test_attack_ids: Vec<String> = scenario
                    .test_attacks
                    .iter()
                    .map(|a| resolve_scenario_attack(a, &attacks))
                    .collect::<Result<_>>()?;
                let spec = ScenarioSpec {
                    detector_id: scenario.detector.clone(),
                    train_attack_id: resolved_train,
                    test_attack_ids,
                    dataset: scenario.dataset.clone(),
                    seed: seed_for(self.config.seed, &["scenario", train_attack]),
                };
                let reports = run_scenario(&spec, &env)?;
                cells += reports.len();
                store.append_all(Stream::EvalReports, &reports)?;
            }
        }
        Ok(format!("ran scenarios producing {cells} cells ({})", store.run_id()))
    }

    pub fn report(&self) -> Result<String> {
        // opening the store verifies the config hash before reporting
        let store = self.store("report")?;
        // eval and scenario both append evaluation cells under their own run
        // ids, so "latest" is resolved per cell kind
        let plain_cells =
            latest_eval_cells(&self.config.out_dir, |c| c.scenario_train_attack.is_none())?;
        let scenario_cells =
            latest_eval_cells(&self.config.out_dir, |c| c.scenario_train_attack.is_some())?;
        let mut eval_cells = plain_cells.clone();
        eval_cells.extend(scenario_cells);
        let quality: Vec<QualityReport> =
            read_latest(&self.config.out_dir, Stream::QualityReports).unwrap_or_default();
        let records: Vec<OverheadRecord> =
            read_latest(&self.config.out_dir, Stream::OverheadRecords).unwrap_or_default();

        let reports_dir = std::path::Path::new(&self.config.out_dir).join("reports");
        std::fs::create_dir_all(&reports_dir)?;

        // per-(dataset, detector, attack) aggregation over generators
        let plain: Vec<EvalReport> = plain_cells
            .iter()
            .filter(|c| c.detector_id != "lm_d_attribution")
            .cloned()
            .collect();
        let aggregated = if plain.is_empty() {
            Vec::new()
        } else {
            evaluation::aggregate(&plain, evaluation::GroupBy::over_generators())?
        };
        std::fs::write(reports_dir.join("eval_cells.csv"), eval_csv(&eval_cells))?;
        std::fs::write(
            reports_dir.join("eval_aggregated.csv"),
            eval_csv(&aggregated),
        )?;

        let quality_aggs = aggregate_quality(&quality);
        std::fs::write(reports_dir.join("quality.csv"), quality_csv(&quality_aggs))?;

        let overhead_rows = overhead::overhead_report(&records);
        std::fs::write(reports_dir.join("overhead.csv"), overhead_csv(&overhead_rows))?;

        let mut summary_note = String::new();
        match normalize_summary(
            &aggregated,
            &quality_aggs,
            &overhead_rows,
            self.config.summary_weights,
        ) {
            Ok((summaries, warnings)) => {
                let doc = serde_json::json!({
                    "attacks": summaries,
                    "warnings": warnings,
                });
                std::fs::write(
                    reports_dir.join("summary.json"),
                    serde_json::to_string_pretty(&doc)?,
                )?;
                summary_note = format!(", three-axis summary over {} attacks", summaries.len());
                for w in warnings {
                    eprintln!("warning: {w}");
                }
            }
            Err(e) => {
                eprintln!("warning: three-axis summary skipped: {e}");
            }
        }
        Ok(format!(
            "wrote reports to {}{} ({})",
            reports_dir.display(),
            summary_note,
            store.run_id()
        ))
    }
}

/// Evaluation cells of the most recent run containing any cell matching the
/// predicate; empty when no run matches.
fn latest_eval_cells(
    dir: &str,
    pred: impl Fn(&EvalReport) -> bool,
) -> Result<Vec<EvalReport>> {
    let by_run = evadebench_core::store::read_all::<EvalReport>(dir, Stream::EvalReports)?;
    for records in by_run.values().rev() {
        let hits: Vec<EvalReport> = records.iter().filter(|c| pred(c)).cloned().collect();
        if !hits.is_empty() {
            return Ok(hits);
        }
    }
    Ok(Vec::new())
}

fn resolve_scenario_attack(
    id: &str,
    attacks: &BTreeMap<String, Arc<dyn evadebench_core::attacks::Attack>>,
) -> Result<String> {
    if id == "clean" || attacks.contains_key(id) {
        return Ok(id.to_string());
    }
    let qpa = format!("qpa({id})");
    if attacks.contains_key(&qpa) {
        return Ok(qpa);
    }
    Err(Error::UnknownRegistryName {
        registry: "attack".into(),
        name: id.to_string(),
    })
}

fn report_row(
    dataset: &str,
    generator: &str,
    detector: &str,
    attack: &str,
    m: &evadebench_core::evaluation::BinaryMetrics,
    scenario_train_attack: Option<String>,
) -> EvalReport {
    EvalReport {
        dataset: dataset.to_string(),
        generator: generator.to_string(),
        detector_id: detector.to_string(),
        attack_id: attack.to_string(),
        auc: m.auc,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        threshold: m.threshold,
        n_pos: m.n_pos,
        n_neg: m.n_neg,
        cells: 1,
        scenario_train_attack,
    }
}

fn attribution_row(
    dataset: &str,
    class: &str,
    attack: &str,
    auc: f64,
    n: usize,
) -> EvalReport {
    EvalReport {
        dataset: dataset.to_string(),
        generator: class.to_string(),
        detector_id: "lm_d_attribution".to_string(),
        attack_id: attack.to_string(),
        auc,
        accuracy: f64::NAN,
        precision: f64::NAN,
        recall: f64::NAN,
        f1: f64::NAN,
        threshold: f64::NAN,
        n_pos: n,
        n_neg: 0,
        cells: 1,
        scenario_train_attack: None,
    }
}

/// Training data for the GLTR classifier from stream records.
fn gltr_training_data(
    subset: &Corpus,
    records: &BTreeMap<&str, &ScoreRecord>,
) -> Result<Vec<(Vec<f64>, bool)>> {
    let mut data = Vec::new();
    for sample in subset.iter().filter(|s| s.split == Split::Train) {
        let Some(record) = records.get(sample.id.as_str()) else {
            continue;
        };
        data.push((
            record.value.as_vector()?.to_vec(),
            sample.label == Label::Machine,
        ));
    }
    if data.is_empty() {
        return Err(Error::MissingStream {
            name: "detector_scores.jsonl (gltr train-split features)".into(),
        });
    }
    Ok(data)
}

/// Score one dataset's samples (both splits) with one detector.
pub fn score_dataset(
    rt: &Runtime,
    subset: &Corpus,
    dataset: &str,
    detector: &str,
) -> Result<Vec<ScoreRecord>> {
    enum Mode {
        Scalar(Arc<dyn TextScorer>),
        GltrFeatures,
        LmD(evadebench_core::model_detectors::HeadDetector),
    }
    let mode = if detector == "gltr" {
        Mode::GltrFeatures
    } else if detector == "lm_d" {
        Mode::LmD(rt.train_lm_d(subset, dataset)?)
    } else if rt
        .config
        .backends
        .external_detectors
        .iter()
        .any(|e| e.id == *detector)
    {
        Mode::Scalar(rt.external_detector(detector)?)
    } else {
        Mode::Scalar(rt.scalar_detector(detector)?)
    };
    let mut records = Vec::with_capacity(subset.len());
    for sample in subset.iter() {
        let (value, direction) = match &mode {
            Mode::Scalar(scorer) => (scorer.score(&sample.text)?, scorer.direction()),
            Mode::GltrFeatures => {
                let st = rt.scoring.score_text(&sample.text)?;
                (
                    MetricDetector::Gltr.compute(&st)?,
                    Direction::FeatureVector,
                )
            }
            Mode::LmD(head) => (head.score(&sample.text)?, head.direction()),
        };
        records.push(ScoreRecord {
            detector_id: detector.to_string(),
            sample_id: sample.id.clone(),
            dataset: dataset.to_string(),
            generator: sample.generator.clone(),
            label: sample.label,
            split: sample.split,
            value,
            direction,
        });
    }
    Ok(records)
}
