//! Construction of backends, detectors, and attacks from a run configuration.

use std::collections::BTreeMap;
use std::sync::Arc;

use evadebench_core::attacks::{
    Attack, DipperParams, HmgcAttack, LexiconSynonyms, ParaphraseAttack, PromptAttack,
    PromptTemplate, RaftAttack, RecursionAttack, ToblendAttack,
};
use evadebench_core::blending::{BlendAttack, BlendPolicy};
use evadebench_core::config::{
    AttackConfig, BackendConfig, EmbedderConfig, RewriterConfig, RunConfig,
};
use evadebench_core::corpus::{Corpus, FilterSpec, Label, Split};
use evadebench_core::detectors::{
    BackendMetricDetector, Binoculars, Direction, FastDetectGpt, MetricDetector, OrientedScorer,
    TextScorer,
};
use evadebench_core::gateway::embed::HashingEmbedder;
use evadebench_core::gateway::ngram::NgramModel;
use evadebench_core::gateway::remote::{
    RemoteConfig, RemoteEmbedder, RemoteRewriter, RemoteScoringBackend,
};
use evadebench_core::gateway::rewrite::{IdentityRewriter, LexiconRewriter};
use evadebench_core::gateway::{EmbeddingBackend, RewriteBackend, ScoringBackend};
use evadebench_core::hashing::seed_for;
use evadebench_core::model_detectors::{train_head_detector, train_surrogate, ExternalDetector};
use evadebench_core::qpa::QpaConstraints;
use evadebench_core::{Error, Result};

/// Resolved backends shared by all subcommands.
pub struct Runtime {
    pub config: RunConfig,
    pub scoring: Arc<dyn ScoringBackend>,
    pub reference: Arc<dyn ScoringBackend>,
    pub observer: Arc<dyn ScoringBackend>,
    pub performer: Arc<dyn ScoringBackend>,
    pub quality_scoring: Arc<dyn ScoringBackend>,
    pub rewriter: Arc<dyn RewriteBackend>,
    pub embedder: Arc<dyn EmbeddingBackend>,
    pub named: BTreeMap<String, Arc<dyn ScoringBackend>>,
}

fn remote_config(
    endpoint: &str,
    model: &str,
    auth_token: &Option<String>,
    top_k: usize,
    timeout_ms: u64,
    max_retries: usize,
    max_in_flight: usize,
) -> RemoteConfig {
    RemoteConfig {
        endpoint: endpoint.to_string(),
        model: model.to_string(),
        auth_token: auth_token.clone(),
        top_k,
        timeout_ms,
        max_retries,
        max_in_flight,
    }
}

fn build_scoring_backend(
    cfg: &BackendConfig,
    corpus: Option<&Corpus>,
) -> Result<Arc<dyn ScoringBackend>> {
    match cfg {
        BackendConfig::Ngram {
            id,
            model_path,
            order,
            train_from,
        } => {
            let path = std::path::Path::new(model_path);
            if !path.exists() {
                let dataset = train_from.as_ref().ok_or_else(|| {
                    Error::Config(format!(
                        "model file {model_path} does not exist and no train_from dataset is set"
                    ))
                })?;
                let corpus = corpus.ok_or_else(|| {
                    Error::Config("training a backend requires an ingested corpus".into())
                })?;
                let train_texts: Vec<String> = corpus
                    .iter()
                    .filter(|s| {
                        s.dataset == *dataset
                            && s.label == Label::Machine
                            && s.split == Split::Train
                    })
                    .map(|s| s.text.clone())
                    .collect();
                if train_texts.is_empty() {
                    return Err(Error::Config(format!(
                        "dataset {dataset} has no machine train samples to train {id}"
                    )));
                }
                if let Some(parent) = path.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent)?;
                    }
                }
                NgramModel::train(id.clone(), *order, &train_texts)?.save(path)?;
            }
            Ok(Arc::new(NgramModel::load(path)?))
        }
        BackendConfig::Remote {
            id,
            endpoint,
            model,
            top_k,
            auth_token,
            timeout_ms,
            max_retries,
            max_in_flight,
        } => Ok(Arc::new(RemoteScoringBackend::new(
            id.clone(),
            remote_config(
                endpoint,
                model,
                auth_token,
                *top_k,
                *timeout_ms,
                *max_retries,
                *max_in_flight,
            ),
        )?)),
    }
}

impl Runtime {
    /// Build all configured backends; `corpus` is needed when an n-gram model
    /// must be trained on first use.
    pub fn build(config: RunConfig, corpus: Option<&Corpus>) -> Result<Self> {
        let scoring = build_scoring_backend(&config.backends.scoring, corpus)?;
        let reference = match &config.backends.reference {
            Some(cfg) => build_scoring_backend(cfg, corpus)?,
            None => scoring.clone(),
        };
        let observer = match &config.backends.observer {
            Some(cfg) => build_scoring_backend(cfg, corpus)?,
            None => scoring.clone(),
        };
        let performer = match &config.backends.performer {
            Some(cfg) => build_scoring_backend(cfg, corpus)?,
            None => reference.clone(),
        };
        let quality_scoring = match &config.backends.quality_scoring {
            Some(cfg) => build_scoring_backend(cfg, corpus)?,
            None => scoring.clone(),
        };
        let rewriter: Arc<dyn RewriteBackend> = match &config.backends.rewriting {
            RewriterConfig::Identity => Arc::new(IdentityRewriter::new("identity")),
            RewriterConfig::Lexicon {
                rules,
                rules_path,
                substitution_prob,
            } => {
                let table: BTreeMap<String, String> = match (rules, rules_path) {
                    (Some(r), _) => r.clone(),
                    (None, Some(path)) => {
                        let raw = std::fs::read_to_string(path)?;
                        serde_json::from_str(&raw)
                            .map_err(|e| Error::Config(format!("bad rules file {path}: {e}")))?
                    }
                    (None, None) => {
                        return Err(Error::Config(
                            "lexicon rewriter needs rules or rules_path".into(),
                        ))
                    }
                };
                Arc::new(LexiconRewriter::new(
                    "lexicon",
                    table,
                    *substitution_prob,
                    seed_for(config.seed, &["rewriter"]),
                )?)
            }
            RewriterConfig::Remote {
                endpoint,
                model,
                auth_token,
                timeout_ms,
                max_retries,
                max_in_flight,
            } => Arc::new(RemoteRewriter::new(
                "remote-rewriter",
                remote_config(
                    endpoint,
                    model,
                    auth_token,
                    0,
                    *timeout_ms,
                    *max_retries,
                    *max_in_flight,
                ),
            )?),
        };
        let embedder: Arc<dyn EmbeddingBackend> = match &config.backends.embedding {
            EmbedderConfig::Hashing { dim, ngram_order } => {
                Arc::new(HashingEmbedder::with_order("hashing", *dim, *ngram_order)?)
            }
            EmbedderConfig::Remote {
                endpoint,
                model,
                dim,
                auth_token,
                timeout_ms,
                max_retries,
                max_in_flight,
            } => Arc::new(RemoteEmbedder::new(
                "remote-embedder",
                *dim,
                remote_config(
                    endpoint,
                    model,
                    auth_token,
                    0,
                    *timeout_ms,
                    *max_retries,
                    *max_in_flight,
                ),
            )?),
        };
        let mut named = BTreeMap::new();
        for (name, cfg) in &config.backends.named {
            named.insert(name.clone(), build_scoring_backend(cfg, corpus)?);
        }
        Ok(Runtime {
            config,
            scoring,
            reference,
            observer,
            performer,
            quality_scoring,
            rewriter,
            embedder,
            named,
        })
    }

    /// Resolve a scoring backend by role or configured name.
    pub fn backend_by_name(&self, name: &str) -> Result<Arc<dyn ScoringBackend>> {
        match name {
            "scoring" => Ok(self.scoring.clone()),
            "reference" => Ok(self.reference.clone()),
            "observer" => Ok(self.observer.clone()),
            "performer" => Ok(self.performer.clone()),
            "quality_scoring" => Ok(self.quality_scoring.clone()),
            other => self.named.get(other).cloned().ok_or_else(|| {
                Error::UnknownRegistryName {
                    registry: "backend".into(),
                    name: other.to_string(),
                }
            }),
        }
    }

    /// Build one scalar detector (everything except the feature-vector GLTR
    /// route and external endpoints).
    pub fn scalar_detector(&self, name: &str) -> Result<Arc<dyn TextScorer>> {
        if let Some(metric) = MetricDetector::from_id(name) {
            if metric == MetricDetector::Gltr {
                return Err(Error::detector(
                    "gltr",
                    "gltr produces feature vectors; train its classifier first",
                ));
            }
            return Ok(Arc::new(BackendMetricDetector::new(
                metric,
                self.scoring.clone(),
            )));
        }
        match name {
            "fast_detect_gpt" => Ok(Arc::new(FastDetectGpt::new(
                self.scoring.clone(),
                self.reference.clone(),
            ))),
            "binoculars" => Ok(Arc::new(Binoculars::new(
                self.observer.clone(),
                self.performer.clone(),
            ))),
            other => Err(Error::UnknownRegistryName {
                registry: "detector".into(),
                name: other.to_string(),
            }),
        }
    }

    /// Register an external detector endpoint from config.
    pub fn external_detector(&self, name: &str) -> Result<Arc<ExternalDetector>> {
        let cfg = self
            .config
            .backends
            .external_detectors
            .iter()
            .find(|e| e.id == name)
            .ok_or_else(|| Error::UnknownRegistryName {
                registry: "external_detector".into(),
                name: name.to_string(),
            })?;
        let direction = match cfg.direction.as_str() {
            "higher_is_mgt" => Direction::HigherIsMgt,
            "lower_is_mgt" => Direction::LowerIsMgt,
            other => {
                return Err(Error::Config(format!(
                    "external detector {name}: unknown direction {other}"
                )))
            }
        };
        Ok(Arc::new(ExternalDetector::register(
            cfg.id.clone(),
            cfg.endpoint.clone(),
            direction,
            cfg.timeout_ms,
        )?))
    }

    /// Build the configured attacks (optionally filtered by id), applying the
    /// quality-preserving plug-in where enabled, plus the blend attack when
    /// configured.
    pub fn build_attacks(
        &self,
        corpus: &Corpus,
        filter: Option<&[String]>,
    ) -> Result<BTreeMap<String, Arc<dyn Attack>>> {
        let mut attacks: BTreeMap<String, Arc<dyn Attack>> = BTreeMap::new();
        let configured: Vec<&AttackConfig> = self
            .config
            .attacks
            .iter()
            .filter(|a| filter.is_none_or(|f| f.iter().any(|x| x == &a.id)))
            .collect();
        for cfg in configured {
            let attack = self.build_attack(cfg, corpus)?;
            attacks.insert(attack.id().to_string(), attack);
        }
        if let Some(blend) = &self.config.blend {
            let selected: Vec<Arc<dyn Attack>> = blend
                .attacks
                .iter()
                .map(|id| {
                    // blend members are resolved against configured attacks (the
                    // qpa-wrapped id when qpa is on)
                    attacks
                        .values()
                        .find(|a| {
                            a.id() == id.as_str() || a.id() == format!("qpa({id})").as_str()
                        })
                        .cloned()
                        .ok_or_else(|| Error::UnknownRegistryName {
                            registry: "attack".into(),
                            name: id.clone(),
                        })
                })
                .collect::<Result<_>>()?;
            let policy = match blend.policy.as_str() {
                "alternate" => BlendPolicy::Alternate,
                other => {
                    return Err(Error::Config(format!(
                        "unknown blend policy {other} (the CLI exposes \"alternate\")"
                    )))
                }
            };
            let blend_attack =
                BlendAttack::new(selected, policy)?.with_context_window(blend.context_window);
            attacks.insert(blend_attack.id().to_string(), Arc::new(blend_attack));
        }
        Ok(attacks)
    }

    fn build_attack(&self, cfg: &AttackConfig, corpus: &Corpus) -> Result<Arc<dyn Attack>> {
        let p = &cfg.params;
        let seed = p
            .get("seed")
            .and_then(|v| v.as_u64())
            .unwrap_or_else(|| seed_for(self.config.seed, &["attack", &cfg.id]));
        let qpa_on = self.config.qpa.enabled;
        let constraints: QpaConstraints = self.config.qpa.constraints;
        let dipper_params = |p: &serde_json::Value| DipperParams {
            lex_diversity: p.get("lex_diversity").and_then(|v| v.as_u64()).unwrap_or(60) as u8,
            order_diversity: p.get("order_diversity").and_then(|v| v.as_u64()).unwrap_or(20) as u8,
            max_tokens: p.get("max_tokens").and_then(|v| v.as_u64()).unwrap_or(1024) as usize,
            temperature: p.get("temperature").and_then(|v| v.as_f64()).unwrap_or(0.7),
        };
        Ok(match cfg.id.as_str() {
            "dipper" => Arc::new(ParaphraseAttack::new(
                self.rewriter.clone(),
                dipper_params(p),
                seed,
            )),
            "recursion" => {
                let depth = p.get("depth").and_then(|v| v.as_u64()).unwrap_or(5) as usize;
                Arc::new(RecursionAttack::new(
                    self.rewriter.clone(),
                    dipper_params(p),
                    depth,
                    seed,
                )?)
            }
            "prompt" => {
                let template_id = p
                    .get("template")
                    .and_then(|v| v.as_str())
                    .unwrap_or("standard");
                let mut attack = PromptAttack::new(
                    self.rewriter.clone(),
                    PromptTemplate::by_id(template_id)?,
                    seed,
                );
                if qpa_on {
                    attack = attack.with_qpa();
                }
                Arc::new(attack)
            }
            "raft" => {
                let proportion = p.get("proportion").and_then(|v| v.as_f64()).unwrap_or(0.15);
                let top_k = p.get("top_k").and_then(|v| v.as_u64()).unwrap_or(5) as usize;
                let proxy_name = p
                    .get("proxy")
                    .and_then(|v| v.as_str())
                    .unwrap_or("log_likelihood");
                let proxy = Arc::new(OrientedScorer(self.scalar_detector(proxy_name)?));
                let candidate_backend = match p.get("candidate_backend").and_then(|v| v.as_str()) {
                    Some(name) => self.backend_by_name(name)?,
                    None => self.scoring.clone(),
                };
                let mut attack =
                    RaftAttack::new(proxy, candidate_backend, proportion, top_k, seed)?;
                if qpa_on {
                    attack = attack.with_qpa(evadebench_core::attacks::RaftQpa {
                        constraints,
                        quality_backend: self.quality_scoring.clone(),
                        embedder: self.embedder.clone(),
                    });
                }
                Arc::new(attack)
            }
            "hmgc" => {
                let surrogate_dataset = p
                    .get("surrogate_dataset")
                    .and_then(|v| v.as_str())
                    .map(str::to_string)
                    .or_else(|| self.config.datasets.first().map(|d| d.name.clone()))
                    .ok_or_else(|| Error::Config("hmgc needs a surrogate_dataset".into()))?;
                let train = corpus.filter(&FilterSpec {
                    dataset: Some(surrogate_dataset.clone()),
                    split: Some(Split::Train),
                    ..Default::default()
                });
                if train.is_empty() {
                    return Err(Error::Config(format!(
                        "hmgc surrogate dataset {surrogate_dataset} has no train samples"
                    )));
                }
                let surrogate = Arc::new(train_surrogate(
                    &train,
                    self.embedder.clone(),
                    seed_for(self.config.seed, &["hmgc-surrogate"]),
                )?);
                let synonyms: BTreeMap<String, Vec<String>> = match p.get("synonyms") {
                    Some(serde_json::Value::Object(_)) => {
                        serde_json::from_value(p["synonyms"].clone())
                            .map_err(|e| Error::Config(format!("bad hmgc synonyms: {e}")))?
                    }
                    _ => match p.get("synonyms_path").and_then(|v| v.as_str()) {
                        Some(path) => {
                            let raw = std::fs::read_to_string(path)?;
                            serde_json::from_str(&raw)
                                .map_err(|e| Error::Config(format!("bad synonyms file: {e}")))?
                        }
                        None => {
                            return Err(Error::Config(
                                "hmgc needs synonyms or synonyms_path in its params".into(),
                            ))
                        }
                    },
                };
                let max_iters = p.get("max_iters").and_then(|v| v.as_u64()).unwrap_or(10) as usize;
                Arc::new(HmgcAttack::new(
                    surrogate,
                    Arc::new(LexiconSynonyms::new("config", synonyms)),
                    max_iters,
                    seed,
                )?)
            }
            "toblend" => {
                let backend_names: Vec<String> = match p.get("backends") {
                    Some(serde_json::Value::Array(items)) => items
                        .iter()
                        .filter_map(|v| v.as_str().map(str::to_string))
                        .collect(),
                    _ => vec!["scoring".to_string()],
                };
                let backends: Vec<Arc<dyn ScoringBackend>> = backend_names
                    .iter()
                    .map(|n| self.backend_by_name(n))
                    .collect::<Result<_>>()?;
                let prefix_tokens =
                    p.get("prefix_tokens").and_then(|v| v.as_u64()).unwrap_or(2) as usize;
                let length = p.get("length").and_then(|v| v.as_u64()).map(|v| v as usize);
                let mut attack = ToblendAttack::new(backends, prefix_tokens, length, seed)?;
                if qpa_on {
                    attack = attack.with_qpa(evadebench_core::attacks::ToblendQpa {
                        constraints,
                        quality_backend: self.quality_scoring.clone(),
                        embedder: self.embedder.clone(),
                    });
                }
                Arc::new(attack)
            }
            other => {
                return Err(Error::UnknownRegistryName {
                    registry: "attack".into(),
                    name: other.to_string(),
                })
            }
        })
    }

    /// Train the binary head detector for one dataset (train split).
    pub fn train_lm_d(&self, corpus: &Corpus, dataset: &str) -> Result<evadebench_core::model_detectors::HeadDetector> {
        let train = corpus.filter(&FilterSpec {
            dataset: Some(dataset.to_string()),
            split: Some(Split::Train),
            ..Default::default()
        });
        train_head_detector(
            &train,
            self.embedder.clone(),
            &["human".to_string(), "machine".to_string()],
            seed_for(self.config.seed, &["lm_d", dataset]),
        )
    }
}
