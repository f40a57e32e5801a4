//! Run configuration: backends, detectors, attacks, datasets, seeds, and
//! output location. Defaults pin the benchmark's standard settings (recursion
//! depth 5, substitution proportion 0.15, quality thresholds 5%/5%/0.95/0.70,
//! length buckets 100..=1000 capped at 10 per bucket).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::qpa::QpaConstraints;
use crate::report::SummaryWeights;
use crate::{Error, Result};

pub const ATTACK_IDS: &[&str] = &["dipper", "recursion", "prompt", "raft", "hmgc", "toblend"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_ratio() -> f64 {
    0.8
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratio: 0.8,
            seed: 0,
        }
    }
}

/// Scoring backend definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Ngram {
        #[serde(default = "default_scoring_id")]
        id: String,
        model_path: String,
        #[serde(default = "default_order")]
        order: usize,
        /// Dataset name whose machine train split trains the model when the
        /// file does not exist yet.
        #[serde(default)]
        train_from: Option<String>,
    },
    Remote {
        id: String,
        endpoint: String,
        model: String,
        #[serde(default = "default_top_k")]
        top_k: usize,
        #[serde(default)]
        auth_token: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        max_retries: usize,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_scoring_id() -> String {
    "scoring".into()
}
fn default_order() -> usize {
    3
}
fn default_top_k() -> usize {
    5
}
fn default_timeout() -> u64 {
    30_000
}
fn default_retries() -> usize {
    2
}
fn default_in_flight() -> usize {
    4
}

impl BackendConfig {
    pub fn id(&self) -> &str {
        match self {
            BackendConfig::Ngram { id, .. } | BackendConfig::Remote { id, .. } => id,
        }
    }
}

/// Rewriting backend definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewriterConfig {
    Identity,
    Lexicon {
        #[serde(default)]
        rules: Option<BTreeMap<String, String>>,
        #[serde(default)]
        rules_path: Option<String>,
        #[serde(default = "default_sub_prob")]
        substitution_prob: f64,
    },
    Remote {
        endpoint: String,
        model: String,
        #[serde(default)]
        auth_token: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        max_retries: usize,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_sub_prob() -> f64 {
    1.0
}

/// Embedding backend definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_ngram_order")]
        ngram_order: usize,
    },
    Remote {
        endpoint: String,
        model: String,
        dim: usize,
        #[serde(default)]
        auth_token: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        max_retries: usize,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_dim() -> usize {
    64
}
fn default_ngram_order() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalDetectorConfig {
    pub id: String,
    pub endpoint: String,
    /// "higher_is_mgt" or "lower_is_mgt".
    #[serde(default = "default_direction")]
    pub direction: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_direction() -> String {
    "higher_is_mgt".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendsConfig {
    pub scoring: BackendConfig,
    /// Second backend for the sampling-discrepancy detector (defaults to the
    /// scoring backend).
    #[serde(default)]
    pub reference: Option<BackendConfig>,
    /// Observer/performer for the perplexity-ratio detector (default to the
    /// scoring/reference backends).
    #[serde(default)]
    pub observer: Option<BackendConfig>,
    #[serde(default)]
    pub performer: Option<BackendConfig>,
    pub rewriting: RewriterConfig,
    pub embedding: EmbedderConfig,
    /// Perplexity backend for quality metrics (defaults to the scoring backend).
    #[serde(default)]
    pub quality_scoring: Option<BackendConfig>,
    /// Extra named backends (token ensembles reference these by name).
    #[serde(default)]
    pub named: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub external_detectors: Vec<ExternalDetectorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub id: String,
    #[serde(default = "empty_object")]
    pub params: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(serde_json::Map::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct QpaConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_qpa")]
    pub constraints: QpaConstraints,
}

fn default_qpa() -> QpaConstraints {
    QpaConstraints::default()
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendConfig {
    /// Attack ids drawn from the configured attacks.
    pub attacks: Vec<String>,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default)]
    pub context_window: usize,
}

fn default_policy() -> String {
    "alternate".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadConfig {
    #[serde(default = "default_targets")]
    pub targets: Vec<usize>,
    #[serde(default = "default_cap")]
    pub per_bucket_cap: usize,
}

fn default_targets() -> Vec<usize> {
    (1..=10).map(|i| i * 100).collect()
}
fn default_cap() -> usize {
    10
}

impl Default for OverheadConfig {
    fn default() -> Self {
        OverheadConfig {
            targets: default_targets(),
            per_bucket_cap: default_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub detector: String,
    pub train_attacks: Vec<String>,
    pub test_attacks: Vec<String>,
    pub dataset: String,
}

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: String,
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub split: SplitConfig,
    pub backends: BackendsConfig,
    pub detectors: Vec<String>,
    #[serde(default)]
    pub attacks: Vec<AttackConfig>,
    #[serde(default)]
    pub qpa: QpaConfig,
    #[serde(default)]
    pub blend: Option<BlendConfig>,
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub overhead: OverheadConfig,
    #[serde(default)]
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default)]
    pub summary_weights: SummaryWeights,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<(RunConfig, String)> {
        let raw = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read config {:?}: {e}", path.as_ref())))?;
        let config: RunConfig =
            serde_json::from_str(&raw).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok((config, config_hash(&raw)?))
    }

    /// Check registry names and basic invariants.
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(Error::Config(format!(
                "split ratio must be in (0, 1), got {}",
                self.split.ratio
            )));
        }
        let external: Vec<&str> = self
            .backends
            .external_detectors
            .iter()
            .map(|e| e.id.as_str())
            .collect();
        for d in &self.detectors {
            let known = crate::detectors::METRIC_DETECTOR_IDS.contains(&d.as_str())
                || d == "lm_d"
                || external.contains(&d.as_str());
            if !known {
                return Err(Error::UnknownRegistryName {
                    registry: "detector".into(),
                    name: d.clone(),
                });
            }
        }
        for a in &self.attacks {
            if !ATTACK_IDS.contains(&a.id.as_str()) {
                return Err(Error::UnknownRegistryName {
                    registry: "attack".into(),
                    name: a.id.clone(),
                });
            }
        }
        if let Some(blend) = &self.blend {
            if blend.attacks.len() < 2 && blend.policy == "alternate" {
                return Err(Error::Config(
                    "blend with the alternate policy needs at least 2 attacks".into(),
                ));
            }
            for id in &blend.attacks {
                if !self.attacks.iter().any(|a| &a.id == id) {
                    return Err(Error::UnknownRegistryName {
                        registry: "attack".into(),
                        name: id.clone(),
                    });
                }
            }
        }
        for s in &self.scenarios {
            for a in s.train_attacks.iter().chain(&s.test_attacks) {
                if a != "clean" && !self.attacks.iter().any(|cfg| &cfg.id == a) {
                    return Err(Error::UnknownRegistryName {
                        registry: "attack".into(),
                        name: a.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Canonical SHA-256 of a config document: the JSON is parsed and re-serialized
/// with sorted keys so formatting differences do not change the hash.
pub fn config_hash(raw_json: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(raw_json)?;
    let canonical = serde_json::to_string(&value)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
