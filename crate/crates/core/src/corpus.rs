//! Labeled human/machine text corpora: JSONL ingestion, validation, stratified
//! splitting, and filtering.
//!
//! The wire format is one JSON object per line:
//!
//! ```json
//! {"id": "...", "text": "...", "label": "human|machine", "generator": "...|null",
//!  "dataset": "...", "domain": "...", "split": "train|test|unassigned"}
//! ```
//!
//! A corpus is immutable after construction; splitting returns a new value.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::seed_for;
use crate::{Error, Result};

/// Sample origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Machine,
}

/// Split assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[derive(Default)]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}


/// One labeled text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSample {
    pub id: String,
    pub text: String,
    pub label: Label,
    #[serde(default)]
    pub generator: Option<String>,
    pub dataset: String,
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub split: Split,
}

impl TextSample {
    /// Check the per-sample invariants.
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::InvalidSample {
                id: self.id.clone(),
                message: "text is empty after trimming".into(),
            });
        }
        match (self.label, &self.generator) {
            (Label::Machine, None) => Err(Error::InvalidSample {
                id: self.id.clone(),
                message: "machine sample is missing its generator".into(),
            }),
            (Label::Human, Some(_)) => Err(Error::InvalidSample {
                id: self.id.clone(),
                message: "human sample must not carry a generator".into(),
            }),
            _ => Ok(()),
        }
    }
}

/// Supported ingest formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    Jsonl,
}

/// Conjunctive sample predicate for [`Corpus::filter`].
#[derive(Debug, Clone, Default)]
pub struct FilterSpec {
    pub dataset: Option<String>,
    pub generator: Option<String>,
    pub label: Option<Label>,
    pub split: Option<Split>,
}

impl FilterSpec {
    pub fn matches(&self, s: &TextSample) -> bool {
        self.dataset.as_deref().is_none_or(|d| s.dataset == d)
            && self
                .generator
                .as_deref()
                .is_none_or(|g| s.generator.as_deref() == Some(g))
            && self.label.is_none_or(|l| s.label == l)
            && self.split.is_none_or(|sp| s.split == sp)
    }
}

/// An ordered, id-unique collection of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    samples: Vec<TextSample>,
    pub split_seed: Option<u64>,
}

impl Corpus {
    /// Build a corpus from validated samples; rejects duplicate ids.
    pub fn new(name: impl Into<String>, samples: Vec<TextSample>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, s) in samples.iter().enumerate() {
            s.validate()?;
            if !seen.insert(s.id.clone()) {
                return Err(Error::DuplicateId {
                    id: s.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Corpus {
            name: name.into(),
            samples,
            split_seed: None,
        })
    }

    /// Read a JSONL corpus file. Errors carry 1-based line numbers.
    pub fn ingest(path: impl AsRef<Path>, format: IngestFormat) -> Result<Self> {
        let IngestFormat::Jsonl = format;
        let name = path
            .as_ref()
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".to_string());
        let file = std::fs::File::open(path.as_ref())?;
        Self::ingest_reader(name, BufReader::new(file))
    }

    /// Read JSONL records from any reader.
    pub fn ingest_reader(name: impl Into<String>, reader: impl BufRead) -> Result<Self> {
        let mut samples = Vec::new();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut sample: TextSample =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    line: line_no,
                    message: e.to_string(),
                })?;
            sample.split = Split::Unassigned;
            sample.validate().map_err(|e| Error::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
            if seen.insert(sample.id.clone(), line_no).is_some() {
                return Err(Error::DuplicateId {
                    id: sample.id.clone(),
                    line: line_no,
                });
            }
            samples.push(sample);
        }
        Ok(Corpus {
            name: name.into(),
            samples,
            split_seed: None,
        })
    }

    /// Write the corpus as JSONL (inverse of [`Corpus::ingest`]).
    pub fn write_jsonl(&self, mut writer: impl Write) -> Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut writer, s)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn samples(&self) -> &[TextSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TextSample> {
        self.samples.iter()
    }

    pub fn get(&self, id: &str) -> Option<&TextSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Group sample indices by the stratification key `(dataset, generator)`.
    pub fn strata(&self) -> BTreeMap<(String, Option<String>), Vec<usize>> {
        let mut map: BTreeMap<(String, Option<String>), Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            map.entry((s.dataset.clone(), s.generator.clone()))
                .or_default()
                .push(i);
        }
        map
    }

    /// Assign train/test splits, stratified per `(dataset, generator)`.
    ///
    /// Deterministic given `seed` and invariant to input record order: each
    /// stratum is sorted by id before the seeded shuffle. The train count per
    /// stratum is `round(ratio * stratum_size)`.
    pub fn assign_splits(&self, ratio: f64, seed: u64) -> Result<Corpus> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split ratio must be in (0, 1), got {ratio}"
            )));
        }
        let mut samples = self.samples.clone();
        for ((dataset, generator), indices) in self.strata() {
            if indices.len() < 2 {
                return Err(Error::StratumTooSmall {
                    stratum: format!("({dataset}, {})", generator.as_deref().unwrap_or("human")),
                    count: indices.len(),
                });
            }
            let mut ordered = indices;
            ordered.sort_by(|&a, &b| self.samples[a].id.cmp(&self.samples[b].id));
            let stratum_seed = seed_for(
                seed,
                &["split", &dataset, generator.as_deref().unwrap_or("")],
            );
            let mut rng = ChaCha8Rng::seed_from_u64(stratum_seed);
            ordered.shuffle(&mut rng);
            let train_count = (ratio * ordered.len() as f64).round() as usize;
            for (pos, &idx) in ordered.iter().enumerate() {
                samples[idx].split = if pos < train_count {
                    Split::Train
                } else {
                    Split::Test
                };
            }
        }
        Ok(Corpus {
            name: self.name.clone(),
            samples,
            split_seed: Some(seed),
        })
    }

    /// Subset preserving order.
    pub fn filter(&self, spec: &FilterSpec) -> Corpus {
        Corpus {
            name: self.name.clone(),
            samples: self
                .samples
                .iter()
                .filter(|s| spec.matches(s))
                .cloned()
                .collect(),
            split_seed: self.split_seed,
        }
    }

    /// Distinct generator names in order of first appearance.
    pub fn generators(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for s in &self.samples {
            if let Some(g) = &s.generator {
                if seen.insert(g.clone()) {
                    out.push(g.clone());
                }
            }
        }
        out
    }

    /// Distinct dataset names in order of first appearance.
    pub fn datasets(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for s in &self.samples {
            if seen.insert(s.dataset.clone()) {
                out.push(s.dataset.clone());
            }
        }
        out
    }
}
