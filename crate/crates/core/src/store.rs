//! Append-only results store.
//!
//! A store directory is bound to one configuration (its hash is recorded in
//! the manifest when the store is created); every subcommand invocation
//! appends records under a fresh run id and never overwrites. Readers either
//! take everything or just the most recent run present in a stream.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Split, TextSample};
use crate::detectors::{Direction, ScoreValue};
use crate::{Error, Result};

/// The streams a store manages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Corpus,
    DetectorScores,
    AttackOutcomes,
    QualityReports,
    EvalReports,
    OverheadRecords,
}

impl Stream {
    pub fn file_name(&self) -> &'static str {
        match self {
            Stream::Corpus => "corpus.jsonl",
            Stream::DetectorScores => "detector_scores.jsonl",
            Stream::AttackOutcomes => "attack_outcomes.jsonl",
            Stream::QualityReports => "quality_reports.jsonl",
            Stream::EvalReports => "eval_reports.jsonl",
            Stream::OverheadRecords => "overhead_records.jsonl",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    run_id: String,
    seq: u64,
    config_sha256: String,
    created_unix_ms: u64,
    command: String,
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    run_id: String,
    data: T,
}

/// A clean detector score record with the corpus metadata evaluation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub detector_id: String,
    pub sample_id: String,
    pub dataset: String,
    pub generator: Option<String>,
    pub label: Label,
    pub split: Split,
    pub value: ScoreValue,
    pub direction: Direction,
}

/// Handle for appending records under one run id.
#[derive(Debug)]
pub struct ResultsStore {
    dir: PathBuf,
    run_id: String,
    writer: Mutex<()>,
}

impl ResultsStore {
    /// Open (creating if needed) a store in `dir` for the given config hash
    /// and command name. Fails when the store was created with a different
    /// configuration.
    pub fn open(dir: impl AsRef<Path>, config_sha256: &str, command: &str) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let manifest_path = dir.join("manifest.jsonl");
        let mut seq = 0u64;
        if manifest_path.exists() {
            let reader = BufReader::new(std::fs::File::open(&manifest_path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: ManifestEntry = serde_json::from_str(&line)?;
                if entry.config_sha256 != config_sha256 {
                    return Err(Error::ConfigHashMismatch {
                        expected: entry.config_sha256,
                        actual: config_sha256.to_string(),
                    });
                }
                seq = seq.max(entry.seq);
            }
        }
        let seq = seq + 1;
        let run_id = format!("run-{seq:04}");
        let entry = ManifestEntry {
            run_id: run_id.clone(),
            seq,
            config_sha256: config_sha256.to_string(),
            created_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            command: command.to_string(),
        };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&manifest_path)?;
        serde_json::to_writer(&mut file, &entry)?;
        file.write_all(b"\n")?;
        Ok(ResultsStore {
            dir,
            run_id,
            writer: Mutex::new(()),
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Append one record to a stream under this run id.
    pub fn append<T: Serialize>(&self, stream: Stream, record: &T) -> Result<()> {
        let _guard = self.writer.lock().unwrap();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(stream.file_name()))?;
        serde_json::to_writer(
            &mut file,
            &Envelope {
                run_id: self.run_id.clone(),
                data: record,
            },
        )?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn append_all<T: Serialize>(&self, stream: Stream, records: &[T]) -> Result<()> {
        for r in records {
            self.append(stream, r)?;
        }
        Ok(())
    }
}

/// All records of a stream grouped by run id (insertion order preserved).
pub fn read_all<T: DeserializeOwned>(
    dir: impl AsRef<Path>,
    stream: Stream,
) -> Result<BTreeMap<String, Vec<T>>> {
    let path = dir.as_ref().join(stream.file_name());
    if !path.exists() {
        return Err(Error::MissingStream {
            name: stream.file_name().to_string(),
        });
    }
    let reader = BufReader::new(std::fs::File::open(&path)?);
    let mut by_run: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let envelope: Envelope<T> = serde_json::from_str(&line)?;
        by_run.entry(envelope.run_id).or_default().push(envelope.data);
    }
    Ok(by_run)
}

/// Records of the most recent run present in the stream.
pub fn read_latest<T: DeserializeOwned>(dir: impl AsRef<Path>, stream: Stream) -> Result<Vec<T>> {
    let mut by_run = read_all::<T>(&dir, stream)?;
    let last = by_run
        .keys()
        .next_back()
        .cloned()
        .ok_or_else(|| Error::MissingStream {
            name: stream.file_name().to_string(),
        })?;
    Ok(by_run.remove(&last).unwrap_or_default())
}

/// Load the corpus stream (latest run) back into a [`crate::corpus::Corpus`].
pub fn read_corpus(dir: impl AsRef<Path>, name: &str) -> Result<crate::corpus::Corpus> {
    let samples: Vec<TextSample> = read_latest(dir, Stream::Corpus)?;
    crate::corpus::Corpus::new(name, samples)
}
