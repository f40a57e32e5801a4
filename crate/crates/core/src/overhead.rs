//! Computational-overhead measurement: wall time, backend calls, and memory per
//! attack run, plus the token-length bucket sampling protocol.
//!
//! Measurement is globally exclusive: [`measure`] refuses to produce a record
//! when any other attack run shares the process, so timings are never polluted
//! by concurrency.

use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{active_runs, reset_run_watermark, run_watermark, Attack, AttackOutcome};
use crate::corpus::{Corpus, Label, TextSample};
use crate::hashing::seed_for;
use crate::text::tokenize_spans;
use crate::{Error, Result};

/// Where a memory number came from. Values are never fabricated: when no
/// source is available the record says so.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorySource {
    /// Accelerator memory reported by a remote endpoint.
    EndpointReported,
    /// Peak resident set size of this process (`VmHWM`).
    ProcessPeakRss,
    Unavailable,
}

/// Resource record for one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRecord {
    pub attack_id: String,
    pub sample_id: String,
    /// Reference-tokenizer length of the input text.
    pub token_length: usize,
    /// Monotonic-clock wall time around the full attack call, including any
    /// network time to backends.
    pub wall_time_secs: f64,
    pub peak_memory: Option<u64>,
    pub memory_source: MemorySource,
    pub backend_calls: u64,
}

/// Peak resident set size of the current process in bytes, from
/// `/proc/self/status` (`VmHWM`).
pub fn read_process_peak_rss() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

static MEASURE_LOCK: Mutex<()> = Mutex::new(());

/// Run one attack exclusively and return its outcome plus the authoritative
/// overhead record.
///
/// Errors when another measured run is active or when concurrent attack runs
/// are observed during the measurement (the record is discarded, never
/// emitted).
pub fn measure(
    attack: &dyn Attack,
    sample: &TextSample,
    trace: bool,
) -> Result<(AttackOutcome, OverheadRecord)> {
    let guard = MEASURE_LOCK.try_lock().map_err(|_| Error::MeasurementBusy)?;
    if active_runs() != 0 {
        return Err(Error::MeasurementNotExclusive);
    }
    reset_run_watermark();
    let outcome = attack.attack(sample, trace)?;
    // nested runs (blending) are fine; concurrent ones are not, and they leave
    // the active counter nonzero while we still hold the lock
    if active_runs() != 0 {
        return Err(Error::MeasurementNotExclusive);
    }
    drop(guard);
    let record = outcome.resource.clone();
    let _ = run_watermark();
    Ok((outcome, record))
}

/// Token-length bucket plan: targets 100..=1000 step 100 and up to 10 samples
/// per bucket, unless overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucketPlan {
    pub targets: Vec<usize>,
    pub per_bucket_cap: usize,
}

impl Default for LengthBucketPlan {
    fn default() -> Self {
        LengthBucketPlan {
            targets: (1..=10).map(|i| i * 100).collect(),
            per_bucket_cap: 10,
        }
    }
}

impl LengthBucketPlan {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::InvalidArgument("bucket plan has no targets".into()));
        }
        if self.targets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "bucket targets must be strictly increasing".into(),
            ));
        }
        if self.per_bucket_cap == 0 {
            return Err(Error::InvalidArgument("per_bucket_cap must be > 0".into()));
        }
        Ok(())
    }
}

/// One bucket selection: the target length and the sample truncated to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSample {
    pub target_length: usize,
    pub sample: TextSample,
}

/// Select machine samples for each length bucket.
///
/// For target `L`, candidates satisfy `L < token_len < L + 100` (strict on
/// both sides), up to `per_bucket_cap` are drawn by seeded shuffle of the
/// id-sorted candidate list, and each is truncated to exactly `L` tokens by
/// cutting at the token's byte boundary. Short or empty buckets are allowed.
pub fn sample_length_buckets(
    corpus: &Corpus,
    plan: &LengthBucketPlan,
    seed: u64,
) -> Result<Vec<BucketSample>> {
    plan.validate()?;
    let machines: Vec<&TextSample> = corpus
        .iter()
        .filter(|s| s.label == Label::Machine)
        .collect();
    let mut out = Vec::new();
    for &target in &plan.targets {
        let mut candidates: Vec<(&TextSample, usize)> = machines
            .iter()
            .filter_map(|s| {
                let toks = tokenize_spans(&s.text);
                let len = toks.len();
                (len > target && len < target + 100).then_some((*s, target))
            })
            .collect();
        candidates.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &["bucket", &target.to_string()]));
        candidates.shuffle(&mut rng);
        for (sample, target_length) in candidates.into_iter().take(plan.per_bucket_cap) {
            let toks = tokenize_spans(&sample.text);
            let cut = toks[target_length - 1].span.end;
            let mut truncated = sample.clone();
            truncated.text = sample.text[..cut].to_string();
            out.push(BucketSample {
                target_length,
                sample: truncated,
            });
        }
    }
    Ok(out)
}

/// Mean overhead per (attack, token length) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub attack_id: String,
    pub token_length: usize,
    pub mean_wall_time_secs: f64,
    pub mean_backend_calls: f64,
    pub n: usize,
}

/// Group records by (attack, token length) and average. Empty groups cannot
/// occur; groups are defined by the records present.
pub fn overhead_report(records: &[OverheadRecord]) -> Vec<OverheadRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, usize), Vec<&OverheadRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.attack_id.clone(), r.token_length))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((attack_id, token_length), rs)| {
            let n = rs.len();
            OverheadRow {
                attack_id,
                token_length,
                mean_wall_time_secs: rs.iter().map(|r| r.wall_time_secs).sum::<f64>() / n as f64,
                mean_backend_calls: rs.iter().map(|r| r.backend_calls as f64).sum::<f64>()
                    / n as f64,
                n,
            }
        })
        .collect()
}
