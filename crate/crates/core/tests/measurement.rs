//! Exclusive overhead measurement, in its own process so no other test's
//! attack runs can interfere.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use evadebench_core::attacks::{Attack, AttackBody};
use evadebench_core::corpus::{Label, Split, TextSample};
use evadebench_core::gateway::rewrite::IdentityRewriter;
use evadebench_core::gateway::{CallCounter, RewriteBackend, RewriteRequest};
use evadebench_core::overhead::{measure, MemorySource};
use evadebench_core::{Error, Result};

static MEASURE_TEST_LOCK: Mutex<()> = Mutex::new(());

struct NoOpAttack {
    counter: CallCounter,
}

impl NoOpAttack {
    fn new() -> Self {
        NoOpAttack {
            counter: CallCounter::new(),
        }
    }
}

impl Attack for NoOpAttack {
    fn id(&self) -> &str {
        "noop"
    }
    fn params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::new()
    }
    fn call_counter(&self) -> &CallCounter {
        &self.counter
    }
    fn run_body(&self, sample: &TextSample, _: bool) -> Result<AttackBody> {
        Ok(AttackBody {
            attacked_text: sample.text.clone(),
            trace: None,
            extra_params: Vec::new(),
        })
    }
}

struct DelayAttack {
    counter: CallCounter,
    rewriter: IdentityRewriter,
    calls: usize,
    delay_ms: u64,
}

impl Attack for DelayAttack {
    fn id(&self) -> &str {
        "delayed"
    }
    fn params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::new()
    }
    fn call_counter(&self) -> &CallCounter {
        &self.counter
    }
    fn run_body(&self, sample: &TextSample, _: bool) -> Result<AttackBody> {
        let mut text = sample.text.clone();
        for _ in 0..self.calls {
            std::thread::sleep(Duration::from_millis(self.delay_ms));
            self.counter.bump();
            text = self.rewriter.rewrite(&RewriteRequest::new(text))?;
        }
        Ok(AttackBody {
            attacked_text: text,
            trace: None,
            extra_params: Vec::new(),
        })
    }
}

fn sample(tokens: usize) -> TextSample {
    TextSample {
        id: "s".into(),
        text: (0..tokens).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "),
        label: Label::Machine,
        generator: Some("g".into()),
        dataset: "d".into(),
        domain: String::new(),
        split: Split::Test,
    }
}

#[test]
fn noop_attack_is_fast_and_counts_nothing() {
    let _lock = MEASURE_TEST_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let attack = NoOpAttack::new();
    let (outcome, record) = measure(&attack, &sample(12), false).unwrap();
    assert_eq!(outcome.attacked_text, sample(12).text);
    assert!(record.wall_time_secs < 0.010, "took {}s", record.wall_time_secs);
    assert_eq!(record.backend_calls, 0);
    assert_eq!(record.token_length, 12);
}

#[test]
fn injected_latency_bounds_wall_time_from_below() {
    let _lock = MEASURE_TEST_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let attack = DelayAttack {
        counter: CallCounter::new(),
        rewriter: IdentityRewriter::new("id"),
        calls: 3,
        delay_ms: 20,
    };
    let (_, record) = measure(&attack, &sample(8), false).unwrap();
    assert_eq!(record.backend_calls, 3);
    assert!(
        record.wall_time_secs >= record.backend_calls as f64 * 0.020,
        "wall time {}s below {} x 20ms",
        record.wall_time_secs,
        record.backend_calls
    );
}

#[test]
fn measurement_refuses_concurrent_attack_runs() {
    let _lock = MEASURE_TEST_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    // a slow attack runs in the background while we try to measure
    let background = std::thread::spawn(|| {
        let slow = DelayAttack {
            counter: CallCounter::new(),
            rewriter: IdentityRewriter::new("id"),
            calls: 1,
            delay_ms: 400,
        };
        slow.attack(&sample(4), false).unwrap()
    });
    std::thread::sleep(Duration::from_millis(100));
    let attack = NoOpAttack::new();
    let err = measure(&attack, &sample(4), false).unwrap_err();
    assert!(
        matches!(err, Error::MeasurementNotExclusive),
        "expected the exclusivity refusal, got {err}"
    );
    background.join().unwrap();
}

#[test]
fn memory_source_is_tagged_never_fabricated() {
    let _lock = MEASURE_TEST_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let attack = NoOpAttack::new();
    let (_, record) = measure(&attack, &sample(4), false).unwrap();
    match record.memory_source {
        MemorySource::ProcessPeakRss | MemorySource::EndpointReported => {
            assert!(record.peak_memory.is_some())
        }
        MemorySource::Unavailable => assert!(record.peak_memory.is_none()),
    }
}
