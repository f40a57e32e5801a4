//! `demo` subcommand: a self-contained synthetic dataset plus a matching
//! config, ready for the full pipeline.

use std::path::Path;

use evadebench_core::synthetic;
use evadebench_core::Result;

pub fn write_demo(out_dir: &str, seed: u64) -> Result<String> {
    let dir = Path::new(out_dir);
    std::fs::create_dir_all(dir)?;
    let model = synthetic::reference_model(seed)?;
    let corpus = synthetic::build_corpus("synthetic", &model, 40, 30, seed)?;
    let dataset_path = dir.join("dataset.jsonl");
    synthetic::write_jsonl(&corpus, &dataset_path)?;

    let rules = synthetic::paraphrase_rules();
    let synonyms = synthetic::twin_synonyms();
    let config = serde_json::json!({
        "seed": seed,
        "out_dir": dir.join("runs").to_string_lossy(),
        "datasets": [{"name": "synthetic", "path": dataset_path.to_string_lossy()}],
        "split": {"ratio": 0.8, "seed": seed},
        "backends": {
            "scoring": {
                "kind": "ngram",
                "id": "scoring",
                "model_path": dir.join("scoring.ngram.json").to_string_lossy(),
                "order": 3,
                "train_from": "synthetic"
            },
            "named": {
                "alt": {
                    "kind": "ngram",
                    "id": "alt",
                    "model_path": dir.join("alt.ngram.json").to_string_lossy(),
                    "order": 2,
                    "train_from": "synthetic"
                }
            },
            "rewriting": {"kind": "lexicon", "rules": rules, "substitution_prob": 0.5},
            "embedding": {"kind": "hashing", "dim": 128, "ngram_order": 2}
        },
        "detectors": [
            "log_likelihood", "rank", "log_rank", "entropy", "gltr", "lrr",
            "fast_detect_gpt", "binoculars", "lm_d"
        ],
        "attacks": [
            {"id": "dipper"},
            {"id": "recursion", "params": {"depth": 5}},
            {"id": "prompt"},
            {"id": "raft", "params": {"proportion": 0.15, "top_k": 5}},
            {"id": "hmgc", "params": {"synonyms": synonyms, "max_iters": 6}},
            {"id": "toblend", "params": {"backends": ["scoring", "alt"], "prefix_tokens": 2}}
        ],
        "overhead": {"targets": [10, 20, 30], "per_bucket_cap": 5},
        "scenarios": [{
            "detector": "log_likelihood",
            "train_attacks": ["clean", "dipper"],
            "test_attacks": ["clean", "dipper", "raft"],
            "dataset": "synthetic"
        }]
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config)?)?;
    Ok(format!(
        "wrote {} samples to {} and a config to {}",
        corpus.len(),
        dataset_path.display(),
        config_path.display()
    ))
}
