//! Benchmark harness for text-humanization attacks against machine-generated-text
//! (MGT) detectors.
//!
//! The harness evaluates attacks along three dimensions:
//!
//! 1. **Evading effectiveness** — how far an attack pushes detector AUC below the
//!    clean baseline ([`evaluation`]).
//! 2. **Text quality** — fluency (perplexity), semantic consistency (embedding
//!    cosine, ROUGE-L), and complexity (Flesch Reading Ease) before/after the
//!    attack ([`quality`]).
//! 3. **Computational overhead** — wall time, backend calls, and memory per
//!    attack run over controlled token-length buckets ([`overhead`]).
//!
//! Detectors and attacks never host language models in-process. Everything goes
//! through [`gateway`]: a trained n-gram reference backend for desk-scale runs
//! and an HTTP client speaking the completions-with-logprobs protocol for
//! production endpoints.
//!
//! Two composable optimizations ship as plug-ins: quality-preserving candidate
//! filtering ([`qpa`]) and sentence-level attack blending ([`blending`]).

pub mod attacks;
pub mod blending;
pub mod config;
pub mod corpus;
pub mod detectors;
pub mod evaluation;
pub mod gateway;
pub mod hashing;
pub mod model_detectors;
pub mod overhead;
pub mod qpa;
pub mod quality;
pub mod report;
pub mod store;
pub mod synthetic;
pub mod text;

mod error;

pub use error::{Error, Result};
