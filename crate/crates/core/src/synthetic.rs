//! Synthetic desk-scale corpus: a structured token process, a reference
//! backend trained on it, machine samples drawn from that backend, and human
//! counterparts made by token shuffling.
//!
//! The process walks a 16-position token cycle. A pair of adjacent tokens is
//! "coherent" when the second continues the first's cycle position; from a
//! coherent pair the walk continues the cycle with high probability, otherwise
//! it draws uniformly. Two cycle positions carry twin tokens that the process
//! uses interchangeably, giving substitution attacks near-synonyms whose swap
//! barely moves perplexity.
//!
//! Detectors separate the two classes because machine text (sampled from the
//! trained backend) visits peaked, low-entropy contexts far more often than
//! its shuffled counterpart.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::corpus::{Corpus, Label, Split, TextSample};
use crate::gateway::ngram::NgramModel;
use crate::gateway::sample_tokens;
use crate::hashing::seed_for;
use crate::text::tokenize;
use crate::Result;

const CYCLE: usize = 16;
const TWIN_SLOTS: [usize; 2] = [5, 11];
const CONTINUE_PROB: f64 = 0.95;

/// Tokens available at a cycle position (twin slots carry two).
fn slot_tokens(pos: usize) -> Vec<String> {
    if TWIN_SLOTS.contains(&pos) {
        vec![format!("w{pos:02}a"), format!("w{pos:02}b")]
    } else {
        vec![format!("w{pos:02}")]
    }
}

/// The full 18-token vocabulary.
pub fn toy_vocab() -> Vec<String> {
    (0..CYCLE).flat_map(slot_tokens).collect()
}

/// Cycle position of a vocabulary token.
fn position_of(token: &str) -> Option<usize> {
    let digits: String = token.chars().skip(1).take(2).collect();
    let pos: usize = digits.parse().ok()?;
    (pos < CYCLE).then_some(pos)
}

fn pick_slot_token(pos: usize, rng: &mut impl Rng) -> String {
    let tokens = slot_tokens(pos);
    tokens[rng.gen_range(0..tokens.len())].clone()
}

fn uniform_token(vocab: &[String], rng: &mut impl Rng) -> String {
    vocab[rng.gen_range(0..vocab.len())].clone()
}

/// Sample one document from the ground-truth process.
fn process_document(len: usize, rng: &mut impl Rng) -> Vec<String> {
    let vocab = toy_vocab();
    let mut tokens: Vec<String> = Vec::with_capacity(len);
    tokens.push(uniform_token(&vocab, rng));
    while tokens.len() < len {
        let coherent = if tokens.len() == 1 {
            true
        } else {
            let a = position_of(&tokens[tokens.len() - 2]);
            let b = position_of(&tokens[tokens.len() - 1]);
            matches!((a, b), (Some(pa), Some(pb)) if pb == (pa + 1) % CYCLE)
        };
        let last_pos = position_of(tokens.last().unwrap()).unwrap();
        let next = if coherent && rng.gen::<f64>() < CONTINUE_PROB {
            pick_slot_token((last_pos + 1) % CYCLE, rng)
        } else {
            uniform_token(&vocab, rng)
        };
        tokens.push(next);
    }
    tokens
}

/// Train the order-3 reference backend on a freshly sampled training corpus.
pub fn reference_model(seed: u64) -> Result<NgramModel> {
    reference_model_sized(seed, 160, 140)
}

/// Like [`reference_model`] with explicit corpus dimensions.
pub fn reference_model_sized(seed: u64, docs: usize, doc_len: usize) -> Result<NgramModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &["synthetic-train"]));
    let texts: Vec<String> = (0..docs)
        .map(|_| process_document(doc_len, &mut rng).join(" "))
        .collect();
    NgramModel::train("synthetic-ref", 3, &texts)
}

/// Sample one machine text of `len` tokens from the trained backend.
pub fn machine_text(model: &NgramModel, len: usize, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = sample_tokens(model, &[], len, &mut rng)?;
    Ok(tokens.join(" "))
}

/// Token-shuffle a text (the "human" construction for direction checks).
pub fn shuffled_text(text: &str, seed: u64) -> String {
    let mut tokens = tokenize(text);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tokens.shuffle(&mut rng);
    tokens.join(" ")
}

/// Build a labeled corpus: `n_per_class` machine samples drawn from the model
/// and the same number of shuffled human counterparts.
pub fn build_corpus(
    name: &str,
    model: &NgramModel,
    n_per_class: usize,
    sample_len: usize,
    seed: u64,
) -> Result<Corpus> {
    let mut samples = Vec::with_capacity(n_per_class * 2);
    for i in 0..n_per_class {
        let m_seed = seed_for(seed, &["machine", &i.to_string()]);
        let text = machine_text(model, sample_len, m_seed)?;
        samples.push(TextSample {
            id: format!("m{i:04}"),
            text: text.clone(),
            label: Label::Machine,
            generator: Some("ngram-ref".into()),
            dataset: name.to_string(),
            domain: "synthetic".into(),
            split: Split::Unassigned,
        });
        samples.push(TextSample {
            id: format!("h{i:04}"),
            text: shuffled_text(&text, seed_for(seed, &["human", &i.to_string()])),
            label: Label::Human,
            generator: None,
            dataset: name.to_string(),
            domain: "synthetic".into(),
            split: Split::Unassigned,
        });
    }
    Corpus::new(name, samples)
}

/// Lexicon rules mapping every cycle token eight positions ahead; substituting
/// with them breaks the walk's coherence, which is what a paraphrase attack
/// needs to look less machine-like.
pub fn paraphrase_rules() -> BTreeMap<String, String> {
    let mut rules = BTreeMap::new();
    for pos in 0..CYCLE {
        let target = slot_tokens((pos + 8) % CYCLE).remove(0);
        for token in slot_tokens(pos) {
            rules.insert(token, target.clone());
        }
    }
    rules
}

/// Twin-token synonym table (each twin maps to its sibling).
pub fn twin_synonyms() -> BTreeMap<String, Vec<String>> {
    let mut table = BTreeMap::new();
    for pos in TWIN_SLOTS {
        let twins = slot_tokens(pos);
        table.insert(twins[0].clone(), vec![twins[1].clone()]);
        table.insert(twins[1].clone(), vec![twins[0].clone()]);
    }
    table
}

/// Write a corpus to a JSONL file.
pub fn write_jsonl(corpus: &Corpus, path: impl AsRef<std::path::Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    corpus.write_jsonl(std::io::BufWriter::new(file))
}
