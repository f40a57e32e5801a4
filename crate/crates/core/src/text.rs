//! Reference tokenizer, sentence segmentation, and readability primitives.
//!
//! Every component that needs word boundaries (n-gram backend, word-substitution
//! attacks, ROUGE-L, Flesch Reading Ease, blending) shares the splitter defined
//! here so their notions of "word" and "sentence" agree.
//!
//! Tokenization rule: a token is either a maximal run of alphanumeric characters
//! (lower-cased) or a single non-alphanumeric, non-whitespace character.

use std::ops::Range;

/// One token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lower-cased token text.
    pub text: String,
    /// Byte range of the original occurrence.
    pub span: Range<usize>,
    /// True for alphanumeric (word) tokens, false for punctuation.
    pub is_word: bool,
}

/// Tokenize into lower-cased tokens with byte spans.
pub fn tokenize_spans(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (idx, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if word_start.is_none() {
                word_start = Some(idx);
            }
        } else {
            if let Some(start) = word_start.take() {
                tokens.push(Token {
                    text: text[start..idx].to_lowercase(),
                    span: start..idx,
                    is_word: true,
                });
            }
            if !ch.is_whitespace() {
                tokens.push(Token {
                    text: ch.to_lowercase().to_string(),
                    span: idx..idx + ch.len_utf8(),
                    is_word: false,
                });
            }
        }
    }
    if let Some(start) = word_start {
        tokens.push(Token {
            text: text[start..].to_lowercase(),
            span: start..text.len(),
            is_word: true,
        });
    }
    tokens
}

/// Lower-cased token strings (words and punctuation).
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_spans(text).into_iter().map(|t| t.text).collect()
}

/// Word tokens only, with spans.
pub fn word_tokens(text: &str) -> Vec<Token> {
    tokenize_spans(text).into_iter().filter(|t| t.is_word).collect()
}

/// Join tokens back into text: words separated by single spaces, punctuation
/// attached to the preceding token.
pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let is_punct = tok.chars().count() == 1
            && !tok.chars().next().map(char::is_alphanumeric).unwrap_or(false);
        if !out.is_empty() && !is_punct {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Replace `span` in `text` with `replacement`, copying the leading-capital
/// casing of the replaced word. Surrounding bytes are untouched.
pub fn replace_span_preserving_case(text: &str, span: &Range<usize>, replacement: &str) -> String {
    let original = &text[span.clone()];
    let adjusted = match original.chars().next() {
        Some(first) if first.is_uppercase() => {
            let mut chars = replacement.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
                None => String::new(),
            }
        }
        _ => replacement.to_string(),
    };
    let mut out = String::with_capacity(text.len() + adjusted.len());
    out.push_str(&text[..span.start]);
    out.push_str(&adjusted);
    out.push_str(&text[span.end..]);
    out
}

/// Words whose trailing period does not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "etc", "vs", "fig", "al", "no",
];

fn is_abbreviation(word: &str) -> bool {
    ABBREVIATIONS.contains(&word)
}

/// Sentence segmentation that reassembles byte-exactly.
///
/// A sentence ends at a run of terminal punctuation (`.`, `!`, `?`) followed by
/// whitespace or end of input, unless the preceding word is a known
/// abbreviation or a single letter. When no boundary exists the whole text is
/// one segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSegments {
    /// Whitespace before the first sentence.
    pub leading: String,
    /// `(sentence, trailing_gap)` pairs in order.
    pub items: Vec<(String, String)>,
}

impl SentenceSegments {
    pub fn sentences(&self) -> Vec<&str> {
        self.items.iter().map(|(s, _)| s.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Reassemble with the original sentences.
    pub fn reassemble(&self) -> String {
        let originals: Vec<String> = self.items.iter().map(|(s, _)| s.clone()).collect();
        self.reassemble_with(&originals)
    }

    /// Reassemble with one replacement per sentence, preserving all original
    /// inter-sentence whitespace.
    pub fn reassemble_with(&self, replacements: &[String]) -> String {
        assert_eq!(
            replacements.len(),
            self.items.len(),
            "replacement count must match segment count"
        );
        let mut out = self.leading.clone();
        for (replacement, (_, gap)) in replacements.iter().zip(&self.items) {
            out.push_str(replacement);
            out.push_str(gap);
        }
        out
    }
}

/// Split `text` into sentences. See [`SentenceSegments`].
pub fn segment_sentences(text: &str) -> SentenceSegments {
    let bytes_len = text.len();
    let leading_end = text
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map(|(i, _)| i)
        .unwrap_or(bytes_len);
    let leading = text[..leading_end].to_string();

    let mut items: Vec<(String, String)> = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let mut sent_start = leading_end;
    let mut i = chars.iter().position(|(b, _)| *b >= leading_end).unwrap_or(n);

    while i < n {
        let (_, ch) = chars[i];
        if ch == '.' || ch == '!' || ch == '?' {
            // consume the full run of terminal punctuation
            let mut j = i;
            while j + 1 < n && matches!(chars[j + 1].1, '.' | '!' | '?') {
                j += 1;
            }
            let at_end = j + 1 >= n;
            let followed_by_ws = !at_end && chars[j + 1].1.is_whitespace();
            // the word immediately before the terminal run
            let run_is_single_period = chars[i].1 == '.' && j == i;
            let prev_word: String = {
                let mut w = String::new();
                let mut k = i;
                while k > 0 {
                    let c = chars[k - 1].1;
                    if c.is_alphanumeric() {
                        w.insert(0, c);
                        k -= 1;
                    } else {
                        break;
                    }
                }
                w.to_lowercase()
            };
            let abbreviated =
                run_is_single_period && !prev_word.is_empty() && is_abbreviation(&prev_word);
            if (at_end || followed_by_ws) && !abbreviated {
                let sent_end = if j + 1 < n { chars[j + 1].0 } else { bytes_len };
                let sentence = text[sent_start..sent_end].to_string();
                // gap: whitespace run after the terminal
                let mut g = j + 1;
                while g < n && chars[g].1.is_whitespace() {
                    g += 1;
                }
                let gap_end = if g < n { chars[g].0 } else { bytes_len };
                let gap = text[sent_end..gap_end].to_string();
                items.push((sentence, gap));
                sent_start = gap_end;
                i = g;
                continue;
            }
            i = j + 1;
            continue;
        }
        i += 1;
    }

    if sent_start < bytes_len {
        // trailing text without terminal punctuation: one final segment; keep
        // its trailing whitespace in the gap so reassembly stays byte-exact
        let tail = &text[sent_start..];
        let content_end = tail
            .char_indices()
            .rev()
            .find(|(_, c)| !c.is_whitespace())
            .map(|(idx, c)| idx + c.len_utf8())
            .unwrap_or(0);
        items.push((
            tail[..content_end].to_string(),
            tail[content_end..].to_string(),
        ));
    }

    SentenceSegments { leading, items }
}

/// Count syllables with the vowel-group heuristic: maximal runs of `aeiouy`
/// count one each; a trailing silent `e` is subtracted unless the word ends in
/// `le` after a consonant; minimum 1.
pub fn syllables(word: &str) -> usize {
    let w: Vec<char> = word.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
    if w.is_empty() {
        return 1;
    }
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0usize;
    let mut in_group = false;
    for &c in &w {
        if is_vowel(c) {
            if !in_group {
                groups += 1;
                in_group = true;
            }
        } else {
            in_group = false;
        }
    }
    let len = w.len();
    let silent_e = w[len - 1] == 'e' && {
        let le_exempt = len >= 3 && w[len - 2] == 'l' && !is_vowel(w[len - 3]);
        !le_exempt
    };
    if silent_e && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}
