//! Sentence normalization and whitespace tokenization.
//!
//! Normalization applies, in order: canonical decomposition (NFD), removal of
//! every nonspacing combining mark (general category `Mn`), replacement of
//! punctuation (`P*`) by a space, lowercasing, and whitespace collapse. The
//! result is what the vectorizer, the corpus index and the lexicon matcher
//! compare against; the original sentence is never modified in place.

use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// A sentence in canonical matching form.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NormalizedSentence {
    /// Lowercase, mark-free, punctuation-free text with single-space separators.
    pub text: String,
    pub tokens: Vec<String>,
}

impl NormalizedSentence {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn is_combining_mark(c: char) -> bool {
    get_general_category(c) == GeneralCategory::NonspacingMark
}

pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

// NFD, drop Mn, punctuation -> space.
fn fold_pass(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    for c in input.nfd() {
        if is_combining_mark(c) {
            continue;
        }
        if is_punctuation(c) {
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}

pub fn normalize(raw: &str) -> NormalizedSentence {
    let folded = fold_pass(raw);
    // Lowercasing can re-introduce decomposable characters or marks
    // (e.g. U+0130), so fold once more afterwards.
    let lowered = fold_pass(&folded.to_lowercase());
    let tokens: Vec<String> = lowered.split_whitespace().map(str::to_owned).collect();
    NormalizedSentence {
        text: tokens.join(" "),
        tokens,
    }
}

/// Convenience wrapper returning only the normalized text.
pub fn normalize_text(raw: &str) -> String {
    normalize(raw).text
}

pub fn tokenize(ns: &NormalizedSentence) -> Vec<String> {
    ns.text.split_whitespace().map(str::to_owned).collect()
}
