//! Meaning-preserving rewriting of toxic-classified sentences.
//!
//! Non-toxic sentences are returned untouched. A toxic sentence is first
//! looked up in the parallel corpus by its normalized form; on a miss, its
//! original whitespace tokens are matched against the lexicon (two-token keys
//! before single tokens, left to right) and replaced, keeping any punctuation
//! attached to the replaced word.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{predict, TrainedModel};
use crate::corpus_io::{Lexicon, ParallelPair};
use crate::error::{DetoxError, Result};
use crate::language::Language;
use crate::normalizer::{is_punctuation, normalize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetoxMethod {
    Passthrough,
    CorpusLookup,
    TokenSubstitution,
}

impl DetoxMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DetoxMethod::Passthrough => "passthrough",
            DetoxMethod::CorpusLookup => "corpus_lookup",
            DetoxMethod::TokenSubstitution => "token_substitution",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetoxResult {
    pub input_text: String,
    pub label: u8,
    pub probability: f64,
    pub output_text: String,
    pub method: DetoxMethod,
    /// `(original, replacement)` for every substitution made.
    pub replaced_tokens: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RewriteOptions {
    /// Match corpus entries on the exact (trimmed) raw text instead of the
    /// normalized form.
    pub strict_lookup: bool,
}

/// Toxic sentences of the parallel corpus, keyed for lookup.
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    language: Option<Language>,
    pairs: Vec<ParallelPair>,
    by_normalized: HashMap<String, usize>,
    by_raw: HashMap<String, usize>,
}

impl CorpusIndex {
    /// `None` for an empty index.
    pub fn language(&self) -> Option<Language> {
        self.language
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lookup(&self, text: &str, strict: bool) -> Option<&ParallelPair> {
        let slot = if strict {
            self.by_raw.get(text.trim())
        } else {
            self.by_normalized.get(&normalize(text).text)
        };
        slot.map(|&i| &self.pairs[i])
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.by_normalized.keys().map(String::as_str)
    }
}

pub fn build_corpus_index(pairs: &[ParallelPair]) -> Result<CorpusIndex> {
    let mut index = CorpusIndex {
        language: pairs.first().map(|p| p.language),
        ..CorpusIndex::default()
    };
    for pair in pairs {
        let expected = index.language.expect("set from first pair");
        if pair.language != expected {
            return Err(DetoxError::LanguageMismatch {
                component: "corpus pair",
                expected,
                found: pair.language,
            });
        }
        let key = normalize(&pair.toxic_text).text;
        if let Some(&existing) = index.by_normalized.get(&key) {
            return Err(DetoxError::KeyCollision {
                key,
                first: index.pairs[existing].toxic_text.clone(),
                second: pair.toxic_text.clone(),
            });
        }
        let slot = index.pairs.len();
        index.by_normalized.insert(key, slot);
        index.by_raw.insert(pair.toxic_text.trim().to_string(), slot);
        index.pairs.push(pair.clone());
    }
    Ok(index)
}

/// A whitespace token split into leading punctuation, word and trailing punctuation.
struct Token<'a> {
    prefix: &'a str,
    core: &'a str,
    suffix: &'a str,
    key: String,
}

impl<'a> Token<'a> {
    fn new(raw: &'a str) -> Self {
        let start = raw
            .char_indices()
            .find(|&(_, c)| !is_punctuation(c))
            .map_or(raw.len(), |(i, _)| i);
        let end = raw[start..]
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_punctuation(c))
            .map_or(start, |(i, c)| start + i + c.len_utf8());
        Token {
            prefix: &raw[..start],
            core: &raw[start..end],
            suffix: &raw[end..],
            key: normalize(raw).text,
        }
    }
}

/// Lexicon substitution over the original-orthography tokens of `text`.
pub fn substitute_tokens(text: &str, lexicon: &Lexicon) -> (String, Vec<(String, String)>) {
    let tokens: Vec<Token<'_>> = text.split_whitespace().map(Token::new).collect();
    let mut output: Vec<String> = Vec::with_capacity(tokens.len());
    let mut replaced = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let current = &tokens[i];
        if let Some(next) = tokens.get(i + 1) {
            if !current.key.is_empty() && !next.key.is_empty() {
                let pair_key = format!("{} {}", current.key, next.key);
                if let Some(replacement) = lexicon.get(&pair_key) {
                    output.push(format!("{}{}{}", current.prefix, replacement, next.suffix));
                    replaced.push((
                        format!("{}{} {}{}", current.core, current.suffix, next.prefix, next.core),
                        replacement.to_string(),
                    ));
                    i += 2;
                    continue;
                }
            }
        }
        match lexicon.get(&current.key) {
            Some(replacement) if !current.key.is_empty() => {
                output.push(format!("{}{}{}", current.prefix, replacement, current.suffix));
                replaced.push((current.core.to_string(), replacement.to_string()));
            }
            _ => output.push(format!("{}{}{}", current.prefix, current.core, current.suffix)),
        }
        i += 1;
    }
    (output.join(" "), replaced)
}

pub fn detoxify(
    text: &str,
    model: &TrainedModel,
    corpus: &CorpusIndex,
    lexicon: &Lexicon,
    options: RewriteOptions,
) -> Result<DetoxResult> {
    if let Some(found) = corpus.language().filter(|&l| l != model.language) {
        return Err(DetoxError::LanguageMismatch {
            component: "corpus index",
            expected: model.language,
            found,
        });
    }
    if lexicon.language() != model.language {
        return Err(DetoxError::LanguageMismatch {
            component: "lexicon",
            expected: model.language,
            found: lexicon.language(),
        });
    }
    let prediction = predict(model, text);
    let mut result = DetoxResult {
        input_text: text.to_string(),
        label: prediction.label,
        probability: prediction.probability,
        output_text: text.to_string(),
        method: DetoxMethod::Passthrough,
        replaced_tokens: Vec::new(),
    };
    if prediction.label == 0 {
        return Ok(result);
    }
    if let Some(pair) = corpus.lookup(text, options.strict_lookup) {
        result.output_text = pair.detox_text.clone();
        result.method = DetoxMethod::CorpusLookup;
        return Ok(result);
    }
    let (output, replaced) = substitute_tokens(text, lexicon);
    result.output_text = output;
    result.replaced_tokens = replaced;
    result.method = DetoxMethod::TokenSubstitution;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn lexicon(entries: &[(&str, &str)]) -> Lexicon {
        let map: BTreeMap<String, String> = entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Lexicon::new(Language::Yoruba, map).unwrap()
    }

    #[test]
    fn substitution_matches_case_insensitively() {
        let (out, replaced) = substitute_tokens("x Foo y", &lexicon(&[("foo", "bar")]));
        assert_eq!(out, "x bar y");
        assert_eq!(replaced, vec![("Foo".to_string(), "bar".to_string())]);
    }

    #[test]
    fn substitution_keeps_attached_punctuation() {
        let (out, _) = substitute_tokens("(Foo), y!", &lexicon(&[("foo", "bar")]));
        assert_eq!(out, "(bar), y!");
    }

    #[test]
    fn substitution_ignores_diacritics_on_input() {
        let lex = lexicon(&[("asiwere", "ẹni tí kò gbọ́n")]);
        let (out, replaced) = substitute_tokens("Ìwọ asiwèrè.", &lex);
        assert_eq!(out, "Ìwọ ẹni tí kò gbọ́n.");
        assert_eq!(replaced[0].0, "asiwèrè");
    }

    #[test]
    fn two_token_keys_win() {
        let lex = lexicon(&[("omo ale", "ènìyàn"), ("ale", "ọ̀rẹ́")]);
        let (out, replaced) = substitute_tokens("ìwọ ọmọ àlè yìí", &lex);
        assert_eq!(out, "ìwọ ènìyàn yìí");
        assert_eq!(replaced, vec![("ọmọ àlè".to_string(), "ènìyàn".to_string())]);
        let (out, _) = substitute_tokens("àlè ni", &lex);
        assert_eq!(out, "ọ̀rẹ́ ni");
    }

    #[test]
    fn whitespace_is_collapsed_on_reconstruction() {
        let (out, replaced) = substitute_tokens("  a   b ", &lexicon(&[]));
        assert_eq!(out, "a b");
        assert!(replaced.is_empty());
    }

    #[test]
    fn punctuation_only_tokens_are_kept() {
        let (out, _) = substitute_tokens("foo — foo", &lexicon(&[("foo", "bar")]));
        assert_eq!(out, "bar — bar");
    }

    #[test]
    fn index_keys_and_collisions() {
        let p = |t: &str, d: &str| ParallelPair::new(t, d, Language::Yoruba).unwrap();
        let index = build_corpus_index(&[p("Kò sí ìrètí fún ọ.", "x"), p("Máa fọ́ ojú ẹ", "y")]).unwrap();
        assert_eq!(index.len(), 2);
        assert_eq!(index.lookup("ko si ireti fun o", false).unwrap().detox_text, "x");
        assert!(index.lookup("ko si ireti fun o", true).is_none());
        assert!(index.lookup("Kò sí ìrètí fún ọ.", true).is_some());

        let err = build_corpus_index(&[p("Ìrètí", "x"), p("IRETI!", "y")]).unwrap_err();
        assert!(matches!(err, DetoxError::KeyCollision { .. }));

        let empty = build_corpus_index(&[]).unwrap();
        assert!(empty.lookup("anything", false).is_none());
        assert_eq!(empty.language(), None);
    }

    #[test]
    fn mixed_language_index_is_rejected() {
        let a = ParallelPair::new("a", "b", Language::Yoruba).unwrap();
        let b = ParallelPair::new("c", "d", Language::Xhosa).unwrap();
        assert!(matches!(
            build_corpus_index(&[a, b]),
            Err(DetoxError::LanguageMismatch { .. })
        ));
    }
}
