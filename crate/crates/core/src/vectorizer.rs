//! Unigram + bigram TF-IDF features.
//!
//! Weights are `tf(t, x) * ln(N / df(t))` with raw counts for `tf`, no idf
//! smoothing and no vector normalization.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus_io::LabeledExample;
use crate::error::{DetoxError, Result};
use crate::normalizer::{normalize, NormalizedSentence};

/// Thresholds for the automatically derived stopword list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopwordConfig {
    /// Minimum fraction of sentences a token must appear in.
    pub min_df_fraction: f64,
    /// Inclusive band on the fraction of containing sentences that are toxic.
    pub balance_low: f64,
    pub balance_high: f64,
}

impl Default for StopwordConfig {
    fn default() -> Self {
        StopwordConfig {
            min_df_fraction: 0.20,
            balance_low: 0.35,
            balance_high: 0.65,
        }
    }
}

impl StopwordConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.min_df_fraction)
            || !in_unit(self.balance_low)
            || !in_unit(self.balance_high)
            || self.balance_low > self.balance_high
        {
            return Err(DetoxError::InvalidConfig(format!(
                "stopword thresholds out of range: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Unigrams followed by adjacent-token bigrams, in sentence order.
pub fn ngrams(tokens: &[String]) -> impl Iterator<Item = String> + '_ {
    tokens
        .iter()
        .cloned()
        .chain(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])))
}

/// Tokens that are both frequent and evenly spread across the two classes.
pub fn derive_stopwords(
    examples: &[LabeledExample],
    cfg: &StopwordConfig,
) -> Result<BTreeSet<String>> {
    cfg.validate()?;
    let toxic = examples.iter().filter(|e| e.label == 1).count();
    if toxic == 0 || toxic == examples.len() {
        return Err(DetoxError::SingleClass);
    }
    let total = examples.len() as f64;
    // token -> (containing sentences, containing toxic sentences)
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    for example in examples {
        let ns = normalize(&example.text);
        let distinct: HashSet<&String> = ns.tokens.iter().collect();
        for token in distinct {
            let entry = counts.entry(token.clone()).or_default();
            entry.0 += 1;
            if example.label == 1 {
                entry.1 += 1;
            }
        }
    }
    Ok(counts
        .into_iter()
        .filter(|(_, (df, toxic_df))| {
            let balance = *toxic_df as f64 / *df as f64;
            *df as f64 / total >= cfg.min_df_fraction
                && balance >= cfg.balance_low
                && balance <= cfg.balance_high
        })
        .map(|(token, _)| token)
        .collect())
}

/// The n-gram inventory a model was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    corpus_size: usize,
    stopwords: BTreeSet<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Reassembles a vocabulary from stored parts, checking its invariants.
    pub fn from_parts(
        terms: Vec<String>,
        doc_freq: Vec<u32>,
        corpus_size: usize,
        stopwords: BTreeSet<String>,
    ) -> Result<Self> {
        if terms.len() != doc_freq.len() {
            return Err(DetoxError::Integrity(format!(
                "{} terms but {} document frequencies",
                terms.len(),
                doc_freq.len()
            )));
        }
        if terms.is_empty() {
            return Err(DetoxError::EmptyVocabulary);
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, (term, &df)) in terms.iter().zip(&doc_freq).enumerate() {
            if df == 0 || df as usize > corpus_size {
                return Err(DetoxError::Integrity(format!(
                    "document frequency {df} of {term:?} outside 1..={corpus_size}"
                )));
            }
            if term.split(' ').any(|part| part.is_empty() || stopwords.contains(part)) {
                return Err(DetoxError::Integrity(format!(
                    "term {term:?} is empty or contains a stopword"
                )));
            }
            if index.insert(term.clone(), i).is_some() {
                return Err(DetoxError::Integrity(format!("duplicate term {term:?}")));
            }
        }
        Ok(Vocabulary {
            terms,
            doc_freq,
            corpus_size,
            stopwords,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self) -> &[u32] {
        &self.doc_freq
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    /// `ln(N / df)` for the term at `index`.
    pub fn idf(&self, index: usize) -> f64 {
        (self.corpus_size as f64 / self.doc_freq[index] as f64).ln()
    }
}

pub fn build_vocabulary(
    examples: &[LabeledExample],
    stopwords: &BTreeSet<String>,
) -> Result<Vocabulary> {
    let sentences: Vec<NormalizedSentence> = examples.iter().map(|e| normalize(&e.text)).collect();
    build_vocabulary_from_normalized(&sentences, stopwords)
}

pub fn build_vocabulary_from_normalized(
    sentences: &[NormalizedSentence],
    stopwords: &BTreeSet<String>,
) -> Result<Vocabulary> {
    if sentences.is_empty() {
        return Err(DetoxError::EmptyVocabulary);
    }
    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    for ns in sentences {
        let distinct: HashSet<String> = ngrams(&ns.tokens)
            .filter(|term| !term.split(' ').any(|part| stopwords.contains(part)))
            .collect();
        for term in distinct {
            *df.entry(term).or_default() += 1;
        }
    }
    let (terms, doc_freq): (Vec<String>, Vec<u32>) = df.into_iter().unzip();
    Vocabulary::from_parts(terms, doc_freq, sentences.len(), stopwords.clone())
}

/// Sparse feature vector; entries are sorted by index and never zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    pub entries: Vec<(usize, f64)>,
    pub dimension: usize,
}

impl FeatureVector {
    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| weights[i] * v).sum()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn compute_tfidf(ns: &NormalizedSentence, vocab: &Vocabulary) -> FeatureVector {
    let mut tf: BTreeMap<usize, u32> = BTreeMap::new();
    for term in ngrams(&ns.tokens) {
        if let Some(i) = vocab.index_of(&term) {
            *tf.entry(i).or_default() += 1;
        }
    }
    let entries = tf
        .into_iter()
        .map(|(i, count)| (i, count as f64 * vocab.idf(i)))
        .filter(|&(_, v)| v != 0.0)
        .collect();
    FeatureVector {
        entries,
        dimension: vocab.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::language::Language;

    fn examples(texts: &[(&str, u8)]) -> Vec<LabeledExample> {
        texts
            .iter()
            .map(|&(t, l)| LabeledExample {
                text: t.to_string(),
                label: l,
                language: Language::Xhosa,
            })
            .collect()
    }

    #[test]
    fn vocabulary_of_two_sentences() {
        let ex = examples(&[("a b", 1), ("a c", 0)]);
        let vocab = build_vocabulary(&ex, &BTreeSet::new()).unwrap();
        assert_eq!(vocab.terms(), ["a", "a b", "a c", "b", "c"]);
        assert_eq!(vocab.doc_freq(), [2, 1, 1, 1, 1]);
        assert_eq!(vocab.corpus_size(), 2);
    }

    #[test]
    fn single_sentence_vocabulary() {
        let vocab = build_vocabulary(&examples(&[("x", 1)]), &BTreeSet::new()).unwrap();
        assert_eq!(vocab.terms(), ["x"]);
        assert_eq!(vocab.doc_freq(), [1]);
        assert_eq!(vocab.corpus_size(), 1);
    }

    #[test]
    fn stopwords_remove_terms_and_bigrams() {
        let stop: BTreeSet<String> = ["a".to_string()].into();
        let vocab = build_vocabulary(&examples(&[("a b", 1)]), &stop).unwrap();
        assert_eq!(vocab.terms(), ["b"]);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let stop: BTreeSet<String> = ["a".to_string()].into();
        assert!(matches!(
            build_vocabulary(&examples(&[("a", 1), ("", 0)]), &stop),
            Err(DetoxError::EmptyVocabulary)
        ));
    }

    #[test]
    fn tfidf_hand_computed() {
        let vocab = build_vocabulary(&examples(&[("a b", 1), ("a c", 0)]), &BTreeSet::new()).unwrap();
        let v = compute_tfidf(&normalize("a b"), &vocab);
        let a = vocab.index_of("a").unwrap();
        let b = vocab.index_of("b").unwrap();
        assert_eq!(v.get(a), 0.0);
        assert!((v.get(b) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((v.get(vocab.index_of("a b").unwrap()) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(v.entries.len(), 2);
    }

    #[test]
    fn repeated_terms_scale_with_count() {
        let vocab = build_vocabulary(&examples(&[("a b", 1), ("a c", 0)]), &BTreeSet::new()).unwrap();
        let v = compute_tfidf(&normalize("b b zzz"), &vocab);
        assert!((v.get(vocab.index_of("b").unwrap()) - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(v.entries.len(), 1);
    }

    #[test]
    fn empty_sentence_is_zero_vector() {
        let vocab = build_vocabulary(&examples(&[("a b", 1), ("a c", 0)]), &BTreeSet::new()).unwrap();
        assert!(compute_tfidf(&normalize(""), &vocab).is_zero());
    }

    #[test]
    fn stopword_thresholds() {
        // "na" in half the sentences, balanced; "rare" in 1 of 10; "bad" in 40%, toxic only.
        let ex = examples(&[
            ("na bad x1", 1),
            ("na bad x2", 1),
            ("na bad x3", 1),
            ("bad rare", 1),
            ("t5 na", 1),
            ("na n1", 0),
            ("na n2", 0),
            ("n3 na", 0),
            ("n4", 0),
            ("n5", 0),
        ]);
        let stop = derive_stopwords(&ex, &StopwordConfig::default()).unwrap();
        assert!(stop.contains("na"), "{stop:?}");
        assert!(!stop.contains("rare"));
        assert!(!stop.contains("bad"));
    }

    #[test]
    fn stopwords_need_both_classes() {
        let ex = examples(&[("a", 1), ("b", 1)]);
        assert!(matches!(
            derive_stopwords(&ex, &StopwordConfig::default()),
            Err(DetoxError::SingleClass)
        ));
    }

    #[test]
    fn from_parts_rejects_bad_df() {
        let err = Vocabulary::from_parts(vec!["a".into()], vec![3], 2, BTreeSet::new());
        assert!(matches!(err, Err(DetoxError::Integrity(_))));
    }
}
