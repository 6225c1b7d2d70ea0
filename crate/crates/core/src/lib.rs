//! Toxicity detection and meaning-preserving rewriting for isiXhosa and Yorùbá.
//!
//! The pipeline is deliberately small and transparent:
//!
//! 1. [`normalizer`] folds a sentence into a canonical, diacritic-free,
//!    punctuation-free lowercase form.
//! 2. [`vectorizer`] turns normalized sentences into unigram + bigram TF-IDF
//!    vectors over a vocabulary learned from the training split.
//! 3. [`classifier`] fits a class-balanced, L2-regularized logistic regression
//!    and applies a per-language probability threshold.
//! 4. [`rewriter`] rewrites toxic sentences, first by exact lookup in the
//!    parallel corpus and otherwise by lexicon-guided token substitution.
//! 5. [`evaluator`] runs stratified K-fold evaluation and produces reports.
//!
//! [`corpus_io`] handles the on-disk formats for corpora, lexicons and models.

pub mod classifier;
pub mod corpus_io;
pub mod error;
pub mod evaluator;
pub mod language;
pub mod normalizer;
pub mod rewriter;
pub mod vectorizer;

pub use classifier::{feature_weights, predict, train, Prediction, TrainConfig, TrainedModel};
pub use corpus_io::{
    derive_labeled_set, load_lexicon, load_model, load_parallel_corpus, save_model, LabeledExample,
    Lexicon, ParallelPair,
};
pub use error::{DetoxError, Result};
pub use evaluator::{evaluate_kfold, EvalReport};
pub use language::Language;
pub use normalizer::{normalize, tokenize, NormalizedSentence};
pub use rewriter::{build_corpus_index, detoxify, CorpusIndex, DetoxMethod, DetoxResult};
pub use vectorizer::{build_vocabulary, compute_tfidf, derive_stopwords, FeatureVector, Vocabulary};
