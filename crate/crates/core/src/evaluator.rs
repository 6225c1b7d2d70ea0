//! Stratified K-fold evaluation: splits, confusion matrices, ROC-AUC and reports.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{feature_weights, predict, train, TrainConfig};
use crate::corpus_io::{derive_labeled_set, LabeledExample, ParallelPair};
use crate::error::{DetoxError, Result};
use crate::language::Language;
use crate::vectorizer::{build_vocabulary, derive_stopwords};

pub const DEFAULT_FOLDS: usize = 5;
pub const TOP_FEATURES: usize = 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: u8, predicted: u8) {
        match (truth, predicted) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (0, _) => self.tn += 1,
            _ => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Assigns every index to one of `k` folds so that each fold keeps the class
/// proportions of `labels`. Each class is shuffled with a seeded generator and
/// dealt round-robin; the dealing position carries over from one class to the
/// next so fold sizes differ by at most one.
pub fn stratified_kfold_indices(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(DetoxError::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut position = 0;
    for label in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if members.len() < k {
            return Err(DetoxError::ClassTooSmall {
                k,
                label,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        for index in members {
            folds[position % k].push(index);
            position += 1;
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(DetoxError::InvalidConfig(format!("label {bad} is not binary")));
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

pub fn stratified_kfold_split(
    examples: &[LabeledExample],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<LabeledExample>>> {
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    Ok(stratified_kfold_indices(&labels, k, seed)?
        .into_iter()
        .map(|fold| fold.into_iter().map(|i| examples[i].clone()).collect())
        .collect())
}

/// ROC curve and its area. Tied scores form a single step, which makes the
/// trapezoidal area equal to the Mann-Whitney statistic with ties counted as 1/2.
pub fn compute_roc_auc(scores: &[(f64, u8)]) -> Result<(f64, Vec<(f64, f64)>)> {
    if scores.iter().any(|(p, _)| p.is_nan()) {
        return Err(DetoxError::InvalidConfig("NaN score".into()));
    }
    let positives = scores.iter().filter(|(_, y)| *y == 1).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(DetoxError::SingleClass);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    // twice the area in units of one positive x one negative
    let mut doubled_area: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        let (prev_tp, prev_fp) = (tp, fp);
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        doubled_area += ((fp - prev_fp) * (tp + prev_tp)) as u128;
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    let auc = doubled_area as f64 / (2.0 * positives as f64 * negatives as f64);
    Ok((auc, points))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold_index: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub roc_points: Vec<(f64, f64)>,
    pub l2_strength: f64,
    pub converged: bool,
    pub vocabulary_size: usize,
    pub stopwords: Vec<String>,
    pub top_toxic: Vec<WeightedTerm>,
    pub top_non_toxic: Vec<WeightedTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
}

impl AggregateMetrics {
    /// Unweighted mean over folds.
    pub fn mean_of(folds: &[FoldMetrics]) -> Self {
        let n = folds.len() as f64;
        let mean = |f: fn(&FoldMetrics) -> f64| folds.iter().map(f).sum::<f64>() / n;
        AggregateMetrics {
            accuracy: mean(|f| f.accuracy),
            precision: mean(|f| f.precision),
            recall: mean(|f| f.recall),
            f1: mean(|f| f.f1),
            roc_auc: mean(|f| f.roc_auc),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Kfold,
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub language: Language,
    pub mode: EvalMode,
    pub k: usize,
    pub seed: u64,
    pub corpus_pairs: usize,
    pub config_fingerprint: String,
    pub config: TrainConfig,
    pub folds: Vec<FoldMetrics>,
    pub aggregate: AggregateMetrics,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Plain-text table with one row per fold plus the aggregate row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<9} {:>5} {:>9} {:>10} {:>7} {:>9} {:>8}",
            "Language", "Fold", "Accuracy", "Precision", "Recall", "F1-score", "ROC-AUC"
        );
        for fold in &self.folds {
            let _ = writeln!(
                out,
                "{:<9} {:>5} {:>9.2} {:>10.2} {:>7.2} {:>9.2} {:>8.2}",
                self.language.code(),
                fold.fold_index + 1,
                fold.accuracy,
                fold.precision,
                fold.recall,
                fold.f1,
                fold.roc_auc
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "{:<9} {:>5} {:>9.2} {:>10.2} {:>7.2} {:>9.2} {:>8.2}",
            self.language.code(),
            "mean",
            a.accuracy,
            a.precision,
            a.recall,
            a.f1,
            a.roc_auc
        );
        out
    }
}

/// Trains on `train_set` (stopwords and vocabulary included) and scores `test_set`.
pub fn evaluate_fold(
    fold_index: usize,
    train_set: &[LabeledExample],
    test_set: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<FoldMetrics> {
    let stopwords = derive_stopwords(train_set, &cfg.stopwords)?;
    let vocabulary = build_vocabulary(train_set, &stopwords)?;
    let model = train(train_set, &vocabulary, cfg)?;

    let mut confusion = ConfusionMatrix::default();
    let mut scores = Vec::with_capacity(test_set.len());
    for example in test_set {
        let prediction = predict(&model, &example.text);
        confusion.record(example.label, prediction.label);
        scores.push((prediction.probability, example.label));
    }
    let (roc_auc, roc_points) = compute_roc_auc(&scores)?;
    let (top_toxic, top_non_toxic) = feature_weights(&model, TOP_FEATURES);
    let to_terms = |list: Vec<(String, f64)>| {
        list.into_iter()
            .map(|(term, weight)| WeightedTerm { term, weight })
            .collect()
    };
    Ok(FoldMetrics {
        fold_index,
        train_size: train_set.len(),
        test_size: test_set.len(),
        confusion,
        accuracy: confusion.accuracy(),
        precision: confusion.precision(),
        recall: confusion.recall(),
        f1: confusion.f1(),
        roc_auc,
        roc_points,
        l2_strength: model.metadata.l2_strength,
        converged: model.metadata.converged,
        vocabulary_size: vocabulary.len(),
        stopwords: stopwords.into_iter().collect(),
        top_toxic: to_terms(top_toxic),
        top_non_toxic: to_terms(top_non_toxic),
    })
}

fn check_language(pairs: &[ParallelPair], cfg: &TrainConfig) -> Result<()> {
    match pairs.iter().find(|p| p.language != cfg.language) {
        Some(p) => Err(DetoxError::LanguageMismatch {
            component: "corpus pair",
            expected: cfg.language,
            found: p.language,
        }),
        None => Ok(()),
    }
}

fn split_train_test(
    examples: &[LabeledExample],
    folds: &[Vec<usize>],
    held_out: usize,
) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let mut is_test = vec![false; examples.len()];
    for &i in &folds[held_out] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = examples
        .iter()
        .cloned()
        .zip(is_test)
        .partition(|(_, t)| *t);
    (
        train.into_iter().map(|(e, _)| e).collect(),
        test.into_iter().map(|(e, _)| e).collect(),
    )
}

/// Stratified K-fold evaluation. Folds run in parallel; results are identical
/// to a sequential run because each fold is a pure function of its inputs.
pub fn evaluate_kfold(pairs: &[ParallelPair], cfg: &TrainConfig, k: usize, seed: u64) -> Result<EvalReport> {
    cfg.validate()?;
    check_language(pairs, cfg)?;
    let examples = derive_labeled_set(pairs);
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    let folds = stratified_kfold_indices(&labels, k, seed)?;
    let metrics = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (train_set, test_set) = split_train_test(&examples, &folds, fold);
            evaluate_fold(fold, &train_set, &test_set, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        language: cfg.language,
        mode: EvalMode::Kfold,
        k,
        seed,
        corpus_pairs: pairs.len(),
        config_fingerprint: cfg.fingerprint(),
        config: cfg.clone(),
        aggregate: AggregateMetrics::mean_of(&metrics),
        folds: metrics,
    })
}

/// Single stratified 80/20 train/test split (the first of five stratified folds is held out).
pub fn evaluate_holdout(pairs: &[ParallelPair], cfg: &TrainConfig, seed: u64) -> Result<EvalReport> {
    cfg.validate()?;
    check_language(pairs, cfg)?;
    let examples = derive_labeled_set(pairs);
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    let folds = stratified_kfold_indices(&labels, DEFAULT_FOLDS, seed)?;
    let (train_set, test_set) = split_train_test(&examples, &folds, 0);
    let metrics = vec![evaluate_fold(0, &train_set, &test_set, cfg)?];
    Ok(EvalReport {
        language: cfg.language,
        mode: EvalMode::Holdout,
        k: 1,
        seed,
        corpus_pairs: pairs.len(),
        config_fingerprint: cfg.fingerprint(),
        config: cfg.clone(),
        aggregate: AggregateMetrics::mean_of(&metrics),
        folds: metrics,
    })
}
