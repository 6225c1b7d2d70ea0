//! Class-balanced, L2-regularized logistic regression.
//!
//! The training objective over `n` examples is
//!
//! ```text
//! J(w, b) = (1/n) * sum_i c(y_i) * [softplus(z_i) - y_i * z_i] + (lambda/2) * |w|^2,
//! z_i = w . x_i + b,   c(y) = n / (2 * n_y)
//! ```
//!
//! minimized by full-batch gradient descent with an Armijo backtracking line
//! search, starting from `w = 0, b = 0`. The bias is not regularized. The
//! regularization strength is chosen from a grid by stratified 3-fold
//! cross-validation on the toxic-class F1.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus_io::LabeledExample;
use crate::error::{DetoxError, Result};
use crate::evaluator::{stratified_kfold_indices, ConfusionMatrix};
use crate::language::Language;
use crate::normalizer::normalize;
use crate::vectorizer::{compute_tfidf, FeatureVector, StopwordConfig, Vocabulary};

const ARMIJO_FRACTION: f64 = 1e-4;
const MIN_STEP: f64 = 1e-30;
const INNER_FOLDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub language: Language,
    pub l2_strength_grid: Vec<f64>,
    pub max_iterations: usize,
    /// Stop once the gradient infinity-norm falls below this.
    pub convergence_tolerance: f64,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
    pub threshold: f64,
    pub stopwords: StopwordConfig,
    /// Unix seconds recorded in the model; not part of the fingerprint.
    #[serde(skip)]
    pub trained_at: u64,
}

impl TrainConfig {
    pub fn for_language(language: Language) -> Self {
        TrainConfig {
            language,
            l2_strength_grid: vec![0.001, 0.01, 0.1, 1.0],
            max_iterations: 1000,
            convergence_tolerance: 1e-8,
            class_weighting: ClassWeighting::Balanced,
            seed: 42,
            threshold: language.default_threshold(),
            stopwords: StopwordConfig::default(),
            trained_at: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DetoxError::InvalidConfig(msg));
        if self.l2_strength_grid.is_empty() {
            return bad("regularization grid is empty".into());
        }
        if let Some(l) = self
            .l2_strength_grid
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return bad(format!("regularization strength {l} must be positive"));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if self.convergence_tolerance.is_nan() || self.convergence_tolerance <= 0.0 {
            return bad("convergence tolerance must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        self.stopwords.validate()
    }

    /// SHA-256 over the canonical JSON encoding of the configuration.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub l2_strength: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub l2_strength: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub grid_scores: Vec<GridScore>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub language: Language,
    pub vocabulary: Vocabulary,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub trained_at: u64,
    pub config_fingerprint: String,
    pub metadata: TrainingMetadata,
}

impl TrainedModel {
    pub fn stopwords(&self) -> &std::collections::BTreeSet<String> {
        self.vocabulary.stopwords()
    }

    pub fn vectorize(&self, text: &str) -> FeatureVector {
        compute_tfidf(&normalize(text), &self.vocabulary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    pub label: u8,
    /// Logit before the sigmoid.
    pub score: f64,
}

impl Prediction {
    pub fn from_score(score: f64, threshold: f64) -> Self {
        let probability = sigmoid(score);
        Prediction {
            probability,
            label: label_for(probability, threshold),
            score,
        }
    }
}

/// Inclusive threshold rule: toxic when `probability >= threshold`.
pub fn label_for(probability: f64, threshold: f64) -> u8 {
    u8::from(probability >= threshold)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// log(1 + e^z) without overflow
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Weighted, regularized log-loss over a fixed design matrix.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    rows: &'a [FeatureVector],
    labels: &'a [u8],
    sample_weights: Vec<f64>,
    l2_strength: f64,
    dimension: usize,
}

impl<'a> Objective<'a> {
    /// Balanced weighting: each class carries half of the total weight.
    pub fn balanced(
        rows: &'a [FeatureVector],
        labels: &'a [u8],
        dimension: usize,
        l2_strength: f64,
    ) -> Result<Self> {
        let n = labels.len();
        let positives = labels.iter().filter(|&&y| y == 1).count();
        if positives == 0 || positives == n {
            return Err(DetoxError::SingleClass);
        }
        let weight_pos = n as f64 / (2.0 * positives as f64);
        let weight_neg = n as f64 / (2.0 * (n - positives) as f64);
        let weights = labels
            .iter()
            .map(|&y| if y == 1 { weight_pos } else { weight_neg })
            .collect();
        Ok(Self::with_weights(rows, labels, weights, dimension, l2_strength))
    }

    pub fn with_weights(
        rows: &'a [FeatureVector],
        labels: &'a [u8],
        sample_weights: Vec<f64>,
        dimension: usize,
        l2_strength: f64,
    ) -> Self {
        assert_eq!(rows.len(), labels.len());
        assert_eq!(rows.len(), sample_weights.len());
        Objective {
            rows,
            labels,
            sample_weights,
            l2_strength,
            dimension,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn value(&self, weights: &[f64], bias: f64) -> f64 {
        let n = self.rows.len() as f64;
        let data: f64 = self
            .rows
            .iter()
            .zip(self.labels)
            .zip(&self.sample_weights)
            .map(|((x, &y), &c)| {
                let z = x.dot(weights) + bias;
                c * (softplus(z) - f64::from(y) * z)
            })
            .sum();
        let penalty: f64 = weights.iter().map(|w| w * w).sum();
        data / n + 0.5 * self.l2_strength * penalty
    }

    /// Gradient with respect to `(weights, bias)`.
    pub fn gradient(&self, weights: &[f64], bias: f64) -> (Vec<f64>, f64) {
        let n = self.rows.len() as f64;
        let mut grad: Vec<f64> = vec![0.0; self.dimension];
        let mut grad_bias = 0.0;
        for ((x, &y), &c) in self.rows.iter().zip(self.labels).zip(&self.sample_weights) {
            let residual = c * (sigmoid(x.dot(weights) + bias) - f64::from(y));
            grad_bias += residual;
            for &(j, v) in &x.entries {
                grad[j] += residual * v;
            }
        }
        for (g, w) in grad.iter_mut().zip(weights) {
            *g = *g / n + self.l2_strength * w;
        }
        (grad, grad_bias / n)
    }

    // Upper bound on the curvature, used for the first trial step.
    fn curvature_bound(&self) -> f64 {
        let n = self.rows.len() as f64;
        let data: f64 = self
            .rows
            .iter()
            .zip(&self.sample_weights)
            .map(|(x, c)| c * (x.squared_norm() + 1.0))
            .sum();
        0.25 * data / n + self.l2_strength
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Objective value before the first step and after every accepted step.
    pub loss_trace: Vec<f64>,
}

pub fn fit(objective: &Objective<'_>, max_iterations: usize, tolerance: f64) -> FitResult {
    let dim = objective.dimension();
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut loss = objective.value(&weights, bias);
    let mut loss_trace = vec![loss];
    let mut step = 1.0 / objective.curvature_bound();
    let mut iterations = 0;
    let mut converged = false;
    let mut gradient_norm;
    let mut trial = vec![0.0; dim];
    loop {
        let (grad, grad_bias) = objective.gradient(&weights, bias);
        gradient_norm = grad.iter().fold(grad_bias.abs(), |m, g| m.max(g.abs()));
        if gradient_norm <= tolerance {
            converged = true;
            break;
        }
        if iterations == max_iterations {
            break;
        }
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum::<f64>() + grad_bias * grad_bias;
        let mut accepted = false;
        while step >= MIN_STEP {
            for ((t, w), g) in trial.iter_mut().zip(&weights).zip(&grad) {
                *t = w - step * g;
            }
            let trial_bias = bias - step * grad_bias;
            let trial_loss = objective.value(&trial, trial_bias);
            if trial_loss <= loss - ARMIJO_FRACTION * step * grad_sq {
                std::mem::swap(&mut weights, &mut trial);
                bias = trial_bias;
                loss = trial_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No representable descent step remains.
            break;
        }
        loss_trace.push(loss);
        iterations += 1;
        step *= 2.0;
    }
    FitResult {
        weights,
        bias,
        iterations,
        converged,
        gradient_norm,
        loss_trace,
    }
}

fn mean_cv_f1(
    rows: &[FeatureVector],
    labels: &[u8],
    dimension: usize,
    l2_strength: f64,
    folds: &[Vec<usize>],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for held_out in folds {
        let mut in_test = vec![false; labels.len()];
        for &i in held_out {
            in_test[i] = true;
        }
        let train_idx: Vec<usize> = (0..labels.len()).filter(|&i| !in_test[i]).collect();
        let train_rows: Vec<FeatureVector> = train_idx.iter().map(|&i| rows[i].clone()).collect();
        let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
        let objective = Objective::balanced(&train_rows, &train_labels, dimension, l2_strength)?;
        let fitted = fit(&objective, cfg.max_iterations, cfg.convergence_tolerance);
        let mut confusion = ConfusionMatrix::default();
        for &i in held_out {
            let score = rows[i].dot(&fitted.weights) + fitted.bias;
            confusion.record(labels[i], label_for(sigmoid(score), cfg.threshold));
        }
        total += confusion.f1();
    }
    Ok(total / folds.len() as f64)
}

/// Fits a model on `examples`, whose vocabulary must come from the same examples.
pub fn train(examples: &[LabeledExample], vocab: &Vocabulary, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let rows: Vec<FeatureVector> = examples
        .iter()
        .map(|e| compute_tfidf(&normalize(&e.text), vocab))
        .collect();
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(DetoxError::SingleClass);
    }
    let smallest_class = positives.min(labels.len() - positives);
    let dimension = vocab.len();
    let mut warnings = Vec::new();

    let mut grid_scores = Vec::new();
    let l2_strength = if cfg.l2_strength_grid.len() == 1 {
        cfg.l2_strength_grid[0]
    } else if smallest_class < INNER_FOLDS {
        let weakest = cfg.l2_strength_grid.iter().copied().fold(f64::INFINITY, f64::min);
        warnings.push(format!(
            "too few examples for {INNER_FOLDS}-fold selection; using l2 strength {weakest}"
        ));
        weakest
    } else {
        let folds = stratified_kfold_indices(&labels, INNER_FOLDS, cfg.seed)?;
        let mut best: Option<GridScore> = None;
        for &l2 in &cfg.l2_strength_grid {
            let score = GridScore {
                l2_strength: l2,
                mean_f1: mean_cv_f1(&rows, &labels, dimension, l2, &folds, cfg)?,
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    score.mean_f1 > b.mean_f1
                        || (score.mean_f1 == b.mean_f1 && score.l2_strength > b.l2_strength)
                }
            };
            if better {
                best = Some(score.clone());
            }
            grid_scores.push(score);
        }
        best.expect("grid is non-empty").l2_strength
    };

    let objective = Objective::balanced(&rows, &labels, dimension, l2_strength)?;
    let fitted = fit(&objective, cfg.max_iterations, cfg.convergence_tolerance);
    if !fitted.converged {
        warnings.push(format!(
            "gradient descent stopped after {} iterations with gradient norm {:e} (tolerance {:e})",
            fitted.iterations, fitted.gradient_norm, cfg.convergence_tolerance
        ));
    }
    Ok(TrainedModel {
        language: cfg.language,
        vocabulary: vocab.clone(),
        weights: fitted.weights,
        bias: fitted.bias,
        threshold: cfg.threshold,
        trained_at: cfg.trained_at,
        config_fingerprint: cfg.fingerprint(),
        metadata: TrainingMetadata {
            l2_strength,
            iterations: fitted.iterations,
            converged: fitted.converged,
            gradient_norm: fitted.gradient_norm,
            grid_scores,
            warnings,
        },
    })
}

pub fn predict_features(model: &TrainedModel, features: &FeatureVector) -> Prediction {
    Prediction::from_score(features.dot(&model.weights) + model.bias, model.threshold)
}

pub fn predict(model: &TrainedModel, text: &str) -> Prediction {
    predict_features(model, &model.vectorize(text))
}

/// Top-`k` toxic-indicative (positive) and non-toxic-indicative (negative) terms.
pub fn feature_weights(model: &TrainedModel, k: usize) -> (Vec<(String, f64)>, Vec<(String, f64)>) {
    let terms = model.vocabulary.terms();
    let mut positive: Vec<(String, f64)> = Vec::new();
    let mut negative: Vec<(String, f64)> = Vec::new();
    for (term, &w) in terms.iter().zip(&model.weights) {
        if w > 0.0 {
            positive.push((term.clone(), w));
        } else if w < 0.0 {
            negative.push((term.clone(), w));
        }
    }
    positive.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    negative.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    positive.truncate(k);
    negative.truncate(k);
    (positive, negative)
}

/// Signed per-term contribution `weight * feature value`, largest magnitude first.
pub fn token_contributions(model: &TrainedModel, text: &str, k: usize) -> Vec<(String, f64)> {
    let features = model.vectorize(text);
    let mut contributions: Vec<(String, f64)> = features
        .entries
        .iter()
        .map(|&(i, v)| (model.vocabulary.term(i).to_string(), model.weights[i] * v))
        .filter(|(_, c)| *c != 0.0)
        .collect();
    contributions.sort_by(|a, b| {
        b.1.abs()
            .total_cmp(&a.1.abs())
            .then_with(|| a.0.cmp(&b.0))
    });
    contributions.truncate(k);
    contributions
}
