//! Differentiable objectives with hand-written gradients.
//!
//! Analytic test functions ignore the batch; classifiers require one and
//! report softmax probabilities alongside the cross-entropy loss.

mod analytic;
mod classifier;
mod cnn;
pub mod gradcheck;
mod linalg;

pub use analytic::{QuadraticBowl, Rosenbrock};
pub use classifier::{Mlp, SoftmaxClassifier};
pub use cnn::{CnnConfig, SmallCnn};

use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

/// Inputs `[batch, features...]` with one class id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Tensor,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        let rows = inputs.shape()[0];
        if inputs.shape().len() < 2 {
            return Err(Error::ShapeMsg(format!(
                "batch inputs need a leading batch axis and features, got {:?}",
                inputs.shape()
            )));
        }
        if rows != labels.len() {
            return Err(Error::ShapeMsg(format!(
                "{rows} input rows but {} labels",
                labels.len()
            )));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of features per row (product of the non-batch extents).
    pub fn feature_count(&self) -> usize {
        self.inputs.shape()[1..].iter().product()
    }

    pub(crate) fn check_labels(&self, classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= classes) {
            Some(&label) => Err(Error::Label { label, classes }),
            None => Ok(()),
        }
    }
}

/// Result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub loss: f64,
    /// `[batch, classes]` probabilities for classifiers.
    pub probs: Option<Tensor>,
}

pub trait Objective: Send + Sync {
    fn name(&self) -> &str;

    fn param_shapes(&self) -> Vec<Vec<usize>>;

    /// Class count for classifiers, `None` for analytic functions.
    fn classes(&self) -> Option<usize> {
        None
    }

    /// Seeded starting point.
    fn init_params(&self, rng: &mut RngStream) -> Vec<Tensor>;

    fn forward(&self, params: &[Tensor], batch: Option<&Batch>) -> Result<Forward>;

    /// Loss and gradients with the same shapes as `params`.
    fn backward(&self, params: &[Tensor], batch: Option<&Batch>) -> Result<(f64, Vec<Tensor>)>;

    fn zero_params(&self) -> Vec<Tensor> {
        self.param_shapes()
            .iter()
            .map(|s| Tensor::zeros(s))
            .collect()
    }

    fn check_params(&self, params: &[Tensor]) -> Result<()> {
        let shapes = self.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::ShapeMsg(format!(
                "{} expects {} parameter tensors, got {}",
                self.name(),
                shapes.len(),
                params.len()
            )));
        }
        for (s, p) in shapes.iter().zip(params) {
            if s.as_slice() != p.shape() {
                return Err(Error::shape(s, p.shape()));
            }
        }
        Ok(())
    }
}

pub(crate) fn require_batch<'a>(name: &str, batch: Option<&'a Batch>) -> Result<&'a Batch> {
    batch.ok_or_else(|| Error::ShapeMsg(format!("{name} needs a batch")))
}

/// Mean cross-entropy of `probs[batch, classes]` against `labels`.
///
/// Two classes use the binary form `-(y ln p + (1 - y) ln(1 - p))` with `p`
/// the class-1 probability; more classes use `-ln p[label]`. Probabilities are
/// clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` first.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let shape = probs.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::ShapeMsg(format!(
            "probabilities {shape:?} do not match {} labels",
            labels.len()
        )));
    }
    let classes = shape[1];
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label { label, classes });
    }
    let clamp = |p: f64| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let total: f64 = probs
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .map(|(row, &y)| {
            if classes == 2 {
                let p = clamp(row[1]);
                let y = y as f64;
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            } else {
                -clamp(row[y]).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Fraction of rows whose arg-max matches the label (ties go to the lower id).
pub fn accuracy(probs: &Tensor, labels: &[usize]) -> f64 {
    let classes = probs.shape()[1];
    let hits = probs
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    hits as f64 / labels.len() as f64
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub(crate) fn fan_in_uniform(rng: &mut RngStream, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_in(-bound, bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data length agree")
}
