//! Training loop shared by every optimizer of an experiment.
//!
//! All optimizers start from the same initial parameters and see the same
//! minibatch order, both derived from the run seed.

use std::time::Instant;

use gradlab::data::{self, Dataset, SplitSpec};
use gradlab::models::{
    self, CnnConfig, Mlp, QuadraticBowl, Rosenbrock, SmallCnn, SoftmaxClassifier,
};
use gradlab::{Error, Objective, Optimizer, OptimizerKind, Result, RngStream, Tensor};

use crate::config::{DataSource, ExperimentSpec, ModelKind};

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const SUBSET_STREAM: u64 = 3;
const SPLIT_STREAM: u64 = 4;
const TEST_STREAM: u64 = 5;

/// Rows per forward pass during evaluation.
const EVAL_CHUNK: usize = 500;

/// Synthetic test rows per class when `data.test_per_class` is absent.
const SYNTH_TEST_PER_CLASS: usize = 100;

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch (sample weighted).
    pub train_loss: f64,
    /// Always 0 for the analytic functions.
    pub val_accuracy: f64,
    /// Seconds since the start of this optimizer's run.
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestRecord {
    pub test_loss: f64,
    /// Always 0 for the analytic functions.
    pub test_accuracy: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerRun {
    pub kind: OptimizerKind,
    pub epochs: Vec<EpochRecord>,
    pub test: TestRecord,
    /// Set once the loss or a gradient became non-finite. Training stops
    /// there; later epochs record a NaN loss and the accuracy of the frozen
    /// parameters.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub runs: Vec<OptimizerRun>,
}

/// Loads or generates the train/validation/test sets. `None` for the
/// analytic functions.
pub fn prepare_data(spec: &ExperimentSpec) -> Result<Option<Splits>> {
    if spec.model.kind.is_analytic() {
        return Ok(None);
    }
    let d = &spec.data;
    let (pool, test) = match d.source {
        DataSource::Cifar => {
            let (train, test) = data::load_cifar(&d.dir, d.variant)?;
            let train = match d.per_class {
                Some(k) => data::subset(&train, k, derived_seed(spec.seed, SUBSET_STREAM))?,
                None => train,
            };
            let test = match d.test_per_class {
                Some(k) => data::subset(&test, k, derived_seed(spec.seed, TEST_STREAM))?,
                None => test,
            };
            (train, test)
        }
        DataSource::SynthImages | DataSource::Blobs => {
            let per_class = d.per_class.expect("validated");
            let test_per_class = d.test_per_class.unwrap_or(SYNTH_TEST_PER_CLASS);
            let total = per_class + test_per_class;
            let all = if d.source == DataSource::Blobs {
                data::synth_blobs(d.classes, total, d.dim, spec.seed)?
            } else {
                data::synth_images(d.classes, total, spec.seed)?
            };
            // rows cycle through the classes, so a prefix is class balanced
            let cut = per_class * d.classes;
            let train_idx: Vec<usize> = (0..cut).collect();
            let test_idx: Vec<usize> = (cut..all.len()).collect();
            (all.select(&train_idx), all.select(&test_idx))
        }
    };
    let split = SplitSpec {
        val_ratio: d.val_ratio,
        seed: derived_seed(spec.seed, SPLIT_STREAM),
    };
    let (train, val) = data::split(&pool, &split)?;
    Ok(Some(Splits { train, val, test }))
}

fn derived_seed(seed: u64, stream: u64) -> u64 {
    RngStream::derive(seed, stream).next_u64()
}

pub fn build_objective(
    spec: &ExperimentSpec,
    splits: Option<&Splits>,
) -> Result<Box<dyn Objective>> {
    let m = &spec.model;
    if m.kind.is_analytic() {
        return Ok(match m.kind {
            ModelKind::Quadratic => Box::new(QuadraticBowl::new(m.dim)?),
            _ => Box::new(Rosenbrock::new()),
        });
    }
    let splits = splits.ok_or_else(|| Error::Config(format!("model {:?} needs data", m.kind)))?;
    let classes = splits.train.class_count();
    let shape = splits.train.sample_shape();
    let features: usize = shape.iter().product();
    Ok(match m.kind {
        ModelKind::Softmax => Box::new(SoftmaxClassifier::new(features, classes)?),
        ModelKind::Mlp => {
            let mut layers = vec![features];
            layers.extend_from_slice(&m.hidden);
            layers.push(classes);
            Box::new(Mlp::new(&layers)?)
        }
        ModelKind::Cnn => {
            let &[h, w, c] = shape else {
                return Err(Error::Config(format!(
                    "cnn needs [h, w, c] samples, data has {shape:?}"
                )));
            };
            Box::new(SmallCnn::new(CnnConfig {
                input: [h, w, c],
                classes,
                ..m.cnn.clone()
            })?)
        }
        ModelKind::Quadratic | ModelKind::Rosenbrock => unreachable!(),
    })
}

/// Mean loss and accuracy over a whole dataset, evaluated in chunks.
pub fn evaluate(objective: &dyn Objective, params: &[Tensor], ds: &Dataset) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut hits = 0.0;
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let batch = ds.batch(chunk);
        let out = objective.forward(params, Some(&batch))?;
        let probs = out
            .probs
            .ok_or_else(|| Error::Config(format!("{} is not a classifier", objective.name())))?;
        loss += out.loss * chunk.len() as f64;
        hits += models::accuracy(&probs, batch.labels()) * chunk.len() as f64;
    }
    let n = ds.len() as f64;
    Ok((loss / n, hits / n))
}

fn all_finite(loss: f64, grads: &[Tensor]) -> bool {
    loss.is_finite() && grads.iter().all(Tensor::is_finite)
}

/// Trains one optimizer from `init` and returns its per-epoch records.
pub fn train_one(
    spec: &ExperimentSpec,
    kind: OptimizerKind,
    objective: &dyn Objective,
    splits: Option<&Splits>,
    init: &[Tensor],
) -> Result<OptimizerRun> {
    let start = Instant::now();
    let mut params = init.to_vec();
    let mut opt = Optimizer::new(spec.optimizer_config(kind), &objective.param_shapes())?;
    let mut shuffle = RngStream::derive(spec.seed, SHUFFLE_STREAM);
    let mut epochs = Vec::with_capacity(spec.epochs);
    let mut diverged = false;
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;

    for epoch in 0..spec.epochs {
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        match splits {
            None => {
                for _ in 0..spec.model.steps_per_epoch {
                    if diverged {
                        break;
                    }
                    let (loss, grads) = objective.backward(&params, None)?;
                    if !all_finite(loss, &grads) {
                        diverged = true;
                        break;
                    }
                    loss_sum += loss;
                    seen += 1;
                    opt.step(&mut params, &grads)?;
                }
            }
            Some(s) => {
                let order = shuffle.permutation(s.train.len());
                for chunk in order.chunks(spec.batch_size) {
                    if diverged {
                        break;
                    }
                    let batch = s.train.batch(chunk);
                    let (loss, grads) = objective.backward(&params, Some(&batch))?;
                    if !all_finite(loss, &grads) {
                        diverged = true;
                        break;
                    }
                    loss_sum += loss * chunk.len() as f64;
                    seen += chunk.len();
                    opt.step(&mut params, &grads)?;
                }
            }
        }
        let train_loss = if diverged {
            f64::NAN
        } else {
            loss_sum / seen as f64
        };
        let val_accuracy = match splits {
            None => 0.0,
            Some(s) => evaluate(objective, &params, &s.val)?.1,
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
        if let (Some(patience), Some(_)) = (spec.early_stopping, splits) {
            if val_accuracy > best {
                best = val_accuracy;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }

    let (test_loss, test_accuracy) = match splits {
        None => (objective.forward(&params, None)?.loss, 0.0),
        Some(s) => evaluate(objective, &params, &s.test)?,
    };
    let test_loss = if diverged { f64::NAN } else { test_loss };
    Ok(OptimizerRun {
        kind,
        epochs,
        test: TestRecord {
            test_loss,
            test_accuracy,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
        diverged,
    })
}

/// Runs every optimizer of the spec. Results keep the order of `opt.kind`.
pub fn run(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    let splits = prepare_data(spec)?;
    run_with_data(spec, splits.as_ref())
}

/// Like [`run`] with data prepared by the caller.
pub fn run_with_data(spec: &ExperimentSpec, splits: Option<&Splits>) -> Result<RunReport> {
    spec.validate()?;
    let objective = build_objective(spec, splits)?;
    let init = objective.init_params(&mut RngStream::derive(spec.seed, INIT_STREAM));
    let kinds = spec.kinds();
    let objective = objective.as_ref();
    let runs: Vec<Result<OptimizerRun>> = if spec.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = kinds
                .iter()
                .map(|&k| {
                    let init = &init;
                    scope.spawn(move || train_one(spec, k, objective, splits, init))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training thread panicked"))
                .collect()
        })
    } else {
        kinds
            .iter()
            .map(|&k| train_one(spec, k, objective, splits, &init))
            .collect()
    };
    Ok(RunReport {
        runs: runs.into_iter().collect::<Result<_>>()?,
    })
}
