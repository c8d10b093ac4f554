use super::linalg::{add_bias, column_sums, matmul, matmul_nt, matmul_tn, softmax_rows};
use super::{cross_entropy, fan_in_uniform, require_batch, Batch, Forward, Objective};
use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

/// Fully connected network: `tanh` hidden layers, softmax output.
///
/// Parameters are `[w0, b0, w1, b1, ...]` with `w_l` of shape `[in, out]`.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<usize>,
    name: String,
}

impl Mlp {
    /// `layers = [features, hidden..., classes]`.
    pub fn new(layers: &[usize]) -> Result<Self> {
        if layers.len() < 2 || layers.contains(&0) {
            return Err(Error::Config(format!(
                "mlp layer sizes must list inputs and classes, all > 0: {layers:?}"
            )));
        }
        if *layers.last().unwrap() < 2 {
            return Err(Error::Config(
                "a classifier needs at least 2 classes".into(),
            ));
        }
        Ok(Mlp {
            layers: layers.to_vec(),
            name: "mlp".into(),
        })
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// Post-activation outputs of each layer; the last entry holds the probabilities.
    fn activations(&self, params: &[Tensor], batch: &Batch) -> Result<Vec<Vec<f64>>> {
        self.check_params(params)?;
        if batch.feature_count() != self.layers[0] {
            return Err(Error::ShapeMsg(format!(
                "{} expects {} features per row, batch has {}",
                self.name,
                self.layers[0],
                batch.feature_count()
            )));
        }
        batch.check_labels(*self.layers.last().unwrap())?;
        let rows = batch.len();
        let mut acts = vec![batch.inputs().data().to_vec()];
        for l in 0..self.depth() {
            let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
            let mut z = matmul(&acts[l], params[2 * l].data(), rows, fan_in, fan_out);
            add_bias(&mut z, params[2 * l + 1].data());
            if l + 1 == self.depth() {
                softmax_rows(&mut z, fan_out);
            } else {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(acts)
    }
}

impl Objective for Mlp {
    fn name(&self) -> &str {
        &self.name
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .windows(2)
            .flat_map(|w| [vec![w[0], w[1]], vec![w[1]]])
            .collect()
    }

    fn classes(&self) -> Option<usize> {
        self.layers.last().copied()
    }

    fn init_params(&self, rng: &mut RngStream) -> Vec<Tensor> {
        self.layers
            .windows(2)
            .flat_map(|w| {
                [
                    fan_in_uniform(rng, &[w[0], w[1]], w[0]),
                    Tensor::zeros(&[w[1]]),
                ]
            })
            .collect()
    }

    fn forward(&self, params: &[Tensor], batch: Option<&Batch>) -> Result<Forward> {
        let batch = require_batch(&self.name, batch)?;
        let probs_data = self
            .activations(params, batch)?
            .pop()
            .expect("output layer");
        let classes = *self.layers.last().unwrap();
        let probs = Tensor::new(vec![batch.len(), classes], probs_data)?;
        let loss = cross_entropy(&probs, batch.labels())?;
        Ok(Forward {
            loss,
            probs: Some(probs),
        })
    }

    fn backward(&self, params: &[Tensor], batch: Option<&Batch>) -> Result<(f64, Vec<Tensor>)> {
        let batch = require_batch(&self.name, batch)?;
        let acts = self.activations(params, batch)?;
        let rows = batch.len();
        let classes = *self.layers.last().unwrap();
        let probs = Tensor::new(vec![rows, classes], acts[self.depth()].clone())?;
        let loss = cross_entropy(&probs, batch.labels())?;

        let mut delta = output_delta(probs.data(), batch.labels(), classes);
        let mut grads = vec![Tensor::scalar(0.0); params.len()];
        for l in (0..self.depth()).rev() {
            let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
            let dw = matmul_tn(&acts[l], &delta, rows, fan_in, fan_out);
            grads[2 * l] = Tensor::new(vec![fan_in, fan_out], dw)?;
            grads[2 * l + 1] = Tensor::new(vec![fan_out], column_sums(&delta, fan_out))?;
            if l > 0 {
                let mut prev = matmul_nt(&delta, params[2 * l].data(), rows, fan_out, fan_in);
                for (d, a) in prev.iter_mut().zip(&acts[l]) {
                    *d *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
        Ok((loss, grads))
    }
}

/// `d loss / d logits = (probs - onehot) / rows`.
pub(crate) fn output_delta(probs: &[f64], labels: &[usize], classes: usize) -> Vec<f64> {
    let scale = 1.0 / labels.len() as f64;
    let mut delta: Vec<f64> = probs.iter().map(|p| p * scale).collect();
    for (row, &y) in delta.chunks_exact_mut(classes).zip(labels) {
        row[y] -= scale;
    }
    delta
}

/// Multinomial logistic regression: one affine layer and a softmax.
#[derive(Debug, Clone)]
pub struct SoftmaxClassifier {
    inner: Mlp,
}

impl SoftmaxClassifier {
    pub fn new(features: usize, classes: usize) -> Result<Self> {
        let mut inner = Mlp::new(&[features, classes])?;
        inner.name = "softmax".into();
        Ok(SoftmaxClassifier { inner })
    }
}

impl Objective for SoftmaxClassifier {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.inner.param_shapes()
    }

    fn classes(&self) -> Option<usize> {
        self.inner.classes()
    }

    fn init_params(&self, rng: &mut RngStream) -> Vec<Tensor> {
        self.inner.init_params(rng)
    }

    fn forward(&self, params: &[Tensor], batch: Option<&Batch>) -> Result<Forward> {
        self.inner.forward(params, batch)
    }

    fn backward(&self, params: &[Tensor], batch: Option<&Batch>) -> Result<(f64, Vec<Tensor>)> {
        self.inner.backward(params, batch)
    }
}
