//! LeNet-5-shaped convolutional classifier on NHWC images:
//!
//! ```text
//! conv k x k (conv1) -> tanh -> avgpool 2
//! conv k x k (conv2) -> tanh -> avgpool 2
//! dense fc1 -> tanh -> dense fc2 -> tanh -> dense classes -> softmax
//! ```
//!
//! Convolutions are valid (no padding, stride 1) and run as im2col + matmul.
//! Weights start `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases at zero.

use serde::{Deserialize, Serialize};

use super::classifier::output_delta;
use super::linalg::{add_bias, column_sums, matmul, matmul_nt, matmul_tn, softmax_rows};
use super::{cross_entropy, fan_in_uniform, require_batch, Batch, Forward, Objective};
use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    /// `[height, width, channels]`.
    pub input: [usize; 3],
    pub kernel: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub fc1: usize,
    pub fc2: usize,
    pub classes: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            input: [32, 32, 3],
            kernel: 5,
            conv1: 6,
            conv2: 16,
            fc1: 120,
            fc2: 84,
            classes: 10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    // conv1 output, pool1 output, conv2 output, pool2 output
    h1: usize,
    w1: usize,
    hp1: usize,
    wp1: usize,
    h2: usize,
    w2: usize,
    hp2: usize,
    wp2: usize,
}

impl CnnConfig {
    fn dims(&self) -> Result<Dims> {
        let [h, w, c] = self.input;
        let k = self.kernel;
        let bad = |msg: String| Err(Error::Config(format!("cnn: {msg}")));
        if [h, w, c, k, self.conv1, self.conv2, self.fc1, self.fc2].contains(&0) {
            return bad(format!("all sizes must be positive: {self:?}"));
        }
        if self.classes < 2 {
            return bad("a classifier needs at least 2 classes".into());
        }
        let conv = |n: usize| {
            n.checked_sub(k)
                .map(|d| d + 1)
                .filter(|&o| o > 0 && o % 2 == 0)
        };
        let (Some(h1), Some(w1)) = (conv(h), conv(w)) else {
            return bad(format!(
                "{h}x{w} input with kernel {k} does not give an even positive map"
            ));
        };
        let (hp1, wp1) = (h1 / 2, w1 / 2);
        let (Some(h2), Some(w2)) = (conv(hp1), conv(wp1)) else {
            return bad(format!(
                "{hp1}x{wp1} pooled map with kernel {k} does not give an even positive map"
            ));
        };
        Ok(Dims {
            h,
            w,
            c,
            k,
            h1,
            w1,
            hp1,
            wp1,
            h2,
            w2,
            hp2: h2 / 2,
            wp2: w2 / 2,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SmallCnn {
    cfg: CnnConfig,
    dims: Dims,
}

struct Cache {
    cols1: Vec<f64>,
    a1: Vec<f64>,
    cols2: Vec<f64>,
    a2: Vec<f64>,
    flat: Vec<f64>,
    h3: Vec<f64>,
    h4: Vec<f64>,
    probs: Vec<f64>,
}

impl SmallCnn {
    pub fn new(cfg: CnnConfig) -> Result<Self> {
        let dims = cfg.dims()?;
        Ok(SmallCnn { cfg, dims })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.cfg
    }

    fn flat_len(&self) -> usize {
        self.dims.hp2 * self.dims.wp2 * self.cfg.conv2
    }

    fn run(&self, params: &[Tensor], batch: &Batch) -> Result<Cache> {
        self.check_params(params)?;
        let d = self.dims;
        if batch.feature_count() != d.h * d.w * d.c {
            return Err(Error::ShapeMsg(format!(
                "cnn expects {}x{}x{} images, batch rows have {} features",
                d.h,
                d.w,
                d.c,
                batch.feature_count()
            )));
        }
        batch.check_labels(self.cfg.classes)?;
        let n = batch.len();
        let cfg = &self.cfg;
        let kk1 = d.k * d.k * d.c;
        let kk2 = d.k * d.k * cfg.conv1;

        let cols1 = im2col(batch.inputs().data(), n, d.h, d.w, d.c, d.k);
        let mut a1 = matmul(&cols1, params[0].data(), n * d.h1 * d.w1, kk1, cfg.conv1);
        add_bias(&mut a1, params[1].data());
        a1.iter_mut().for_each(|v| *v = v.tanh());
        let p1 = avg_pool2(&a1, n, d.h1, d.w1, cfg.conv1);

        let cols2 = im2col(&p1, n, d.hp1, d.wp1, cfg.conv1, d.k);
        let mut a2 = matmul(&cols2, params[2].data(), n * d.h2 * d.w2, kk2, cfg.conv2);
        add_bias(&mut a2, params[3].data());
        a2.iter_mut().for_each(|v| *v = v.tanh());
        let flat = avg_pool2(&a2, n, d.h2, d.w2, cfg.conv2);

        let dense = |x: &[f64], w: &Tensor, b: &Tensor, fan_in: usize, fan_out: usize| {
            let mut z = matmul(x, w.data(), n, fan_in, fan_out);
            add_bias(&mut z, b.data());
            z
        };
        let mut h3 = dense(&flat, &params[4], &params[5], self.flat_len(), cfg.fc1);
        h3.iter_mut().for_each(|v| *v = v.tanh());
        let mut h4 = dense(&h3, &params[6], &params[7], cfg.fc1, cfg.fc2);
        h4.iter_mut().for_each(|v| *v = v.tanh());
        let mut probs = dense(&h4, &params[8], &params[9], cfg.fc2, cfg.classes);
        softmax_rows(&mut probs, cfg.classes);

        Ok(Cache {
            cols1,
            a1,
            cols2,
            a2,
            flat,
            h3,
            h4,
            probs,
        })
    }
}

impl Objective for SmallCnn {
    fn name(&self) -> &str {
        "cnn"
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        let d = self.dims;
        let c = &self.cfg;
        vec![
            vec![d.k, d.k, d.c, c.conv1],
            vec![c.conv1],
            vec![d.k, d.k, c.conv1, c.conv2],
            vec![c.conv2],
            vec![self.flat_len(), c.fc1],
            vec![c.fc1],
            vec![c.fc1, c.fc2],
            vec![c.fc2],
            vec![c.fc2, c.classes],
            vec![c.classes],
        ]
    }

    fn classes(&self) -> Option<usize> {
        Some(self.cfg.classes)
    }

    fn init_params(&self, rng: &mut RngStream) -> Vec<Tensor> {
        self.param_shapes()
            .iter()
            .map(|shape| {
                if shape.len() == 1 {
                    Tensor::zeros(shape)
                } else {
                    let fan_in = shape[..shape.len() - 1].iter().product();
                    fan_in_uniform(rng, shape, fan_in)
                }
            })
            .collect()
    }

    fn forward(&self, params: &[Tensor], batch: Option<&Batch>) -> Result<Forward> {
        let batch = require_batch("cnn", batch)?;
        let cache = self.run(params, batch)?;
        let probs = Tensor::new(vec![batch.len(), self.cfg.classes], cache.probs)?;
        let loss = cross_entropy(&probs, batch.labels())?;
        Ok(Forward {
            loss,
            probs: Some(probs),
        })
    }

    fn backward(&self, params: &[Tensor], batch: Option<&Batch>) -> Result<(f64, Vec<Tensor>)> {
        let batch = require_batch("cnn", batch)?;
        let cache = self.run(params, batch)?;
        let n = batch.len();
        let d = self.dims;
        let cfg = &self.cfg;
        let shapes = self.param_shapes();
        let probs = Tensor::new(vec![n, cfg.classes], cache.probs.clone())?;
        let loss = cross_entropy(&probs, batch.labels())?;

        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); 10];

        // dense head
        let dz5 = output_delta(&cache.probs, batch.labels(), cfg.classes);
        grads[8] = matmul_tn(&cache.h4, &dz5, n, cfg.fc2, cfg.classes);
        grads[9] = column_sums(&dz5, cfg.classes);
        let mut dz4 = matmul_nt(&dz5, params[8].data(), n, cfg.classes, cfg.fc2);
        tanh_back(&mut dz4, &cache.h4);
        grads[6] = matmul_tn(&cache.h3, &dz4, n, cfg.fc1, cfg.fc2);
        grads[7] = column_sums(&dz4, cfg.fc2);
        let mut dz3 = matmul_nt(&dz4, params[6].data(), n, cfg.fc2, cfg.fc1);
        tanh_back(&mut dz3, &cache.h3);
        grads[4] = matmul_tn(&cache.flat, &dz3, n, self.flat_len(), cfg.fc1);
        grads[5] = column_sums(&dz3, cfg.fc1);
        let dflat = matmul_nt(&dz3, params[4].data(), n, cfg.fc1, self.flat_len());

        // conv2
        let mut dz2 = avg_unpool2(&dflat, n, d.h2, d.w2, cfg.conv2);
        tanh_back(&mut dz2, &cache.a2);
        let rows2 = n * d.h2 * d.w2;
        let kk2 = d.k * d.k * cfg.conv1;
        grads[2] = matmul_tn(&cache.cols2, &dz2, rows2, kk2, cfg.conv2);
        grads[3] = column_sums(&dz2, cfg.conv2);
        let dcols2 = matmul_nt(&dz2, params[2].data(), rows2, cfg.conv2, kk2);
        let dp1 = col2im(&dcols2, n, d.hp1, d.wp1, cfg.conv1, d.k);

        // conv1
        let mut dz1 = avg_unpool2(&dp1, n, d.h1, d.w1, cfg.conv1);
        tanh_back(&mut dz1, &cache.a1);
        let rows1 = n * d.h1 * d.w1;
        grads[0] = matmul_tn(&cache.cols1, &dz1, rows1, d.k * d.k * d.c, cfg.conv1);
        grads[1] = column_sums(&dz1, cfg.conv1);

        let grads = grads
            .into_iter()
            .zip(shapes)
            .map(|(g, s)| Tensor::new(s, g))
            .collect::<Result<Vec<_>>>()?;
        Ok((loss, grads))
    }
}

fn tanh_back(delta: &mut [f64], activated: &[f64]) {
    for (d, a) in delta.iter_mut().zip(activated) {
        *d *= 1.0 - a * a;
    }
}

/// NHWC `[n, h, w, c]` to patch rows `[n * oh * ow, k * k * c]`.
fn im2col(x: &[f64], n: usize, h: usize, w: usize, c: usize, k: usize) -> Vec<f64> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let span = k * c;
    let mut cols = Vec::with_capacity(n * oh * ow * k * span);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..k {
                    let start = ((b * h + oy + ky) * w + ox) * c;
                    cols.extend_from_slice(&x[start..start + span]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im(cols: &[f64], n: usize, h: usize, w: usize, c: usize, k: usize) -> Vec<f64> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let span = k * c;
    let mut x = vec![0.0; n * h * w * c];
    let mut rows = cols.chunks_exact(k * span);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = rows.next().expect("patch count matches geometry");
                for ky in 0..k {
                    let start = ((b * h + oy + ky) * w + ox) * c;
                    for (dst, src) in x[start..start + span]
                        .iter_mut()
                        .zip(&row[ky * span..(ky + 1) * span])
                    {
                        *dst += src;
                    }
                }
            }
        }
    }
    x
}

fn avg_pool2(x: &[f64], n: usize, h: usize, w: usize, c: usize) -> Vec<f64> {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = vec![0.0; n * ph * pw * c];
    for b in 0..n {
        for y in 0..ph {
            for xo in 0..pw {
                let dst = ((b * ph + y) * pw + xo) * c;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let src = ((b * h + 2 * y + dy) * w + 2 * xo + dx) * c;
                    for ch in 0..c {
                        out[dst + ch] += 0.25 * x[src + ch];
                    }
                }
            }
        }
    }
    out
}

/// Gradient of [`avg_pool2`]; `h, w` are the pre-pool extents.
fn avg_unpool2(dout: &[f64], n: usize, h: usize, w: usize, c: usize) -> Vec<f64> {
    let (ph, pw) = (h / 2, w / 2);
    let mut dx = vec![0.0; n * h * w * c];
    for b in 0..n {
        for y in 0..ph {
            for xo in 0..pw {
                let src = ((b * ph + y) * pw + xo) * c;
                for (dy, ddx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let dst = ((b * h + 2 * y + dy) * w + 2 * xo + ddx) * c;
                    for ch in 0..c {
                        dx[dst + ch] = 0.25 * dout[src + ch];
                    }
                }
            }
        }
    }
    dx
}
