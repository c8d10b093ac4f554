//! Next-gradient prediction by elementwise Newton divided differences.
//!
//! The gradient sequence is treated as samples of a map `g` with
//! `g(grad[k]) = grad[k + 1]`. With the four most recent gradients
//! `h0..h3` (oldest first) and the current gradient `x`, the nodes are
//! `h0, h1, h2` with values `h1, h2, h3`, and
//!
//! ```text
//! q01 = (h2 - h1) / (h1 - h0)
//! q12 = (h3 - h2) / (h2 - h1)
//! q012 = (q12 - q01) / (h2 - h0)
//! predict = h0 + q01 * (x - h0) + q012 * (x - h0) * (x - h1)
//! ```
//!
//! With only three gradients stored the second-order term is dropped; with
//! fewer than three the predictor is the identity. All arithmetic is
//! elementwise. A denominator with magnitude `<= epsilon` marks the element as
//! guarded and the element falls back to the identity predictor.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const HISTORY_LEN: usize = 4;

/// Ring buffer of the last four raw gradients of one parameter.
#[derive(Debug, Clone, Default)]
pub struct GradHistory {
    slots: VecDeque<Tensor>,
}

impl GradHistory {
    pub fn new() -> Self {
        GradHistory {
            slots: VecDeque::with_capacity(HISTORY_LEN),
        }
    }

    pub fn count(&self) -> usize {
        self.slots.len()
    }

    pub fn shape(&self) -> Option<&[usize]> {
        self.slots.front().map(Tensor::shape)
    }

    /// Stored gradients, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.slots.iter()
    }

    pub fn get(&self, k: usize) -> Option<&Tensor> {
        self.slots.get(k)
    }

    pub fn push(&mut self, grad: Tensor) -> Result<()> {
        if let Some(front) = self.slots.front() {
            front.ensure_same_shape(&grad)?;
        }
        if self.slots.len() == HISTORY_LEN {
            self.slots.pop_front();
        }
        self.slots.push_back(grad);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.slots.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardPolicy {
    pub epsilon: f64,
}

impl Default for GuardPolicy {
    fn default() -> Self {
        GuardPolicy { epsilon: 1e-8 }
    }
}

impl GuardPolicy {
    pub fn new(epsilon: f64) -> Result<Self> {
        let g = GuardPolicy { epsilon };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "guard.epsilon must be finite and > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    #[inline]
    fn trips(&self, denom: f64) -> bool {
        denom.abs() <= self.epsilon
    }
}

/// A guarded divided difference: `mask` is 1.0 where a denominator tripped
/// the guard (and `value` is 0.0 there), 0.0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Quotient {
    pub value: Tensor,
    pub mask: Tensor,
}

impl Quotient {
    pub fn is_guarded(&self, k: usize) -> bool {
        self.mask.data()[k] != 0.0
    }
}

/// First-order quotient `(c - b) / (b - a)`, i.e. `g[a, b]` with `g(a) = b`
/// and `g(b) = c`.
pub fn dd1(a: &Tensor, b: &Tensor, c: &Tensor, guard: &GuardPolicy) -> Result<Quotient> {
    a.ensure_same_shape(b)?;
    a.ensure_same_shape(c)?;
    let mut value = Tensor::zeros_like(a);
    let mut mask = Tensor::zeros_like(a);
    let (va, vb, vc) = (a.data(), b.data(), c.data());
    for (k, (v, m)) in value
        .data_mut()
        .iter_mut()
        .zip(mask.data_mut().iter_mut())
        .enumerate()
    {
        let denom = vb[k] - va[k];
        if guard.trips(denom) {
            *m = 1.0;
        } else {
            *v = (vc[k] - vb[k]) / denom;
        }
    }
    Ok(Quotient { value, mask })
}

/// Second-order quotient `(q12 - q01) / (c - a)`. The mask also carries any
/// guard raised while forming `q01` or `q12`.
pub fn dd2(
    q01: &Quotient,
    q12: &Quotient,
    a: &Tensor,
    c: &Tensor,
    guard: &GuardPolicy,
) -> Result<Quotient> {
    for t in [&q01.mask, &q12.value, &q12.mask, a, c] {
        q01.value.ensure_same_shape(t)?;
    }
    let mut value = Tensor::zeros_like(a);
    let mut mask = Tensor::zeros_like(a);
    let (va, vc) = (a.data(), c.data());
    for (k, (v, m)) in value
        .data_mut()
        .iter_mut()
        .zip(mask.data_mut().iter_mut())
        .enumerate()
    {
        let denom = vc[k] - va[k];
        if q01.is_guarded(k) || q12.is_guarded(k) || guard.trips(denom) {
            *m = 1.0;
        } else {
            *v = (q12.value.data()[k] - q01.value.data()[k]) / denom;
        }
    }
    Ok(Quotient { value, mask })
}

/// Predicted next gradient given the stored history and the current gradient.
///
/// Elements that tripped a guard, or whose prediction overflowed, are copied
/// from `grad` unchanged.
pub fn predict(hist: &GradHistory, grad: &Tensor, guard: &GuardPolicy) -> Result<Tensor> {
    if let Some(shape) = hist.shape() {
        if shape != grad.shape() {
            return Err(Error::shape(shape, grad.shape()));
        }
    }
    let h = |k: usize| hist.get(k).expect("history index checked by count");
    let mut out = match hist.count() {
        0..=2 => return Ok(grad.clone()),
        3 => {
            let (h0, h1, h2) = (h(0), h(1), h(2));
            let q = dd1(h0, h1, h2, guard)?;
            let mut out = Tensor::zeros_like(grad);
            for (k, o) in out.data_mut().iter_mut().enumerate() {
                let x = grad.data()[k];
                let base = h0.data()[k];
                *o = if q.is_guarded(k) {
                    x
                } else {
                    base + q.value.data()[k] * (x - base)
                };
            }
            out
        }
        _ => {
            let (h0, h1, h2, h3) = (h(0), h(1), h(2), h(3));
            let q01 = dd1(h0, h1, h2, guard)?;
            let q12 = dd1(h1, h2, h3, guard)?;
            let q012 = dd2(&q01, &q12, h0, h2, guard)?;
            let mut out = Tensor::zeros_like(grad);
            for (k, o) in out.data_mut().iter_mut().enumerate() {
                let x = grad.data()[k];
                *o = if q012.is_guarded(k) {
                    x
                } else {
                    let x0 = h0.data()[k];
                    let x1 = h1.data()[k];
                    let p1 = q01.value.data()[k] * (x - x0);
                    let p2 = q012.value.data()[k] * (x - x0) * (x - x1);
                    x0 + p1 + p2
                };
            }
            out
        }
    };
    for (o, &x) in out.data_mut().iter_mut().zip(grad.data()) {
        if !o.is_finite() {
            *o = x;
        }
    }
    Ok(out)
}
