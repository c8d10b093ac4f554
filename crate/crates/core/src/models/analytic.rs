use super::{Batch, Forward, Objective};
use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

/// `f(x) = 0.5 * |x|^2`, gradient `x`.
#[derive(Debug, Clone)]
pub struct QuadraticBowl {
    dim: usize,
}

impl QuadraticBowl {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("quadratic dimension must be >= 1".into()));
        }
        Ok(QuadraticBowl { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Objective for QuadraticBowl {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![self.dim]]
    }

    /// Uniform in `[-1, 1]^dim`.
    fn init_params(&self, rng: &mut RngStream) -> Vec<Tensor> {
        let data = (0..self.dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        vec![Tensor::from_vec(data)]
    }

    fn forward(&self, params: &[Tensor], _batch: Option<&Batch>) -> Result<Forward> {
        self.check_params(params)?;
        let x = params[0].data();
        Ok(Forward {
            loss: 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            probs: None,
        })
    }

    fn backward(&self, params: &[Tensor], batch: Option<&Batch>) -> Result<(f64, Vec<Tensor>)> {
        let loss = self.forward(params, batch)?.loss;
        Ok((loss, vec![params[0].clone()]))
    }
}

/// `f(x, y) = (a - x)^2 + b (y - x^2)^2`, minimum at `(a, a^2)`.
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    pub a: f64,
    pub b: f64,
}

impl Default for Rosenbrock {
    fn default() -> Self {
        Rosenbrock { a: 1.0, b: 100.0 }
    }
}

impl Rosenbrock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        (self.a - x).powi(2) + self.b * (y - x * x).powi(2)
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let r = y - x * x;
        [-2.0 * (self.a - x) - 4.0 * self.b * x * r, 2.0 * self.b * r]
    }
}

impl Objective for Rosenbrock {
    fn name(&self) -> &str {
        "rosenbrock"
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![2]]
    }

    /// The customary start `(-1.2, 1)`; the stream is not consumed.
    fn init_params(&self, _rng: &mut RngStream) -> Vec<Tensor> {
        vec![Tensor::from_vec(vec![-1.2, 1.0])]
    }

    fn forward(&self, params: &[Tensor], _batch: Option<&Batch>) -> Result<Forward> {
        self.check_params(params)?;
        let p = params[0].data();
        Ok(Forward {
            loss: self.value(p[0], p[1]),
            probs: None,
        })
    }

    fn backward(&self, params: &[Tensor], _batch: Option<&Batch>) -> Result<(f64, Vec<Tensor>)> {
        self.check_params(params)?;
        let p = params[0].data();
        let g = self.gradient(p[0], p[1]);
        Ok((self.value(p[0], p[1]), vec![Tensor::from_vec(g.to_vec())]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_examples() {
        let q = QuadraticBowl::new(2).unwrap();
        let (l, g) = q.backward(&[Tensor::zeros(&[2])], None).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g[0], Tensor::zeros(&[2]));
        let (l, g) = q
            .backward(&[Tensor::from_vec(vec![3.0, 4.0])], None)
            .unwrap();
        assert_eq!(l, 12.5);
        assert_eq!(g[0].data(), &[3.0, 4.0]);
        assert!(QuadraticBowl::new(0).is_err());
    }

    #[test]
    fn rosenbrock_minimum() {
        let r = Rosenbrock::new();
        let (l, g) = r
            .backward(&[Tensor::from_vec(vec![1.0, 1.0])], None)
            .unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn rosenbrock_hand_value() {
        // at (0, 0): f = 1, grad = (-2, 0)
        let r = Rosenbrock::new();
        assert_eq!(r.value(0.0, 0.0), 1.0);
        assert_eq!(r.gradient(0.0, 0.0), [-2.0, 0.0]);
    }

    #[test]
    fn wrong_param_shape() {
        let r = Rosenbrock::new();
        assert_eq!(
            r.forward(&[Tensor::zeros(&[3])], None).unwrap_err().kind(),
            "shape"
        );
    }
}
