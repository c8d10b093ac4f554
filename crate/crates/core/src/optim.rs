//! Optimizer suite behind one stepping interface.
//!
//! Update rules, with `lr_i` the scheduled rate at 0-based step `i`:
//!
//! | kind       | update |
//! |------------|--------|
//! | `sgd`      | `x -= lr_i * g` |
//! | `momentum` | `v = beta * v - lr_i * g; x += v` (beta = 0.9) |
//! | `adam`     | `m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2; x -= lr_i * sqrt(1-b2^t)/(1-b1^t) * m / (sqrt(v) + eps)`, `t = i + 1` (b1 = 0.9, b2 = 0.999, eps = 1e-7) |
//! | `rmsprop`  | `v = rho*v + (1-rho)*g^2; x -= lr_i * g / (sqrt(v) + eps)` (rho = 0.9, eps = 1e-7) |
//! | `nrsgd`    | `n ~ N(mean(g), std(g))` elementwise; `x -= lr_i * (w*(g - n) + n)` (w = 0.9) |
//! | `iagd`     | `p = predict(history, g)`; `x -= lr_i * g + lr_{i-1} * p`, `lr_{-1} = lr_0`; then `g` joins the history |
//!
//! Baseline defaults match the Keras optimizers the classical comparison used.
//! NRSGD noise statistics are per-tensor scalars (population std) and the
//! noise is redrawn at every step. The NRSGD weight `w` has no published
//! value; 0.9 is this crate's choice.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::interp::{self, GradHistory, GuardPolicy};
use crate::schedule::LrSchedule;
use crate::tensor::{reduce_mean_std, sample_normal, RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
    Rmsprop,
    Nrsgd,
    Iagd,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::Sgd,
        OptimizerKind::Momentum,
        OptimizerKind::Adam,
        OptimizerKind::Rmsprop,
        OptimizerKind::Nrsgd,
        OptimizerKind::Iagd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Nrsgd => "nrsgd",
            OptimizerKind::Iagd => "iagd",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown optimizer kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentumParams {
    pub beta: f64,
}

impl Default for MomentumParams {
    fn default() -> Self {
        MomentumParams { beta: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmspropParams {
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmspropParams {
    fn default() -> Self {
        RmspropParams {
            rho: 0.9,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// NRSGD gradient weight, in `[0, 1]`.
    pub w: f64,
    /// Seed of the NRSGD noise stream.
    pub seed: u64,
    pub schedule: LrSchedule,
    pub guard: GuardPolicy,
    /// IAGD: apply the combined update only on even 1-based steps and plain
    /// SGD otherwise.
    pub every_other: bool,
    pub momentum: MomentumParams,
    pub adam: AdamParams,
    pub rmsprop: RmspropParams,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        OptimizerConfig {
            kind,
            w: 0.9,
            seed: 0,
            schedule: LrSchedule::default(),
            guard: GuardPolicy::default(),
            every_other: false,
            momentum: MomentumParams::default(),
            adam: AdamParams::default(),
            rmsprop: RmspropParams::default(),
        }
    }

    pub fn with_lr(mut self, eta0: f64) -> Self {
        self.schedule.eta0 = eta0;
        self
    }

    pub fn with_schedule(mut self, schedule: LrSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_w(mut self, w: f64) -> Self {
        self.w = w;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.guard.validate()?;
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::Config(format!(
                "opt.w must lie in [0, 1], got {}",
                self.w
            )));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be > 0, got {v}")))
            }
        };
        unit("opt.momentum.beta", self.momentum.beta)?;
        unit("opt.adam.beta1", self.adam.beta1)?;
        unit("opt.adam.beta2", self.adam.beta2)?;
        positive("opt.adam.epsilon", self.adam.epsilon)?;
        unit("opt.rmsprop.rho", self.rmsprop.rho)?;
        positive("opt.rmsprop.epsilon", self.rmsprop.epsilon)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Slots {
    Sgd,
    Momentum { velocity: Vec<Tensor> },
    Adam { m: Vec<Tensor>, v: Vec<Tensor> },
    Rmsprop { sq: Vec<Tensor> },
    Nrsgd { rng: Box<RngStream> },
    Iagd { histories: Vec<GradHistory> },
}

/// Mutable optimizer state for one training run: the step counter plus
/// whatever per-parameter tensors the chosen rule carries.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    step: u64,
    shapes: Vec<Vec<usize>>,
    slots: Slots,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, param_shapes: &[Vec<usize>]) -> Result<Self> {
        cfg.validate()?;
        if let Some(bad) = param_shapes.iter().find(|s| s.is_empty() || s.contains(&0)) {
            return Err(Error::Config(format!("invalid parameter shape {bad:?}")));
        }
        let zeros = || {
            param_shapes
                .iter()
                .map(|s| Tensor::zeros(s))
                .collect::<Vec<_>>()
        };
        let slots = match cfg.kind {
            OptimizerKind::Sgd => Slots::Sgd,
            OptimizerKind::Momentum => Slots::Momentum { velocity: zeros() },
            OptimizerKind::Adam => Slots::Adam {
                m: zeros(),
                v: zeros(),
            },
            OptimizerKind::Rmsprop => Slots::Rmsprop { sq: zeros() },
            OptimizerKind::Nrsgd => Slots::Nrsgd {
                rng: Box::new(RngStream::new(cfg.seed)),
            },
            OptimizerKind::Iagd => Slots::Iagd {
                histories: param_shapes.iter().map(|_| GradHistory::new()).collect(),
            },
        };
        Ok(Optimizer {
            cfg,
            step: 0,
            shapes: param_shapes.to_vec(),
            slots,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn kind(&self) -> OptimizerKind {
        self.cfg.kind
    }

    /// Number of completed steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn current_rate(&self) -> f64 {
        self.cfg.schedule.rate(self.step)
    }

    /// IAGD gradient history of parameter `index`.
    pub fn history(&self, index: usize) -> Option<&GradHistory> {
        match &self.slots {
            Slots::Iagd { histories } => histories.get(index),
            _ => None,
        }
    }

    /// First-moment (momentum velocity / Adam `m`) tensors, if the rule keeps them.
    pub fn first_moments(&self) -> Option<&[Tensor]> {
        match &self.slots {
            Slots::Momentum { velocity } => Some(velocity),
            Slots::Adam { m, .. } => Some(m),
            _ => None,
        }
    }

    /// Second-moment (Adam `v` / RMSprop mean square) tensors.
    pub fn second_moments(&self) -> Option<&[Tensor]> {
        match &self.slots {
            Slots::Adam { v, .. } => Some(v),
            Slots::Rmsprop { sq } => Some(sq),
            _ => None,
        }
    }

    fn check(&self, params: &[Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.shapes.len() || grads.len() != self.shapes.len() {
            return Err(Error::ShapeMsg(format!(
                "optimizer holds {} parameters, got {} params and {} grads",
                self.shapes.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((shape, p), g) in self.shapes.iter().zip(params).zip(grads) {
            if p.shape() != shape.as_slice() {
                return Err(Error::shape(shape, p.shape()));
            }
            if g.shape() != shape.as_slice() {
                return Err(Error::shape(shape, g.shape()));
            }
        }
        Ok(())
    }

    /// One update of every parameter in place. Shapes are validated before
    /// anything is modified.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        self.check(params, grads)?;
        let i = self.step;
        let lr = self.cfg.schedule.rate(i);
        match &mut self.slots {
            Slots::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    sgd_in_place(p, g, lr);
                }
            }
            Slots::Momentum { velocity } => {
                let beta = self.cfg.momentum.beta;
                for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
                    for ((x, &g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                        *v = beta * *v - lr * g;
                        *x += *v;
                    }
                }
            }
            Slots::Adam { m, v } => {
                let AdamParams {
                    beta1,
                    beta2,
                    epsilon,
                } = self.cfg.adam;
                let t = (i + 1) as i32;
                let lr_t = lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    let it = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut()));
                    for ((x, &g), (m, v)) in it {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *x -= lr_t * *m / (v.sqrt() + epsilon);
                    }
                }
            }
            Slots::Rmsprop { sq } => {
                let RmspropParams { rho, epsilon } = self.cfg.rmsprop;
                for ((p, g), s) in params.iter_mut().zip(grads).zip(sq.iter_mut()) {
                    for ((x, &g), s) in p.data_mut().iter_mut().zip(g.data()).zip(s.data_mut()) {
                        *s = rho * *s + (1.0 - rho) * g * g;
                        *x -= lr * g / (s.sqrt() + epsilon);
                    }
                }
            }
            Slots::Nrsgd { rng } => {
                let w = self.cfg.w;
                for (p, g) in params.iter_mut().zip(grads) {
                    let noise = draw_gradient_noise(rng, g)?;
                    nrsgd_in_place(p, g, &noise, w, lr);
                }
            }
            Slots::Iagd { histories } => {
                let combined = !self.cfg.every_other || (i + 1) % 2 == 0;
                let lr_prev = if i == 0 {
                    self.cfg.schedule.eta0
                } else {
                    self.cfg.schedule.rate(i - 1)
                };
                for ((p, g), hist) in params.iter_mut().zip(grads).zip(histories.iter_mut()) {
                    if combined {
                        let pred = interp::predict(hist, g, &self.cfg.guard)?;
                        iagd_in_place(p, g, &pred, lr, lr_prev);
                    } else {
                        sgd_in_place(p, g, lr);
                    }
                    hist.push(g.clone())?;
                }
            }
        }
        self.step += 1;
        Ok(())
    }

    /// NRSGD step with caller-supplied noise tensors instead of sampled ones.
    /// The internal noise stream is left untouched.
    pub fn step_with_noise(
        &mut self,
        params: &mut [Tensor],
        grads: &[Tensor],
        noise: &[Tensor],
    ) -> Result<()> {
        if self.cfg.kind != OptimizerKind::Nrsgd {
            return Err(Error::Config(format!(
                "noise injection requires nrsgd, optimizer is {}",
                self.cfg.kind
            )));
        }
        self.check(params, grads)?;
        self.check(params, noise)?;
        let lr = self.cfg.schedule.rate(self.step);
        for ((p, g), n) in params.iter_mut().zip(grads).zip(noise) {
            nrsgd_in_place(p, g, n, self.cfg.w, lr);
        }
        self.step += 1;
        Ok(())
    }
}

/// Noise matched to the gradient's own statistics: i.i.d. `N(mean, std)`
/// with the per-tensor mean and population std of `grad`.
pub fn draw_gradient_noise(rng: &mut RngStream, grad: &Tensor) -> Result<Tensor> {
    let (mean, std) = reduce_mean_std(grad);
    sample_normal(rng, grad.shape(), mean, std)
}

fn sgd_in_place(p: &mut Tensor, g: &Tensor, lr: f64) {
    for (x, &g) in p.data_mut().iter_mut().zip(g.data()) {
        *x -= lr * g;
    }
}

fn nrsgd_in_place(p: &mut Tensor, g: &Tensor, n: &Tensor, w: f64, lr: f64) {
    for ((x, &g), &n) in p.data_mut().iter_mut().zip(g.data()).zip(n.data()) {
        *x -= lr * (w * (g - n) + n);
    }
}

fn iagd_in_place(p: &mut Tensor, g: &Tensor, pred: &Tensor, lr: f64, lr_prev: f64) {
    for ((x, &g), &q) in p.data_mut().iter_mut().zip(g.data()).zip(pred.data()) {
        *x -= lr * g + lr_prev * q;
    }
}

/// `x - lr * g`.
pub fn sgd_update(x: &Tensor, g: &Tensor, lr: f64) -> Result<Tensor> {
    x.ensure_same_shape(g)?;
    let mut out = x.clone();
    sgd_in_place(&mut out, g, lr);
    Ok(out)
}

/// `x - lr * (w * (g - n) + n)`.
pub fn nrsgd_update(x: &Tensor, g: &Tensor, n: &Tensor, w: f64, lr: f64) -> Result<Tensor> {
    x.ensure_same_shape(g)?;
    x.ensure_same_shape(n)?;
    let mut out = x.clone();
    nrsgd_in_place(&mut out, g, n, w, lr);
    Ok(out)
}

/// `x - (lr * g + lr_prev * pred)`.
pub fn iagd_update(x: &Tensor, g: &Tensor, pred: &Tensor, lr: f64, lr_prev: f64) -> Result<Tensor> {
    x.ensure_same_shape(g)?;
    x.ensure_same_shape(pred)?;
    let mut out = x.clone();
    iagd_in_place(&mut out, g, pred, lr, lr_prev);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Vec<Tensor> {
        vec![Tensor::scalar(v)]
    }

    fn opt(kind: OptimizerKind, lr: f64) -> Optimizer {
        Optimizer::new(OptimizerConfig::new(kind).with_lr(lr), &[vec![1]]).unwrap()
    }

    #[test]
    fn sgd_examples() {
        let mut o = opt(OptimizerKind::Sgd, 0.1);
        let mut x = one(1.0);
        o.step(&mut x, &one(0.0)).unwrap();
        assert_eq!(x[0].data(), &[1.0]);
        o.step(&mut x, &one(2.0)).unwrap();
        assert!((x[0].data()[0] - 0.8).abs() < 1e-15);

        // f(x) = x^2, grad 2x, lr 0.4: 1 - 0.4 * 2 = 0.2
        let mut o = opt(OptimizerKind::Sgd, 0.4);
        let mut x = one(1.0);
        let g = one(2.0 * x[0].data()[0]);
        o.step(&mut x, &g).unwrap();
        assert!((x[0].data()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn nrsgd_constant_gradient_is_sgd() {
        let shape = vec![vec![3]];
        let cfg = OptimizerConfig::new(OptimizerKind::Nrsgd)
            .with_lr(0.1)
            .with_w(0.3);
        let mut nr = Optimizer::new(cfg, &shape).unwrap();
        let mut sgd = Optimizer::new(
            OptimizerConfig::new(OptimizerKind::Sgd).with_lr(0.1),
            &shape,
        )
        .unwrap();
        let g = vec![Tensor::full(&[3], 1.5)];
        let mut a = vec![Tensor::from_vec(vec![1.0, 2.0, 3.0])];
        let mut b = a.clone();
        for _ in 0..5 {
            nr.step(&mut a, &g).unwrap();
            sgd.step(&mut b, &g).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn nrsgd_injected_noise_example() {
        let cfg = OptimizerConfig::new(OptimizerKind::Nrsgd)
            .with_lr(0.1)
            .with_w(0.5);
        let mut o = Optimizer::new(cfg, &[vec![1]]).unwrap();
        let mut x = one(1.0);
        o.step_with_noise(&mut x, &one(2.0), &one(1.0)).unwrap();
        assert!((x[0].data()[0] - 0.85).abs() < 1e-15);
        // weighted-sum form: 1 - 0.1 * (0.5 * 2 + 0.5 * 1)
        let weighted = 1.0 - 0.1 * (0.5 * 2.0 + 0.5 * 1.0);
        assert!((x[0].data()[0] - weighted).abs() < 1e-15);
    }

    #[test]
    fn nrsgd_full_weight_ignores_noise() {
        let x = Tensor::from_vec(vec![0.5, -1.0]);
        let g = Tensor::from_vec(vec![2.0, 3.0]);
        let n = Tensor::from_vec(vec![100.0, -7.0]);
        let got = nrsgd_update(&x, &g, &n, 1.0, 0.01).unwrap();
        assert_eq!(got, sgd_update(&x, &g, 0.01).unwrap());
    }

    #[test]
    fn step_with_noise_requires_nrsgd() {
        let mut o = opt(OptimizerKind::Sgd, 0.1);
        let mut x = one(1.0);
        assert_eq!(
            o.step_with_noise(&mut x, &one(1.0), &one(1.0))
                .unwrap_err()
                .kind(),
            "config"
        );
    }

    #[test]
    fn iagd_first_step_doubles_sgd() {
        let mut o = opt(OptimizerKind::Iagd, 0.001);
        let mut x = one(1.0);
        o.step(&mut x, &one(3.0)).unwrap();
        assert_eq!(x[0].data()[0], 1.0 - (0.001 * 3.0 + 0.001 * 3.0));
        assert_eq!(o.history(0).unwrap().count(), 1);
    }

    #[test]
    fn iagd_scalar_fixture() {
        let mut o = opt(OptimizerKind::Iagd, 0.001);
        let mut x = one(0.0);
        for g in [1.0, 2.0, 4.0, 8.0] {
            o.step(&mut x, &one(g)).unwrap();
        }
        let before = x[0].data()[0];
        o.step(&mut x, &one(16.0)).unwrap();
        let delta = x[0].data()[0] - before;
        assert!((delta + 0.047).abs() < 1e-15, "delta {delta}");
    }

    #[test]
    fn iagd_constant_stream() {
        let mut o = opt(OptimizerKind::Iagd, 0.001);
        let mut x = one(0.0);
        for _ in 0..6 {
            let before = x[0].data()[0];
            o.step(&mut x, &one(0.7)).unwrap();
            let delta = x[0].data()[0] - before;
            assert!((delta + 2.0 * 0.001 * 0.7).abs() < 1e-15, "delta {delta}");
        }
    }

    #[test]
    fn iagd_every_other_alternates() {
        let mut cfg = OptimizerConfig::new(OptimizerKind::Iagd).with_lr(0.1);
        cfg.every_other = true;
        let mut o = Optimizer::new(cfg, &[vec![1]]).unwrap();
        let mut x = one(0.0);
        o.step(&mut x, &one(1.0)).unwrap();
        assert_eq!(x[0].data()[0], -0.1);
        o.step(&mut x, &one(1.0)).unwrap();
        assert_eq!(x[0].data()[0], -0.1 - (0.1 + 0.1));
        assert_eq!(o.history(0).unwrap().count(), 2);
    }

    #[test]
    fn iagd_uses_previous_rate() {
        let cfg = OptimizerConfig::new(OptimizerKind::Iagd)
            .with_schedule(LrSchedule::exponential(1.0, 0.5, 1.0));
        let mut o = Optimizer::new(cfg, &[vec![1]]).unwrap();
        let mut x = one(0.0);
        o.step(&mut x, &one(1.0)).unwrap();
        assert_eq!(x[0].data()[0], -2.0);
        o.step(&mut x, &one(1.0)).unwrap();
        // lr_1 = 0.5, lr_0 = 1, identity prediction
        assert_eq!(x[0].data()[0], -2.0 - 1.5);
    }

    #[test]
    fn zero_gradients_are_fixed_points() {
        for kind in OptimizerKind::ALL {
            let mut o = Optimizer::new(
                OptimizerConfig::new(kind).with_lr(0.1),
                &[vec![2, 2], vec![3]],
            )
            .unwrap();
            let init = vec![
                Tensor::from_vec(vec![1.0, -2.0, 3.0, 0.5])
                    .reshape(&[2, 2])
                    .unwrap(),
                Tensor::from_vec(vec![4.0, 5.0, -6.0]),
            ];
            let zeros: Vec<Tensor> = init.iter().map(Tensor::zeros_like).collect();
            let mut p = init.clone();
            for _ in 0..20 {
                o.step(&mut p, &zeros).unwrap();
            }
            assert_eq!(p, init, "{kind}");
            assert_eq!(o.step_count(), 20);
        }
    }

    #[test]
    fn momentum_without_beta_is_sgd() {
        let mut cfg = OptimizerConfig::new(OptimizerKind::Momentum).with_lr(0.05);
        cfg.momentum.beta = 0.0;
        let mut m = Optimizer::new(cfg, &[vec![2]]).unwrap();
        let mut s = Optimizer::new(
            OptimizerConfig::new(OptimizerKind::Sgd).with_lr(0.05),
            &[vec![2]],
        )
        .unwrap();
        let mut a = vec![Tensor::from_vec(vec![1.0, -1.0])];
        let mut b = a.clone();
        for _ in 0..50 {
            let ga = vec![a[0].map(|v| 2.0 * v + 0.1)];
            let gb = vec![b[0].map(|v| 2.0 * v + 0.1)];
            m.step(&mut a, &ga).unwrap();
            s.step(&mut b, &gb).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn adam_descends_on_parabola() {
        let mut o = opt(OptimizerKind::Adam, 0.1);
        let mut x = one(1.0);
        let mut prev = 1.0;
        for _ in 0..10 {
            let g = one(2.0 * x[0].data()[0]);
            o.step(&mut x, &g).unwrap();
            let loss = x[0].data()[0].powi(2);
            assert!(loss < prev);
            prev = loss;
        }
        // first Adam step moves by almost exactly lr
        let mut o = opt(OptimizerKind::Adam, 0.1);
        let mut x = one(1.0);
        o.step(&mut x, &one(2.0)).unwrap();
        assert!((x[0].data()[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn rmsprop_first_step() {
        // v = 0.1 * 4 = 0.4; x = 1 - 0.01 * 2 / (sqrt(0.4) + 1e-7)
        let mut o = opt(OptimizerKind::Rmsprop, 0.01);
        let mut x = one(1.0);
        o.step(&mut x, &one(2.0)).unwrap();
        let expected = 1.0 - 0.01 * 2.0 / (0.4f64.sqrt() + 1e-7);
        assert!((x[0].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn fresh_state() {
        let shapes = vec![vec![2, 3], vec![4]];
        let adam = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam), &shapes).unwrap();
        for (t, s) in adam.first_moments().unwrap().iter().zip(&shapes) {
            assert_eq!(t, &Tensor::zeros(s));
        }
        for (t, s) in adam.second_moments().unwrap().iter().zip(&shapes) {
            assert_eq!(t, &Tensor::zeros(s));
        }
        let iagd = Optimizer::new(OptimizerConfig::new(OptimizerKind::Iagd), &shapes).unwrap();
        assert_eq!(iagd.history(0).unwrap().count(), 0);
        assert_eq!(iagd.history(1).unwrap().count(), 0);
        assert_eq!(iagd.step_count(), 0);
    }

    #[test]
    fn nrsgd_seeded_construction_is_deterministic() {
        let cfg = OptimizerConfig::new(OptimizerKind::Nrsgd)
            .with_seed(11)
            .with_lr(0.1);
        let g = vec![Tensor::from_vec(vec![0.3, -1.0, 2.0, 0.0])];
        let run = || {
            let mut o = Optimizer::new(cfg.clone(), &[vec![4]]).unwrap();
            let mut x = vec![Tensor::zeros(&[4])];
            o.step(&mut x, &g).unwrap();
            x
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn invalid_configs() {
        let bad_w = OptimizerConfig::new(OptimizerKind::Nrsgd).with_w(1.5);
        assert_eq!(
            Optimizer::new(bad_w, &[vec![1]]).unwrap_err().kind(),
            "config"
        );
        let bad_lr = OptimizerConfig::new(OptimizerKind::Sgd).with_lr(-1.0);
        assert!(Optimizer::new(bad_lr, &[vec![1]]).is_err());
        let mut bad_beta = OptimizerConfig::new(OptimizerKind::Adam);
        bad_beta.adam.beta2 = 1.0;
        assert!(Optimizer::new(bad_beta, &[vec![1]]).is_err());
        assert!(Optimizer::new(OptimizerConfig::new(OptimizerKind::Sgd), &[vec![0]]).is_err());
    }

    #[test]
    fn shape_mismatch_leaves_params_untouched() {
        let mut o = Optimizer::new(
            OptimizerConfig::new(OptimizerKind::Sgd),
            &[vec![2], vec![1]],
        )
        .unwrap();
        let mut p = vec![Tensor::zeros(&[2]), Tensor::zeros(&[1])];
        let g = vec![Tensor::full(&[2], 1.0), Tensor::full(&[2], 1.0)];
        assert_eq!(o.step(&mut p, &g).unwrap_err().kind(), "shape");
        assert_eq!(p[0], Tensor::zeros(&[2]));
        assert_eq!(o.step_count(), 0);
    }

    #[test]
    fn kind_round_trips_through_names() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.name().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("adagrad".parse::<OptimizerKind>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn update_matches_weighted_sum(
                x in -1e3f64..1e3,
                g in -1e3f64..1e3,
                n in -1e3f64..1e3,
                w in 0.0f64..=1.0,
                lr in 1e-5f64..1.0,
            ) {
                let t = Tensor::scalar;
                let got = nrsgd_update(&t(x), &t(g), &t(n), w, lr).unwrap().data()[0];
                let weighted = x - lr * (w * g + (1.0 - w) * n);
                let scale = x.abs().max(lr * (g.abs() + n.abs())).max(1e-300);
                prop_assert!((got - weighted).abs() / scale <= 1e-12);
            }
        }
    }
}
