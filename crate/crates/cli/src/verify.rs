//! Property checks run by `bench verify`. Each check compares the library
//! against a formula written out independently here.

use std::time::Instant;

use gradlab::data::synth_blobs;
use gradlab::interp::predict;
use gradlab::models::gradcheck::{check_gradients, GradCheckConfig};
use gradlab::models::{CnnConfig, Mlp, QuadraticBowl, Rosenbrock, SmallCnn, SoftmaxClassifier};
use gradlab::optim::{draw_gradient_noise, nrsgd_update, sgd_update};
use gradlab::{
    Batch, GradHistory, GuardPolicy, LrSchedule, Objective, Optimizer, OptimizerConfig,
    OptimizerKind, Result, RngStream, Tensor,
};

use crate::config::ExperimentSpec;
use crate::harness;
use crate::report::{metrics_csv, without_timing};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check {
            name,
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

type CheckFn = fn(u64) -> Result<(bool, String)>;

/// Runs every check; errors inside a check count as failures.
pub fn run_all(seed: u64) -> Vec<Check> {
    let checks: [(&'static str, CheckFn); 10] = [
        ("noise-weighted-sum", weighted_sum),
        ("noise-reduces-to-sgd", reduces_to_sgd),
        ("interpolation", interpolation),
        ("degenerate-history", degenerate_history),
        ("warm-up", warm_up),
        ("schedule", schedule),
        ("noise-statistics", noise_statistics),
        ("gradients", gradients),
        ("uniform-loss", uniform_loss),
        ("determinism", determinism),
    ];
    checks
        .iter()
        .map(|&(name, f)| match f(seed) {
            Ok((ok, detail)) => Check::new(name, ok, detail),
            Err(e) => Check::new(name, false, format!("error: {e}")),
        })
        .collect()
}

fn weighted_sum(seed: u64) -> Result<(bool, String)> {
    let mut rng = RngStream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut v = || rng.uniform_in(-10.0, 10.0);
        let (x, g, n, lr) = (v(), v(), v(), v().abs() * 0.01);
        let w = rng.uniform();
        let got = nrsgd_update(
            &Tensor::scalar(x),
            &Tensor::scalar(g),
            &Tensor::scalar(n),
            w,
            lr,
        )?;
        let expect = x - lr * (w * g + (1.0 - w) * n);
        worst = worst.max(rel_err(got.data()[0], expect));
    }
    Ok((
        worst <= 1e-12,
        format!("max relative error {worst:.2e} over 1000 tuples"),
    ))
}

fn reduces_to_sgd(_seed: u64) -> Result<(bool, String)> {
    let f = Rosenbrock::new();
    let mut a = vec![Tensor::from_vec(vec![-1.2, 1.0])];
    let mut b = a.clone();
    let cfg = OptimizerConfig::new(OptimizerKind::Nrsgd).with_lr(1e-4);
    let mut opt = Optimizer::new(cfg, &f.param_shapes())?;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (_, g) = f.backward(&a, None)?;
        opt.step_with_noise(&mut a, &g, &g)?;
        let (_, gb) = f.backward(&b, None)?;
        b[0] = sgd_update(&b[0], &gb[0], 1e-4)?;
        for (x, y) in a[0].data().iter().zip(b[0].data()) {
            worst = worst.max(rel_err(*x, *y));
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max relative deviation {worst:.2e} over 200 steps"),
    ))
}

/// Quadratic through `(h0, h1), (h1, h2), (h2, h3)` in Lagrange form, shifted
/// so that its constant term starts at the oldest node.
fn lagrange_oracle(h: [f64; 4], x: f64) -> f64 {
    let nodes = [h[0], h[1], h[2]];
    let mut p = 0.0;
    for i in 0..3 {
        let mut term = h[i + 1];
        for j in 0..3 {
            if j != i {
                term *= (x - nodes[j]) / (nodes[i] - nodes[j]);
            }
        }
        p += term;
    }
    p + h[0] - h[1]
}

fn history_of(values: &[f64]) -> Result<GradHistory> {
    let mut hist = GradHistory::new();
    for &v in values {
        hist.push(Tensor::scalar(v))?;
    }
    Ok(hist)
}

fn interpolation(seed: u64) -> Result<(bool, String)> {
    let guard = GuardPolicy::default();
    let fixture = predict(
        &history_of(&[1.0, 2.0, 4.0, 8.0])?,
        &Tensor::scalar(16.0),
        &guard,
    )?
    .data()[0];
    let mut rng = RngStream::new(seed);
    let mut worst = 0.0f64;
    let mut tried = 0;
    while tried < 1000 {
        let h = [0; 4].map(|_| rng.uniform_in(-5.0, 5.0));
        // keep the nodes well separated so the oracle itself is well conditioned
        if (h[1] - h[0]).abs() < 0.1 || (h[2] - h[1]).abs() < 0.1 || (h[2] - h[0]).abs() < 0.1 {
            continue;
        }
        tried += 1;
        let x = rng.uniform_in(-5.0, 5.0);
        let got = predict(&history_of(&h)?, &Tensor::scalar(x), &guard)?.data()[0];
        let expect = lagrange_oracle(h, x);
        worst = worst.max((got - expect).abs() / expect.abs().max(1.0));
    }
    let ok = fixture == 31.0 && worst <= 1e-10;
    Ok((
        ok,
        format!("fixture {fixture}, max error {worst:.2e} over 1000 histories"),
    ))
}

fn degenerate_history(_seed: u64) -> Result<(bool, String)> {
    let f = QuadraticBowl::new(3)?;
    let g = vec![Tensor::from_vec(vec![0.5, -0.25, 1.0])];
    let mut params = vec![Tensor::from_vec(vec![1.0, 2.0, 3.0])];
    let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Iagd), &f.param_shapes())?;
    let mut identity = true;
    for _ in 0..1000 {
        if let Some(h) = opt.history(0) {
            identity &= predict(h, &g[0], &GuardPolicy::default())? == g[0];
        }
        opt.step(&mut params, &g)?;
    }
    let finite = params[0].is_finite();
    Ok((
        finite && identity,
        format!("finite={finite}, identity prediction={identity} over 1000 steps"),
    ))
}

fn warm_up(_seed: u64) -> Result<(bool, String)> {
    let guard = GuardPolicy::default();
    let x = Tensor::scalar(7.0);
    let mut ok = true;
    for n in 0..3 {
        ok &= predict(&history_of(&[1.0, 3.0][..n.min(2)])?, &x, &guard)? == x;
    }
    let first = predict(&history_of(&[1.0, 3.0, 4.0])?, &x, &guard)?.data()[0];
    // h0 + (h2 - h1) / (h1 - h0) * (x - h0)
    let expect = 1.0 + (4.0 - 3.0) / (3.0 - 1.0) * (7.0 - 1.0);
    ok &= (first - expect).abs() < 1e-12;
    Ok((
        ok,
        format!("identity below 3 entries, first-order {first} vs {expect}"),
    ))
}

fn schedule(_seed: u64) -> Result<(bool, String)> {
    let halving = LrSchedule::exponential(0.001, 0.5, 1.0);
    let at2 = halving.rate(2);
    let mut ok = (at2 - 0.00025).abs() < 1e-15 && halving.rate(0) == 0.001;
    let decay = LrSchedule::exponential(0.01, 0.99, 100.0);
    ok &= decay.rate(0) == 0.01;
    ok &= (0..10_000).all(|i| decay.rate(i + 1) <= decay.rate(i));
    Ok((ok, format!("rate(2) = {at2:e}, monotone over 10^4 steps")))
}

fn noise_statistics(seed: u64) -> Result<(bool, String)> {
    const N: usize = 100_000;
    // alternating 2, 4 has mean 3 and population std 1
    let grad = Tensor::from_vec((0..N).map(|i| if i % 2 == 0 { 2.0 } else { 4.0 }).collect());
    let noise = draw_gradient_noise(&mut RngStream::new(seed), &grad)?;
    let (mean, std) = noise.mean_std();
    let ok = (mean - 3.0).abs() <= 4.0 / (N as f64).sqrt() && (std - 1.0).abs() <= 0.02;
    Ok((ok, format!("sample mean {mean:.4}, std {std:.4}")))
}

fn gradients(seed: u64) -> Result<(bool, String)> {
    let blobs = synth_blobs(3, 4, 5, seed)?;
    let blob_batch = blobs.as_batch();
    let mut rng = RngStream::new(seed);
    let images = Tensor::new(
        vec![3, 14, 14, 2],
        (0..1176).map(|_| rng.uniform()).collect(),
    )?;
    let image_batch = Batch::new(images, vec![0, 2, 1])?;
    let cnn = SmallCnn::new(CnnConfig {
        input: [14, 14, 2],
        kernel: 3,
        conv1: 3,
        conv2: 4,
        fc1: 6,
        fc2: 5,
        classes: 3,
    })?;
    let cases: Vec<(Box<dyn Objective>, Option<&Batch>)> = vec![
        (Box::new(QuadraticBowl::new(4)?), None),
        (Box::new(Rosenbrock::new()), None),
        (Box::new(SoftmaxClassifier::new(5, 3)?), Some(&blob_batch)),
        (Box::new(Mlp::new(&[5, 6, 3])?), Some(&blob_batch)),
        (Box::new(cnn), Some(&image_batch)),
    ];
    let mut worst = 0.0f64;
    for (obj, batch) in &cases {
        for _ in 0..10 {
            let params = obj.init_params(&mut rng);
            let report = check_gradients(
                obj.as_ref(),
                &params,
                *batch,
                GradCheckConfig::default(),
                &mut rng,
            )?;
            worst = worst.max(report.max_rel_error());
        }
    }
    Ok((
        worst < 1e-5,
        format!("max relative error {worst:.2e} over 5 objectives x 10 points"),
    ))
}

fn uniform_loss(_seed: u64) -> Result<(bool, String)> {
    let clf = SoftmaxClassifier::new(4, 10)?;
    let inputs = Tensor::new(vec![10, 4], (0..40).map(|i| i as f64 * 0.1).collect())?;
    let batch = Batch::new(inputs, (0..10).collect())?;
    let loss = clf.forward(&clf.zero_params(), Some(&batch))?.loss;
    let ok = (loss - 10f64.ln()).abs() < 1e-4;
    Ok((ok, format!("loss {loss:.6} vs ln 10 = {:.6}", 10f64.ln())))
}

fn determinism(seed: u64) -> Result<(bool, String)> {
    let spec = ExperimentSpec::from_toml(&format!(
        "seed = {seed}\nepochs = 2\nbatch_size = 8\n[model]\nkind = \"mlp\"\nhidden = [6]\n\
         [data]\nsource = \"blobs\"\nper_class = 20\nclasses = 3\ndim = 4\n[lr]\neta0 = 0.05"
    ))?;
    let start = Instant::now();
    let a = metrics_csv(&harness::run(&spec)?);
    let b = metrics_csv(&harness::run(&spec)?);
    let ok = without_timing(&a) == without_timing(&b);
    Ok((
        ok,
        format!(
            "two runs of all optimizers in {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    ))
}
