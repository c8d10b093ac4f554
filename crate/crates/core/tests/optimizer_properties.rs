//! Trajectory-level properties of the optimizer suite.

use gradlab::models::{QuadraticBowl, Rosenbrock};
use gradlab::optim::{draw_gradient_noise, nrsgd_update};
use gradlab::tensor::reduce_mean_std;
use gradlab::{
    LrSchedule, Objective, Optimizer, OptimizerConfig, OptimizerKind, RngStream, Tensor,
};
use proptest::prelude::*;

fn trajectory(
    kind: OptimizerKind,
    obj: &dyn Objective,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let cfg = OptimizerConfig::new(kind).with_lr(lr).with_seed(seed);
    let mut opt = Optimizer::new(cfg, &obj.param_shapes()).unwrap();
    let mut params = obj.init_params(&mut RngStream::new(seed));
    let mut out = Vec::new();
    for _ in 0..steps {
        let (_, grads) = obj.backward(&params, None).unwrap();
        opt.step(&mut params, &grads).unwrap();
        out.push(params[0].data().to_vec());
    }
    out
}

#[test]
fn injected_gradient_noise_reproduces_sgd() {
    for obj in [
        &Rosenbrock::new() as &dyn Objective,
        &QuadraticBowl::new(3).unwrap(),
    ] {
        let shapes = obj.param_shapes();
        let mut nr = Optimizer::new(
            OptimizerConfig::new(OptimizerKind::Nrsgd)
                .with_lr(1e-3)
                .with_w(0.37),
            &shapes,
        )
        .unwrap();
        let mut sgd = Optimizer::new(
            OptimizerConfig::new(OptimizerKind::Sgd).with_lr(1e-3),
            &shapes,
        )
        .unwrap();
        let mut a = obj.init_params(&mut RngStream::new(1));
        let mut b = a.clone();
        for _ in 0..150 {
            let (_, ga) = obj.backward(&a, None).unwrap();
            let (_, gb) = obj.backward(&b, None).unwrap();
            nr.step_with_noise(&mut a, &ga, &ga).unwrap();
            sgd.step(&mut b, &gb).unwrap();
            for (x, y) in a[0].data().iter().zip(b[0].data()) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}

#[test]
fn every_optimizer_is_deterministic() {
    for kind in OptimizerKind::ALL {
        let r = Rosenbrock::new();
        let bits = |path: Vec<Vec<f64>>| -> Vec<u64> {
            path.concat().iter().map(|v| v.to_bits()).collect()
        };
        let a = trajectory(kind, &r, 50, 1e-4, 5);
        assert!(a.iter().flatten().all(|v| v.is_finite()), "{kind}");
        assert_eq!(bits(a), bits(trajectory(kind, &r, 50, 1e-4, 5)), "{kind}");
    }
}

#[test]
fn every_optimizer_descends_the_bowl() {
    let q = QuadraticBowl::new(4).unwrap();
    for kind in OptimizerKind::ALL {
        let path = trajectory(kind, &q, 200, 0.01, 3);
        let start = q.init_params(&mut RngStream::new(3));
        let loss = |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        assert!(loss(path.last().unwrap()) < loss(start[0].data()), "{kind}");
    }
}

#[test]
fn sgd_contracts_by_one_minus_lr() {
    let q = QuadraticBowl::new(2).unwrap();
    let path = trajectory(OptimizerKind::Sgd, &q, 10, 0.1, 0);
    let start = q.init_params(&mut RngStream::new(0));
    let mut expect = start[0].data().to_vec();
    for x in &path {
        expect.iter_mut().for_each(|v| *v *= 0.9);
        for (a, b) in x.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn iagd_warm_up_with_decay() {
    let sched = LrSchedule::exponential(0.01, 0.9, 1.0);
    let cfg = OptimizerConfig::new(OptimizerKind::Iagd).with_schedule(sched);
    let mut opt = Optimizer::new(cfg, &[vec![3]]).unwrap();
    let mut rng = RngStream::new(8);
    let mut x = vec![Tensor::from_vec(vec![0.1, 0.2, 0.3])];
    for i in 0..3u64 {
        let g = Tensor::from_vec((0..3).map(|_| rng.standard_normal()).collect());
        let before = x[0].clone();
        opt.step(&mut x, std::slice::from_ref(&g)).unwrap();
        let prev = if i == 0 {
            sched.rate(0)
        } else {
            sched.rate(i - 1)
        };
        for k in 0..3 {
            let want = before.data()[k] - (sched.rate(i) + prev) * g.data()[k];
            assert!((x[0].data()[k] - want).abs() < 1e-16 + 1e-15 * want.abs());
        }
    }
}

#[test]
fn gradient_noise_matches_gradient_statistics() {
    let mut rng = RngStream::new(21);
    let grad = Tensor::from_vec(
        (0..200_000)
            .map(|i| if i % 2 == 0 { -1.0 } else { 3.0 })
            .collect(),
    );
    // mean 1, population std 2
    let n = draw_gradient_noise(&mut rng, &grad).unwrap();
    let (m, s) = reduce_mean_std(&n);
    assert!((m - 1.0).abs() < 4.0 * 2.0 / (200_000f64).sqrt());
    assert!((s - 2.0).abs() < 0.04);
}

proptest! {
    #[test]
    fn nrsgd_direction_is_weighted_sum(
        x in prop::collection::vec(-10.0f64..10.0, 1..10),
        seed in any::<u64>(),
        w in 0.0f64..=1.0,
        lr in 1e-4f64..1.0,
    ) {
        let len = x.len();
        let mut rng = RngStream::new(seed);
        let g: Vec<f64> = (0..len).map(|_| rng.standard_normal()).collect();
        let n: Vec<f64> = (0..len).map(|_| rng.standard_normal()).collect();
        let (xt, gt, nt) = (Tensor::from_vec(x.clone()), Tensor::from_vec(g.clone()), Tensor::from_vec(n.clone()));
        let got = nrsgd_update(&xt, &gt, &nt, w, lr).unwrap();
        for k in 0..len {
            let weighted = x[k] - lr * (w * g[k] + (1.0 - w) * n[k]);
            prop_assert!((got.data()[k] - weighted).abs() <= 1e-12 * weighted.abs().max(1.0));
        }
    }
}
