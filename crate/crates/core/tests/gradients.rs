//! Finite-difference validation of every objective's hand-written backward pass.

use gradlab::data::{synth_blobs, synth_images};
use gradlab::models::gradcheck::{check_gradients, GradCheckConfig};
use gradlab::models::{CnnConfig, Mlp, QuadraticBowl, Rosenbrock, SmallCnn, SoftmaxClassifier};
use gradlab::{Batch, Objective, RngStream, Tensor};

const TOL: f64 = 1e-5;
const POINTS: u64 = 10;

fn random_params(obj: &dyn Objective, rng: &mut RngStream, scale: f64) -> Vec<Tensor> {
    obj.param_shapes()
        .iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::new(
                s.clone(),
                (0..n).map(|_| scale * rng.uniform_in(-1.0, 1.0)).collect(),
            )
            .unwrap()
        })
        .collect()
}

fn check_at_random_points(
    obj: &dyn Objective,
    batch: Option<&Batch>,
    scale: f64,
    max_coords: usize,
) {
    let cfg = GradCheckConfig {
        max_coords,
        ..Default::default()
    };
    for seed in 0..POINTS {
        let mut rng = RngStream::new(seed);
        let params = random_params(obj, &mut rng, scale);
        let report = check_gradients(obj, &params, batch, cfg, &mut rng).unwrap();
        assert!(
            report.passes(TOL),
            "{} point {seed}: max rel error {:e}",
            obj.name(),
            report.max_rel_error()
        );
    }
}

#[test]
fn quadratic_gradient() {
    check_at_random_points(&QuadraticBowl::new(5).unwrap(), None, 3.0, 64);
}

#[test]
fn rosenbrock_gradient() {
    check_at_random_points(&Rosenbrock::new(), None, 2.0, 64);
}

#[test]
fn softmax_gradient() {
    let data = synth_blobs(4, 3, 6, 11).unwrap();
    let model = SoftmaxClassifier::new(6, 4).unwrap();
    check_at_random_points(&model, Some(&data.as_batch()), 1.0, 64);
}

#[test]
fn binary_softmax_gradient() {
    let data = synth_blobs(2, 4, 3, 12).unwrap();
    let model = SoftmaxClassifier::new(3, 2).unwrap();
    check_at_random_points(&model, Some(&data.as_batch()), 1.0, 64);
}

#[test]
fn mlp_gradient() {
    let data = synth_blobs(3, 4, 5, 13).unwrap();
    let model = Mlp::new(&[5, 7, 6, 3]).unwrap();
    check_at_random_points(&model, Some(&data.as_batch()), 1.0, 64);
}

#[test]
fn reduced_cnn_gradient() {
    // 18x18 inputs keep every coordinate probe cheap; same layer stack.
    let cfg = CnnConfig {
        input: [18, 18, 2],
        kernel: 3,
        conv1: 3,
        conv2: 4,
        fc1: 8,
        fc2: 6,
        classes: 4,
    };
    let model = SmallCnn::new(cfg).unwrap();
    let mut rng = RngStream::new(14);
    let images: Vec<f64> = (0..3 * 18 * 18 * 2).map(|_| rng.uniform()).collect();
    let batch = Batch::new(
        Tensor::new(vec![3, 18, 18, 2], images).unwrap(),
        vec![0, 3, 1],
    )
    .unwrap();
    check_at_random_points(&model, Some(&batch), 0.5, 48);
}

#[test]
fn lenet_sized_cnn_gradient() {
    let model = SmallCnn::new(CnnConfig::default()).unwrap();
    let data = synth_images(10, 1, 15).unwrap();
    let batch = data.batch(&[0, 4, 9]);
    // sampled coordinates; scale near the fan-in initialization
    check_at_random_points(&model, Some(&batch), 0.2, 12);
}
