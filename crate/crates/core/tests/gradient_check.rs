mod common;

use common::{finite_difference_gradient, naive_forward};
use dynpen::mlp::{mlp_specs, Network};
use dynpen::SeededRng;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn flatten(g: &dynpen::mlp::Gradients) -> Vec<f64> {
    g.weights.iter().zip(&g.biases).flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>()).collect()
}

fn max_relative_error(net: &Network, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let rows = inputs.len();
    let x = Array2::from_shape_fn((rows, net.input_width()), |(i, j)| inputs[i][j]);
    let t = Array2::from_shape_fn((rows, net.output_width()), |(i, j)| targets[i][j]);
    let (grads, _) = net.backward(x.view(), t.view()).unwrap();
    let analytic = flatten(&grads);
    let numeric = finite_difference_gradient(net, inputs, targets, 1e-5);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let scale = a.abs().max(n.abs());
            if scale < 1e-7 {
                (a - n).abs()
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

fn random_case(seed: u64) -> (Network, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = SeededRng::seed_from_u64(seed);
    let input = rng.gen_range(1..=8);
    let output = rng.gen_range(1..=8);
    let depth = rng.gen_range(0..=3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=8)).collect();
    let mut net = Network::init(&mlp_specs(input, &hidden, output), &mut rng).unwrap();
    // Zero biases put pre-activations exactly on the ReLU kink for some rows.
    for p in net.params_mut() {
        *p += rng.gen_range(-0.5..0.5);
    }
    let batch = rng.gen_range(1..=6);
    let xs = (0..batch).map(|_| (0..input).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let ts = (0..batch).map(|_| (0..output).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    (net, xs, ts)
}

#[test]
fn naive_forward_agrees_with_batched_forward() {
    for seed in 0..10 {
        let (net, xs, _) = random_case(seed);
        for x in &xs {
            let a = naive_forward(&net, x);
            let b = net.forward(x).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn backward_matches_finite_differences() {
    for seed in 100..120 {
        let (net, xs, ts) = random_case(seed);
        let err = max_relative_error(&net, &xs, &ts);
        assert!(err < 1e-4, "seed {seed}: max relative error {err:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn gradient_check_property(seed in 1000u64..1_000_000) {
        let (net, xs, ts) = random_case(seed);
        let err = max_relative_error(&net, &xs, &ts);
        prop_assert!(err < 1e-4, "max relative error {:e}", err);
    }
}

