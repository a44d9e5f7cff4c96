use ngcl_core::nn::{LabeledExample, Network, NetworkShape};
use ngcl_core::rng::SeededRng;

const STEP: f64 = 1e-6;
const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely instead.
const FLOOR: f64 = 1e-6;

fn random_case(seed: u64) -> (Network, LabeledExample) {
    let mut rng = SeededRng::new(seed);
    loop {
        let input_dim = 1 + rng.below(4);
        let depth = 1 + rng.below(2);
        let hidden: Vec<usize> = (0..depth).map(|_| 1 + rng.below(4)).collect();
        let output_dim = 2 + rng.below(3);
        let shape = NetworkShape::new(input_dim, hidden, output_dim).unwrap();
        if shape.parameter_count() > 50 {
            continue;
        }
        let mut net = Network::new(shape, rng.next_u64());
        // Nonzero head so every coordinate carries gradient.
        let params: Vec<f64> = net.flatten_params().iter().map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        net.set_params(&params).unwrap();
        let features = (0..input_dim).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        return (net, LabeledExample::new(features, rng.below(output_dim)));
    }
}

fn central_difference(net: &Network, ex: &LabeledExample, i: usize) -> f64 {
    let theta = net.flatten_params();
    let mut plus = theta.clone();
    let mut minus = theta.clone();
    plus[i] += STEP;
    minus[i] -= STEP;
    let up = net.unflatten_params(&plus).unwrap().loss(ex).unwrap();
    let down = net.unflatten_params(&minus).unwrap().loss(ex).unwrap();
    (up - down) / (2.0 * STEP)
}

#[test]
fn backward_matches_central_differences_on_random_networks() {
    let mut checked = 0;
    for seed in 0..25 {
        let (net, ex) = random_case(seed);
        assert!(net.parameter_count() <= 50);
        let analytic = net.backward(&ex).unwrap();
        for (i, &a) in analytic.iter().enumerate() {
            let fd = central_difference(&net, &ex, i);
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(FLOOR);
            assert!(
                err < TOLERANCE,
                "seed {seed} coordinate {i}: analytic {a} numeric {fd} error {err}"
            );
        }
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn batch_gradient_is_mean_of_example_gradients() {
    let (net, _) = random_case(7);
    let mut rng = SeededRng::new(99);
    let batch: Vec<LabeledExample> = (0..5)
        .map(|_| {
            let f = (0..net.shape().input_dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            LabeledExample::new(f, rng.below(net.output_dim()))
        })
        .collect();
    let (loss, grad) = net.batch_gradient(&batch).unwrap();
    let mut mean = vec![0.0; net.parameter_count()];
    let mut mean_loss = 0.0;
    for ex in &batch {
        mean_loss += net.loss(ex).unwrap() / 5.0;
        for (m, g) in mean.iter_mut().zip(net.backward(ex).unwrap().iter()) {
            *m += g / 5.0;
        }
    }
    assert!((loss - mean_loss).abs() < 1e-12);
    for (a, b) in grad.iter().zip(&mean) {
        assert!((a - b).abs() < 1e-12);
    }
}
