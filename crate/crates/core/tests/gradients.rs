use kinn_core::nn::gradcheck::{max_relative_error, numerical_gradient};
use kinn_core::nn::{Activation, Batch, Network, NetworkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

fn check(config: NetworkConfig, seq_len: usize, rows: usize, data_seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let channels = config.input_channels;
    let inputs: Vec<f64> = (0..rows * seq_len * channels)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let targets: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut net = Network::new(config).unwrap();
    // Non-zero biases so every gate path carries gradient.
    for layer in &mut net.params.layers {
        for b in layer.bias.iter_mut() {
            *b += rng.random_range(-0.5..0.5);
        }
    }
    net.params.head_bias[0] = rng.random_range(-0.5..0.5);
    let batch = Batch::new(&inputs, seq_len, channels).unwrap();
    let (_, grads) = net.backward(&batch, &targets).unwrap();
    let numeric = numerical_gradient(&net, &batch, &targets, STEP).unwrap();
    max_relative_error(&grads.to_flat(), &numeric, FLOOR)
}

#[test]
fn small_network_matches_finite_differences() {
    let err = check(NetworkConfig::with_widths(1, &[3], 11), 3, 4, 12);
    assert!(err < TOLERANCE, "max relative error {err}");
}

#[test]
fn twenty_seeded_networks_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..20u64 {
        let layers = rng.random_range(1..=2);
        let widths: Vec<usize> = (0..layers).map(|_| rng.random_range(1..=4)).collect();
        let channels = rng.random_range(1..=2);
        let seq_len = rng.random_range(1..=4);
        let rows = rng.random_range(1..=8);
        let config = NetworkConfig::with_widths(channels, &widths, 100 + trial);
        let err = check(config.clone(), seq_len, rows, 500 + trial);
        assert!(err < TOLERANCE, "trial {trial} {config:?} T={seq_len} B={rows}: {err}");
    }
}

#[test]
fn every_activation_matches_finite_differences() {
    for act in [Activation::Sigmoid, Activation::Relu, Activation::Tanh, Activation::Identity] {
        let config = NetworkConfig {
            input_channels: 2,
            layer_widths: vec![3, 2],
            activations: vec![act, act],
            seed: 9,
        };
        let err = check(config, 4, 5, 77);
        assert!(err < TOLERANCE, "{act:?}: {err}");
    }
}
