//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigcert_core::zoo::{self, Architecture};
use sigcert_core::{Activation, InputBox, Network};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// The 2-2-2-2 sigmoid reference network.
pub fn reference_net() -> Network {
    Network::load(fixture("ref_fnn_2x2.json")).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fnn(layers: usize, width: usize, act: Activation, inputs: usize, classes: usize, seed: u64) -> Network {
    zoo::synthesize(Architecture::Fnn { layers, width }, seed, act, &[inputs], classes).unwrap()
}

/// Random FNN with 2-4 hidden layers of width <= 16.
pub fn random_net(rng: &mut ChaCha8Rng, seed: u64) -> Network {
    let act = Activation::S_CURVES[rng.random_range(0..3)];
    let layers = rng.random_range(2..=4);
    let width = rng.random_range(2..=16);
    let inputs = rng.random_range(2..=6);
    let classes = rng.random_range(2..=4);
    fnn(layers, width, act, inputs, classes, seed)
}

pub fn random_point(rng: &mut ChaCha8Rng, dim: usize, half_width: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-half_width..=half_width)).collect()
}

pub fn sample_box(rng: &mut ChaCha8Rng, region: &InputBox) -> Vec<f64> {
    region
        .lower
        .iter()
        .zip(region.upper.iter())
        .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
        .collect()
}
