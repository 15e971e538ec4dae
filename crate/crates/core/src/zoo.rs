//! Seeded synthetic networks named by architecture strings.
//!
//! `FNN_<l>x<k>`: `l` dense hidden layers of `k` neurons.
//! `CNN_<l>-<k>`: `l` convolutional layers with `k` 3x3 filters each
//! (stride 1, valid padding). Both end in a dense identity layer producing
//! the logits. Weights and biases are `N(0, 1) / sqrt(fan_in)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::model::{GoldenVectors, Network, NetworkBuilder, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Fnn { layers: usize, width: usize },
    Cnn { layers: usize, filters: usize },
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Architecture(s.to_string());
        let (family, rest) = s.split_once('_').ok_or_else(bad)?;
        let parse = |a: &str, b: &str| -> Result<(usize, usize)> {
            let a = a.trim().parse().map_err(|_| bad())?;
            let b = b.trim().parse().map_err(|_| bad())?;
            if a == 0 || b == 0 {
                return Err(bad());
            }
            Ok((a, b))
        };
        match family.to_ascii_uppercase().as_str() {
            "FNN" => {
                let (l, k) = rest.split_once(['x', '*', '×']).ok_or_else(bad)?;
                let (layers, width) = parse(l, k)?;
                Ok(Architecture::Fnn { layers, width })
            }
            "CNN" => {
                let (l, k) = rest.split_once('-').ok_or_else(bad)?;
                let (layers, filters) = parse(l, k)?;
                Ok(Architecture::Cnn { layers, filters })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::Fnn { layers, width } => write!(f, "FNN_{layers}x{width}"),
            Architecture::Cnn { layers, filters } => write!(f, "CNN_{layers}-{filters}"),
        }
    }
}

fn normal_scaled(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * scale
}

/// Generates a deterministic network for `arch`.
///
/// FNNs flatten `input_shape`; CNNs require it to be `[h, w, c]`.
pub fn synthesize(
    arch: Architecture,
    seed: u64,
    activation: Activation,
    input_shape: &[usize],
    classes: usize,
) -> Result<Network> {
    synthesize_with_gain(arch, seed, activation, input_shape, classes, 1.0)
}

/// [`synthesize`] with every weight and bias multiplied by `gain`. The same
/// seed draws the same normals, so networks differing only in gain are
/// scaled copies of each other.
pub fn synthesize_with_gain(
    arch: Architecture,
    seed: u64,
    activation: Activation,
    input_shape: &[usize],
    classes: usize,
    gain: f64,
) -> Result<Network> {
    if classes == 0 || input_shape.is_empty() || input_shape.contains(&0) {
        return Err(Error::InvalidConfig("empty input shape or zero classes".into()));
    }
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::InvalidConfig(format!("gain {gain} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = NetworkBuilder::new(input_shape.to_vec());
    let mut width: usize = input_shape.iter().product();
    let dense = |builder: NetworkBuilder, rng: &mut ChaCha8Rng, fan_in: usize, out: usize, act| {
        let scale = gain / (fan_in as f64).sqrt();
        let w = Array2::from_shape_simple_fn((out, fan_in), || normal_scaled(rng, scale));
        let b = Array1::from_shape_simple_fn(out, || normal_scaled(rng, scale));
        builder.dense(w, b, act)
    };
    match arch {
        Architecture::Fnn { layers, width: k } => {
            for _ in 0..layers {
                builder = dense(builder, &mut rng, width, k, activation)?;
                width = k;
            }
        }
        Architecture::Cnn { layers, filters } => {
            let [mut h, mut w, mut c] = match input_shape {
                [h, w, c] => [*h, *w, *c],
                _ => return Err(Error::InvalidConfig("CNN input shape must be [h, w, c]".into())),
            };
            for _ in 0..layers {
                let fan_in = 9 * c;
                let scale = gain / (fan_in as f64).sqrt();
                let kernel =
                    Array4::from_shape_simple_fn((3, 3, c, filters), || normal_scaled(&mut rng, scale));
                let bias = Array1::from_shape_simple_fn(filters, || normal_scaled(&mut rng, scale));
                builder = builder.conv2d(kernel, bias, [1, 1], Padding::Valid, activation)?;
                (h, w, c) = (h - 2, w - 2, filters);
            }
            width = h * w * c;
        }
    }
    builder = dense(builder, &mut rng, width, classes, Activation::Identity)?;
    builder.build()
}

/// `count` inputs drawn uniformly from the declared input range (or
/// `[-1, 1]`) with their logits.
pub fn golden_vectors(net: &Network, count: usize, seed: u64) -> Result<GoldenVectors> {
    let (lo, hi) = net.input_range().unwrap_or((-1.0, 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..net.input_dim()).map(|_| rng.random_range(lo..=hi)).collect())
        .collect();
    let logits = inputs
        .iter()
        .map(|x| net.logits(x).map(|y| y.to_vec()))
        .collect::<Result<_>>()?;
    Ok(GoldenVectors { inputs, logits })
}
