//! Brute-force ground truth for small networks.
//!
//! Every value reported here is attained by a concrete input, so domains are
//! inner estimates of the actual domains and counterexample radii are upper
//! bounds of the true robust radius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, Network};
use crate::propagation::{InputBox, LayerDomains};

const MAX_GRID_DIM: usize = 3;
const REFINE_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OracleConfig {
    DenseGrid { points_per_dim: usize },
    RandomSampling { samples: usize, seed: u64 },
}

impl OracleConfig {
    fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            OracleConfig::DenseGrid { points_per_dim } => {
                if dim > MAX_GRID_DIM {
                    return Err(Error::OracleDimension(dim));
                }
                if points_per_dim < 2 {
                    return Err(Error::InvalidConfig("dense grid needs >= 2 points per dimension".into()));
                }
            }
            OracleConfig::RandomSampling { samples, .. } => {
                if samples == 0 {
                    return Err(Error::InvalidConfig("sampling oracle needs >= 1 sample".into()));
                }
            }
        }
        Ok(())
    }

    /// Calls `f` on every probe point of `region`; stops when `f` returns
    /// `false`.
    fn scan(&self, region: &InputBox, mut f: impl FnMut(&[f64]) -> bool) {
        let dim = region.lower.len();
        match *self {
            OracleConfig::DenseGrid { points_per_dim: p } => {
                let mut idx = vec![0usize; dim];
                let mut x = vec![0.0; dim];
                loop {
                    for j in 0..dim {
                        let t = idx[j] as f64 / (p - 1) as f64;
                        x[j] = region.lower[j] + (region.upper[j] - region.lower[j]) * t;
                    }
                    if !f(&x) {
                        return;
                    }
                    let mut j = 0;
                    while j < dim {
                        idx[j] += 1;
                        if idx[j] < p {
                            break;
                        }
                        idx[j] = 0;
                        j += 1;
                    }
                    if j == dim {
                        return;
                    }
                }
            }
            OracleConfig::RandomSampling { samples, seed } => {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut x = vec![0.0; dim];
                for _ in 0..samples {
                    for j in 0..dim {
                        x[j] = region.lower[j] + (region.upper[j] - region.lower[j]) * rng.random::<f64>();
                    }
                    if !f(&x) {
                        return;
                    }
                }
            }
        }
    }
}

/// Projected gradient ascent on `value` from `start` within `region`,
/// accepting only improving steps.
fn ascend(
    region: &InputBox,
    start: Vec<f64>,
    value: impl Fn(&[f64]) -> Result<f64>,
    grad: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, f64)> {
    let mut x = start;
    let mut best = value(&x)?;
    let scale = region
        .upper
        .iter()
        .zip(region.lower.iter())
        .map(|(u, l)| u - l)
        .fold(0.0, f64::max);
    let mut step = scale * 0.1;
    for _ in 0..REFINE_ITERS {
        if step < scale * 1e-14 || step == 0.0 {
            break;
        }
        let g = grad(&x)?;
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let cand: Vec<f64> = x
            .iter()
            .zip(&g)
            .enumerate()
            .map(|(j, (xi, gi))| (xi + step * gi / norm).clamp(region.lower[j], region.upper[j]))
            .collect();
        let v = value(&cand)?;
        if v > best {
            x = cand;
            best = v;
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    Ok((x, best))
}

/// Extremes of one neuron's pre-activation over the probe set, each
/// refined by local projected gradient search.
pub fn actual_neuron_domain(
    net: &Network,
    x0: &[f64],
    eps: f64,
    layer: usize,
    neuron: usize,
    ocfg: &OracleConfig,
) -> Result<(f64, f64)> {
    let region = InputBox::for_network(net, x0, eps)?;
    ocfg.validate(region.lower.len())?;
    let f = net.neuron_fn(layer, neuron)?;
    let (mut lo, mut hi) = ((f64::INFINITY, x0.to_vec()), (f64::NEG_INFINITY, x0.to_vec()));
    let mut failure = None;
    ocfg.scan(&region, |x| match f.eval(x) {
        Ok(v) => {
            if v < lo.0 {
                lo = (v, x.to_vec());
            }
            if v > hi.0 {
                hi = (v, x.to_vec());
            }
            true
        }
        Err(e) => {
            failure = Some(e);
            false
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let neg_grad = |x: &[f64]| f.gradient(x).map(|g| g.iter().map(|v| -v).collect());
    let (_, min) = ascend(&region, lo.1, |x| f.eval(x).map(|v| -v), neg_grad)?;
    let (_, max) = ascend(&region, hi.1, |x| f.eval(x), |x| f.gradient(x).map(|g| g.to_vec()))?;
    Ok((-min, max))
}

/// [`actual_neuron_domain`] for every neuron of every layer.
pub fn actual_domains(net: &Network, x0: &[f64], eps: f64, ocfg: &OracleConfig) -> Result<Vec<LayerDomains>> {
    net.layers()
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let (lower, upper): (Vec<f64>, Vec<f64>) = (0..layer.width())
                .map(|r| actual_neuron_domain(net, x0, eps, i, r, ocfg))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            Ok(LayerDomains {
                lower: lower.into(),
                upper: upper.into(),
            })
        })
        .collect()
}

/// `min_{ℓ≠label} (y_label - y_ℓ)` at `x`.
pub fn margin(net: &Network, x: &[f64], label: usize) -> Result<f64> {
    let y = net.logits(x)?;
    Ok((0..y.len())
        .filter(|&l| l != label)
        .map(|l| y[label] - y[l])
        .fold(f64::INFINITY, f64::min))
}

fn margin_gradient(net: &Network, x: &[f64], label: usize) -> Result<Vec<f64>> {
    let y = net.logits(x)?;
    let worst = (0..y.len())
        .filter(|&l| l != label)
        .min_by(|&a, &b| (y[label] - y[a]).total_cmp(&(y[label] - y[b])))
        .expect("at least two classes");
    let last = net.num_layers() - 1;
    let gc = net.neuron_gradient(last, label, x)?;
    let gw = net.neuron_gradient(last, worst, x)?;
    Ok((&gc - &gw).to_vec())
}

/// A point of the `eps` region whose margin is `<= 0`, if one is found.
pub fn find_counterexample(
    net: &Network,
    x0: &[f64],
    label: usize,
    eps: f64,
    ocfg: &OracleConfig,
) -> Result<Option<Vec<f64>>> {
    let region = InputBox::for_network(net, x0, eps)?;
    ocfg.validate(region.lower.len())?;
    let mut best = (f64::INFINITY, x0.to_vec());
    let mut failure = None;
    ocfg.scan(&region, |x| match margin(net, x, label) {
        Ok(m) => {
            if m < best.0 {
                best = (m, x.to_vec());
            }
            m > 0.0
        }
        Err(e) => {
            failure = Some(e);
            false
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if best.0 <= 0.0 {
        return Ok(Some(best.1));
    }
    let (x, neg) = ascend(
        &region,
        best.1,
        |x| margin(net, x, label).map(|m| -m),
        |x| margin_gradient(net, x, label).map(|g| g.iter().map(|v| -v).collect()),
    )?;
    Ok((neg >= 0.0).then_some(x))
}

/// Upper estimate of the true robust radius: the smallest ℓ∞ distance of a
/// counterexample found by bisecting `[0, cap]` to within `resolution`.
/// Returns `cap` when no counterexample exists there and 0 when `x0` itself
/// is not classified as `label` (the predicted label when `None`).
pub fn true_robust_radius(
    net: &Network,
    x0: &[f64],
    label: Option<usize>,
    ocfg: &OracleConfig,
    resolution: f64,
    cap: f64,
) -> Result<f64> {
    if !(resolution > 0.0 && cap > 0.0) {
        return Err(Error::InvalidConfig("resolution and cap must be positive".into()));
    }
    ocfg.validate(x0.len())?;
    let logits = net.logits(x0)?;
    let label = label.unwrap_or_else(|| argmax(logits.view()));
    if label >= logits.len() {
        return Err(Error::InvalidLabel {
            label,
            classes: logits.len(),
        });
    }
    if margin(net, x0, label)? <= 0.0 {
        return Ok(0.0);
    }
    let dist = |x: &[f64]| x.iter().zip(x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (mut lo, mut hi) = match find_counterexample(net, x0, label, cap, ocfg)? {
        None => return Ok(cap),
        Some(x) => (0.0, dist(&x)),
    };
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        match find_counterexample(net, x0, label, mid, ocfg)? {
            Some(x) => hi = dist(&x).min(mid),
            None => lo = mid,
        }
    }
    Ok(hi)
}
