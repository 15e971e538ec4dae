//! Under-approximated neuron domains.
//!
//! Every bound recorded here is the pre-activation of a concrete input
//! inside the perturbation region, so `[lower, upper]` is always contained
//! in the neuron's actual reachable range. The witnesses are kept and can be
//! re-evaluated.

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Network;
use crate::propagation::InputBox;

/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 1000;
/// Default gradient step as a fraction of the radius.
pub const DEFAULT_STEP_FRACTION: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum UnderMethod {
    None,
    MonteCarlo { samples: usize, seed: u64 },
    Gradient { step_fraction: f64 },
}

impl fmt::Display for UnderMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnderMethod::None => f.write_str("none"),
            UnderMethod::MonteCarlo { samples, seed } => write!(f, "mc:{samples}:seed={seed}"),
            UnderMethod::Gradient { step_fraction } => write!(f, "grad:{step_fraction}"),
        }
    }
}

impl FromStr for UnderMethod {
    type Err = Error;

    /// `none`, `mc:N[:seed=S]` or `grad[:A]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidConfig(format!("bad under-approximation `{s}`: {why}"));
        let mut parts = s.trim().split(':');
        match parts.next().unwrap_or_default() {
            "none" if parts.next().is_none() => Ok(UnderMethod::None),
            "mc" => {
                let samples = match parts.next() {
                    Some(n) => n.parse().map_err(|_| bad("sample count"))?,
                    None => DEFAULT_SAMPLES,
                };
                let seed = match parts.next() {
                    Some(seed) => seed
                        .strip_prefix("seed=")
                        .unwrap_or(seed)
                        .parse()
                        .map_err(|_| bad("seed"))?,
                    None => 0,
                };
                if samples == 0 || parts.next().is_some() {
                    return Err(bad("expected mc:N:seed=S with N >= 1"));
                }
                Ok(UnderMethod::MonteCarlo { samples, seed })
            }
            "grad" => {
                let step_fraction = match parts.next() {
                    Some(a) => a.parse().map_err(|_| bad("step fraction"))?,
                    None => DEFAULT_STEP_FRACTION,
                };
                if !(0.0..=1.0).contains(&step_fraction) || parts.next().is_some() {
                    return Err(bad("step fraction must be in [0, 1]"));
                }
                Ok(UnderMethod::Gradient { step_fraction })
            }
            _ => Err(bad("expected none, mc or grad")),
        }
    }
}

/// Per hidden layer, per neuron: `[lower, upper]` attained by witnesses.
#[derive(Debug, Clone, PartialEq)]
pub struct UnderDomains {
    pub lower: Vec<Array1<f64>>,
    pub upper: Vec<Array1<f64>>,
    pub method: UnderMethod,
    witnesses: Vec<Array1<f64>>,
    lower_witness: Vec<Vec<usize>>,
    upper_witness: Vec<Vec<usize>>,
}

impl UnderDomains {
    fn empty(net: &Network, method: UnderMethod) -> Self {
        let widths: Vec<usize> = net.layers()[..net.num_hidden()].iter().map(|l| l.width()).collect();
        Self {
            lower: widths.iter().map(|&w| Array1::from_elem(w, f64::INFINITY)).collect(),
            upper: widths.iter().map(|&w| Array1::from_elem(w, f64::NEG_INFINITY)).collect(),
            method,
            witnesses: Vec::new(),
            lower_witness: widths.iter().map(|&w| vec![0; w]).collect(),
            upper_witness: widths.iter().map(|&w| vec![0; w]).collect(),
        }
    }

    /// Records `value` for `(layer, neuron)` attained at witness `w`.
    fn record(&mut self, layer: usize, neuron: usize, value: f64, w: usize) {
        if value < self.lower[layer][neuron] {
            self.lower[layer][neuron] = value;
            self.lower_witness[layer][neuron] = w;
        }
        if value > self.upper[layer][neuron] {
            self.upper[layer][neuron] = value;
            self.upper_witness[layer][neuron] = w;
        }
    }

    pub fn num_layers(&self) -> usize {
        self.lower.len()
    }

    /// Inputs attaining the lower and upper bound of `(layer, neuron)`.
    pub fn witnesses(&self, layer: usize, neuron: usize) -> (&[f64], &[f64]) {
        let lo = &self.witnesses[self.lower_witness[layer][neuron]];
        let hi = &self.witnesses[self.upper_witness[layer][neuron]];
        (
            lo.as_slice().expect("contiguous"),
            hi.as_slice().expect("contiguous"),
        )
    }

    /// Drops witnesses no bound refers to and renumbers the rest.
    fn compact(&mut self) {
        let mut remap = vec![usize::MAX; self.witnesses.len()];
        let mut kept = Vec::new();
        for idx in self.lower_witness.iter_mut().chain(self.upper_witness.iter_mut()).flatten() {
            if remap[*idx] == usize::MAX {
                remap[*idx] = kept.len();
                kept.push(*idx);
            }
            *idx = remap[*idx];
        }
        let old = std::mem::take(&mut self.witnesses);
        let mut old: Vec<Option<Array1<f64>>> = old.into_iter().map(Some).collect();
        self.witnesses = kept.into_iter().map(|i| old[i].take().expect("unique")).collect();
    }
}

/// Uniform samples from the region, with `x0` always included as sample 0.
/// Samples are drawn sequentially from one ChaCha stream, so a run with more
/// samples sees a superset of the inputs of a run with fewer.
pub fn monte_carlo_domains(
    net: &Network,
    x0: &[f64],
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<UnderDomains> {
    let region = InputBox::for_network(net, x0, eps)?;
    monte_carlo_in(net, x0, &region, samples, seed)
}

pub(crate) fn monte_carlo_in(
    net: &Network,
    x0: &[f64],
    region: &InputBox,
    samples: usize,
    seed: u64,
) -> Result<UnderDomains> {
    if samples == 0 {
        return Err(Error::InvalidConfig("Monte Carlo needs at least one sample".into()));
    }
    let mut out = UnderDomains::empty(net, UnderMethod::MonteCarlo { samples, seed });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = net.num_hidden();
    for p in 0..samples {
        let x: Array1<f64> = if p == 0 {
            Array1::from(x0.to_vec())
        } else {
            region
                .lower
                .iter()
                .zip(region.upper.iter())
                .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect()
        };
        if hidden > 0 {
            let fwd = net.forward(x.as_slice().expect("contiguous"))?;
            for (i, values) in fwd.trace[..hidden].iter().enumerate() {
                for (r, &v) in values.pre.iter().enumerate() {
                    out.record(i, r, v, p);
                }
            }
        }
        out.witnesses.push(x);
    }
    out.compact();
    Ok(out)
}

/// One signed-gradient step of `step_fraction * eps` in each direction per
/// neuron; the neuron's bounds are the min/max over the two stepped inputs
/// and `x0`.
pub fn gradient_domains(net: &Network, x0: &[f64], eps: f64, step_fraction: f64) -> Result<UnderDomains> {
    let region = InputBox::for_network(net, x0, eps)?;
    gradient_in(net, x0, eps, &region, step_fraction)
}

pub(crate) fn gradient_in(
    net: &Network,
    x0: &[f64],
    eps: f64,
    region: &InputBox,
    step_fraction: f64,
) -> Result<UnderDomains> {
    if !(0.0..=1.0).contains(&step_fraction) {
        return Err(Error::InvalidConfig(format!(
            "step fraction {step_fraction} outside [0, 1]"
        )));
    }
    let mut out = UnderDomains::empty(net, UnderMethod::Gradient { step_fraction });
    out.witnesses.push(Array1::from(x0.to_vec()));
    let step = step_fraction * eps;
    for i in 0..net.num_hidden() {
        let at_x0 = net.layer_pre_activations(i, x0)?;
        for r in 0..net.layers()[i].width() {
            out.record(i, r, at_x0[r], 0);
            let grad = net.neuron_gradient(i, r, x0)?;
            for dir in [-1.0, 1.0] {
                let x: Array1<f64> = x0
                    .iter()
                    .zip(grad.iter())
                    .enumerate()
                    .map(|(j, (&x, &g))| {
                        let eta = if g > 0.0 { 1.0 } else if g < 0.0 { -1.0 } else { 0.0 };
                        (x + dir * step * eta).clamp(region.lower[j], region.upper[j])
                    })
                    .collect();
                let v = net.layer_pre_activations(i, x.as_slice().expect("contiguous"))?[r];
                out.witnesses.push(x);
                out.record(i, r, v, out.witnesses.len() - 1);
            }
        }
    }
    out.compact();
    Ok(out)
}

pub fn compute(net: &Network, x0: &[f64], region: &InputBox, eps: f64, method: UnderMethod) -> Result<Option<UnderDomains>> {
    match method {
        UnderMethod::None => Ok(None),
        UnderMethod::MonteCarlo { samples, seed } => monte_carlo_in(net, x0, region, samples, seed).map(Some),
        UnderMethod::Gradient { step_fraction } => gradient_in(net, x0, eps, region, step_fraction).map(Some),
    }
}
