//! Robustness decisions built on margin bounds.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::model::Network;
use crate::propagation::{compute_domains, min_margin, MarginBound, PropagationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Robust,
    Unknown,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Robust => "robust",
            Status::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub status: Status,
    pub label: usize,
    pub eps: f64,
    pub margins: Vec<MarginBound>,
    pub config: PropagationConfig,
    pub fallbacks: usize,
    pub wall_time_s: f64,
}

impl VerificationOutcome {
    pub fn min_margin(&self) -> f64 {
        min_margin(&self.margins)
    }
}

/// Robust iff every certified margin of the predicted label is positive.
pub fn verify_robust(
    net: &Network,
    x0: &[f64],
    eps: f64,
    cfg: &PropagationConfig,
) -> Result<VerificationOutcome> {
    let start = Instant::now();
    let label = net.predicted_label(x0)?;
    let prop = compute_domains(net, x0, eps, cfg)?;
    let margins = prop.margin_bounds(net, label)?;
    let status = if margins.iter().all(|m| m.lower > 0.0) {
        Status::Robust
    } else {
        Status::Unknown
    };
    Ok(VerificationOutcome {
        status,
        label,
        eps,
        margins,
        config: *cfg,
        fallbacks: prop.fallbacks,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Bracket search parameters for [`certified_lower_bound_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSearch {
    pub initial: f64,
    /// Verifier calls after the initial one.
    pub updates: usize,
    pub cap: f64,
}

impl Default for BoundSearch {
    fn default() -> Self {
        Self {
            initial: 0.05,
            updates: 15,
            cap: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBound {
    /// Largest radius verified, 0 when none was.
    pub epsilon: f64,
    /// Verifier calls made.
    pub iterations: usize,
    pub last_verified: f64,
    /// Smallest radius that failed, `None` if every call succeeded.
    pub first_failed: Option<f64>,
    pub wall_time_s: f64,
}

pub fn certified_lower_bound(net: &Network, x0: &[f64], cfg: &PropagationConfig) -> Result<CertifiedBound> {
    certified_lower_bound_with(net, x0, cfg, &BoundSearch::default())
}

/// Doubles from `initial` until a call fails or `cap` verifies, then
/// bisects `[lo, hi]`. Stops early once `cap` itself is verified.
pub fn certified_lower_bound_with(
    net: &Network,
    x0: &[f64],
    cfg: &PropagationConfig,
    search: &BoundSearch,
) -> Result<CertifiedBound> {
    if !(search.initial > 0.0 && search.initial <= search.cap && search.cap.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bound search needs 0 < initial <= cap, got {} and {}",
            search.initial, search.cap
        )));
    }
    let start = Instant::now();
    let (mut lo, mut hi) = (0.0_f64, None::<f64>);
    let mut eps = search.initial;
    let mut iterations = 0;
    while iterations <= search.updates {
        iterations += 1;
        if verify_robust(net, x0, eps, cfg)?.status == Status::Robust {
            lo = eps;
        } else {
            hi = Some(eps);
        }
        eps = match hi {
            None if lo >= search.cap => break,
            None => (2.0 * lo).min(search.cap),
            Some(h) => 0.5 * (lo + h),
        };
    }
    Ok(CertifiedBound {
        epsilon: lo,
        iterations,
        last_verified: lo,
        first_failed: hi,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Whether `sample` is classified correctly and verified at `eps`.
pub fn verified_correct(net: &Network, sample: &Sample, eps: f64, cfg: &PropagationConfig) -> Result<bool> {
    let out = verify_robust(net, &sample.input, eps, cfg)?;
    Ok(out.label == sample.label && out.status == Status::Robust)
}

/// Number of samples classified correctly and verified at `eps`.
pub fn count_verified(net: &Network, dataset: &[Sample], eps: f64, cfg: &PropagationConfig) -> Result<usize> {
    let verified = dataset
        .par_iter()
        .map(|s| verified_correct(net, s, eps, cfg))
        .collect::<Result<Vec<bool>>>()?;
    Ok(verified.iter().filter(|&&v| v).count())
}

/// Fraction of the dataset classified correctly and verified at `eps`.
pub fn robustness_ratio(net: &Network, dataset: &[Sample], eps: f64, cfg: &PropagationConfig) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Dataset("robustness ratio of an empty dataset".into()));
    }
    Ok(count_verified(net, dataset, eps, cfg)? as f64 / dataset.len() as f64)
}

/// `(s_over - s_act) / s_act`.
pub fn overestimation_ratio(s_over: f64, s_act: f64) -> Result<f64> {
    if !(s_act > 0.0) || !s_over.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "overestimation ratio needs a positive actual span, got {s_act}"
        )));
    }
    Ok((s_over - s_act) / s_act)
}

/// `(a - b) / b`, `None` when `b` is zero.
pub fn improvement(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| (a - b) / b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub config: PropagationConfig,
    pub bounds: Vec<f64>,
    pub mean_bound: f64,
    /// Per input, relative to the baseline config; `None` where the
    /// baseline bound is zero.
    pub improvements: Vec<Option<f64>>,
    /// Mean over inputs with a defined improvement.
    pub mean_improvement: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: usize,
    pub rows: Vec<StrategySummary>,
}

/// Certified bounds of every config on every input, with improvement
/// relative to `cfgs[baseline]`.
pub fn compare_strategies(
    net: &Network,
    inputs: &[Vec<f64>],
    cfgs: &[PropagationConfig],
    baseline: usize,
) -> Result<Comparison> {
    if cfgs.len() < 2 || baseline >= cfgs.len() {
        return Err(Error::InvalidConfig(
            "comparison needs at least two configs and a valid baseline index".into(),
        ));
    }
    let mut bounds = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        let runs = inputs
            .par_iter()
            .map(|x| certified_lower_bound(net, x, cfg))
            .collect::<Result<Vec<_>>>()?;
        bounds.push(runs);
    }
    let base: Vec<f64> = bounds[baseline].iter().map(|b| b.epsilon).collect();
    let rows = cfgs
        .iter()
        .zip(bounds)
        .map(|(cfg, runs)| {
            let eps: Vec<f64> = runs.iter().map(|b| b.epsilon).collect();
            let improvements: Vec<Option<f64>> =
                eps.iter().zip(&base).map(|(&a, &b)| improvement(a, b)).collect();
            StrategySummary {
                config: *cfg,
                mean_bound: mean(eps.iter().copied()).unwrap_or(0.0),
                mean_improvement: mean(improvements.iter().flatten().copied()),
                bounds: eps,
                improvements,
                wall_time_s: runs.iter().map(|b| b.wall_time_s).sum(),
            }
        })
        .collect();
    Ok(Comparison { baseline, rows })
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
