//! Per-neuron linear relaxations of S-curved activations.
//!
//! A relaxation is a pair of lines `h_L(x) <= σ(x) <= h_U(x)` valid on the
//! neuron's over-approximated input domain `[l_over, u_over]`. The dual
//! strategy places tangent points using an under-approximated domain
//! `[l_under, u_under]` and falls back to tangents through the far endpoint
//! of the over-domain when those tangents would cut the curve. Four
//! over-domain-only baselines are provided for comparison.
//!
//! Soundness is decided analytically: for a line of slope `s`, the gap to
//! the curve can only have interior extrema where `σ'(x) = s`, i.e. at
//! `x = ±σ'^{-1}(s)` because `σ'` is even. Every line leaving this module is
//! passed through [`Line::support_lower`] / [`Line::support_upper`], which
//! sets the intercept to the exact extremal gap over those candidates.

mod strategies;

use serde::{Deserialize, Serialize};

pub use strategies::{
    refine_on_subdomain, relax, relax_baseline, relax_dual, Baseline, Strategy,
};

use crate::activation::Activation;
use crate::error::{Error, Result};

/// Intervals narrower than this use `σ'(l)` as their chord slope.
pub const DEGENERATE_WIDTH: f64 = 1e-12;
/// Slope differences within this band classify as [`Case::Mixed`].
pub const SLOPE_TIE: f64 = 1e-12;
/// A candidate tangent may cut the curve by at most this much before it is
/// rejected as unsound (any accepted deficit is removed by re-supporting).
pub const SOUND_TOLERANCE: f64 = 1e-12;
/// Residual target for the tangent-point bisection.
pub const TANGENT_RESIDUAL: f64 = 1e-10;
pub const TANGENT_MAX_ITERS: usize = 200;

/// `h(x) = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn new(slope: f64, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    pub fn tangent(act: Activation, t: f64) -> Self {
        let slope = act.derivative(t);
        Self::new(slope, act.value(t) - slope * t)
    }

    pub fn chord(act: Activation, l: f64, u: f64) -> Self {
        let slope = chord_slope_unchecked(act, l, u);
        Self::new(slope, act.value(u) - slope * u)
    }

    /// Points of `[l, u]` where `line - σ` can attain an extremum.
    fn critical_points(act: Activation, slope: f64, l: f64, u: f64) -> impl Iterator<Item = f64> {
        let t = act.inverse_derivative(slope);
        [Some(l), Some(u), t, t.map(|t| -t)]
            .into_iter()
            .flatten()
            .filter(move |&x| x >= l && x <= u)
    }

    /// `min_{x in [l,u]} σ(x) - h(x)`; nonnegative iff `h` is a lower bound.
    pub fn lower_gap(&self, act: Activation, l: f64, u: f64) -> f64 {
        Self::critical_points(act, self.slope, l, u)
            .map(|x| act.value(x) - self.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// `min_{x in [l,u]} h(x) - σ(x)`; nonnegative iff `h` is an upper bound.
    pub fn upper_gap(&self, act: Activation, l: f64, u: f64) -> f64 {
        Self::critical_points(act, self.slope, l, u)
            .map(|x| self.eval(x) - act.value(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// The highest line of this slope lying below `σ` on `[l, u]`.
    pub fn support_lower(self, act: Activation, l: f64, u: f64) -> Self {
        Self::new(self.slope, self.intercept + self.lower_gap(act, l, u))
    }

    /// The lowest line of this slope lying above `σ` on `[l, u]`.
    pub fn support_upper(self, act: Activation, l: f64, u: f64) -> Self {
        Self::new(self.slope, self.intercept - self.upper_gap(act, l, u))
    }

    pub fn is_sound_lower(&self, act: Activation, l: f64, u: f64) -> bool {
        self.lower_gap(act, l, u) >= -SOUND_TOLERANCE
    }

    pub fn is_sound_upper(&self, act: Activation, l: f64, u: f64) -> bool {
        self.upper_gap(act, l, u) >= -SOUND_TOLERANCE
    }
}

/// Over- and under-approximated input domains of one neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainPair {
    pub l_over: f64,
    pub u_over: f64,
    pub l_under: f64,
    pub u_under: f64,
}

impl DomainPair {
    /// Validates the over-domain and clamps the under-domain into it.
    pub fn new(l_over: f64, u_over: f64, l_under: f64, u_under: f64) -> Result<Self> {
        if ![l_over, u_over, l_under, u_under].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("domain pair".into()));
        }
        if l_over > u_over {
            return Err(Error::InvalidConfig(format!(
                "over-domain [{l_over}, {u_over}] is empty"
            )));
        }
        let (lo, hi) = if l_under <= u_under {
            (l_under, u_under)
        } else {
            (u_under, l_under)
        };
        Ok(Self {
            l_over,
            u_over,
            l_under: lo.clamp(l_over, u_over),
            u_under: hi.clamp(l_over, u_over),
        })
    }

    /// Pair whose under-domain equals its over-domain.
    pub fn collapsed(l: f64, u: f64) -> Result<Self> {
        Self::new(l, u, l, u)
    }
}

/// Linear lower and upper bounds for one activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronRelaxation {
    pub lower: Line,
    pub upper: Line,
    /// Set when the requested construction failed and the parallel-line
    /// relaxation was substituted.
    pub fallback: bool,
}

impl NeuronRelaxation {
    pub fn new(lower: Line, upper: Line) -> Self {
        Self {
            lower,
            upper,
            fallback: false,
        }
    }

    /// Exact relaxation of the identity.
    pub fn identity() -> Self {
        Self::new(Line::new(1.0, 0.0), Line::new(1.0, 0.0))
    }

    /// `∫_l^u (h_U - h_L) dx`, exact for lines.
    pub fn gap_integral(&self, l: f64, u: f64) -> f64 {
        let mid = 0.5 * (l + u);
        (u - l) * (self.upper.eval(mid) - self.lower.eval(mid))
    }
}

/// Slope relation between the endpoint derivatives and the chord.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// `σ'(l) < k < σ'(u)`: the chord is an upper bound.
    ChordUpper,
    /// `σ'(l) > k > σ'(u)`: the chord is a lower bound.
    ChordLower,
    /// `σ'(l) < k` and `σ'(u) < k`: the interval straddles the inflection.
    Mixed,
}

fn chord_slope_unchecked(act: Activation, l: f64, u: f64) -> f64 {
    if u - l < DEGENERATE_WIDTH {
        act.derivative(l)
    } else {
        (act.value(u) - act.value(l)) / (u - l)
    }
}

pub fn chord_slope(act: Activation, l: f64, u: f64) -> Result<f64> {
    if !l.is_finite() || !u.is_finite() {
        return Err(Error::NonFinite("chord endpoints".into()));
    }
    if l > u {
        return Err(Error::InvalidConfig(format!("empty interval [{l}, {u}]")));
    }
    Ok(chord_slope_unchecked(act, l, u))
}

pub fn classify_case(act: Activation, l: f64, u: f64) -> Result<Case> {
    let k = chord_slope(act, l, u)?;
    let dl = act.derivative(l) - k;
    let du = act.derivative(u) - k;
    if dl.abs() <= SLOPE_TIE || du.abs() <= SLOPE_TIE {
        return Ok(Case::Mixed);
    }
    match (dl < 0.0, du < 0.0) {
        (true, false) => Ok(Case::ChordUpper),
        (false, true) => Ok(Case::ChordLower),
        (true, true) => Ok(Case::Mixed),
        (false, false) => Err(Error::InternalInvariant(format!(
            "both endpoint slopes exceed the chord on [{l}, {u}] for {act}"
        ))),
    }
}

/// Residual of "the tangent at `d` passes through `(anchor, σ(anchor))`".
pub fn tangent_residual(act: Activation, anchor: f64, d: f64) -> f64 {
    act.derivative(d) * (anchor - d) + act.value(d) - act.value(anchor)
}

/// Finds `d` in `[lo, hi]` whose tangent passes through `(anchor, σ(anchor))`
/// by bisection on [`tangent_residual`].
pub fn tangent_point_through(act: Activation, anchor: f64, lo: f64, hi: f64) -> Result<f64> {
    if ![anchor, lo, hi].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("tangent search".into()));
    }
    if lo > hi {
        return Err(Error::NoSignChange { lo, hi });
    }
    let g = |d| tangent_residual(act, anchor, d);
    let (mut a, mut b) = (lo, hi);
    let (ga, gb) = (g(a), g(b));
    if ga.abs() <= TANGENT_RESIDUAL {
        return Ok(a);
    }
    if gb.abs() <= TANGENT_RESIDUAL {
        return Ok(b);
    }
    if ga.signum() == gb.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let a_negative = ga < 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..TANGENT_MAX_ITERS {
        let mid = 0.5 * (a + b);
        let gm = g(mid);
        residual = gm.abs();
        if residual <= TANGENT_RESIDUAL {
            return Ok(mid);
        }
        if (gm < 0.0) == a_negative {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
            break;
        }
    }
    Err(Error::NonConvergence { residual })
}

/// Largest violation of `h_L <= σ <= h_U` on an `n_points` uniform grid.
pub fn check_soundness_grid(
    relax: &NeuronRelaxation,
    act: Activation,
    l: f64,
    u: f64,
    n_points: usize,
) -> f64 {
    let n = n_points.max(2);
    let step = (u - l) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = if i + 1 == n { u } else { l + step * i as f64 };
            let s = act.value(x);
            (s - relax.upper.eval(x)).max(relax.lower.eval(x) - s)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const S: Activation = Activation::Sigmoid;

    #[test]
    fn chord_slope_examples() {
        assert_eq!(chord_slope(S, 0.0, 0.0).unwrap(), 0.25);
        let a = 1.7;
        assert_relative_eq!(
            chord_slope(Activation::Tanh, -a, a).unwrap(),
            a.tanh() / a,
            max_relative = 1e-14
        );
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        assert_relative_eq!(
            chord_slope(S, -2.0, 3.0).unwrap(),
            (sig(3.0) - sig(-2.0)) / 5.0,
            max_relative = 1e-14
        );
        assert!(chord_slope(S, f64::NAN, 1.0).is_err());
        assert!(chord_slope(S, 1.0, 0.0).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_case(S, -4.0, -1.0).unwrap(), Case::ChordUpper);
        assert_eq!(classify_case(S, 1.0, 4.0).unwrap(), Case::ChordLower);
        assert_eq!(classify_case(S, -3.0, 3.0).unwrap(), Case::Mixed);
        assert_eq!(classify_case(S, 0.7, 0.7).unwrap(), Case::Mixed);
    }

    #[test]
    fn tangent_through_origin_anchor() {
        // symmetric bracket around the anchor: the trivial root is the anchor
        let d = tangent_point_through(S, 0.0, -1.0, 1.0).unwrap();
        assert!(tangent_residual(S, 0.0, d).abs() <= TANGENT_RESIDUAL);
    }

    #[test]
    fn tangent_collapsed_bracket_at_anchor() {
        for act in Activation::S_CURVES {
            assert_eq!(tangent_point_through(act, 0.8, 0.8, 0.8).unwrap(), 0.8);
        }
    }

    #[test]
    fn tangent_tanh_far_anchor() {
        let d = tangent_point_through(Activation::Tanh, 5.0, -5.0, 0.0).unwrap();
        assert!(d < 0.0);
        assert!(tangent_residual(Activation::Tanh, 5.0, d).abs() <= TANGENT_RESIDUAL);
    }

    #[test]
    fn tangent_without_sign_change() {
        assert!(matches!(
            tangent_point_through(S, 3.0, 0.5, 1.0),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn support_lines_are_sound() {
        for act in Activation::S_CURVES {
            for &(l, u) in &[(-4.0, -1.0), (1.0, 4.0), (-3.0, 3.0), (-0.2, 5.0)] {
                for &s in &[0.0, 0.05, 0.2, act.max_derivative(), 2.0] {
                    let base = Line::new(s, 0.0);
                    let relax = NeuronRelaxation::new(
                        base.support_lower(act, l, u),
                        base.support_upper(act, l, u),
                    );
                    assert!(check_soundness_grid(&relax, act, l, u, 10_000) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn grid_check_detects_violation() {
        let (l, u) = (-2.0, 2.0);
        let relax = relax_baseline(Baseline::ParallelLine, S, l, u).unwrap();
        assert!(check_soundness_grid(&relax, S, l, u, 10_000) <= 1e-9);
        let mut broken = relax;
        broken.upper.intercept -= 0.1;
        assert!(check_soundness_grid(&broken, S, l, u, 10_000) >= 0.1 - 1e-9);
        let point = NeuronRelaxation::new(Line::new(0.0, S.value(1.5)), Line::new(0.0, S.value(1.5)));
        assert_eq!(check_soundness_grid(&point, S, 1.5, 1.5, 10), 0.0);
    }

    #[test]
    fn domain_pair_clamps_under_into_over() {
        let d = DomainPair::new(-1.0, 1.0, -1.0 - 1e-12, 0.5).unwrap();
        assert_eq!(d.l_under, -1.0);
        assert!(DomainPair::new(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(DomainPair::new(0.0, f64::INFINITY, 0.0, 0.0).is_err());
    }
}
