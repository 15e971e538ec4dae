use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    check_soundness_grid, classify_case, tangent_point_through, Case, DomainPair, Line,
    NeuronRelaxation,
};
use crate::activation::Activation;
use crate::error::{Error, Result};

/// Over-domain-only relaxations used as comparison baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Baseline {
    /// Tangents at the interval endpoints, chord on the side where it is sound.
    EndpointTangent,
    /// Per side, the smallest-area line among the endpoint-tangent,
    /// parallel-tangent and chord constructions.
    MinimalArea,
    /// Both lines take the chord slope and touch the curve.
    ParallelLine,
    /// Tangent at the interval midpoint on the side(s) where a tangent is used.
    MidpointTangent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Tangent points guided by the under-approximated domain.
    Dual,
    Baseline(Baseline),
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Dual,
        Strategy::Baseline(Baseline::EndpointTangent),
        Strategy::Baseline(Baseline::MinimalArea),
        Strategy::Baseline(Baseline::ParallelLine),
        Strategy::Baseline(Baseline::MidpointTangent),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dual => "dual",
            Strategy::Baseline(Baseline::EndpointTangent) => "endpoint",
            Strategy::Baseline(Baseline::MinimalArea) => "minarea",
            Strategy::Baseline(Baseline::ParallelLine) => "parallel",
            Strategy::Baseline(Baseline::MidpointTangent) => "midpoint",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Branch {
    Chord,
    /// Tangent at the guide point.
    Guided,
    /// Tangent through the opposite over-domain endpoint.
    Through,
}

/// Case-based construction shared by the dual, endpoint and midpoint
/// strategies; they differ only in the tangent guide points.
pub(crate) fn guided(
    act: Activation,
    l: f64,
    u: f64,
    lower_guide: f64,
    upper_guide: f64,
) -> Result<(NeuronRelaxation, [Branch; 2])> {
    let case = classify_case(act, l, u)?;

    let lower_tangent = || -> Result<(Line, Branch)> {
        let candidate = Line::tangent(act, lower_guide);
        if candidate.is_sound_lower(act, l, u) {
            return Ok((candidate, Branch::Guided));
        }
        // tangent point on the convex side whose line meets (u, σ(u))
        let d = tangent_point_through(act, u, l, u.min(0.0))?;
        Ok((Line::tangent(act, d), Branch::Through))
    };
    let upper_tangent = || -> Result<(Line, Branch)> {
        let candidate = Line::tangent(act, upper_guide);
        if candidate.is_sound_upper(act, l, u) {
            return Ok((candidate, Branch::Guided));
        }
        let d = tangent_point_through(act, l, l.max(0.0), u)?;
        Ok((Line::tangent(act, d), Branch::Through))
    };

    let ((lower, lb), (upper, ub)) = match case {
        Case::ChordUpper => (lower_tangent()?, (Line::chord(act, l, u), Branch::Chord)),
        Case::ChordLower => ((Line::chord(act, l, u), Branch::Chord), upper_tangent()?),
        Case::Mixed => (lower_tangent()?, upper_tangent()?),
    };
    Ok((finalize(act, l, u, lower, upper), [lb, ub]))
}

fn finalize(act: Activation, l: f64, u: f64, lower: Line, upper: Line) -> NeuronRelaxation {
    let relax = NeuronRelaxation::new(lower.support_lower(act, l, u), upper.support_upper(act, l, u));
    debug_assert!(
        check_soundness_grid(&relax, act, l, u, 1000) <= 1e-9,
        "unsound relaxation of {act} on [{l}, {u}]: {relax:?}"
    );
    relax
}

fn parallel(act: Activation, l: f64, u: f64) -> NeuronRelaxation {
    let chord = Line::chord(act, l, u);
    finalize(act, l, u, chord, chord)
}

fn fallback(act: Activation, l: f64, u: f64, err: &Error) -> NeuronRelaxation {
    tracing::debug!(%act, l, u, %err, "relaxation fell back to parallel lines");
    NeuronRelaxation {
        fallback: true,
        ..parallel(act, l, u)
    }
}

fn minimal_area(act: Activation, l: f64, u: f64) -> NeuronRelaxation {
    let mid = 0.5 * (l + u);
    let mut lowers = vec![
        Line::chord(act, l, u),
        Line::tangent(act, l),
        Line::tangent(act, u),
    ];
    let mut uppers = lowers.clone();
    if let Ok((endpoint, _)) = guided(act, l, u, l, u) {
        lowers.push(endpoint.lower);
        uppers.push(endpoint.upper);
    }
    let lower = lowers
        .into_iter()
        .map(|line| line.support_lower(act, l, u))
        .max_by(|a, b| a.eval(mid).total_cmp(&b.eval(mid)))
        .expect("non-empty family");
    let upper = uppers
        .into_iter()
        .map(|line| line.support_upper(act, l, u))
        .min_by(|a, b| a.eval(mid).total_cmp(&b.eval(mid)))
        .expect("non-empty family");
    finalize(act, l, u, lower, upper)
}

/// Over-domain-only relaxation of `act` on `[l, u]`.
pub fn relax_baseline(strategy: Baseline, act: Activation, l: f64, u: f64) -> Result<NeuronRelaxation> {
    super::chord_slope(act, l, u)?;
    if !act.is_s_curve() {
        return Ok(NeuronRelaxation::identity());
    }
    let built = match strategy {
        Baseline::EndpointTangent => guided(act, l, u, l, u).map(|(r, _)| r),
        Baseline::MidpointTangent => {
            let mid = 0.5 * (l + u);
            guided(act, l, u, mid, mid).map(|(r, _)| r)
        }
        Baseline::ParallelLine => Ok(parallel(act, l, u)),
        Baseline::MinimalArea => Ok(minimal_area(act, l, u)),
    };
    Ok(built.unwrap_or_else(|err| fallback(act, l, u, &err)))
}

/// Dual-approximation relaxation: sound on `[l_over, u_over]`, tangent
/// points taken from `[l_under, u_under]` whenever those tangents are sound.
pub fn relax_dual(act: Activation, dom: &DomainPair) -> NeuronRelaxation {
    if !act.is_s_curve() {
        return NeuronRelaxation::identity();
    }
    let (l, u) = (dom.l_over, dom.u_over);
    guided(act, l, u, dom.l_under, dom.u_under)
        .map(|(r, _)| r)
        .unwrap_or_else(|err| fallback(act, l, u, &err))
}

pub fn relax(strategy: Strategy, act: Activation, dom: &DomainPair) -> NeuronRelaxation {
    match strategy {
        Strategy::Dual => relax_dual(act, dom),
        Strategy::Baseline(b) => relax_baseline(b, act, dom.l_over, dom.u_over)
            .expect("DomainPair guarantees a valid interval"),
    }
}

/// Tightens `parent`, a relaxation valid on a wider domain, to the narrower
/// domain `sub`. Each side is the strategy recomputed on `sub` when that line
/// dominates the parent's on `sub`, and otherwise the parent's line shifted
/// toward the curve until it touches. The result is sound on `sub` and
/// never looser than `parent` there.
pub fn refine_on_subdomain(
    strategy: Strategy,
    act: Activation,
    parent: &NeuronRelaxation,
    sub: &DomainPair,
) -> NeuronRelaxation {
    let (l, u) = (sub.l_over, sub.u_over);
    let fresh = relax(strategy, act, sub);
    let lower = if fresh.lower.eval(l) >= parent.lower.eval(l) && fresh.lower.eval(u) >= parent.lower.eval(u) {
        fresh.lower
    } else {
        parent.lower.support_lower(act, l, u)
    };
    let upper = if fresh.upper.eval(l) <= parent.upper.eval(l) && fresh.upper.eval(u) <= parent.upper.eval(u) {
        fresh.upper
    } else {
        parent.upper.support_upper(act, l, u)
    };
    NeuronRelaxation::new(lower, upper)
}

#[cfg(test)]
mod tests {
    use super::super::check_soundness_grid;
    use super::*;

    const S: Activation = Activation::Sigmoid;

    fn trapezoid_gap(r: &NeuronRelaxation, l: f64, u: f64, n: usize) -> f64 {
        let h = (u - l) / (n - 1) as f64;
        let f = |x: f64| r.upper.eval(x) - r.lower.eval(x);
        let inner: f64 = (1..n - 1).map(|i| f(l + h * i as f64)).sum();
        h * (0.5 * (f(l) + f(u)) + inner)
    }

    #[test]
    fn dual_case_one_uses_chord_and_under_tangent() {
        let dom = DomainPair::new(-4.0, -1.0, -3.0, -2.0).unwrap();
        let (r, branches) = guided(S, dom.l_over, dom.u_over, dom.l_under, dom.u_under).unwrap();
        assert_eq!(branches, [Branch::Guided, Branch::Chord]);
        let chord = Line::chord(S, -4.0, -1.0);
        assert!((r.upper.slope - chord.slope).abs() < 1e-15);
        assert!((r.lower.slope - S.derivative(-3.0)).abs() < 1e-15);
        assert!(check_soundness_grid(&r, S, -4.0, -1.0, 10_000) <= 1e-9);
        assert_eq!(relax_dual(S, &dom), r);
    }

    #[test]
    fn dual_case_three_beats_parallel_on_narrow_under_domain() {
        let dom = DomainPair::new(-3.0, 3.0, -0.5, 0.5).unwrap();
        let dual = relax_dual(S, &dom);
        let par = relax_baseline(Baseline::ParallelLine, S, -3.0, 3.0).unwrap();
        assert!(check_soundness_grid(&dual, S, -3.0, 3.0, 10_000) <= 1e-9);
        assert!(check_soundness_grid(&par, S, -3.0, 3.0, 10_000) <= 1e-9);
        let a_dual = trapezoid_gap(&dual, -3.0, 3.0, 10_000);
        let a_par = trapezoid_gap(&par, -3.0, 3.0, 10_000);
        assert!(a_dual <= a_par, "{a_dual} > {a_par}");
    }

    #[test]
    fn collapsed_dual_selects_endpoint_branches() {
        for act in Activation::S_CURVES {
            for &(l, u) in &[(-4.0, -1.0), (1.0, 4.0), (-3.0, 3.0), (-5.0, 0.4), (-0.3, 6.0)] {
                let dual = guided(act, l, u, l, u).unwrap();
                let dom = DomainPair::collapsed(l, u).unwrap();
                assert_eq!(relax_dual(act, &dom), dual.0);
                assert_eq!(relax_baseline(Baseline::EndpointTangent, act, l, u).unwrap(), dual.0);
            }
        }
    }

    #[test]
    fn parallel_lines_share_chord_slope() {
        let r = relax_baseline(Baseline::ParallelLine, S, -2.0, 2.0).unwrap();
        let k = super::super::chord_slope(S, -2.0, 2.0).unwrap();
        assert_eq!(r.lower.slope, k);
        assert_eq!(r.upper.slope, k);
        assert!(check_soundness_grid(&r, S, -2.0, 2.0, 10_000) <= 1e-9);
    }

    #[test]
    fn endpoint_concave_uses_tangent_above_and_chord_below() {
        let r = relax_baseline(Baseline::EndpointTangent, S, 1.0, 4.0).unwrap();
        assert!((r.upper.slope - S.derivative(4.0)).abs() < 1e-15);
        assert!((r.lower.slope - Line::chord(S, 1.0, 4.0).slope).abs() < 1e-15);
        assert!(check_soundness_grid(&r, S, 1.0, 4.0, 10_000) <= 1e-9);
    }

    #[test]
    fn degenerate_interval_pins_value() {
        let a = 0.37;
        for act in Activation::S_CURVES {
            for strategy in Strategy::ALL {
                let r = relax(strategy, act, &DomainPair::collapsed(a, a).unwrap());
                assert!((r.lower.eval(a) - act.value(a)).abs() < 1e-15);
                assert!((r.upper.eval(a) - act.value(a)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn minimal_area_no_worse_than_members() {
        for act in Activation::S_CURVES {
            for &(l, u) in &[(-4.0, -1.0), (1.0, 4.0), (-3.0, 3.0), (-5.0, 0.4)] {
                let m = relax_baseline(Baseline::MinimalArea, act, l, u).unwrap();
                for b in [Baseline::EndpointTangent, Baseline::ParallelLine] {
                    let other = relax_baseline(b, act, l, u).unwrap();
                    assert!(m.gap_integral(l, u) <= other.gap_integral(l, u) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_is_exact() {
        let r = relax_dual(Activation::Identity, &DomainPair::collapsed(-1.0, 1.0).unwrap());
        assert_eq!(r, NeuronRelaxation::identity());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("newise".parse::<Strategy>().is_err());
    }
}
