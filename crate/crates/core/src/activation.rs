//! Activation functions and the calculus the relaxations need.
//!
//! Sigmoid, tanh and arctan are S-curves: strictly increasing, convex on
//! `x < 0`, concave on `x > 0`, with an even derivative. The relaxation code
//! relies on the last property: `σ'(x) = σ'(t)` iff `x = ±t`.

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Arctan,
    Identity,
}

impl Activation {
    pub const S_CURVES: [Activation; 3] = [Activation::Sigmoid, Activation::Tanh, Activation::Arctan];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Arctan => "arctan",
            Activation::Identity => "identity",
        }
    }

    pub fn is_s_curve(self) -> bool {
        !matches!(self, Activation::Identity)
    }

    #[inline]
    pub fn value(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Arctan => x.atan(),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let e = (-x.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            Activation::Tanh => {
                let t = x.abs().tanh();
                1.0 - t * t
            }
            Activation::Arctan => 1.0 / (1.0 + x * x),
            Activation::Identity => 1.0,
        }
    }

    /// Largest slope of the curve, attained at the inflection point.
    pub fn max_derivative(self) -> f64 {
        self.derivative(0.0)
    }

    /// Nonnegative `t` with `σ'(t) = slope`, or `None` when no such point
    /// exists. For S-curves the full solution set is `{t, -t}`.
    pub fn inverse_derivative(self, slope: f64) -> Option<f64> {
        if !(slope > 0.0) || !slope.is_finite() {
            return None;
        }
        let peak = self.max_derivative();
        if slope > peak {
            return None;
        }
        let t = match self {
            Activation::Sigmoid => {
                // s(1-s) = k  =>  s = (1 + sqrt(1-4k)) / 2, t = logit(s)
                let disc = (1.0 - 4.0 * slope).max(0.0).sqrt();
                let s = 0.5 * (1.0 + disc);
                let one_minus = 0.5 * (1.0 - disc);
                if one_minus <= 0.0 {
                    return None;
                }
                (s / one_minus).ln()
            }
            Activation::Tanh => {
                // 1 - tanh² = k
                let th = (1.0 - slope).max(0.0).sqrt();
                if th >= 1.0 {
                    return None;
                }
                th.atanh()
            }
            Activation::Arctan => (1.0 / slope - 1.0).max(0.0).sqrt(),
            Activation::Identity => return None,
        };
        t.is_finite().then_some(t.max(0.0))
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "arctan" | "atan" => Ok(Activation::Arctan),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::UnknownActivation(other.to_string())),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(Activation::Sigmoid.value(0.0), 0.5);
        assert_eq!(Activation::Sigmoid.derivative(0.0), 0.25);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-6;
        for act in Activation::S_CURVES {
            for &x in &[-4.0, -1.3, -0.2, 0.0, 0.7, 2.5, 6.0] {
                let fd = (act.value(x + h) - act.value(x - h)) / (2.0 * h);
                assert_relative_eq!(act.derivative(x), fd, epsilon = 1e-9, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn inverse_derivative_round_trips() {
        for act in Activation::S_CURVES {
            for &t in &[0.0, 0.1, 0.9, 2.0, 4.5] {
                let k = act.derivative(t);
                let back = act.inverse_derivative(k).unwrap();
                assert_relative_eq!(act.derivative(back), k, max_relative = 1e-9);
                assert_relative_eq!(back, t, epsilon = 1e-6);
            }
            assert!(act.inverse_derivative(act.max_derivative() * 1.01).is_none());
            assert!(act.inverse_derivative(0.0).is_none());
        }
    }

    #[test]
    fn derivative_is_even() {
        for act in Activation::S_CURVES {
            for &x in &[0.3, 1.7, 5.0] {
                assert_eq!(act.derivative(x), act.derivative(-x));
            }
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("tanh".parse::<Activation>().unwrap(), Activation::Tanh);
        assert!(matches!(
            "relu".parse::<Activation>(),
            Err(Error::UnknownActivation(_))
        ));
    }
}
