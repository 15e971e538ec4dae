//! Flag value grammars.

use std::str::FromStr;

use sigcert_core::{Error, Result};

/// `idx:N` picks sample `N` of the dataset; anything else is a
/// comma-separated input vector.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSpec {
    Index(usize),
    Inline(Vec<f64>),
}

impl FromStr for InputSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(n) = s.strip_prefix("idx:") {
            return n
                .trim()
                .parse()
                .map(InputSpec::Index)
                .map_err(|_| Error::InvalidConfig(format!("bad input index `{s}`")));
        }
        let values = s
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::InvalidConfig(format!("bad inline input `{s}`")))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("inline input must be finite".into()));
        }
        Ok(InputSpec::Inline(values))
    }
}

/// A single radius or an inclusive `lo:hi:step` range.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsList(pub Vec<f64>);

impl FromStr for EpsList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad radius `{s}`; expected E or lo:hi:step"));
        let parts = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        let values = match parts[..] {
            [e] => vec![e],
            [lo, hi, step] => {
                if !(step > 0.0) || hi < lo {
                    return Err(bad());
                }
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                // Rounded so that `0.01 + 2 * 0.01` prints as `0.03`.
                (0..=n)
                    .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
                    .collect()
            }
            _ => return Err(bad()),
        };
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(bad());
        }
        Ok(EpsList(values))
    }
}
