use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Interaction strength `a(r)` as a function of opinion distance.
///
/// Every registered kernel is Lipschitz, positive for `r > 0`, and
/// non-decreasing; the constructors reject parameters that would break
/// those hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// `a(r) = c` for all `r`.
    Constant(f64),
    /// `a(r) = min(c0 + slope * r, cap)`.
    AffineSaturated { c0: f64, slope: f64, cap: f64 },
}

impl Kernel {
    /// Constant kernel, checked.
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Config(format!(
                "constant kernel needs c > 0, got {c}"
            )));
        }
        Ok(Kernel::Constant(c))
    }

    /// Affine kernel saturating at `cap`, checked.
    pub fn affine_saturated(c0: f64, slope: f64, cap: f64) -> Result<Self> {
        let finite = c0.is_finite() && slope.is_finite() && cap.is_finite();
        // positivity for r > 0 needs c0 > 0, or c0 = 0 with positive slope
        let positive = c0 > 0.0 || (c0 == 0.0 && slope > 0.0);
        if !finite || !positive || slope < 0.0 || cap <= 0.0 || cap < c0 {
            return Err(Error::Config(format!(
                "affine-saturated kernel needs 0 <= c0 <= cap, slope >= 0, cap > 0, \
                 and a(r) > 0 for r > 0; got c0={c0}, slope={slope}, cap={cap}"
            )));
        }
        Ok(Kernel::AffineSaturated { c0, slope, cap })
    }

    /// Evaluate `a(r)`. Negative `r` is a domain error.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::Domain(format!("kernel argument must be >= 0, got {r}")));
        }
        Ok(self.strength(r))
    }

    /// `a(r)` without the sign check; internal hot path, callers pass distances.
    #[inline]
    pub(crate) fn strength(&self, r: f64) -> f64 {
        match *self {
            Kernel::Constant(c) => c,
            Kernel::AffineSaturated { c0, slope, cap } => (c0 + slope * r).min(cap),
        }
    }

    /// `integral of a(s) * s ds` from 0 to `r`; the building block of the
    /// energies V and W.
    pub fn integral_rs(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            Kernel::Constant(c) => 0.5 * c * r * r,
            Kernel::AffineSaturated { c0, slope, cap } => {
                if slope == 0.0 {
                    return 0.5 * c0.min(cap) * r * r;
                }
                // distance where the affine part reaches the cap
                let s_star = (cap - c0) / slope;
                if r <= s_star {
                    0.5 * c0 * r * r + slope * r * r * r / 3.0
                } else {
                    let at_star = 0.5 * c0 * s_star * s_star + slope * s_star * s_star * s_star / 3.0;
                    at_star + 0.5 * cap * (r * r - s_star * s_star)
                }
            }
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    /// Parses `"constant:1.0"` or `"affsat:c0,slope,cap"`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("kernel spec '{s}' is missing ':'")))?;
        match kind {
            "constant" => {
                let c: f64 = args
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad constant kernel value '{args}'")))?;
                Kernel::constant(c)
            }
            "affsat" => {
                let parts: Vec<&str> = args.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(Error::Config(format!(
                        "affsat kernel needs 'c0,slope,cap', got '{args}'"
                    )));
                }
                let vals: Vec<f64> = parts
                    .iter()
                    .map(|p| {
                        p.parse()
                            .map_err(|_| Error::Config(format!("bad affsat number '{p}'")))
                    })
                    .collect::<Result<_>>()?;
                Kernel::affine_saturated(vals[0], vals[1], vals[2])
            }
            other => Err(Error::Config(format!("unknown kernel kind '{other}'"))),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Kernel::Constant(c) => write!(f, "constant:{c}"),
            Kernel::AffineSaturated { c0, slope, cap } => write!(f, "affsat:{c0},{slope},{cap}"),
        }
    }
}
