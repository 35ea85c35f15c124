//! Elementwise thresholding operators.
//!
//! * hard: `x` if `|x| > zeta`, else `0` (the boundary maps to zero).
//! * soft: `sign(x) * max(|x| - zeta, 0)`, the prox of the l1 norm.
//! * firm: `sign(x) * min(upsilon * max(|x| - zeta, 0) / (upsilon - 1), |x|)`,
//!   the prox of the minimax concave penalty (MCP). Zero below `zeta`, a linear
//!   ramp on `[zeta, upsilon * zeta]`, identity beyond.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::DenseMatrix;

/// Threshold and concavity of the minimax concave penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McpParams {
    pub zeta: f64,
    pub upsilon: f64,
}

impl McpParams {
    pub fn new(zeta: f64, upsilon: f64) -> Result<Self> {
        let p = McpParams { zeta, upsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta >= 0.0) || !self.zeta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "zeta must be finite and >= 0, got {}",
                self.zeta
            )));
        }
        if !(self.upsilon > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "upsilon must be > 1, got {}",
                self.upsilon
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn hard_threshold(x: f64, zeta: f64) -> f64 {
    if x.abs() > zeta {
        x
    } else {
        0.0
    }
}

#[inline]
pub fn soft_threshold(x: f64, zeta: f64) -> f64 {
    let m = x.abs() - zeta;
    if m > 0.0 {
        m.copysign(x)
    } else {
        0.0
    }
}

/// MCP value at `x`.
pub fn mcp_penalty(x: f64, p: McpParams) -> f64 {
    let a = x.abs();
    if a > p.upsilon * p.zeta {
        0.5 * p.upsilon * p.zeta * p.zeta
    } else {
        p.zeta * a - x * x / (2.0 * p.upsilon)
    }
}

/// Proximal operator of [`mcp_penalty`].
#[inline]
pub fn firm_threshold(x: f64, p: McpParams) -> f64 {
    let a = x.abs();
    if a >= p.upsilon * p.zeta {
        return x;
    }
    let excess = a - p.zeta;
    if excess <= 0.0 {
        return 0.0;
    }
    // ramp; the min guards rounding right below the upper breakpoint
    let ramp = p.upsilon * excess / (p.upsilon - 1.0);
    ramp.min(a).copysign(x)
}

/// Which thresholding operator a network or solver applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Shrinkage {
    Hard,
    Soft,
    #[default]
    Firm,
}

impl Shrinkage {
    /// Applies the operator to one value. `upsilon` is only read by `Firm`.
    #[inline]
    pub fn apply(self, x: f64, zeta: f64, upsilon: f64) -> f64 {
        match self {
            Shrinkage::Hard => hard_threshold(x, zeta),
            Shrinkage::Soft => soft_threshold(x, zeta),
            Shrinkage::Firm => firm_threshold(x, McpParams { zeta, upsilon }),
        }
    }
}

impl fmt::Display for Shrinkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shrinkage::Hard => "hard",
            Shrinkage::Soft => "soft",
            Shrinkage::Firm => "firm",
        })
    }
}

impl FromStr for Shrinkage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hard" => Ok(Shrinkage::Hard),
            "soft" => Ok(Shrinkage::Soft),
            "firm" => Ok(Shrinkage::Firm),
            other => Err(format!("unknown shrinkage '{other}' (hard|soft|firm)")),
        }
    }
}

/// Entrywise thresholding of a matrix.
pub fn apply_elementwise(m: &DenseMatrix, op: Shrinkage, zeta: f64, upsilon: f64) -> DenseMatrix {
    m.map(|x| op.apply(x, zeta, upsilon))
}
