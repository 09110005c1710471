use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine map of a regression response onto `[-0.5, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub min: f64,
    pub max: f64,
}

impl ScalingRecord {
    pub fn fit(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Data("cannot scale an empty response".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("response contains non-finite values".into()));
        }
        let min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(Error::Data(format!("response is constant ({min})")));
        }
        Ok(Self { min, max })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / self.range() - 0.5
    }

    pub fn unscale(&self, v: f64) -> f64 {
        self.range() * (v + 0.5) + self.min
    }

    /// Maps a slope estimated on the scaled response back to the original scale.
    pub fn unscale_coefficient(&self, b: f64) -> f64 {
        b * self.range()
    }

    pub fn unscale_variance(&self, s2: f64) -> f64 {
        s2 * self.range() * self.range()
    }
}

/// Scales `y` onto `[-0.5, 0.5]` and returns the record needed to undo it.
pub fn scale_response(y: &[f64]) -> Result<(Vec<f64>, ScalingRecord)> {
    let rec = ScalingRecord::fit(y)?;
    Ok((y.iter().map(|&v| rec.scale(v)).collect(), rec))
}
