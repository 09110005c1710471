use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::moves::MoveSettings;

/// Which model the chain fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Linear predictor with a hierarchical inverse-Wishart prior, trees
    /// allowed to share covariates, double moves and validity checks.
    Csp,
    /// Linear predictor with an isotropic diffuse prior, disjoint covariate
    /// sets, single moves only.
    Ssp,
    /// Trees only.
    Bart,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Csp => "csp",
            Mode::Ssp => "ssp",
            Mode::Bart => "bart",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csp" => Ok(Mode::Csp),
            "ssp" => Ok(Mode::Ssp),
            "bart" => Ok(Mode::Bart),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode `{other}` (expected csp, ssp or bart)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseKind {
    Regression,
    /// Binary 0/1 response through a probit link with latent-variable
    /// augmentation; the error variance is fixed at 1.
    Probit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Number of trees `T`.
    pub trees: usize,
    /// Total iterations `M`, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    /// Leaf prior scale: `σ_μ = 0.5 / (k√T)` (regression) or `3 / (k√T)` (probit).
    pub k: f64,
    pub eta: f64,
    pub zeta: f64,
    pub nu: f64,
    /// Error-variance prior scale; calibrated from the data when `None`.
    pub lambda: Option<f64>,
    /// Prior mean `b` of the fixed effects (zero when `None`).
    pub prior_mean: Option<Vec<f64>>,
    /// Inverse-Wishart scale `V` (identity when `None`).
    pub iw_scale: Option<Matrix>,
    /// Inverse-Wishart degrees of freedom `v` (number of linear columns when `None`).
    pub iw_df: Option<f64>,
    /// Isotropic prior variance of the coefficients in ssp mode.
    pub sigma_b2: f64,
    pub moves: MoveSettings,
    /// Keep every tree a zero-valued stump; the chain then samples only the
    /// linear part and the error variance.
    pub freeze_trees: bool,
    pub record_trace: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            trees: 200,
            iterations: 4000,
            burn_in: 2000,
            k: 2.0,
            eta: 0.95,
            zeta: 2.0,
            nu: 3.0,
            lambda: None,
            prior_mean: None,
            iw_scale: None,
            iw_df: None,
            sigma_b2: 1e4,
            moves: MoveSettings::default(),
            freeze_trees: false,
            record_trace: false,
        }
    }
}

impl Hyperparameters {
    /// The smaller configuration used by the simulation studies.
    pub fn simulation() -> Self {
        Self {
            trees: 50,
            iterations: 2000,
            burn_in: 1000,
            ..Self::default()
        }
    }

    pub fn kept(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.trees == 0 {
            return bad("at least one tree is required".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0,1), got {}", self.eta));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return bad(format!("zeta must be non-negative, got {}", self.zeta));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda must be positive, got {l}"));
            }
        }
        if !(self.sigma_b2 > 0.0 && self.sigma_b2.is_finite()) {
            return bad(format!("sigma_b2 must be positive, got {}", self.sigma_b2));
        }
        if self.moves.retry_limit == 0 {
            return bad("retry limit must be at least 1".into());
        }
        if self.moves.n_min == 0 {
            return bad("minimum node size must be at least 1".into());
        }
        self.moves.probabilities.validate()
    }

    /// Leaf prior standard deviation.
    pub fn sigma_mu(&self, response: ResponseKind) -> f64 {
        let half_range = match response {
            ResponseKind::Regression => 0.5,
            ResponseKind::Probit => 3.0,
        };
        half_range / (self.k * (self.trees as f64).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Hyperparameters::default().validate().unwrap();
        Hyperparameters::simulation().validate().unwrap();
        assert_eq!(Hyperparameters::default().kept(), 2000);
    }

    #[test]
    fn rejects_out_of_range() {
        let h = Hyperparameters {
            eta: 2.0,
            zeta: 0.95,
            ..Hyperparameters::default()
        };
        assert!(h.validate().is_err());
        let h = Hyperparameters {
            burn_in: 4000,
            ..Hyperparameters::default()
        };
        assert!(h.validate().is_err());
        let h = Hyperparameters {
            trees: 0,
            ..Hyperparameters::default()
        };
        assert!(h.validate().is_err());
    }

    #[test]
    fn leaf_scale() {
        let h = Hyperparameters {
            trees: 100,
            ..Hyperparameters::default()
        };
        assert!((h.sigma_mu(ResponseKind::Regression) - 0.025).abs() < 1e-15);
        assert!((h.sigma_mu(ResponseKind::Probit) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("CSP".parse::<Mode>().unwrap(), Mode::Csp);
        assert!("gam".parse::<Mode>().is_err());
    }
}
