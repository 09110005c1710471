use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::ScalingRecord;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::moves::MoveKind;
use crate::random::normal_cdf;
use crate::sampler::hyper::{Hyperparameters, Mode, ResponseKind};
use crate::tree::{predict, Tree, TreeCovariates};

/// One step of a chain iteration, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    AugmentLatent,
    UpdateBeta,
    UpdateOmega,
    Tree {
        tree: usize,
        kind: MoveKind,
        requested: MoveKind,
        accepted: bool,
        /// The tree was a stump before the move.
        from_stump: bool,
    },
    LeafValues { tree: usize },
    UpdateSigma2,
    UpdateFitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub event: TraceEvent,
}

/// Proposal and acceptance counts per move kind, over all iterations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: BTreeMap<MoveKind, u64>,
    pub accepted: BTreeMap<MoveKind, u64>,
}

impl MoveStats {
    pub fn record(&mut self, kind: MoveKind, accepted: bool) {
        *self.proposed.entry(kind).or_default() += 1;
        if accepted {
            *self.accepted.entry(kind).or_default() += 1;
        }
    }

    pub fn proposed(&self, kind: MoveKind) -> u64 {
        self.proposed.get(&kind).copied().unwrap_or(0)
    }

    pub fn accepted(&self, kind: MoveKind) -> u64 {
        self.accepted.get(&kind).copied().unwrap_or(0)
    }
}

/// Kept draws of a chain, reported on the original response scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub mode: Mode,
    pub response: ResponseKind,
    pub seed: u64,
    pub stream: u64,
    /// Resolved hyperparameters (calibrated `lambda` filled in).
    pub hyper: Hyperparameters,
    pub sigma_mu: f64,
    pub scaling: Option<ScalingRecord>,
    pub x1_names: Vec<String>,
    pub x2_names: Vec<String>,
    /// Tree covariates (by position) that also enter the linear design.
    #[serde(default)]
    pub shared: BTreeSet<usize>,
    /// Per kept draw: linear coefficients (fixed then random effects).
    pub beta: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    /// Per kept draw: training-set fit (latent scale in probit mode).
    pub fitted: Vec<Vec<f64>>,
    /// Per kept draw: the trees (rules, leaf values and node counts).
    pub forests: Vec<Vec<Tree>>,
    pub trace: Vec<TraceRecord>,
    pub move_stats: MoveStats,
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let mut out = vec![0.0; first.len()];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    let n = rows.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    pub fn beta_mean(&self) -> Vec<f64> {
        column_means(&self.beta)
    }

    pub fn sigma2_mean(&self) -> f64 {
        self.sigma2.iter().sum::<f64>() / self.sigma2.len().max(1) as f64
    }

    pub fn fitted_mean(&self) -> Vec<f64> {
        column_means(&self.fitted)
    }

    /// Posterior mean of `Φ(fit)` per training row (probit mode).
    pub fn fitted_probabilities(&self) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = self
            .fitted
            .iter()
            .map(|f| f.iter().map(|&v| normal_cdf(v)).collect())
            .collect();
        column_means(&rows)
    }

    /// Values of one draw of the model on the (scaled, for regression)
    /// internal scale.
    fn internal_prediction(&self, draw: usize, x1: &Matrix, x2: &TreeCovariates) -> Result<Vec<f64>> {
        let mut out = predict(&self.forests[draw], x2);
        if x1.cols() > 0 && !self.beta[draw].is_empty() {
            let coef: Vec<f64> = match self.scaling {
                Some(s) => self.beta[draw].iter().map(|b| b / s.range()).collect(),
                None => self.beta[draw].clone(),
            };
            for (o, l) in out.iter_mut().zip(x1.matvec(&coef)?) {
                *o += l;
            }
        }
        Ok(out)
    }

    /// Posterior-mean prediction for new rows: the original-scale mean in
    /// regression mode, the class-1 probability in probit mode.
    pub fn predict(&self, x1: &Matrix, x2: &TreeCovariates) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Data("no posterior draws".into()));
        }
        if x1.rows() != x2.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "X1 has {} rows, X2 has {}",
                x1.rows(),
                x2.n_rows()
            )));
        }
        if self.mode != Mode::Bart && x1.cols() != self.x1_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} linear columns, new data has {}",
                self.x1_names.len(),
                x1.cols()
            )));
        }
        let mut acc = vec![0.0; x2.n_rows()];
        for d in 0..self.len() {
            let pred = self.internal_prediction(d, x1, x2)?;
            for (a, v) in acc.iter_mut().zip(pred) {
                *a += match (self.response, self.scaling) {
                    (ResponseKind::Probit, _) => normal_cdf(v),
                    (ResponseKind::Regression, Some(s)) => s.unscale(v),
                    (ResponseKind::Regression, None) => v,
                };
            }
        }
        let n = self.len() as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        Ok(acc)
    }
}
