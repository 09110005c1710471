use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::ScalingRecord;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, Matrix};
use crate::moves::{mh_step, propose, MoveSettings, TreeContext, TreePosterior};
use crate::random::{RngPosition, RngStream};
use crate::sampler::draws::{MoveStats, PosteriorDraws, TraceEvent, TraceRecord};
use crate::sampler::hyper::{Hyperparameters, Mode, ResponseKind};
use crate::sampler::model::ModelData;
use crate::sampler::updates::{
    augment_probit, beta_conditional, check_binary, update_omega, update_sigma2,
};
use crate::random::sample_mvn_canonical;
use crate::tree::{sample_leaf_values, Forest, Tree};

/// Mutable state of a chain between iterations (internal scale).
#[derive(Debug, Clone)]
pub struct ChainState {
    /// Completed iterations.
    pub iteration: usize,
    pub forest: Forest,
    pub beta: Vec<f64>,
    pub omega: Matrix,
    pub sigma2: f64,
    pub latent: Option<Vec<f64>>,
}

/// Chooses `λ` so that the prior puts probability 0.9 below `σ̂²`, the
/// residual variance of a least-squares fit of `target` on an intercept and
/// the linear design (the sample variance when that fit is unavailable).
pub fn calibrate_lambda(target: &[f64], x1: &Matrix, nu: f64) -> Result<f64> {
    let n = target.len();
    let mean = target.iter().sum::<f64>() / n as f64;
    let var = target.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    let p = x1.cols() + 1;
    let mut sigma_hat2 = var;
    if n > p {
        let design = Matrix::from_columns(n, &[vec![1.0; n]])?.hstack(x1)?;
        if let Ok(coef) = least_squares(&design, target) {
            let fit = design.matvec(&coef)?;
            let rss: f64 = target.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
            let s2 = rss / (n - p) as f64;
            if s2 > 0.0 && s2.is_finite() {
                sigma_hat2 = s2;
            }
        }
    }
    if !(sigma_hat2 > 0.0) {
        return Err(Error::Data("response has zero variance".into()));
    }
    let q = ChiSquared::new(nu)
        .map_err(|e| Error::InvalidParameter(format!("nu: {e}")))?
        .inverse_cdf(0.1);
    Ok(sigma_hat2 * q / nu)
}

/// A single Gibbs chain.
#[derive(Debug)]
pub struct Chain<'a> {
    data: &'a ModelData,
    hyper: Hyperparameters,
    mode: Mode,
    response: ResponseKind,
    scaling: Option<ScalingRecord>,
    /// Scaled response (regression) or 0/1 labels (probit).
    target: Vec<f64>,
    linear: bool,
    b: Vec<f64>,
    iw_scale: Matrix,
    iw_df: f64,
    xtx: Matrix,
    sigma_mu2: f64,
    lambda: f64,
    settings: MoveSettings,
    state: ChainState,
    rng: RngStream,
    draws: PosteriorDraws,
}

impl<'a> Chain<'a> {
    pub fn new(
        data: &'a ModelData,
        hyper: &Hyperparameters,
        mode: Mode,
        response: ResponseKind,
        rng: RngStream,
    ) -> Result<Self> {
        hyper.validate()?;
        data.check()?;
        if mode == Mode::Ssp && !data.shared.is_empty() {
            return Err(Error::InvalidParameter(
                "ssp mode requires disjoint linear and tree covariates".into(),
            ));
        }
        let n = data.n();
        let (target, scaling) = match response {
            ResponseKind::Regression => {
                let s = ScalingRecord::fit(&data.response)?;
                (data.response.iter().map(|&v| s.scale(v)).collect::<Vec<_>>(), Some(s))
            }
            ResponseKind::Probit => {
                check_binary(&data.response)?;
                (data.response.clone(), None)
            }
        };
        let linear = mode != Mode::Bart && data.p1() > 0;
        let p = if linear { data.p1() } else { 0 };

        let b = match &hyper.prior_mean {
            Some(b) if b.len() != data.n_fixed => {
                return Err(Error::DimensionMismatch(format!(
                    "prior mean has {} entries for {} fixed effects",
                    b.len(),
                    data.n_fixed
                )))
            }
            Some(b) if linear => {
                let mut b = b.clone();
                b.resize(p, 0.0);
                b
            }
            _ => vec![0.0; p],
        };
        let iw_scale = match &hyper.iw_scale {
            Some(v) if v.rows() != p || v.cols() != p => {
                return Err(Error::DimensionMismatch(format!(
                    "inverse-Wishart scale is {}x{} for {p} linear columns",
                    v.rows(),
                    v.cols()
                )))
            }
            Some(v) => {
                crate::linalg::Cholesky::new(v)?;
                v.clone()
            }
            None => Matrix::identity(p),
        };
        let iw_df = hyper.iw_df.unwrap_or(p as f64);
        if linear && mode == Mode::Csp && iw_df < p as f64 {
            return Err(Error::InvalidParameter(format!(
                "inverse-Wishart degrees of freedom {iw_df} below dimension {p}"
            )));
        }

        let x1 = if linear { data.x1.clone() } else { Matrix::zeros(n, 0) };
        let lambda = match (response, hyper.lambda) {
            (ResponseKind::Probit, _) => 1.0,
            (_, Some(l)) => l,
            (_, None) => calibrate_lambda(&target, &x1, hyper.nu)?,
        };
        let mut resolved = hyper.clone();
        if response == ResponseKind::Regression {
            resolved.lambda = Some(lambda);
        }
        let mut settings = hyper.moves;
        if mode != Mode::Csp {
            settings.double_moves = false;
        }
        resolved.moves = settings;

        let sigma_mu = hyper.sigma_mu(response);
        let sigma2 = match response {
            ResponseKind::Regression => {
                let m = target.iter().sum::<f64>() / n as f64;
                let v = target.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
                v.max(f64::MIN_POSITIVE)
            }
            ResponseKind::Probit => 1.0,
        };
        let omega = match mode {
            Mode::Ssp => Matrix::identity(p).scaled(hyper.sigma_b2),
            _ => Matrix::identity(p),
        };
        let mut forest = Forest::stumps(hyper.trees, n);
        let trees: Vec<Tree> = (0..hyper.trees)
            .map(|_| {
                let mut t = Tree::stump(n);
                t.assign_observations(&data.x2);
                t
            })
            .collect();
        for (t, tree) in trees.into_iter().enumerate() {
            forest.set_tree(t, tree);
        }
        let state = ChainState {
            iteration: 0,
            forest,
            beta: vec![0.0; p],
            omega,
            sigma2,
            latent: None,
        };
        let draws = PosteriorDraws {
            mode,
            response,
            seed: rng.seed(),
            stream: rng.stream_id(),
            hyper: resolved.clone(),
            sigma_mu,
            scaling,
            x1_names: if linear { data.x1_names.clone() } else { Vec::new() },
            x2_names: data.x2.names().to_vec(),
            shared: data.shared.clone(),
            beta: Vec::new(),
            sigma2: Vec::new(),
            fitted: Vec::new(),
            forests: Vec::new(),
            trace: Vec::new(),
            move_stats: MoveStats::default(),
        };
        Ok(Self {
            data,
            xtx: x1.gram(),
            hyper: resolved,
            mode,
            response,
            scaling,
            target,
            linear,
            b,
            iw_scale,
            iw_df,
            sigma_mu2: sigma_mu * sigma_mu,
            lambda,
            settings,
            state,
            rng,
            draws,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_finished(&self) -> bool {
        self.state.iteration >= self.hyper.iterations
    }

    fn trace(&mut self, event: TraceEvent) {
        if self.hyper.record_trace {
            self.draws.trace.push(TraceRecord {
                iteration: self.state.iteration,
                event,
            });
        }
    }

    fn linear_fit(&self) -> Result<Vec<f64>> {
        if self.linear {
            self.data.x1.matvec(&self.state.beta)
        } else {
            Ok(vec![0.0; self.data.n()])
        }
    }

    /// Runs one full iteration.
    pub fn step(&mut self) -> Result<()> {
        let n = self.data.n();
        if self.response == ResponseKind::Probit {
            let lin = self.linear_fit()?;
            let fitted: Vec<f64> = lin.iter().zip(self.state.forest.prediction()).map(|(a, b)| a + b).collect();
            self.state.latent = Some(augment_probit(&self.target, &fitted, &mut self.rng)?);
            self.trace(TraceEvent::AugmentLatent);
        }
        let target = self.state.latent.clone().unwrap_or_else(|| self.target.clone());

        if self.linear {
            let r: Vec<f64> = target.iter().zip(self.state.forest.prediction()).map(|(a, b)| a - b).collect();
            let xtr = self.data.x1.t_matvec(&r)?;
            let (chol, h) = beta_conditional(&self.xtx, &xtr, self.state.sigma2, &self.b, &self.state.omega)?;
            self.state.beta = sample_mvn_canonical(&chol, &h, &mut self.rng);
            self.trace(TraceEvent::UpdateBeta);
            if self.mode == Mode::Csp {
                self.state.omega = update_omega(&self.state.beta, &self.b, &self.iw_scale, self.iw_df, &mut self.rng)?;
                self.trace(TraceEvent::UpdateOmega);
            }
        }
        let lin = self.linear_fit()?;
        let base: Vec<f64> = target.iter().zip(&lin).map(|(a, b)| a - b).collect();
        if base.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite residuals at iteration {}",
                self.state.iteration + 1
            )));
        }

        if !self.hyper.freeze_trees {
            let ctx = TreeContext {
                x2: &self.data.x2,
                shared: &self.data.shared,
                categorical_x1: &self.data.categorical_x1,
            };
            let posterior = TreePosterior {
                sigma2: self.state.sigma2,
                sigma_mu2: self.sigma_mu2,
                eta: self.hyper.eta,
                zeta: self.hyper.zeta,
            };
            let mut r = vec![0.0; n];
            for t in 0..self.hyper.trees {
                let total = self.state.forest.prediction();
                let fit = self.state.forest.fit(t);
                for i in 0..n {
                    r[i] = base[i] - total[i] + fit[i];
                }
                let current = self.state.forest.tree(t).clone();
                let from_stump = current.is_stump();
                let proposal = propose(&current, &ctx, &self.settings, &mut self.rng);
                let (kind, requested) = (proposal.kind, proposal.requested);
                let (mut tree, accepted) = mh_step(current, proposal, &r, &posterior, &mut self.rng)?;
                self.draws.move_stats.record(kind, accepted);
                self.trace(TraceEvent::Tree {
                    tree: t,
                    kind,
                    requested,
                    accepted,
                    from_stump,
                });
                sample_leaf_values(&mut tree, &r, self.state.sigma2, self.sigma_mu2, &mut self.rng);
                self.trace(TraceEvent::LeafValues { tree: t });
                self.state.forest.set_tree(t, tree);
            }
            self.state.forest.recompute_total();
        }

        let yhat: Vec<f64> = lin.iter().zip(self.state.forest.prediction()).map(|(a, b)| a + b).collect();
        if self.response == ResponseKind::Regression {
            self.state.sigma2 = update_sigma2(&target, &yhat, self.hyper.nu, self.lambda, &mut self.rng)?;
            self.trace(TraceEvent::UpdateSigma2);
        }
        self.trace(TraceEvent::UpdateFitted);
        self.state.iteration += 1;
        if self.state.iteration > self.hyper.burn_in {
            self.record(&yhat);
        }
        Ok(())
    }

    fn record(&mut self, yhat: &[f64]) {
        let (beta, sigma2, fitted) = match self.scaling {
            Some(s) => (
                self.state.beta.iter().map(|&b| s.unscale_coefficient(b)).collect(),
                s.unscale_variance(self.state.sigma2),
                yhat.iter().map(|&v| s.unscale(v)).collect(),
            ),
            None => (self.state.beta.clone(), self.state.sigma2, yhat.to_vec()),
        };
        self.draws.beta.push(beta);
        self.draws.sigma2.push(sigma2);
        self.draws.fitted.push(fitted);
        self.draws
            .forests
            .push(self.state.forest.trees().iter().map(Tree::snapshot).collect());
    }

    /// Runs `count` more iterations (stopping at the configured total).
    pub fn advance(&mut self, count: usize) -> Result<()> {
        for _ in 0..count {
            if self.is_finished() {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    /// Runs the remaining iterations and returns the kept draws.
    pub fn run(mut self) -> Result<PosteriorDraws> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.draws)
    }

    pub fn into_draws(self) -> PosteriorDraws {
        self.draws
    }

    /// Serializable snapshot from which [`Chain::resume`] continues the
    /// chain exactly.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            iteration: self.state.iteration,
            beta: self.state.beta.clone(),
            omega: self.state.omega.clone(),
            sigma2: self.state.sigma2,
            latent: self.state.latent.clone(),
            trees: self.state.forest.trees().iter().map(Tree::snapshot).collect(),
            rng: self.rng.position(),
            draws: self.draws.clone(),
        }
    }

    /// Rebuilds a chain from a checkpoint taken on the same data.
    pub fn resume(data: &'a ModelData, checkpoint: Checkpoint) -> Result<Self> {
        if checkpoint.format_version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                checkpoint.format_version
            )));
        }
        let d = &checkpoint.draws;
        let mut chain = Chain::new(data, &d.hyper, d.mode, d.response, RngStream::from_position(checkpoint.rng))?;
        if checkpoint.trees.len() != chain.hyper.trees || checkpoint.beta.len() != chain.state.beta.len() {
            return Err(Error::Data("checkpoint does not match the model configuration".into()));
        }
        let mut trees = checkpoint.trees;
        for t in &mut trees {
            t.annotate(&data.shared, &data.categorical_x1);
        }
        chain.state = ChainState {
            iteration: checkpoint.iteration,
            forest: Forest::from_trees(trees, &data.x2),
            beta: checkpoint.beta,
            omega: checkpoint.omega,
            sigma2: checkpoint.sigma2,
            latent: checkpoint.latent,
        };
        chain.draws = checkpoint.draws;
        Ok(chain)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub iteration: usize,
    pub beta: Vec<f64>,
    pub omega: Matrix,
    pub sigma2: f64,
    pub latent: Option<Vec<f64>>,
    pub trees: Vec<Tree>,
    pub rng: RngPosition,
    pub draws: PosteriorDraws,
}

/// Runs a complete chain.
pub fn run_chain(
    data: &ModelData,
    hyper: &Hyperparameters,
    mode: Mode,
    response: ResponseKind,
    rng: RngStream,
) -> Result<PosteriorDraws> {
    Chain::new(data, hyper, mode, response, rng)?.run()
}
