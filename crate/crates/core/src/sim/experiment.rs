use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::random::RngStream;
use crate::sampler::{run_chain, Hyperparameters, Mode, ModelData, PosteriorDraws, ResponseKind};
use crate::sim::generators::{SimConfig, SimData};
use crate::tree::TreeCovariates;

/// Builds the model inputs for one mode: the truth covariates form the
/// linear design; csp also gives them to the trees, ssp keeps them out, and
/// trees-only mode uses every covariate in the trees.
pub fn model_data_for(sim: &SimData, mode: Mode) -> Result<ModelData> {
    let n = sim.y.len();
    let p = sim.x.cols();
    let linear_cols = &sim.truth.columns;
    let tree_cols: Vec<usize> = match mode {
        Mode::Csp | Mode::Bart => (0..p).collect(),
        Mode::Ssp => (0..p).filter(|c| !linear_cols.contains(c)).collect(),
    };
    let x2_values = Matrix::from_columns(n, &tree_cols.iter().map(|&c| sim.x.column(c)).collect::<Vec<_>>())?;
    let x2 = TreeCovariates::new(
        tree_cols.iter().map(|&c| sim.names[c].clone()).collect(),
        vec![crate::tree::CovariateKind::Continuous; tree_cols.len()],
        x2_values,
    )?;
    if mode == Mode::Bart {
        return ModelData::trees_only(sim.y.clone(), x2);
    }
    let x1 = Matrix::from_columns(n, &linear_cols.iter().map(|&c| sim.x.column(c)).collect::<Vec<_>>())?;
    let names = linear_cols.iter().map(|&c| sim.names[c].clone()).collect();
    let shared: BTreeSet<usize> = tree_cols
        .iter()
        .enumerate()
        .filter(|(_, c)| linear_cols.contains(c))
        .map(|(i, _)| i)
        .collect();
    ModelData::new(sim.y.clone(), x1, names, x2)?.with_shared(shared)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub mode: Mode,
    pub parameter: String,
    pub replicate: usize,
    pub estimate: f64,
    pub truth: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub mode: Mode,
    pub replicate: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub mode: Mode,
    pub parameter: String,
    pub truth: f64,
    pub count: usize,
    pub mean_bias: f64,
    pub sd_bias: f64,
    pub mean_abs_bias: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    /// Ordered by replicate, then mode (in the order requested), then parameter.
    pub rows: Vec<BiasRow>,
    pub failures: Vec<ReplicateFailure>,
    /// Fitted draws per (replicate, mode) when requested.
    pub fits: Vec<(usize, Mode, PosteriorDraws)>,
}

impl ExperimentResult {
    /// Mean, SD and mean absolute value of the bias per (mode, parameter).
    pub fn summary(&self) -> Vec<BiasSummary> {
        let mut keys: Vec<(Mode, String)> = Vec::new();
        for r in &self.rows {
            let k = (r.mode, r.parameter.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(mode, parameter)| {
                let rows: Vec<&BiasRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.mode == mode && r.parameter == parameter)
                    .collect();
                let count = rows.len();
                let mean = rows.iter().map(|r| r.bias).sum::<f64>() / count as f64;
                let sd = if count > 1 {
                    (rows.iter().map(|r| (r.bias - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
                } else {
                    0.0
                };
                BiasSummary {
                    mode,
                    truth: rows[0].truth,
                    parameter,
                    count,
                    mean_bias: mean,
                    sd_bias: sd,
                    mean_abs_bias: rows.iter().map(|r| r.bias.abs()).sum::<f64>() / count as f64,
                }
            })
            .collect()
    }

    pub fn summary_for(&self, mode: Mode, parameter: &str) -> Option<BiasSummary> {
        self.summary()
            .into_iter()
            .find(|s| s.mode == mode && s.parameter == parameter)
    }
}

/// Stream id of the data generator for a replicate.
fn data_stream(replicate: usize) -> u64 {
    (replicate as u64) << 8
}

/// Stream id of the chain fitting `mode` on a replicate.
fn chain_stream(replicate: usize, mode: Mode) -> u64 {
    data_stream(replicate) | (1 + mode as u64)
}

/// Runs every replicate: generate data, fit each mode, record the bias of
/// the posterior-mean linear coefficients on the original response scale.
/// Replicates run on up to `jobs` threads; results do not depend on `jobs`.
pub fn run_experiment(
    sim: &SimConfig,
    hyper: &Hyperparameters,
    modes: &[Mode],
    seed: u64,
    jobs: usize,
    keep_fits: bool,
) -> Result<ExperimentResult> {
    sim.validate()?;
    hyper.validate()?;
    if modes.is_empty() {
        return Err(Error::InvalidParameter("no modes requested".into()));
    }
    let run_one = |rep: usize| {
        let mut out = ExperimentResult::default();
        let data = match sim.generator.generate(sim, &mut RngStream::new(seed, data_stream(rep))) {
            Ok(d) => d,
            Err(e) => {
                for &mode in modes {
                    out.failures.push(ReplicateFailure {
                        mode,
                        replicate: rep,
                        reason: e.to_string(),
                    });
                }
                return out;
            }
        };
        for &mode in modes {
            let fit = model_data_for(&data, mode).and_then(|md| {
                run_chain(&md, hyper, mode, ResponseKind::Regression, RngStream::new(seed, chain_stream(rep, mode)))
            });
            match fit {
                Ok(draws) => {
                    let est = draws.beta_mean();
                    for (j, name) in draws.x1_names.iter().enumerate() {
                        let k = data.truth.names.iter().position(|n| n == name).expect("truth covariate");
                        let truth = data.truth.values[k];
                        out.rows.push(BiasRow {
                            mode,
                            parameter: name.clone(),
                            replicate: rep,
                            estimate: est[j],
                            truth,
                            bias: est[j] - truth,
                        });
                    }
                    if keep_fits {
                        out.fits.push((rep, mode, draws));
                    }
                }
                Err(e) => out.failures.push(ReplicateFailure {
                    mode,
                    replicate: rep,
                    reason: e.to_string(),
                }),
            }
        }
        out
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let parts: Vec<ExperimentResult> = pool.install(|| (0..sim.replicates).into_par_iter().map(run_one).collect());
    let mut result = ExperimentResult::default();
    for p in parts {
        result.rows.extend(p.rows);
        result.failures.extend(p.failures);
        result.fits.extend(p.fits);
    }
    Ok(result)
}
