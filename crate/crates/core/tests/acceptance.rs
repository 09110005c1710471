//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::*;
use cspbart_core::diagnostics::{count_interactions, misclassification, summarize};
use cspbart_core::linalg::Matrix;
use cspbart_core::sim::{gen_tree_sim, model_data_for, run_experiment, ExperimentResult, Generator, SimConfig};
use cspbart_core::tree::{log_marginal_likelihood, validate_tree, Tree};
use cspbart_core::{run_chain, CovariateKind, Hyperparameters, Mode, ModelData, ResponseKind, RngStream, TreeCovariates};

type Outcome = Result<String, String>;

const SEED: u64 = 2024;

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn desk_hyper() -> Hyperparameters {
    Hyperparameters::simulation()
}

fn linear_frozen() -> Outcome {
    let n = 200;
    let mut rng = RngStream::new(SEED, 100);
    let x: Vec<Vec<f64>> = (0..2).map(|_| (0..n).map(|_| rng.uniform()).collect()).collect();
    let other: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let y: Vec<f64> = (0..n).map(|i| 4.0 * x[0][i] - 3.0 * x[1][i] + 0.5 * rng.standard_normal()).collect();
    let x1 = Matrix::from_columns(n, &x).unwrap();
    let x2 = TreeCovariates::continuous(Matrix::from_columns(n, &[other]).unwrap());
    let data = ModelData::new(y.clone(), x1.clone(), vec!["a".into(), "b".into()], x2).unwrap();
    let lambda = 0.01;
    let hyper = Hyperparameters {
        trees: 10,
        iterations: 4000,
        burn_in: 2000,
        sigma_b2: 1e8,
        freeze_trees: true,
        lambda: Some(lambda),
        ..Hyperparameters::default()
    };
    let draws = run_chain(&data, &hyper, Mode::Ssp, ResponseKind::Regression, RngStream::new(SEED, 101)).map_err(|e| e.to_string())?;

    // Oracle: flat-prior conjugate posterior on the scaled response.
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let ys: Vec<f64> = y.iter().map(|v| (v - lo) / range - 0.5).collect();
    let b = ols(&x1, &ys);
    let rss: f64 = (0..n).map(|i| (ys[i] - b[0] * x[0][i] - b[1] * x[1][i]).powi(2)).sum();
    let nu = hyper.nu;
    let sigma2_mean = range * range * (rss + nu * lambda) / (n as f64 - 2.0 + nu - 2.0);

    let mut report = Vec::new();
    let mut ok = true;
    for j in 0..2 {
        let series: Vec<f64> = draws.beta.iter().map(|d| d[j]).collect();
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let se = batch_means_se(&series, 20);
        let z = (mean - b[j] * range) / se;
        ok &= z.abs() <= 3.0;
        report.push(format!("beta{} z={z:+.2}", j + 1));
    }
    let se = batch_means_se(&draws.sigma2, 20);
    let z = (draws.sigma2_mean() - sigma2_mean) / se;
    ok &= z.abs() <= 3.0;
    report.push(format!("sigma2 z={z:+.2}"));
    let msg = report.join(", ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn marginal_likelihood_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in 0..100u64 {
        let mut rng = RngStream::new(SEED, 200 + t);
        let n = 2 + rng.index(29);
        let x2 = uniform_covariates(n, 3, &mut rng);
        let tree = random_tree(&x2, rng.index(5), &mut rng);
        let r: Vec<f64> = (0..n).map(|_| 0.4 * rng.standard_normal()).collect();
        let sigma2 = 0.05 + rng.uniform();
        let sigma_mu2 = 0.01 + 0.5 * rng.uniform();
        let closed = log_marginal_likelihood(&tree, &r, sigma2, sigma_mu2).map_err(|e| e.to_string())?;
        let oracle = tree_log_evidence_quadrature(&tree, &r, sigma2, sigma_mu2);
        worst = worst.max((closed - oracle).abs() / oracle.abs().max(1e-12));
    }
    let msg = format!("worst relative error {worst:.2e} over 100 trees");
    if worst <= 1e-6 { Ok(msg) } else { Err(msg) }
}

fn mean_abs_bias(result: &ExperimentResult, mode: Mode, parameter: &str) -> f64 {
    result.summary_for(mode, parameter).map_or(f64::INFINITY, |s| s.mean_abs_bias)
}

fn friedman_bias() -> Outcome {
    let sim = SimConfig::desk(Generator::Friedman);
    let res = run_experiment(&sim, &desk_hyper(), &[Mode::Csp], SEED, jobs(), false).map_err(|e| e.to_string())?;
    if !res.failures.is_empty() {
        return Err(format!("{} replicate failures", res.failures.len()));
    }
    let b4 = mean_abs_bias(&res, Mode::Csp, "x4");
    let b5 = mean_abs_bias(&res, Mode::Csp, "x5");
    let msg = format!("csp mean |bias| x4 {b4:.3}, x5 {b5:.3}");
    if b4 <= 0.5 && b5 <= 0.5 { Ok(msg) } else { Err(msg) }
}

fn tree_sim_contrast(res: &ExperimentResult) -> Outcome {
    if !res.failures.is_empty() {
        return Err(format!("{} replicate failures", res.failures.len()));
    }
    let c1 = mean_abs_bias(res, Mode::Csp, "x1");
    let c2 = mean_abs_bias(res, Mode::Csp, "x2");
    let s2 = mean_abs_bias(res, Mode::Ssp, "x2");
    let msg = format!("csp |bias| x1 {c1:.3}, x2 {c2:.3}; ssp |bias| x2 {s2:.3}");
    if c1 <= 1.0 && c2 <= 1.0 && s2 >= 2.0 * c2 { Ok(msg) } else { Err(msg) }
}

fn validity_suite() -> Outcome {
    let sim = SimConfig { n: 500, p: 10, ..SimConfig::desk(Generator::TreeSim) };
    let d = gen_tree_sim(&sim, &mut RngStream::new(SEED, 500)).map_err(|e| e.to_string())?;
    let data = model_data_for(&d, Mode::Csp).map_err(|e| e.to_string())?;
    let hyper = desk_hyper();
    let draws = run_chain(&data, &hyper, Mode::Csp, ResponseKind::Regression, RngStream::new(SEED, 501)).map_err(|e| e.to_string())?;
    let n_min = hyper.moves.n_min;
    let (mut trees, mut leaves, mut invalid, mut flag_errors) = (0usize, 0usize, 0usize, 0usize);
    for forest in &draws.forests {
        for stored in forest {
            trees += 1;
            let mut t = stored.clone();
            t.assign_observations(&data.x2);
            let covs = t.covariates();
            let single_shared = covs.len() == 1 && data.shared.contains(covs.iter().next().unwrap());
            let small = t.terminals().iter().any(|&i| t.node(i).count() < n_min);
            let mut check = t.clone();
            if single_shared || small || !validate_tree(&mut check, &data.shared, &data.categorical_x1, n_min).is_valid() {
                invalid += 1;
            }
            for id in t.terminals() {
                leaves += 1;
                let anc: BTreeSet<usize> = ancestor_covariates(&t, id).into_iter().collect();
                let required = anc.len() == 1 && data.shared.contains(anc.iter().next().unwrap());
                if t.node(id).shrink() != required {
                    flag_errors += 1;
                }
            }
        }
    }
    let msg = format!("{trees} kept trees, {leaves} leaves: {invalid} invalid, {flag_errors} shrink-flag mismatches");
    if invalid == 0 && flag_errors == 0 && trees > 0 { Ok(msg) } else { Err(msg) }
}

fn probit_data(n: usize, rng: &mut RngStream) -> (Vec<f64>, Matrix, TreeCovariates) {
    let cols: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| rng.uniform() * 2.0 - 1.0).collect()).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let latent = cols[0][i] - cols[1][i] + 0.5 * (std::f64::consts::PI * cols[2][i]).sin() + rng.standard_normal();
            f64::from(latent > 0.0)
        })
        .collect();
    let x1 = Matrix::from_columns(n, &cols[..2]).unwrap();
    let x2 = TreeCovariates::continuous(Matrix::from_columns(n, &cols).unwrap());
    (y, x1, x2)
}

fn probit_calibration() -> Outcome {
    let truth = [1.0, -1.0];
    let hyper = desk_hyper();
    let reps = 20u64;
    let run = |rep: u64| -> Result<([bool; 2], bool), String> {
        let mut rng = RngStream::new(SEED, 600 + rep);
        let (y, x1, x2) = probit_data(500, &mut rng);
        let (yt, x1t, x2t) = probit_data(500, &mut rng);
        let data = ModelData::new(y, x1, vec!["x1".into(), "x2".into()], x2)
            .and_then(|d| d.with_shared(BTreeSet::from([0, 1])))
            .map_err(|e| e.to_string())?;
        let draws = run_chain(&data, &hyper, Mode::Csp, ResponseKind::Probit, RngStream::new(SEED, 700 + rep)).map_err(|e| e.to_string())?;
        let s = summarize(&draws, 0.95).map_err(|e| e.to_string())?;
        let covered = [0, 1].map(|j| s.rows[j].lower <= truth[j] && truth[j] <= s.rows[j].upper);
        let probs = draws.predict(&x1t, &x2t).map_err(|e| e.to_string())?;
        let err = misclassification(&probs, &yt).map_err(|e| e.to_string())?;
        let ones = yt.iter().sum::<f64>() / yt.len() as f64;
        Ok((covered, err < ones.min(1.0 - ones)))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs()).build().map_err(|e| e.to_string())?;
    let results: Vec<_> = pool.install(|| {
        use rayon::prelude::*;
        (0..reps).into_par_iter().map(run).collect::<Result<Vec<_>, _>>()
    })?;
    let cover = [0, 1].map(|j| results.iter().filter(|r| r.0[j]).count());
    let beats = results.iter().filter(|r| r.1).count();
    let msg = format!("coverage {}/{reps} and {}/{reps}; beats majority class in {beats}/{reps}", cover[0], cover[1]);
    if cover.iter().all(|&c| c as f64 >= 0.8 * reps as f64) && beats >= 18 { Ok(msg) } else { Err(msg) }
}

fn interaction_ranking(res: &ExperimentResult) -> Outcome {
    let forests: Vec<Vec<Tree>> = res
        .fits
        .iter()
        .filter(|(_, m, _)| *m == Mode::Csp)
        .flat_map(|(_, _, d)| d.forests.iter().cloned())
        .collect();
    let Some((_, _, first)) = res.fits.iter().find(|(_, m, _)| *m == Mode::Csp) else {
        return Err("no csp fits".into());
    };
    let report = count_interactions(&forests, &first.x2_names, &first.shared);
    let top: Vec<(String, String)> = report.top_strict(3).iter().map(|p| (p.first.clone(), p.second.clone())).collect();
    let has = |a: &str, b: &str| top.iter().any(|(x, y)| x == a && y == b);
    let msg = format!(
        "top strict pairs: {}",
        report
            .top_strict(3)
            .iter()
            .map(|p| format!("{}-{} ({})", p.first, p.second, p.same_branch))
            .collect::<Vec<_>>()
            .join(", ")
    );
    if has("x1", "x2") && has("x1", "x3") { Ok(msg) } else { Err(msg) }
}

fn monotone_invariance() -> Outcome {
    let sim = SimConfig { n: 300, p: 5, ..SimConfig::desk(Generator::TreeSim) };
    let d = gen_tree_sim(&sim, &mut RngStream::new(SEED, 800)).map_err(|e| e.to_string())?;
    let data = model_data_for(&d, Mode::Csp).map_err(|e| e.to_string())?;
    let col = 2;
    let transformed: Vec<f64> = data.x2.values().column(col).iter().map(|v| v.exp()).collect();
    let mut alt = data.clone();
    alt.x2 = data.x2.with_column(col, &transformed).map_err(|e| e.to_string())?;
    assert!(matches!(alt.x2.kind(col), CovariateKind::Continuous));
    let hyper = Hyperparameters { iterations: 600, burn_in: 300, ..desk_hyper() };
    let a = run_chain(&data, &hyper, Mode::Csp, ResponseKind::Regression, RngStream::new(SEED, 801)).map_err(|e| e.to_string())?;
    let b = run_chain(&alt, &hyper, Mode::Csp, ResponseKind::Regression, RngStream::new(SEED, 801)).map_err(|e| e.to_string())?;
    let mut compared = 0;
    let mut differ = 0;
    for (fa, fb) in a.forests.iter().zip(&b.forests) {
        for (ta, tb) in fa.iter().zip(fb) {
            let (mut ta, mut tb) = (ta.clone(), tb.clone());
            ta.assign_observations(&data.x2);
            tb.assign_observations(&alt.x2);
            compared += 1;
            if ta.partition() != tb.partition() {
                differ += 1;
            }
        }
    }
    let used = a.forests.iter().flatten().filter(|t| t.covariates().contains(&col)).count();
    let msg = format!("{compared} tree pairs compared ({used} split on the transformed column), {differ} differ");
    if differ == 0 && compared > 0 && used > 0 && a.beta == b.beta { Ok(msg) } else { Err(msg) }
}

fn main() {
    let mut failures = 0;
    let mut report = |id: &str, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(m) => println!("PASS {id} {name}: {m} [{secs:.1}s]"),
            Err(m) => {
                failures += 1;
                println!("FAIL {id} {name}: {m} [{secs:.1}s]");
            }
        }
    };
    report("C1", "conjugate oracle", &mut linear_frozen);
    report("C2", "marginal likelihood oracle", &mut marginal_likelihood_oracle);
    report("C3", "friedman bias", &mut friedman_bias);
    let mut tree_sim: Option<ExperimentResult> = None;
    report("C4", "tree-sim contrast", &mut || {
        let sim = SimConfig::desk(Generator::TreeSim);
        let res = run_experiment(&sim, &desk_hyper(), &[Mode::Csp, Mode::Ssp], SEED, jobs(), true).map_err(|e| e.to_string())?;
        let out = tree_sim_contrast(&res);
        tree_sim = Some(res);
        out
    });
    report("C5", "validity invariants", &mut validity_suite);
    report("C6", "probit calibration", &mut probit_calibration);
    report("C7", "interaction detection", &mut || match &tree_sim {
        Some(res) => interaction_ranking(res),
        None => Err("tree-sim fits unavailable".into()),
    });
    report("C8", "monotone invariance", &mut monotone_invariance);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
