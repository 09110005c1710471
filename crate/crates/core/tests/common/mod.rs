#![allow(dead_code)]

use cspbart_core::linalg::Matrix;
use cspbart_core::tree::{NodeKind, SplitRule, Threshold, Tree, TreeCovariates};
use cspbart_core::RngStream;

/// Uniform(0, 1) covariates.
pub fn uniform_covariates(n: usize, p: usize, rng: &mut RngStream) -> TreeCovariates {
    let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.uniform()).collect()).collect();
    TreeCovariates::continuous(Matrix::from_columns(n, &cols).unwrap())
}

/// A tree with `splits` random splits at observed values; leaves that would
/// become empty are left alone.
pub fn random_tree(x2: &TreeCovariates, splits: usize, rng: &mut RngStream) -> Tree {
    let mut t = Tree::stump(x2.n_rows());
    t.assign_observations(x2);
    for _ in 0..splits {
        let leaves: Vec<usize> = t.terminals().into_iter().filter(|&i| t.node(i).count() >= 2).collect();
        if leaves.is_empty() {
            break;
        }
        let leaf = leaves[rng.index(leaves.len())];
        let cov = rng.index(x2.n_cols());
        let mut vals: Vec<f64> = t.node(leaf).rows().iter().map(|&r| x2.value(r as usize, cov)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        if vals.len() < 2 {
            continue;
        }
        let cut = vals[1 + rng.index(vals.len() - 1)];
        t.split_terminal(leaf, SplitRule::new(cov, Threshold::Below(cut)), x2);
    }
    t
}

/// Composite Simpson rule on `[a, b]` with `m` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `log ∫ Π_i N(r_i | μ, σ²) N(μ | 0, v) dμ` by quadrature, computed as the
/// log of a rescaled integrand so that large sums do not overflow.
pub fn leaf_log_evidence_quadrature(r: &[f64], sigma2: f64, v: f64) -> f64 {
    let log_integrand = |mu: f64| {
        let ll: f64 = r
            .iter()
            .map(|x| -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - (x - mu).powi(2) / (2.0 * sigma2))
            .sum();
        ll - 0.5 * (2.0 * std::f64::consts::PI * v).ln() - mu * mu / (2.0 * v)
    };
    // Locate the peak and width of the integrand numerically.
    let n = r.len() as f64;
    let sum: f64 = r.iter().sum();
    let precision = n / sigma2 + 1.0 / v;
    let centre = sum / sigma2 / precision;
    let width = precision.sqrt().recip();
    let peak = log_integrand(centre);
    let area = simpson(|mu| (log_integrand(mu) - peak).exp(), centre - 14.0 * width, centre + 14.0 * width, 4000);
    peak + area.ln()
}

/// Tree log marginal likelihood by quadrature, with the tree-independent
/// terms `-n/2 log(2πσ²) - Σr²/(2σ²)` removed.
pub fn tree_log_evidence_quadrature(tree: &Tree, r: &[f64], sigma2: f64, sigma_mu2: f64) -> f64 {
    let mut total = 0.0;
    for id in tree.terminals() {
        let node = tree.node(id);
        let leaf: Vec<f64> = node.rows().iter().map(|&i| r[i as usize]).collect();
        let v = if node.shrink() { 1e-10 * sigma_mu2 } else { sigma_mu2 };
        let base: f64 = leaf
            .iter()
            .map(|x| -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - x * x / (2.0 * sigma2))
            .sum();
        total += leaf_log_evidence_quadrature(&leaf, sigma2, v) - base;
    }
    total
}

/// Covariates on the ancestors of `node`, found by walking parent links.
pub fn ancestor_covariates(tree: &Tree, node: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cur = tree.node(node).parent;
    while let Some(p) = cur {
        if let NodeKind::Internal { rule, .. } = &tree.node(p).kind {
            out.push(rule.covariate);
        }
        cur = tree.node(p).parent;
    }
    out
}

/// Ordinary least squares without intercept via the normal equations.
pub fn ols(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let p = x.cols();
    let mut a = vec![vec![0.0; p + 1]; p];
    for r in 0..x.rows() {
        let row = x.row(r);
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * y[r];
        }
    }
    // Gauss-Jordan with partial pivoting.
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for i in 0..p {
            if i != c {
                let f = a[i][c] / a[c][c];
                for j in c..=p {
                    a[i][j] -= f * a[c][j];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}
