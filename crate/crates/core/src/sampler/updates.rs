//! Full-conditional draws for the linear predictor, its covariance, the
//! error variance and the probit latent variables.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::random::{
    sample_inverse_gamma, sample_inverse_wishart, sample_mvn_canonical, sample_truncated_normal,
    RngStream,
};

/// Precision factor and canonical mean of `β | r, σ², Ω`:
/// precision `σ⁻²X1ᵀX1 + Ω⁻¹`, linear term `σ⁻²X1ᵀr + Ω⁻¹b`.
pub fn beta_conditional(
    xtx: &Matrix,
    xtr: &[f64],
    sigma2: f64,
    b: &[f64],
    omega: &Matrix,
) -> Result<(Cholesky, Vec<f64>)> {
    let p = xtr.len();
    if xtx.rows() != p || omega.rows() != p || b.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "coefficient update with {p} columns but X1'X1 is {}x{}, Omega {}x{}, b has {}",
            xtx.rows(),
            xtx.cols(),
            omega.rows(),
            omega.cols(),
            b.len()
        )));
    }
    let omega_inv = Cholesky::new(omega)?.inverse();
    let precision = xtx.scaled(1.0 / sigma2).add(&omega_inv)?;
    let chol = Cholesky::new(&precision).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::Numerical(format!(
            "coefficient posterior precision is singular at pivot {pivot} ({value:e})"
        )),
        other => other,
    })?;
    let prior_term = omega_inv.matvec(b)?;
    let h = xtr
        .iter()
        .zip(prior_term)
        .map(|(a, c)| a / sigma2 + c)
        .collect();
    Ok((chol, h))
}

/// Draws `β ~ MVN(Σ(σ⁻²X1ᵀr + Ω⁻¹b), Σ)` with `Σ = (σ⁻²X1ᵀX1 + Ω⁻¹)⁻¹`.
pub fn update_beta(
    x1: &Matrix,
    r: &[f64],
    sigma2: f64,
    b: &[f64],
    omega: &Matrix,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if x1.rows() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "X1 has {} rows but the residual has {}",
            x1.rows(),
            r.len()
        )));
    }
    let (chol, h) = beta_conditional(&x1.gram(), &x1.t_matvec(r)?, sigma2, b, omega)?;
    Ok(sample_mvn_canonical(&chol, &h, rng))
}

/// Draws `Ω ~ IW((β−b)(β−b)ᵀ + V, v + 1)`.
pub fn update_omega(
    beta: &[f64],
    b: &[f64],
    v_scale: &Matrix,
    v_df: f64,
    rng: &mut RngStream,
) -> Result<Matrix> {
    if beta.len() != b.len() || v_scale.rows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "covariance update with beta of length {}, b of length {}, V of size {}",
            beta.len(),
            b.len(),
            v_scale.rows()
        )));
    }
    let d: Vec<f64> = beta.iter().zip(b).map(|(x, m)| x - m).collect();
    let scale = Matrix::outer(&d, &d).add(v_scale)?;
    sample_inverse_wishart(&scale, v_df + 1.0, rng)
}

/// Draws `σ² ~ IG((n+ν)/2, (S+νλ)/2)` with `S = Σ(y−ŷ)²`.
pub fn update_sigma2(y: &[f64], yhat: &[f64], nu: f64, lambda: f64, rng: &mut RngStream) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::DimensionMismatch(format!(
            "response has {} values, fit has {}",
            y.len(),
            yhat.len()
        )));
    }
    let s: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    if !s.is_finite() {
        return Err(Error::Numerical("non-finite residual sum of squares".into()));
    }
    sample_inverse_gamma((y.len() as f64 + nu) / 2.0, (s + nu * lambda) / 2.0, rng)
}

/// Latent `z_i ~ N(fitted_i, 1)` truncated to the positive half-line when
/// `y_i = 1` and to the negative half-line when `y_i = 0`.
pub fn augment_probit(y: &[f64], fitted: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if y.len() != fitted.len() {
        return Err(Error::DimensionMismatch(format!(
            "response has {} values, fit has {}",
            y.len(),
            fitted.len()
        )));
    }
    y.iter()
        .zip(fitted)
        .map(|(&yi, &f)| {
            let positive = if yi == 1.0 {
                true
            } else if yi == 0.0 {
                false
            } else {
                return Err(Error::Data(format!(
                    "probit response must be 0 or 1, found {yi}"
                )));
            };
            sample_truncated_normal(f, 1.0, positive, rng)
        })
        .collect()
}

/// Checks that a probit response holds only 0 and 1.
pub fn check_binary(y: &[f64]) -> Result<()> {
    match y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(v) => Err(Error::Data(format!(
            "probit response must be 0 or 1, found {v}"
        ))),
        None => Ok(()),
    }
}

/// Linear design with random-effect columns appended, and the matching
/// prior mean and inverse-Wishart hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDesign {
    pub x1: Matrix,
    pub prior_mean: Vec<f64>,
    pub iw_scale: Matrix,
    pub iw_df: f64,
}

/// Builds `X1★ = [X1 | Z]`, `b★ = (b, 0_q)`, `V★ = I_{p+q}` and `v★ = p + q`.
pub fn stack_random_effects(x1: &Matrix, z: &Matrix, b: &[f64]) -> Result<StackedDesign> {
    if b.len() != x1.cols() {
        return Err(Error::DimensionMismatch(format!(
            "prior mean has {} entries for {} fixed effects",
            b.len(),
            x1.cols()
        )));
    }
    let stacked = if z.cols() == 0 { x1.clone() } else { x1.hstack(z)? };
    let dim = stacked.cols();
    let mut prior_mean = b.to_vec();
    prior_mean.resize(dim, 0.0);
    Ok(StackedDesign {
        x1: stacked,
        prior_mean,
        iw_scale: Matrix::identity(dim),
        iw_df: dim as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::RngStream;

    fn toy_design(n: usize) -> (Matrix, Vec<f64>) {
        let mut rng = RngStream::new(100, 0);
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..n).map(|_| rng.standard_normal()).collect())
            .collect();
        let x = Matrix::from_columns(n, &cols).unwrap();
        let r: Vec<f64> = (0..n)
            .map(|i| 1.5 * x[(i, 0)] - 0.7 * x[(i, 1)] + 0.3 * rng.standard_normal())
            .collect();
        (x, r)
    }

    #[test]
    fn flat_prior_gives_least_squares() {
        let (x, r) = toy_design(50);
        let omega = Matrix::identity(2).scaled(1e12);
        let (chol, h) = beta_conditional(&x.gram(), &x.t_matvec(&r).unwrap(), 0.09, &[0.0, 0.0], &omega).unwrap();
        let mean = chol.solve(&h);
        let ols = crate::linalg::least_squares(&x, &r).unwrap();
        for (a, b) in mean.iter().zip(&ols) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn beta_draws_match_conjugate_moments() {
        let (x, r) = toy_design(50);
        let sigma2 = 0.5;
        let b = [0.2, -0.1];
        let omega = Matrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        // Closed form, computed independently through explicit inverses.
        let oi = Cholesky::new(&omega).unwrap().inverse();
        let prec = x.gram().scaled(1.0 / sigma2).add(&oi).unwrap();
        let cov = Cholesky::new(&prec).unwrap().inverse();
        let xtr = x.t_matvec(&r).unwrap();
        let ob = oi.matvec(&b).unwrap();
        let rhs: Vec<f64> = xtr.iter().zip(&ob).map(|(a, c)| a / sigma2 + c).collect();
        let mean = cov.matvec(&rhs).unwrap();

        let mut rng = RngStream::new(7, 1);
        let n = 10_000;
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| update_beta(&x, &r, sigma2, &b, &omega, &mut rng).unwrap())
            .collect();
        for j in 0..2 {
            let m = draws.iter().map(|d| d[j]).sum::<f64>() / n as f64;
            let se = (cov[(j, j)] / n as f64).sqrt();
            assert!((m - mean[j]).abs() < 3.0 * se, "coord {j}: {m} vs {}", mean[j]);
        }
        let m0 = draws.iter().map(|d| d[0]).sum::<f64>() / n as f64;
        let m1 = draws.iter().map(|d| d[1]).sum::<f64>() / n as f64;
        let c01 = draws.iter().map(|d| (d[0] - m0) * (d[1] - m1)).sum::<f64>() / (n - 1) as f64;
        let se = ((cov[(0, 0)] * cov[(1, 1)] + cov[(0, 1)].powi(2)) / n as f64).sqrt();
        assert!((c01 - cov[(0, 1)]).abs() < 3.0 * se);
    }

    #[test]
    fn zero_design_draws_from_prior() {
        let x = Matrix::zeros(10, 2);
        let b = [1.0, -2.0];
        let omega = Matrix::identity(2).scaled(0.04);
        let mut rng = RngStream::new(8, 0);
        let n = 10_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let d = update_beta(&x, &[0.0; 10], 1.0, &b, &omega, &mut rng).unwrap();
            mean[0] += d[0] / n as f64;
            mean[1] += d[1] / n as f64;
        }
        let se = (0.04f64 / n as f64).sqrt();
        assert!((mean[0] - 1.0).abs() < 3.0 * se && (mean[1] + 2.0).abs() < 3.0 * se);
    }

    #[test]
    fn omega_one_dimensional_reduction() {
        // β−b = 2, V = 1, v = 1: scale 5 and 2 degrees of freedom, which in
        // one dimension is an inverse gamma with shape 1 and rate 2.5. The
        // mean is infinite, so compare the median 2.5 / ln 2 instead.
        let mut rng = RngStream::new(9, 0);
        let n = 20_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| update_omega(&[2.0], &[0.0], &Matrix::identity(1), 1.0, &mut rng).unwrap()[(0, 0)])
            .collect();
        draws.sort_by(f64::total_cmp);
        let below = draws.iter().filter(|&&d| d <= 2.5 / 2f64.ln()).count() as f64 / n as f64;
        assert!((below - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn omega_draws_are_positive_definite() {
        let mut rng = RngStream::new(10, 0);
        for _ in 0..200 {
            let o = update_omega(&[0.5, -1.0, 2.0], &[0.0; 3], &Matrix::identity(3), 3.0, &mut rng).unwrap();
            assert!(Cholesky::new(&o).is_ok());
        }
    }

    #[test]
    fn sigma2_inverse_gamma_mean() {
        // n = 100, S = 50, nu = 3, lambda = 1 gives IG(51.5, 26.5), mean 26.5 / 50.5.
        let y = vec![0.0; 100];
        let yhat: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.5f64.sqrt() } else { -(0.5f64.sqrt()) }).collect();
        let mut rng = RngStream::new(11, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| update_sigma2(&y, &yhat, 3.0, 1.0, &mut rng).unwrap()).collect();
        assert!(draws.iter().all(|&d| d > 0.0));
        let mean = draws.iter().sum::<f64>() / n as f64;
        let (a, b) = (51.5f64, 26.5f64);
        let want = b / (a - 1.0);
        assert!((want - 0.5248).abs() < 1e-4);
        let sd = (b * b / ((a - 1.0f64).powi(2) * (a - 2.0))).sqrt();
        assert!((mean - want).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn sigma2_zero_residual() {
        let y = vec![1.0; 30];
        let mut rng = RngStream::new(12, 0);
        let n = 20_000;
        let mean = (0..n).map(|_| update_sigma2(&y, &y, 3.0, 0.2, &mut rng).unwrap()).sum::<f64>() / n as f64;
        let (a, b) = (33.0 / 2.0, 0.3);
        let sd = (b * b / ((a - 1.0f64).powi(2) * (a - 2.0))).sqrt();
        assert!((mean - b / (a - 1.0)).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn probit_latent_signs_and_mean() {
        let mut rng = RngStream::new(13, 0);
        let y: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        let z = augment_probit(&y, &vec![0.3; 1000], &mut rng).unwrap();
        for (yi, zi) in y.iter().zip(&z) {
            assert_eq!(*yi == 1.0, *zi > 0.0);
        }
        let n = 100_000;
        let z = augment_probit(&vec![1.0; n], &vec![0.0; n], &mut rng).unwrap();
        let mean = z.iter().sum::<f64>() / n as f64;
        let want = (2.0 / std::f64::consts::PI).sqrt();
        let sd = (1.0 - 2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - want).abs() < 3.0 * sd / (n as f64).sqrt());
        assert!(augment_probit(&[2.0], &[0.0], &mut rng).is_err());
    }

    #[test]
    fn stacking_shapes() {
        let x1 = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let empty = Matrix::zeros(2, 0);
        let s = stack_random_effects(&x1, &empty, &[0.5, 0.5]).unwrap();
        assert_eq!(s.x1, x1);
        assert_eq!(s.prior_mean, vec![0.5, 0.5]);
        let z = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let s = stack_random_effects(&x1, &z, &[0.5, 0.5]).unwrap();
        assert_eq!(s.x1.cols(), 5);
        assert_eq!(s.prior_mean, vec![0.5, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(s.iw_scale, Matrix::identity(5));
        assert_eq!(s.iw_df, 5.0);
        assert!(stack_random_effects(&x1, &Matrix::zeros(3, 1), &[0.0, 0.0]).is_err());
    }
}
