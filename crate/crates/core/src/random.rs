//! Seeded random streams and the variate generators used by the Gibbs steps.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

/// A reproducible random stream. The same `(seed, stream)` pair always yields
/// the same sequence; distinct stream ids give independent ChaCha streams
/// under one seed, which is how chains and simulation replicates are split.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

/// Serializable position of an [`RngStream`], used by chain checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPosition {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    pub fn position(&self) -> RngPosition {
        RngPosition {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_position(pos: RngPosition) -> Self {
        let mut s = Self::new(pos.seed, pos.stream);
        s.inner.set_word_pos(pos.word_pos);
        s
    }

    pub fn uniform(&mut self) -> f64 {
        self.random::<f64>()
    }

    /// Uniform index in `0..len`. `len` must be positive.
    pub fn index(&mut self, len: usize) -> usize {
        debug_assert!(len > 0);
        self.random_range(0..len)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Draw from `MVN(mean, cov)`.
pub fn sample_mvn(mean: &[f64], cov: &Matrix, rng: &mut RngStream) -> Result<Vec<f64>> {
    if cov.rows() != mean.len() || !cov.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {} but covariance is {}x{}",
            mean.len(),
            cov.rows(),
            cov.cols()
        )));
    }
    let chol = Cholesky::new(cov)?;
    let z: Vec<f64> = (0..mean.len()).map(|_| rng.standard_normal()).collect();
    let l = chol.factor();
    Ok((0..mean.len())
        .map(|i| mean[i] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>())
        .collect())
}

/// Draw from `MVN(P⁻¹ h, P⁻¹)` given the Cholesky factor of the precision `P`.
pub fn sample_mvn_canonical(precision: &Cholesky, h: &[f64], rng: &mut RngStream) -> Vec<f64> {
    let mean = precision.solve(h);
    let z: Vec<f64> = (0..mean.len()).map(|_| rng.standard_normal()).collect();
    let dev = precision.solve_upper(&z);
    mean.iter().zip(dev).map(|(m, d)| m + d).collect()
}

/// `Gamma(shape, rate)` draw (mean `shape / rate`).
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma needs positive shape and rate, got shape={shape}, rate={rate}"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidParameter(format!("gamma: {e}")))?;
    Ok(g.sample(rng))
}

/// Inverse-gamma draw with density proportional to `x^(-shape-1) exp(-rate/x)`,
/// taken as the reciprocal of a `Gamma(shape, rate)` draw.
pub fn sample_inverse_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    let g = sample_gamma(shape, rate, rng)?;
    // A gamma draw can underflow to zero for tiny shapes.
    Ok(1.0 / g.max(f64::MIN_POSITIVE))
}

/// Inverse-Wishart draw with scale `Ψ` and `df` degrees of freedom
/// (mean `Ψ / (df - dim - 1)`), via the Bartlett decomposition of a
/// `Wishart(Ψ⁻¹, df)` draw which is then inverted.
pub fn sample_inverse_wishart(scale: &Matrix, df: f64, rng: &mut RngStream) -> Result<Matrix> {
    if !scale.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "inverse-Wishart scale must be square, got {}x{}",
            scale.rows(),
            scale.cols()
        )));
    }
    let dim = scale.rows();
    if !(df > dim as f64 - 1.0) {
        return Err(Error::InvalidParameter(format!(
            "inverse-Wishart needs df > dim - 1, got df={df} for dim={dim}"
        )));
    }
    let inv_scale = Cholesky::new(scale)?.inverse();
    let l = Cholesky::new(&inv_scale)?.into_factor();

    let mut a = Matrix::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| Error::InvalidParameter(format!("chi-squared: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.standard_normal();
        }
    }
    let la = l.matmul(&a)?;
    let mut wishart = la.matmul(&la.transpose())?;
    wishart.symmetrize();
    let mut draw = Cholesky::new(&wishart)
        .map_err(|e| Error::Numerical(format!("Wishart draw not invertible: {e}")))?
        .inverse();
    draw.symmetrize();
    Ok(draw)
}

/// Truncation points further than this many standard deviations into the
/// tail switch from inverse-CDF to exponential rejection.
const TAIL_SWITCH: f64 = 5.0;

/// Standard normal draw conditioned on `x >= a`.
fn standard_normal_above(a: f64, rng: &mut RngStream) -> f64 {
    if a > TAIL_SWITCH {
        // Robert (1995) translated-exponential proposal.
        let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = Exp1.sample(rng);
            let z = a + e / alpha;
            if rng.uniform() <= (-0.5 * (z - alpha).powi(2)).exp() {
                return z;
            }
        }
    }
    // Inverse CDF on the upper tail: P(X >= a) = Φ(-a).
    let upper = normal_cdf(-a);
    loop {
        let v = rng.uniform() * upper;
        if v > 0.0 {
            let x = -normal_quantile(v);
            if x.is_finite() {
                return x.max(a);
            }
        }
    }
}

/// Draw from `N(mu, sigma²)` truncated to `(0, ∞)` when `positive_side`,
/// otherwise to `(-∞, 0)`.
pub fn sample_truncated_normal(
    mu: f64,
    sigma: f64,
    positive_side: bool,
    rng: &mut RngStream,
) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "truncated normal needs finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
        )));
    }
    let draw = if positive_side {
        mu + sigma * standard_normal_above(-mu / sigma, rng)
    } else {
        mu - sigma * standard_normal_above(mu / sigma, rng)
    };
    // Keep the sign strict even when rounding lands on zero.
    Ok(match (positive_side, draw) {
        (true, d) if d <= 0.0 => f64::MIN_POSITIVE,
        (false, d) if d >= 0.0 => -f64::MIN_POSITIVE,
        (_, d) => d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| RngStream::new(7, 0).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s0 = RngStream::new(7, 0);
        let mut s1 = RngStream::new(7, 1);
        let x: Vec<u64> = (0..8).map(|_| s0.next_u64()).collect();
        let y: Vec<u64> = (0..8).map(|_| s1.next_u64()).collect();
        assert_ne!(x, y);
    }

    #[test]
    fn position_round_trip() {
        let mut a = RngStream::new(3, 9);
        for _ in 0..17 {
            a.next_u32();
        }
        let mut b = RngStream::from_position(a.position());
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn mvn_same_seed_same_draw() {
        let cov = Matrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let a = sample_mvn(&[1.0, 2.0], &cov, &mut RngStream::new(1, 0)).unwrap();
        let b = sample_mvn(&[1.0, 2.0], &cov, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mvn_standard_moments() {
        let mut rng = RngStream::new(11, 0);
        let cov = Matrix::identity(2);
        let draws: Vec<Vec<f64>> = (0..10_000)
            .map(|_| sample_mvn(&[0.0, 0.0], &cov, &mut rng).unwrap())
            .collect();
        for j in 0..2 {
            let m = draws.iter().map(|d| d[j]).sum::<f64>() / 1e4;
            assert!(m.abs() < 3.0 / 100.0, "coordinate {j} mean {m}");
        }
    }

    #[test]
    fn mvn_degenerate_covariance() {
        let cov = Matrix::identity(3).scaled(1e-12);
        let mean = [1.0, -2.0, 0.5];
        let d = sample_mvn(&mean, &cov, &mut RngStream::new(5, 0)).unwrap();
        for (a, b) in d.iter().zip(mean) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn mvn_rejects_mismatch_and_non_pd() {
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            sample_mvn(&[0.0], &Matrix::identity(2), &mut rng),
            Err(Error::DimensionMismatch(_))
        ));
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            sample_mvn(&[0.0, 0.0], &bad, &mut rng),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn inverse_wishart_mean() {
        let mut rng = RngStream::new(21, 0);
        let draws: Vec<Matrix> = (0..10_000)
            .map(|_| sample_inverse_wishart(&Matrix::identity(2), 10.0, &mut rng).unwrap())
            .collect();
        for i in 0..2 {
            for j in 0..2 {
                let xs: Vec<f64> = draws.iter().map(|d| d[(i, j)]).collect();
                let (m, se) = mean_and_se(&xs);
                let want = if i == j { 1.0 / 7.0 } else { 0.0 };
                assert!((m - want).abs() < 3.0 * se, "entry ({i},{j}): {m} vs {want} (se {se})");
            }
        }
    }

    #[test]
    fn inverse_wishart_draws_are_symmetric_pd() {
        let mut rng = RngStream::new(4, 2);
        let scale = Matrix::from_rows(&[
            vec![2.0, 0.5, 0.1],
            vec![0.5, 1.0, 0.2],
            vec![0.1, 0.2, 0.7],
        ])
        .unwrap();
        for df in [2.5, 3.0, 4.0, 12.0] {
            for _ in 0..200 {
                let d = sample_inverse_wishart(&scale, df, &mut rng).unwrap();
                assert!(d.is_symmetric(0.0));
                assert!(Cholesky::new(&d).is_ok());
            }
        }
    }

    #[test]
    fn inverse_wishart_one_dim_is_inverse_gamma() {
        // IW(s, df) in one dimension is IG(df/2, s/2); compare by a
        // Kolmogorov–Smirnov statistic against the closed-form CDF.
        use statrs::distribution::InverseGamma;
        let (s, df) = (3.0, 6.0);
        let mut rng = RngStream::new(8, 0);
        let n = 5000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| sample_inverse_wishart(&Matrix::diagonal(&[s]), df, &mut rng).unwrap()[(0, 0)])
            .collect();
        xs.sort_by(f64::total_cmp);
        let ig = InverseGamma::new(df / 2.0, s / 2.0).unwrap();
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = ig.cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value of the KS statistic.
        assert!(d * (n as f64).sqrt() < 1.628, "KS statistic {d}");
    }

    #[test]
    fn inverse_wishart_rejects_bad_input() {
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            sample_inverse_wishart(&Matrix::identity(3), 1.5, &mut rng),
            Err(Error::InvalidParameter(_))
        ));
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(sample_inverse_wishart(&bad, 5.0, &mut rng).is_err());
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = RngStream::new(31, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_inverse_gamma(3.0, 4.0, &mut rng).unwrap())
            .collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let (m, se) = mean_and_se(&xs);
        assert!((m - 2.0).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn inverse_gamma_is_reciprocal_gamma() {
        for seed in 0..20 {
            let g = sample_gamma(2.5, 1.5, &mut RngStream::new(seed, 3)).unwrap();
            let ig = sample_inverse_gamma(2.5, 1.5, &mut RngStream::new(seed, 3)).unwrap();
            assert_eq!(ig, 1.0 / g);
        }
    }

    #[test]
    fn inverse_gamma_rejects_non_positive() {
        let mut rng = RngStream::new(0, 0);
        assert!(sample_inverse_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_inverse_gamma(1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn truncated_normal_sides() {
        let mut rng = RngStream::new(2, 0);
        for &mu in &[-40.0, -6.0, -1.0, 0.0, 1.0, 6.0, 40.0] {
            for _ in 0..200 {
                assert!(sample_truncated_normal(mu, 1.0, true, &mut rng).unwrap() > 0.0);
                assert!(sample_truncated_normal(mu, 1.0, false, &mut rng).unwrap() < 0.0);
            }
        }
    }

    #[test]
    fn truncated_normal_half_normal_mean() {
        let mut rng = RngStream::new(13, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_truncated_normal(0.0, 1.0, true, &mut rng).unwrap())
            .collect();
        let (m, se) = mean_and_se(&xs);
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert!((m - want).abs() < 3.0 * se, "mean {m} vs {want}");
    }

    #[test]
    fn truncated_normal_far_tail_mean() {
        // E[X | X > a] for X ~ N(0,1) is φ(a) / (1 - Φ(a)).
        let mu = -7.0;
        let a = -mu;
        let mut rng = RngStream::new(17, 0);
        let xs: Vec<f64> = (0..50_000)
            .map(|_| sample_truncated_normal(mu, 1.0, true, &mut rng).unwrap() - mu)
            .collect();
        let (m, se) = mean_and_se(&xs);
        let phi = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let want = phi / normal_cdf(-a);
        assert!((m - want).abs() < 3.0 * se, "mean {m} vs {want}");
    }

    #[test]
    fn truncated_normal_deterministic_and_validated() {
        let a = sample_truncated_normal(0.3, 2.0, false, &mut RngStream::new(9, 9)).unwrap();
        let b = sample_truncated_normal(0.3, 2.0, false, &mut RngStream::new(9, 9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_truncated_normal(0.0, 0.0, true, &mut RngStream::new(0, 0)).is_err());
    }
}
