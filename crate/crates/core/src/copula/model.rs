use super::bridge::invert_bridge;
use super::kendall::{check_no_constant, columns, kendall_tau};
use super::nearest::nearest_correlation;
use crate::error::{Error, Result};
use crate::par::{map_range, ExecMode};
use crate::rng::rng_from_seed;
use crate::special::{norm_cdf, norm_quantile};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Fitted truncated latent Gaussian copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCopulaModel {
    sigma_hat: DMatrix<f64>,
    delta_hat: Vec<f64>,
    marginals: Vec<Vec<f64>>,
    clamped: Vec<(usize, usize)>,
}

impl LatentCopulaModel {
    pub fn sigma_hat(&self) -> &DMatrix<f64> {
        &self.sigma_hat
    }

    pub fn delta_hat(&self) -> &[f64] {
        &self.delta_hat
    }

    /// Sorted training values per variable.
    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    /// Pairs whose Kendall's tau was beyond the bridge's range and got a boundary estimate.
    pub fn clamped_pairs(&self) -> &[(usize, usize)] {
        &self.clamped
    }

    pub fn dim(&self) -> usize {
        self.delta_hat.len()
    }
}

fn zero_levels(cols: &[Vec<f64>]) -> Vec<f64> {
    cols.iter()
        .map(|c| {
            let n = c.len() as f64;
            let pi = c.iter().filter(|&&v| v == 0.0).count() as f64 / n;
            norm_quantile(pi.clamp(0.25 / n, 1.0 - 0.25 / n))
        })
        .collect()
}

/// Truncation levels Δ̂_j = Φ⁻¹(π̂_j), with the zero fraction clamped to [1/(4n), 1 - 1/(4n)].
pub fn zero_truncation_levels(data: &DMatrix<f64>) -> Result<Vec<f64>> {
    if data.nrows() < 2 {
        return Err(Error::DegenerateData(format!("need n >= 2, got {}", data.nrows())));
    }
    Ok(zero_levels(&columns(data)))
}

fn check_data(data: &DMatrix<f64>) -> Result<()> {
    let (n, p) = data.shape();
    if n < 10 || p < 2 {
        return Err(Error::DegenerateData(format!("need n >= 10 and p >= 2, got {n}x{p}")));
    }
    if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::DegenerateData("values must be finite and nonnegative".into()));
    }
    Ok(())
}

pub fn fit_tlnpn(data: &DMatrix<f64>) -> Result<LatentCopulaModel> {
    fit_tlnpn_with(data, ExecMode::default())
}

/// Rank-based fit: pairwise Kendall's tau inverted through the bridge, projected to a PD
/// correlation matrix. Pairs are processed independently under `mode`.
pub fn fit_tlnpn_with(data: &DMatrix<f64>, mode: ExecMode) -> Result<LatentCopulaModel> {
    check_data(data)?;
    let p = data.ncols();
    let cols = columns(data);
    check_no_constant(&cols)?;
    let delta = zero_levels(&cols);
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|j| ((j + 1)..p).map(move |k| (j, k))).collect();
    let solved = map_range(mode, pairs.len(), |i| {
        let (j, k) = pairs[i];
        invert_bridge(kendall_tau(&cols[j], &cols[k]), delta[j], delta[k])
    });
    let mut raw = DMatrix::identity(p, p);
    let mut clamped = Vec::new();
    for (&(j, k), inv) in pairs.iter().zip(solved) {
        let inv = inv?;
        raw[(j, k)] = inv.sigma;
        raw[(k, j)] = inv.sigma;
        if inv.clamped {
            clamped.push((j, k));
        }
    }
    let sigma_hat = nearest_correlation(&raw)?;
    let marginals = cols
        .into_iter()
        .map(|mut c| {
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    Ok(LatentCopulaModel { sigma_hat, delta_hat: delta, marginals, clamped })
}

/// Smallest order statistic whose empirical CDF is at least `u`.
pub(crate) fn empirical_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let idx = ((u * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Draw latent Gaussians with correlation `sigma`, then push each coordinate through Φ and the
/// given empirical quantile functions.
pub(crate) fn sample_gaussian_copula(sigma: &DMatrix<f64>, marginals: &[Vec<f64>], n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let p = sigma.nrows();
    let l = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("latent correlation is not positive definite".into()))?
        .unpack();
    let mut rng = rng_from_seed(seed);
    let mut out = DMatrix::zeros(n, p);
    let mut e = DVector::zeros(p);
    for i in 0..n {
        for v in e.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let z = &l * &e;
        for j in 0..p {
            out[(i, j)] = empirical_quantile(&marginals[j], norm_cdf(z[j]));
        }
    }
    Ok(out)
}

/// Simulate `n` rows from a fitted model.
pub fn sample_tlnpn(model: &LatentCopulaModel, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_gaussian_copula(&model.sigma_hat, &model.marginals, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_levels() {
        let mut d = DMatrix::from_element(100, 3, 1.0);
        for i in 0..50 {
            d[(i, 0)] = 0.0;
        }
        for i in 0..30 {
            d[(i, 2)] = 0.0;
        }
        let delta = zero_truncation_levels(&d).unwrap();
        assert_eq!(delta[0], 0.0);
        // mpmath: ndtri(1/400), ndtri(0.3)
        assert!((delta[1] + 2.807_033_768_343_804).abs() < 1e-13);
        assert!((delta[2] + 0.524_400_512_708_040_8).abs() < 1e-13);
    }

    #[test]
    fn quantile_convention() {
        let s = [0.0, 0.0, 1.0, 3.0];
        assert_eq!(empirical_quantile(&s, 0.0), 0.0);
        assert_eq!(empirical_quantile(&s, 0.5), 0.0);
        assert_eq!(empirical_quantile(&s, 0.500001), 1.0);
        assert_eq!(empirical_quantile(&s, 1.0), 3.0);
    }

    #[test]
    fn identical_columns_hit_the_boundary() {
        let v: Vec<f64> = (0..30).map(|i| (i * 7 % 31) as f64 + 1.0).collect();
        let d = DMatrix::from_fn(30, 2, |i, _| v[i]);
        let m = fit_tlnpn(&d).unwrap();
        assert_eq!(m.clamped_pairs(), &[(0, 1)]);
        assert!((m.sigma_hat()[(0, 1)] - super::super::SIGMA_BOUND).abs() < 1e-9);
    }

    #[test]
    fn rejects_small_or_constant() {
        let d = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64);
        assert!(fit_tlnpn(&d).is_err());
        let d = DMatrix::from_fn(20, 2, |i, j| if j == 0 { i as f64 } else { 4.0 });
        assert!(matches!(fit_tlnpn(&d), Err(Error::ConstantColumn { column: 1 })));
    }
}
