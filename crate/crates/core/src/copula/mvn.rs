//! Multivariate normal CDF by randomized quasi-Monte Carlo.
//!
//! Separation of variables reduces an m-dimensional Gaussian CDF to an integral over the
//! (m-1)-dimensional unit cube. The integrand is evaluated on randomly shifted Richtmyer
//! lattices with the baker's (tent) periodization; the spread of the shift means gives the
//! error estimate.

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::special::{norm_cdf, norm_quantile};
use nalgebra::{DMatrix, Matrix4};
use rand::Rng as _;

const PRIME_ROOTS: [f64; 9] = [
    std::f64::consts::SQRT_2,
    1.732_050_807_568_877_2,
    2.236_067_977_499_79,
    2.645_751_311_064_590_7,
    3.316_624_790_355_4,
    3.605_551_275_463_989,
    4.123_105_625_617_661,
    4.358_898_943_540_674,
    4.795_831_523_312_719,
];

/// Internal seed for the lattice shifts; fixed so every call is deterministic.
pub const QMC_SEED: u64 = 0x51AB_0C4F_D00D_2024;

#[derive(Debug, Clone, Copy)]
pub struct QmcOptions {
    /// Target absolute error (three standard errors of the shift means).
    pub tol: f64,
    /// Total point budget over all shifts.
    pub max_points: usize,
    pub shifts: usize,
    /// Points per shift on the first pass; doubled until `tol` or the budget is reached.
    pub initial_points: usize,
    pub seed: u64,
}

impl Default for QmcOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_points: 200_000, shifts: 10, initial_points: 1_000, seed: QMC_SEED }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub value: f64,
    pub error: f64,
    pub points: usize,
}

/// Cholesky factor and limits after ordering; variables with `a = +inf` are dropped.
pub(crate) struct Prepared {
    chol: Vec<Vec<f64>>,
    upper: Vec<f64>,
}

impl Prepared {
    pub(crate) fn new(a: &[f64], sigma: &DMatrix<f64>) -> Result<Prepared> {
        let m = a.len();
        if sigma.nrows() != m || sigma.ncols() != m {
            return Err(Error::Shape(format!("limits have length {m}, matrix is {:?}", sigma.shape())));
        }
        for i in 0..m {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidCorrelation("matrix is not symmetric".into()));
                }
            }
        }
        // +inf limits integrate out; order the rest most-restrictive first
        let mut keep: Vec<usize> = (0..m).filter(|&i| a[i] != f64::INFINITY).collect();
        keep.sort_by(|&i, &j| {
            let si = a[i] / sigma[(i, i)].sqrt();
            let sj = a[j] / sigma[(j, j)].sqrt();
            si.total_cmp(&sj).then(i.cmp(&j))
        });
        let k = keep.len();
        let sub = DMatrix::from_fn(k, k, |r, c| sigma[(keep[r], keep[c])]);
        let chol = sub
            .cholesky()
            .ok_or_else(|| Error::InvalidCorrelation("matrix is not positive definite".into()))?
            .unpack();
        Ok(Prepared {
            chol: (0..k).map(|r| (0..=r).map(|c| chol[(r, c)]).collect()).collect(),
            upper: keep.iter().map(|&i| a[i]).collect(),
        })
    }

    pub(crate) fn dim(&self) -> usize {
        self.upper.len()
    }

    /// Integrand at `w` in the unit cube of dimension `dim - 1`.
    #[inline]
    pub(crate) fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let k = self.upper.len();
        if k == 0 {
            return 1.0;
        }
        let mut e = norm_cdf(self.upper[0] / self.chol[0][0]);
        let mut f = e;
        for i in 1..k {
            if f == 0.0 {
                return 0.0;
            }
            let u = (w[i - 1] * e).clamp(1e-300, 1.0 - 1e-16);
            y[i - 1] = norm_quantile(u);
            let row = &self.chol[i];
            let s: f64 = (0..i).map(|c| row[c] * y[c]).sum();
            e = norm_cdf((self.upper[i] - s) / row[i]);
            f *= e;
        }
        f
    }
}

/// Generate the `j`-th tent-transformed shifted lattice point.
#[inline]
pub(crate) fn lattice_point(j: usize, shift: &[f64], out: &mut [f64]) {
    for (d, o) in out.iter_mut().enumerate() {
        let x = (j as f64 * PRIME_ROOTS[d] + shift[d]).fract();
        *o = 1.0 - (2.0 * x - 1.0).abs();
    }
}

pub(crate) fn shifts(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..count).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
}

fn mean_and_error(means: &[f64]) -> (f64, f64) {
    let m = means.len() as f64;
    let mean = means.iter().sum::<f64>() / m;
    let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    (mean, 3.0 * (var / m).sqrt())
}

/// P(X <= a) for X ~ N(0, sigma). `a` may contain infinities.
pub fn mvn_cdf(a: &[f64], sigma: &DMatrix<f64>, opts: &QmcOptions) -> Result<MvnEstimate> {
    if a.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("NaN limit".into()));
    }
    if a.contains(&f64::NEG_INFINITY) {
        Prepared::new(&vec![0.0; a.len()], sigma)?;
        return Ok(MvnEstimate { value: 0.0, error: 0.0, points: 0 });
    }
    let prep = Prepared::new(a, sigma)?;
    let k = prep.dim();
    if k <= 1 {
        let value = if k == 0 { 1.0 } else { norm_cdf(prep.upper[0] / prep.chol[0][0]) };
        return Ok(MvnEstimate { value, error: 0.0, points: 0 });
    }
    if k - 1 > PRIME_ROOTS.len() {
        return Err(Error::InvalidParameter(format!("dimension {k} exceeds the supported lattice size")));
    }
    let shifts = shifts(opts.shifts.max(2), k - 1, opts.seed);
    let mut n = opts.initial_points.max(16);
    let mut w = vec![0.0; k - 1];
    let mut y = vec![0.0; k - 1];
    loop {
        let means: Vec<f64> = shifts
            .iter()
            .map(|s| {
                let mut acc = 0.0;
                for j in 1..=n {
                    lattice_point(j, s, &mut w);
                    acc += prep.integrand(&w, &mut y);
                }
                acc / n as f64
            })
            .collect();
        let (value, error) = mean_and_error(&means);
        let used = n * shifts.len();
        if error <= opts.tol || 2 * used > opts.max_points {
            return Ok(MvnEstimate { value: value.clamp(0.0, 1.0), error, points: used });
        }
        n *= 2;
    }
}

/// Four-dimensional Gaussian CDF with estimated absolute error at most `tol` (within the point
/// budget).
pub fn phi4(a: [f64; 4], sigma4: &Matrix4<f64>, tol: f64) -> Result<f64> {
    let s = DMatrix::from_fn(4, 4, |i, j| sigma4[(i, j)]);
    mvn_cdf(&a, &s, &QmcOptions { tol, ..Default::default() }).map(|e| e.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// P(all X_i <= a) for equicorrelated X, integrating over the common factor with
    /// composite Simpson on [-10, 10].
    fn equicorrelated_oracle(a: f64, rho: f64, m: i32) -> f64 {
        let steps = 20_000;
        let (lo, hi) = (-10.0, 10.0);
        let h = (hi - lo) / steps as f64;
        let f = |z: f64| {
            let dens = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            dens * norm_cdf((a - rho.sqrt() * z) / (1.0 - rho).sqrt()).powi(m)
        };
        let mut s = f(lo) + f(hi);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    fn equi(rho: f64) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| if i == j { 1.0 } else { rho })
    }

    #[test]
    fn total_mass() {
        let inf = f64::INFINITY;
        assert_eq!(phi4([inf; 4], &equi(0.3), 1e-6).unwrap(), 1.0);
    }

    #[test]
    fn independent_orthant() {
        let v = phi4([0.0; 4], &Matrix4::identity(), 1e-6).unwrap();
        assert!((v - 0.0625).abs() < 1e-6, "{v}");
    }

    #[test]
    fn equicorrelated_orthant_against_quadrature() {
        let oracle = equicorrelated_oracle(0.0, 0.5, 4);
        // closed form for rho = 1/2 is 1/(m+1)
        assert!((oracle - 0.2).abs() < 1e-9);
        let v = phi4([0.0; 4], &equi(0.5), 1e-6).unwrap();
        assert!((v - oracle).abs() < 1e-4, "{v} vs {oracle}");
    }

    #[test]
    fn shifted_limits_against_quadrature() {
        for &(a, rho) in &[(0.7, 0.3), (-0.4, 0.8), (1.5, 0.1)] {
            let oracle = equicorrelated_oracle(a, rho, 4);
            let est = mvn_cdf(&[a; 4], &DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { rho }), &QmcOptions::default()).unwrap();
            assert!((est.value - oracle).abs() < 1e-5, "a={a} rho={rho}: {} vs {oracle}", est.value);
            assert!(est.error <= 1e-6 || est.points >= 100_000);
        }
    }

    #[test]
    fn diagonal_is_product() {
        let a = [0.3, -1.2, 0.9, 2.0];
        let want: f64 = a.iter().map(|&v| norm_cdf(v)).product();
        let v = phi4(a, &Matrix4::identity(), 1e-7).unwrap();
        assert!((v - want).abs() < 1e-7);
    }

    #[test]
    fn rejects_non_pd() {
        let mut s = equi(0.5);
        s[(0, 1)] = 1.5;
        s[(1, 0)] = 1.5;
        assert!(matches!(phi4([0.0; 4], &s, 1e-6), Err(Error::InvalidCorrelation(_))));
    }

    #[test]
    fn infinite_limits() {
        let inf = f64::INFINITY;
        assert_eq!(phi4([-inf, 0.0, 0.0, 0.0], &equi(0.2), 1e-6).unwrap(), 0.0);
        // bivariate orthant with correlation rho: 1/4 + asin(rho)/(2 pi)
        let v = phi4([0.0, 0.0, inf, inf], &equi(0.6), 1e-7).unwrap();
        let want = 0.25 + 0.6f64.asin() / (2.0 * std::f64::consts::PI);
        assert!((v - want).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let a = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(phi4(a, &equi(0.4), 1e-6).unwrap(), phi4(a, &equi(0.4), 1e-6).unwrap());
    }
}
