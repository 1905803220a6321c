//! Maximum-likelihood fitting of ZINB and hurdle NB regressions.
//!
//! Mean model: `ln mu_i = x_i' beta`. Zero model: `logit pi_i = z_i' gamma`, where `pi` is the
//! extra-zero weight (ZINB) or the hurdle probability (HNB). Dispersion is optimized as `ln r`.

pub mod optim;

use crate::count_models::{self, nb_log_nonzero, nb_log_pmf_raw, nb_zero_log, CountParams, Flavor};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::special::{log1p_exp, log_add_exp, logistic, logit};
use nalgebra::{DMatrix, DVector};
use optim::{minimize, numerical_hessian, OptimOptions, OptimResult};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionCoefficients {
    /// Mean-model coefficients (log link), length q1.
    pub beta: Vec<f64>,
    /// Zero-model coefficients (logit link), length q2. Empty for NB.
    pub gamma: Vec<f64>,
    pub log_r: f64,
}

impl RegressionCoefficients {
    pub fn r(&self) -> f64 {
        self.log_r.exp()
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend_from_slice(&self.gamma);
        v.push(self.log_r);
        v
    }

    fn from_slice(theta: &[f64], q1: usize, q2: usize) -> Self {
        Self {
            beta: theta[..q1].to_vec(),
            gamma: theta[q1..q1 + q2].to_vec(),
            log_r: theta[q1 + q2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionFit {
    pub coefficients: RegressionCoefficients,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub flavor: Flavor,
    pub converged: bool,
    pub n_obs: usize,
    pub iterations: usize,
}

impl RegressionFit {
    fn new(coefficients: RegressionCoefficients, loglik: f64, flavor: Flavor, converged: bool, n_obs: usize, iterations: usize) -> Self {
        let n_params = coefficients.beta.len() + coefficients.gamma.len() + 1;
        Self {
            aic: 2.0 * n_params as f64 - 2.0 * loglik,
            coefficients,
            loglik,
            n_params,
            flavor,
            converged,
            n_obs,
            iterations,
        }
    }

    /// Marginal parameters for one observation.
    pub fn params_at(&self, x_row: &[f64], z_row: &[f64]) -> Result<CountParams> {
        let c = &self.coefficients;
        let mu = linear(x_row, &c.beta).exp();
        let pi = if self.flavor == Flavor::NB { 0.0 } else { logistic(linear(z_row, &c.gamma)) };
        CountParams::new(mu, c.r(), pi, self.flavor)
    }
}

/// Akaike information criterion, `2 k - 2 loglik`.
pub fn aic(fit: &RegressionFit) -> f64 {
    2.0 * fit.n_params as f64 - 2.0 * fit.loglik
}

/// The four displayed components of the ZINB log-likelihood and their combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZinbLoglik {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub total: f64,
}

#[inline]
fn linear(row: &[f64], coef: &[f64]) -> f64 {
    row.iter().zip(coef).map(|(a, b)| a * b).sum()
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    (0..m.ncols()).map(|j| m[(i, j)]).collect()
}

fn linear_predictor(m: &DMatrix<f64>, coef: &[f64]) -> DVector<f64> {
    m * DVector::from_column_slice(coef)
}

fn means(x: &DMatrix<f64>, beta: &[f64]) -> Result<DVector<f64>> {
    let eta = linear_predictor(x, beta);
    let mut mu = eta.map(f64::exp);
    for (i, m) in mu.iter_mut().enumerate() {
        if !m.is_finite() || *m <= 0.0 {
            if eta[i] < 0.0 && eta[i].is_finite() {
                // underflow to 0: keep it positive so the pmf stays defined
                *m = f64::MIN_POSITIVE;
            } else {
                return Err(Error::IllConditionedDesign { row: i });
            }
        }
    }
    Ok(mu)
}

fn check_shapes(y: &[u64], x: &DMatrix<f64>, q1: usize, z: Option<(&DMatrix<f64>, usize)>) -> Result<()> {
    if x.nrows() != y.len() || x.ncols() != q1 {
        return Err(Error::Shape(format!(
            "mean design is {}x{}, expected {}x{}",
            x.nrows(),
            x.ncols(),
            y.len(),
            q1
        )));
    }
    if let Some((z, q2)) = z {
        if z.nrows() != y.len() || z.ncols() != q2 {
            return Err(Error::Shape(format!(
                "zero design is {}x{}, expected {}x{}",
                z.nrows(),
                z.ncols(),
                y.len(),
                q2
            )));
        }
    }
    Ok(())
}

/// ZINB log-likelihood `L1 + L2 + L3 - L4`.
pub fn zinb_loglik(y: &[u64], x: &DMatrix<f64>, z: &DMatrix<f64>, coef: &RegressionCoefficients) -> Result<ZinbLoglik> {
    check_shapes(y, x, coef.beta.len(), Some((z, coef.gamma.len())))?;
    let r = coef.r();
    if !r.is_finite() {
        return Err(Error::InvalidParameter(format!("dispersion exp({}) is not finite", coef.log_r)));
    }
    let mu = means(x, &coef.beta)?;
    let eta_z = linear_predictor(z, &coef.gamma);
    let lgr = ln_gamma(r);
    let (mut l1, mut l2, mut l3, mut l4) = (0.0, 0.0, 0.0, 0.0);
    for (i, &yi) in y.iter().enumerate() {
        let m = mu[i];
        let e = eta_z[i];
        l4 += log1p_exp(e);
        if yi == 0 {
            l1 += log_add_exp(e, nb_zero_log(m, r));
        } else {
            let yf = yi as f64;
            // sum_{t<y} ln(t + r)
            l2 += ln_gamma(yf + r) - lgr;
            l3 += -ln_gamma(yf + 1.0) - (yf + r) * (m / r).ln_1p() - yf * r.ln() + yf * m.ln();
        }
    }
    Ok(ZinbLoglik { l1, l2, l3, l4, total: l1 + l2 + l3 - l4 })
}

/// Logistic (hurdle) part of the HNB log-likelihood: sum of ln pi for zeros and ln(1 - pi) otherwise.
fn hurdle_part(y: &[u64], z: &DMatrix<f64>, gamma: &[f64]) -> f64 {
    let eta = linear_predictor(z, gamma);
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| if yi == 0 { -log1p_exp(-e) } else { -log1p_exp(e) })
        .sum()
}

/// Zero-truncated NB part over the positive observations.
fn truncated_part(y: &[u64], x: &DMatrix<f64>, beta: &[f64], log_r: f64) -> Result<f64> {
    let r = log_r.exp();
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::InvalidParameter(format!("dispersion exp({log_r}) is not usable")));
    }
    let mu = means(x, beta)?;
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        if yi > 0 {
            let m = mu[i];
            let log_nonzero = nb_log_nonzero(m, r).ok_or(Error::DegenerateTruncation { mu: m, r })?;
            total += nb_log_pmf_raw(yi, m, r) - log_nonzero;
        }
    }
    Ok(total)
}

fn hnb_loglik_with(y: &[u64], x: &DMatrix<f64>, z: &DMatrix<f64>, coef: &RegressionCoefficients) -> Result<f64> {
    check_shapes(y, x, coef.beta.len(), Some((z, coef.gamma.len())))?;
    Ok(hurdle_part(y, z, &coef.gamma) + truncated_part(y, x, &coef.beta, coef.log_r)?)
}

/// HNB log-likelihood with the same design `x` in the mean and hurdle models.
///
/// The truncation term uses `ln(1 - (1 + mu/r)^(-r))`, consistent with the HNB pmf.
pub fn hnb_loglik(y: &[u64], x: &DMatrix<f64>, coef: &RegressionCoefficients) -> Result<f64> {
    hnb_loglik_with(y, x, x, coef)
}

fn nb_loglik(y: &[u64], x: &DMatrix<f64>, beta: &[f64], log_r: f64) -> Result<f64> {
    let r = log_r.exp();
    if !r.is_finite() {
        return Err(Error::InvalidParameter("dispersion overflow".into()));
    }
    let mu = means(x, beta)?;
    Ok(y.iter().enumerate().map(|(i, &yi)| nb_log_pmf_raw(yi, mu[i], r)).sum())
}

/// Optimizer settings for the regression fits.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub optim: OptimOptions,
    /// Random restarts tried after the deterministic start.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { optim: OptimOptions::default(), restarts: 5, seed: 0x5EED }
    }
}

fn neg<F: Fn(&[f64]) -> Result<f64>>(f: F) -> impl Fn(&[f64]) -> f64 {
    move |t: &[f64]| match f(t) {
        Ok(v) if v.is_finite() => -v,
        _ => f64::INFINITY,
    }
}

/// Minimize from `start`, then from jittered starts if the first run fails to converge.
fn minimize_with_restarts<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], opts: &FitOptions, what: &str) -> Result<OptimResult> {
    let mut rng: Rng = rng_from_seed(opts.seed);
    let mut best: Option<OptimResult> = None;
    for attempt in 0..=opts.restarts {
        let x0: Vec<f64> = if attempt == 0 {
            start.to_vec()
        } else {
            start
                .iter()
                .map(|v| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + 0.5 * e
                })
                .collect()
        };
        let res = minimize(f, &x0, &opts.optim);
        if !res.value.is_finite() {
            continue;
        }
        let done = res.converged;
        best = match best {
            Some(b) if (b.converged && !res.converged) || (b.converged == res.converged && b.value <= res.value) => Some(b),
            _ => Some(res),
        };
        if done {
            break;
        }
    }
    best.ok_or_else(|| Error::Initialization(format!("{what}: non-finite likelihood at every start")))
}

/// Least-squares fit of `ln y` on `x` over the positive responses.
fn log_linear_start(y: &[u64], x: &DMatrix<f64>) -> Vec<f64> {
    let q = x.ncols();
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0).collect();
    let fallback = || {
        let m = pos.iter().map(|&i| y[i] as f64).sum::<f64>() / pos.len().max(1) as f64;
        let mut b = vec![0.0; q];
        if q > 0 {
            b[0] = m.max(0.5).ln();
        }
        b
    };
    if pos.len() < q {
        return fallback();
    }
    let xs = DMatrix::from_fn(pos.len(), q, |r, c| x[(pos[r], c)]);
    let ys = DVector::from_iterator(pos.len(), pos.iter().map(|&i| (y[i] as f64).ln()));
    match xs.svd(true, true).solve(&ys, 1e-10) {
        Ok(b) if b.iter().all(|v| v.is_finite()) => b.iter().copied().collect(),
        _ => fallback(),
    }
}

fn logistic_fit(y: &[u64], z: &DMatrix<f64>, opts: &FitOptions) -> Result<OptimResult> {
    let f = |g: &[f64]| -hurdle_part(y, z, g);
    minimize_with_restarts(&f, &vec![0.0; z.ncols()], opts, "logistic part")
}

/// Fit a ZINB, HNB or NB regression. For HNB the mean model uses `x` and the hurdle model `z`
/// (the usual convention passes the same matrix for both). `z` is ignored for NB.
pub fn fit_regression(y: &[u64], x: &DMatrix<f64>, z: &DMatrix<f64>, flavor: Flavor, options: &FitOptions) -> Result<RegressionFit> {
    let n = y.len();
    let q1 = x.ncols();
    let q2 = if flavor == Flavor::NB { 0 } else { z.ncols() };
    check_shapes(y, x, q1, (flavor != Flavor::NB).then_some((z, q2)))?;
    if n <= q1 + q2 + 1 {
        return Err(Error::DegenerateData(format!("{n} observations for {} parameters", q1 + q2 + 1)));
    }
    let zeros = y.iter().filter(|&&v| v == 0).count();
    match flavor {
        Flavor::ZINB if zeros == 0 || zeros == n => {
            return Err(Error::DegenerateData("ZINB needs both zero and nonzero responses".into()))
        }
        Flavor::HNB | Flavor::NB if zeros == n => return Err(Error::DegenerateData("all responses are zero".into())),
        _ => {}
    }

    let beta0 = log_linear_start(y, x);
    match flavor {
        Flavor::ZINB => {
            let gamma0 = logistic_fit(y, z, options)?.x;
            let mut start = beta0;
            start.extend(gamma0);
            start.push(0.0);
            let f = neg(|t: &[f64]| zinb_loglik(y, x, z, &RegressionCoefficients::from_slice(t, q1, q2)).map(|l| l.total));
            let res = minimize_with_restarts(&f, &start, options, "ZINB")?;
            let coef = RegressionCoefficients::from_slice(&res.x, q1, q2);
            Ok(RegressionFit::new(coef, -res.value, flavor, res.converged, n, res.iterations))
        }
        Flavor::HNB => {
            // the likelihood factorizes: logistic on the zero indicator, truncated NB on positives
            let hurdle = logistic_fit(y, z, options)?;
            let mut start = beta0;
            start.push(0.0);
            let f = neg(|t: &[f64]| truncated_part(y, x, &t[..q1], t[q1]));
            let counts = minimize_with_restarts(&f, &start, options, "truncated NB")?;
            let coef = RegressionCoefficients {
                beta: counts.x[..q1].to_vec(),
                gamma: hurdle.x.clone(),
                log_r: counts.x[q1],
            };
            let loglik = -hurdle.value - counts.value;
            Ok(RegressionFit::new(
                coef,
                loglik,
                flavor,
                hurdle.converged && counts.converged,
                n,
                hurdle.iterations.max(counts.iterations),
            ))
        }
        Flavor::NB => {
            let mut start = beta0;
            start.push(0.0);
            let f = neg(|t: &[f64]| nb_loglik(y, x, &t[..q1], t[q1]));
            let res = minimize_with_restarts(&f, &start, options, "NB")?;
            let coef = RegressionCoefficients { beta: res.x[..q1].to_vec(), gamma: vec![], log_r: res.x[q1] };
            Ok(RegressionFit::new(coef, -res.value, flavor, res.converged, n, res.iterations))
        }
    }
}

/// Joint (unfactorized) HNB fit; used to cross-check the factorized estimator.
pub fn fit_hnb_joint(y: &[u64], x: &DMatrix<f64>, z: &DMatrix<f64>, options: &FitOptions) -> Result<RegressionFit> {
    let (q1, q2) = (x.ncols(), z.ncols());
    check_shapes(y, x, q1, Some((z, q2)))?;
    if y.iter().all(|&v| v == 0) {
        return Err(Error::DegenerateData("all responses are zero".into()));
    }
    let mut start = log_linear_start(y, x);
    start.extend(vec![0.0; q2]);
    start.push(0.0);
    let f = neg(|t: &[f64]| hnb_loglik_with(y, x, z, &RegressionCoefficients::from_slice(t, q1, q2)));
    let res = minimize_with_restarts(&f, &start, options, "HNB")?;
    let coef = RegressionCoefficients::from_slice(&res.x, q1, q2);
    Ok(RegressionFit::new(coef, -res.value, Flavor::HNB, res.converged, y.len(), res.iterations))
}

/// Intercept-only fit (no covariates). For HNB the hurdle intercept is the logit of the sample
/// zero proportion in closed form.
pub fn fit_intercept_only(y: &[u64], flavor: Flavor) -> Result<RegressionFit> {
    fit_intercept_only_with(y, flavor, &FitOptions::default())
}

pub fn fit_intercept_only_with(y: &[u64], flavor: Flavor, options: &FitOptions) -> Result<RegressionFit> {
    let n = y.len();
    if n < 3 {
        return Err(Error::DegenerateData(format!("need at least 3 observations, got {n}")));
    }
    let ones = DMatrix::from_element(n, 1, 1.0);
    match flavor {
        Flavor::HNB => {
            let zeros = y.iter().filter(|&&v| v == 0).count();
            if zeros == n {
                return Err(Error::DegenerateData("all responses are zero".into()));
            }
            let prop = zeros as f64 / n as f64;
            let gamma0 = if zeros == 0 { logit(f64::MIN_POSITIVE) } else { logit(prop) };
            let hurdle = hurdle_part(y, &ones, &[gamma0]);
            let mean_pos = y.iter().filter(|&&v| v > 0).map(|&v| v as f64).sum::<f64>() / (n - zeros) as f64;
            let f = neg(|t: &[f64]| truncated_part(y, &ones, &t[..1], t[1]));
            let counts = minimize_with_restarts(&f, &[mean_pos.ln(), 0.0], options, "truncated NB")?;
            let coef = RegressionCoefficients { beta: vec![counts.x[0]], gamma: vec![gamma0], log_r: counts.x[1] };
            Ok(RegressionFit::new(coef, hurdle - counts.value, flavor, counts.converged, n, counts.iterations))
        }
        Flavor::NB => {
            let (m, r) = nb_moment_estimate(y);
            let f = neg(|t: &[f64]| nb_loglik(y, &ones, &t[..1], t[1]));
            let res = minimize_with_restarts(&f, &[m.ln(), r.ln()], options, "NB")?;
            let coef = RegressionCoefficients { beta: vec![res.x[0]], gamma: vec![], log_r: res.x[1] };
            Ok(RegressionFit::new(coef, -res.value, flavor, res.converged, n, res.iterations))
        }
        Flavor::ZINB => fit_regression(y, &ones, &ones, flavor, options),
    }
}

/// Method-of-moments NB estimate `(mean, r)`; `r` is capped when the data are not overdispersed.
pub fn nb_moment_estimate(y: &[u64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = (y.iter().map(|&v| v as f64).sum::<f64>() / n).max(1e-8);
    let v = y.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let r = if v > m { m * m / (v - m) } else { 1e3 };
    (m, r.clamp(1e-3, 1e3))
}

/// Standard errors from the inverse observed information (numerical Hessian) at the fit.
pub fn standard_errors(y: &[u64], x: &DMatrix<f64>, z: &DMatrix<f64>, fit: &RegressionFit) -> Result<Vec<f64>> {
    let c = &fit.coefficients;
    let (q1, q2) = (c.beta.len(), c.gamma.len());
    let theta = c.to_vec();
    let h = match fit.flavor {
        Flavor::ZINB => numerical_hessian(
            &neg(|t: &[f64]| zinb_loglik(y, x, z, &RegressionCoefficients::from_slice(t, q1, q2)).map(|l| l.total)),
            &theta,
        ),
        Flavor::HNB => numerical_hessian(&neg(|t: &[f64]| hnb_loglik_with(y, x, z, &RegressionCoefficients::from_slice(t, q1, q2))), &theta),
        Flavor::NB => numerical_hessian(&neg(|t: &[f64]| nb_loglik(y, x, &t[..q1], t[q1])), &theta),
    };
    let k = theta.len();
    let hm = DMatrix::from_fn(k, k, |i, j| h[i][j]);
    let inv = hm
        .try_inverse()
        .ok_or_else(|| Error::Factorization("observed information is singular".into()))?;
    Ok((0..k).map(|i| inv[(i, i)].max(0.0).sqrt()).collect())
}

/// Draw one response per row of the designs from the fitted model.
pub fn simulate_fit(fit: &RegressionFit, x: &DMatrix<f64>, z: &DMatrix<f64>, rng: &mut Rng) -> Result<Vec<u64>> {
    (0..x.nrows())
        .map(|i| {
            let zr = if fit.flavor == Flavor::NB { vec![] } else { row(z, i) };
            let p = fit.params_at(&row(x, i), &zr)?;
            count_models::draw(rng, &p)
        })
        .collect()
}

/// Draw `n` i.i.d. responses from an intercept-only fit.
pub fn simulate_intercept_only(fit: &RegressionFit, n: usize, rng: &mut Rng) -> Result<Vec<u64>> {
    let p = fit.params_at(&[1.0], &[1.0])?;
    (0..n).map(|_| count_models::draw(rng, &p)).collect()
}
