//! Synthetic populations for the simulation settings.

use crate::copula::sample_gaussian_copula;
use crate::count_models::{draw, CountParams, Flavor};
use crate::data::select_by_zero_proportion;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, substream};
use crate::roots::brent;
use crate::special::{logistic, logit};
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CorrelationKind {
    AR,
    GD,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub kind: CorrelationKind,
    pub rho: f64,
    pub p: usize,
    /// Seed for the Haar orthogonal eigenbasis (GD only).
    #[serde(default)]
    pub orthogonal_seed: u64,
}

impl CorrelationSpec {
    pub fn ar(rho: f64, p: usize) -> Self {
        Self { kind: CorrelationKind::AR, rho, p, orthogonal_seed: 0 }
    }

    pub fn gd(rho: f64, p: usize, orthogonal_seed: u64) -> Self {
        Self { kind: CorrelationKind::GD, rho, p, orthogonal_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        let ok = match self.kind {
            CorrelationKind::AR => self.rho.abs() < 1.0,
            CorrelationKind::GD => self.rho > 0.0 && self.rho < 1.0,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!("rho = {} is out of range for {:?}", self.rho, self.kind)));
        }
        Ok(())
    }

    /// The AR correlation or GD covariance matrix.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        match self.kind {
            CorrelationKind::AR => ar_correlation(self),
            CorrelationKind::GD => gd_covariance(self),
        }
    }

    /// The matrix rescaled to unit diagonal (identical for AR).
    pub fn correlation(&self) -> Result<DMatrix<f64>> {
        let m = self.matrix()?;
        let d: Vec<f64> = (0..self.p).map(|i| m[(i, i)].sqrt()).collect();
        let mut c = DMatrix::from_fn(self.p, self.p, |i, j| m[(i, j)] / (d[i] * d[j]));
        c.fill_diagonal(1.0);
        Ok(c)
    }
}

pub fn ar_correlation(spec: &CorrelationSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if spec.kind != CorrelationKind::AR {
        return Err(Error::InvalidParameter("expected an AR specification".into()));
    }
    Ok(DMatrix::from_fn(spec.p, spec.p, |i, j| spec.rho.powi(i.abs_diff(j) as i32)))
}

/// ν_j = 5(ρ^{j-1} - ρ^j)/(1 - ρ^p), j = 1..p; they sum to 5.
pub fn gd_eigenvalues(rho: f64, p: usize) -> Vec<f64> {
    let denom = 1.0 - rho.powi(p as i32);
    (0..p).map(|j| 5.0 * (rho.powi(j as i32) - rho.powi(j as i32 + 1)) / denom).collect()
}

pub fn gd_covariance(spec: &CorrelationSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if spec.kind != CorrelationKind::GD {
        return Err(Error::InvalidParameter("expected a GD specification".into()));
    }
    let g = random_orthogonal(spec.p, spec.orthogonal_seed);
    let nu = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(gd_eigenvalues(spec.rho, spec.p)));
    let s = &g * nu * g.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs of diag(R)
/// moved into Q.
pub fn random_orthogonal(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let a = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// n rows i.i.d. N(0, sigma) through the lower Cholesky factor.
pub fn sample_mvn(n: usize, sigma: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let p = sigma.nrows();
    let l = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))?
        .unpack();
    let mut rng = rng_from_seed(seed);
    let e = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
    Ok((l * e).transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    One,
    OneDeflation,
    Two,
    Three,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    None,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingConfig {
    pub setting: Setting,
    pub n: usize,
    pub p: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub r: f64,
    pub corr: Option<CorrelationSpec>,
    pub flavor: Flavor,
    /// Overall zero fraction for Setting One calibration.
    pub zero_target: Option<f64>,
    /// Zero-fraction targets used to pick source columns (Setting Three).
    pub zero_targets: Vec<f64>,
    pub transform: Transform,
}

impl SettingConfig {
    /// Setting One: n=500, ln μ = ln 12 + 2x, logit π = γ₀ + 2x, r = 0.5.
    pub fn setting_one(flavor: Flavor, gamma0: f64) -> Self {
        Self {
            setting: Setting::One,
            n: 500,
            p: 1,
            beta0: 12f64.ln(),
            beta1: 2.0,
            gamma0,
            gamma1: 2.0,
            r: 0.5,
            corr: None,
            flavor,
            zero_target: None,
            zero_targets: Vec::new(),
            transform: Transform::None,
        }
    }

    /// Zero-deflation follow-up: n=700, β₀=ln(6/7), β₁=0.1, γ₁=0, r=2, HNB population.
    pub fn deflation(gamma0: f64) -> Self {
        Self {
            setting: Setting::OneDeflation,
            n: 700,
            beta0: (6.0f64 / 7.0).ln(),
            beta1: 0.1,
            gamma1: 0.0,
            r: 2.0,
            ..Self::setting_one(Flavor::HNB, gamma0)
        }
    }

    /// Setting Two: n=1200, p=5, β₀=2.75, r=6, HNB population.
    pub fn setting_two(beta1: f64, gamma0: f64, gamma1: f64, corr: CorrelationSpec) -> Self {
        Self {
            setting: Setting::Two,
            n: 1200,
            p: corr.p,
            beta0: 2.75,
            beta1,
            gamma0,
            gamma1,
            r: 6.0,
            corr: Some(corr),
            ..Self::setting_one(Flavor::HNB, gamma0)
        }
    }

    /// Setting Three: n=1200 draws from a Gaussian copula over source marginals.
    pub fn setting_three(corr: CorrelationSpec, zero_targets: Vec<f64>, transform: Transform) -> Self {
        Self {
            setting: Setting::Three,
            n: 1200,
            p: corr.p,
            corr: Some(corr),
            zero_targets,
            transform,
            ..Self::setting_one(Flavor::HNB, 0.0)
        }
    }

    fn require(&self, allowed: &[Setting]) -> Result<()> {
        if !allowed.contains(&self.setting) {
            return Err(Error::Config(format!("{:?} configuration used for {allowed:?}", self.setting)));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        Ok(())
    }

    fn corr(&self) -> Result<&CorrelationSpec> {
        let c = self.corr.as_ref().ok_or_else(|| Error::Config("correlation structure missing".into()))?;
        if c.p != self.p {
            return Err(Error::Config(format!("correlation dimension {} differs from p = {}", c.p, self.p)));
        }
        Ok(c)
    }

    fn params(&self, x: f64) -> Result<CountParams> {
        let mu = (self.beta0 + self.beta1 * x).exp();
        let pi = logistic(self.gamma0 + self.gamma1 * x);
        CountParams::new(mu, self.r, pi, self.flavor)
    }
}

/// One covariate X ~ N(0,1) per observation and a count from the configured flavor.
pub fn gen_setting_one(config: &SettingConfig, seed: u64) -> Result<(Vec<u64>, Vec<f64>)> {
    config.require(&[Setting::One, Setting::OneDeflation])?;
    let mut rng = rng_from_seed(seed);
    let x: Vec<f64> = (0..config.n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y = x.iter().map(|&xi| draw(&mut rng, &config.params(xi)?)).collect::<Result<Vec<u64>>>()?;
    Ok((y, x))
}

fn zero_probability(config: &SettingConfig, gamma0: f64, xs: &[f64]) -> Result<f64> {
    let cfg = SettingConfig { gamma0, ..config.clone() };
    let mut s = 0.0;
    for &x in xs {
        let p = cfg.params(x)?;
        s += match p.flavor {
            Flavor::HNB => p.pi,
            Flavor::ZINB => p.pi + (1.0 - p.pi) * crate::count_models::nb_zero_log(p.mu, p.r).exp(),
            Flavor::NB => crate::count_models::nb_zero_log(p.mu, p.r).exp(),
        };
    }
    Ok(s / xs.len() as f64)
}

pub const CALIBRATION_DRAWS: usize = 100_000;

/// γ₀ giving expected zero probability `target`, averaged over 10^5 fixed covariate draws.
pub fn calibrate_gamma0(config: &SettingConfig, target: f64, seed: u64) -> Result<f64> {
    config.require(&[Setting::One, Setting::OneDeflation])?;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!("zero target {target} must lie in (0, 1)")));
    }
    if config.flavor == Flavor::HNB && config.gamma1 == 0.0 {
        return Ok(logit(target));
    }
    if config.flavor == Flavor::NB {
        return Err(Error::InvalidParameter("plain NB has no zero parameter to calibrate".into()));
    }
    let mut rng = rng_from_seed(seed);
    let xs: Vec<f64> = (0..CALIBRATION_DRAWS).map(|_| StandardNormal.sample(&mut rng)).collect();
    let (lo, hi) = (-50.0, 50.0);
    let f_lo = zero_probability(config, lo, &xs)? - target;
    let f_hi = zero_probability(config, hi, &xs)? - target;
    if f_lo >= 0.0 {
        return Err(Error::InfeasibleTarget { target, floor: f_lo + target });
    }
    if f_hi <= 0.0 {
        return Err(Error::InvalidParameter(format!("zero target {target} is above the reachable range")));
    }
    brent(|g| Ok(zero_probability(config, g, &xs)? - target), lo, hi, f_lo, f_hi, 1e-10)
}

/// γ₀ giving mean structural-zero probability E[π(X)] = `target` over the same fixed covariate
/// draws. For HNB this coincides with [`calibrate_gamma0`]; for ZINB it ignores sampling zeros.
pub fn calibrate_gamma0_structural(config: &SettingConfig, target: f64, seed: u64) -> Result<f64> {
    config.require(&[Setting::One, Setting::OneDeflation])?;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!("zero target {target} must lie in (0, 1)")));
    }
    if config.gamma1 == 0.0 {
        return Ok(logit(target));
    }
    let mut rng = rng_from_seed(seed);
    let xs: Vec<f64> = (0..CALIBRATION_DRAWS).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mean_pi = |g: f64| xs.iter().map(|&x| logistic(g + config.gamma1 * x)).sum::<f64>() / xs.len() as f64;
    let (lo, hi) = (-50.0, 50.0);
    brent(|g| Ok(mean_pi(g) - target), lo, hi, mean_pi(lo) - target, mean_pi(hi) - target, 1e-10)
}

/// Setting Two population: covariates ~ N(0, Σ) and independent HNB counts given covariates.
/// Returns (counts, covariates), both n×p.
pub fn gen_setting_two(config: &SettingConfig, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    config.require(&[Setting::Two])?;
    let sigma = config.corr()?.matrix()?;
    let x = sample_mvn(config.n, &sigma, derive_seed(seed, &[0]))?;
    let mut rng = substream(seed, &[1]);
    let mut y = DMatrix::zeros(config.n, config.p);
    for i in 0..config.n {
        for j in 0..config.p {
            y[(i, j)] = draw(&mut rng, &config.params(x[(i, j)])?)? as f64;
        }
    }
    Ok((y, x))
}

/// Apply a Setting Three transform to source values; square roots are rounded to keep counts.
pub fn apply_transform(values: &DMatrix<f64>, transform: Transform) -> DMatrix<f64> {
    match transform {
        Transform::None => values.clone(),
        Transform::Sqrt => values.map(|v| v.sqrt().round()),
    }
}

/// Setting Three population: latent Gaussians with the configured correlation mapped through Φ
/// and the empirical quantile functions of source columns chosen by zero fraction.
pub fn gen_setting_three(config: &SettingConfig, source: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    config.require(&[Setting::Three])?;
    if source.ncols() < config.p {
        return Err(Error::Selection(format!("source has {} columns, need {}", source.ncols(), config.p)));
    }
    if source.nrows() == 0 {
        return Err(Error::Selection("source has no rows".into()));
    }
    let targets = if config.zero_targets.is_empty() { vec![0.5] } else { config.zero_targets.clone() };
    let cols = select_by_zero_proportion(source, &targets, config.p)?;
    let chosen = apply_transform(&source.select_columns(&cols), config.transform);
    let marginals: Vec<Vec<f64>> = (0..config.p)
        .map(|j| {
            let mut c: Vec<f64> = chosen.column(j).iter().copied().collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    let corr = config.corr()?.correlation()?;
    sample_gaussian_copula(&corr, &marginals, config.n, seed)
}
