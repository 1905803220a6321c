//! Negative binomial, zero-inflated NB and hurdle NB marginals.
//!
//! The NB component is parameterized by its mean `mu` and dispersion `r`
//! (variance `mu + mu^2 / r`). All probabilities are evaluated in log space
//! through log-gamma and only exponentiated at the API boundary.

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::special::log1m_exp;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Attempts at rejection sampling the zero-truncated NB before switching to inversion.
// Rejection is used only when a nonzero draw is likely enough; the cap is then never hit in practice.
const ZTNB_REJECTION_MIN_LOG_NONZERO: f64 = -3.0;
const ZTNB_REJECTION_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Flavor {
    NB,
    ZINB,
    HNB,
}

/// Parameters of one count marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountParams {
    pub mu: f64,
    pub r: f64,
    /// Extra-zero weight (ZINB) or hurdle probability (HNB). Always 0 for NB.
    pub pi: f64,
    pub flavor: Flavor,
}

impl CountParams {
    pub fn new(mu: f64, r: f64, pi: f64, flavor: Flavor) -> Result<Self> {
        let pi = if flavor == Flavor::NB { 0.0 } else { pi };
        let p = Self { mu, r, pi, flavor };
        p.validate()?;
        Ok(p)
    }

    pub fn nb(mu: f64, r: f64) -> Result<Self> {
        Self::new(mu, r, 0.0, Flavor::NB)
    }

    pub fn zinb(mu: f64, r: f64, pi: f64) -> Result<Self> {
        Self::new(mu, r, pi, Flavor::ZINB)
    }

    pub fn hnb(mu: f64, r: f64, pi: f64) -> Result<Self> {
        Self::new(mu, r, pi, Flavor::HNB)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(Error::InvalidParameter(format!("mu must be finite and > 0, got {}", self.mu)));
        }
        if !self.r.is_finite() || self.r <= 0.0 {
            return Err(Error::InvalidParameter(format!("r must be finite and > 0, got {}", self.r)));
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::InvalidParameter(format!("pi must lie in [0, 1], got {}", self.pi)));
        }
        if self.flavor == Flavor::NB && self.pi != 0.0 {
            return Err(Error::InvalidParameter("NB flavor carries pi = 0".into()));
        }
        Ok(())
    }

    /// Expected value of the flavored distribution.
    pub fn mean(&self) -> f64 {
        match self.flavor {
            Flavor::NB => self.mu,
            Flavor::ZINB => (1.0 - self.pi) * self.mu,
            Flavor::HNB => {
                let p0 = nb_zero_log(self.mu, self.r).exp();
                (1.0 - self.pi) * self.mu / (1.0 - p0)
            }
        }
    }
}

/// ln P(Y=0) under NB(mu, r) = -r ln(1 + mu/r).
#[inline]
pub(crate) fn nb_zero_log(mu: f64, r: f64) -> f64 {
    -r * (mu / r).ln_1p()
}

/// Unchecked NB log-pmf.
#[inline]
pub(crate) fn nb_log_pmf_raw(y: u64, mu: f64, r: f64) -> f64 {
    if y == 0 {
        return nb_zero_log(mu, r);
    }
    let yf = y as f64;
    ln_gamma(yf + r) - ln_gamma(r) - ln_gamma(yf + 1.0) - yf * (r / mu).ln_1p() + nb_zero_log(mu, r)
}

/// ln(1 - P(Y=0)) under NB(mu, r); `None` when it underflows.
#[inline]
pub(crate) fn nb_log_nonzero(mu: f64, r: f64) -> Option<f64> {
    let v = log1m_exp(nb_zero_log(mu, r));
    v.is_finite().then_some(v)
}

fn check_finite(params: &CountParams) -> Result<()> {
    if !params.mu.is_finite() || !params.r.is_finite() || params.mu <= 0.0 || params.r <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "mu and r must be finite and positive (mu={}, r={})",
            params.mu, params.r
        )));
    }
    Ok(())
}

fn expect_flavor(params: &CountParams, flavor: Flavor) -> Result<()> {
    if params.flavor != flavor {
        return Err(Error::InvalidParameter(format!(
            "expected {flavor:?} parameters, got {:?}",
            params.flavor
        )));
    }
    Ok(())
}

/// Log-pmf of the plain negative binomial.
pub fn nb_log_pmf(y: u64, params: &CountParams) -> Result<f64> {
    expect_flavor(params, Flavor::NB)?;
    check_finite(params)?;
    Ok(nb_log_pmf_raw(y, params.mu, params.r))
}

pub fn zinb_log_pmf(y: u64, params: &CountParams) -> Result<f64> {
    expect_flavor(params, Flavor::ZINB)?;
    check_finite(params)?;
    let pi = params.pi;
    let lnb = nb_log_pmf_raw(y, params.mu, params.r);
    Ok(if y == 0 {
        // pi + (1 - pi) p0, written to stay exact at both ends of pi
        let p0 = lnb.exp();
        (pi + (1.0 - pi) * p0).ln()
    } else {
        (-pi).ln_1p() + lnb
    })
}

pub fn zinb_pmf(y: u64, params: &CountParams) -> Result<f64> {
    zinb_log_pmf(y, params).map(f64::exp)
}

pub fn hnb_log_pmf(y: u64, params: &CountParams) -> Result<f64> {
    expect_flavor(params, Flavor::HNB)?;
    check_finite(params)?;
    let (mu, r) = (params.mu, params.r);
    let log_nonzero = nb_log_nonzero(mu, r).ok_or(Error::DegenerateTruncation { mu, r })?;
    Ok(if y == 0 {
        params.pi.ln()
    } else {
        (-params.pi).ln_1p() + nb_log_pmf_raw(y, mu, r) - log_nonzero
    })
}

pub fn hnb_pmf(y: u64, params: &CountParams) -> Result<f64> {
    if y == 0 {
        // exact, even when the truncated part is degenerate
        expect_flavor(params, Flavor::HNB)?;
        check_finite(params)?;
        nb_log_nonzero(params.mu, params.r).ok_or(Error::DegenerateTruncation {
            mu: params.mu,
            r: params.r,
        })?;
        return Ok(params.pi);
    }
    hnb_log_pmf(y, params).map(f64::exp)
}

/// Log-pmf dispatching on the flavor.
pub fn log_pmf(y: u64, params: &CountParams) -> Result<f64> {
    match params.flavor {
        Flavor::NB => nb_log_pmf(y, params),
        Flavor::ZINB => zinb_log_pmf(y, params),
        Flavor::HNB => hnb_log_pmf(y, params),
    }
}

pub fn pmf(y: u64, params: &CountParams) -> Result<f64> {
    match params.flavor {
        Flavor::HNB => hnb_pmf(y, params),
        _ => log_pmf(y, params).map(f64::exp),
    }
}

/// One NB draw as a gamma-Poisson mixture.
pub(crate) fn draw_nb(rng: &mut Rng, mu: f64, r: f64) -> u64 {
    let lambda = Gamma::new(r, mu / r).expect("validated gamma parameters").sample(rng);
    if !(lambda > 0.0) {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(p) => {
            let v: f64 = p.sample(rng);
            v as u64
        }
        Err(_) => lambda.round() as u64,
    }
}

/// Inverse-CDF draw from the zero-truncated NB.
fn draw_ztnb_inversion(rng: &mut Rng, mu: f64, r: f64, log_nonzero: f64) -> u64 {
    let u: f64 = rng.random();
    let ratio = mu / (mu + r);
    let mut y = 1u64;
    let mut log_p = nb_log_pmf_raw(1, mu, r) - log_nonzero;
    let mut cdf = 0.0;
    loop {
        let p = log_p.exp();
        cdf += p;
        // past the mode a vanishing term means the remaining tail cannot move the cdf
        let mode = if r > 1.0 { (r - 1.0) * mu / r } else { 0.0 };
        let negligible = p < 1e-17 * cdf && (y as f64) > mode;
        if cdf >= u || negligible || y == u64::MAX / 2 {
            return y;
        }
        log_p += ((y as f64 + r) / (y as f64 + 1.0) * ratio).ln();
        y += 1;
    }
}

pub(crate) fn draw_ztnb(rng: &mut Rng, mu: f64, r: f64, log_nonzero: f64) -> u64 {
    if log_nonzero < ZTNB_REJECTION_MIN_LOG_NONZERO {
        return draw_ztnb_inversion(rng, mu, r, log_nonzero);
    }
    for _ in 0..ZTNB_REJECTION_CAP {
        let y = draw_nb(rng, mu, r);
        if y > 0 {
            return y;
        }
    }
    draw_ztnb_inversion(rng, mu, r, log_nonzero)
}

/// One draw from the flavored distribution. Parameters must already be validated.
pub(crate) fn draw(rng: &mut Rng, params: &CountParams) -> Result<u64> {
    let (mu, r, pi) = (params.mu, params.r, params.pi);
    Ok(match params.flavor {
        Flavor::NB => draw_nb(rng, mu, r),
        Flavor::ZINB => {
            if rng.random::<f64>() < pi {
                0
            } else {
                draw_nb(rng, mu, r)
            }
        }
        Flavor::HNB => {
            if rng.random::<f64>() < pi {
                0
            } else {
                let log_nonzero = nb_log_nonzero(mu, r).ok_or(Error::DegenerateTruncation { mu, r })?;
                draw_ztnb(rng, mu, r, log_nonzero)
            }
        }
    })
}

/// `n` i.i.d. draws from the flavored distribution, reproducible from `seed`.
pub fn sample_count(n: usize, params: &CountParams, seed: u64) -> Result<Vec<u64>> {
    params.validate()?;
    if params.flavor == Flavor::HNB && params.pi < 1.0 {
        nb_log_nonzero(params.mu, params.r).ok_or(Error::DegenerateTruncation {
            mu: params.mu,
            r: params.r,
        })?;
    }
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| draw(&mut rng, params)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Compensated (Neumaier) summation of the per-term logs of Γ(y+r)/(Γ(r) y!).
    fn oracle_log_nb(y: u64, mu: f64, r: f64) -> f64 {
        let mut terms: Vec<f64> = (0..y).map(|t| ((t as f64 + r) / (t as f64 + 1.0)).ln()).collect();
        terms.push(-(y as f64) * (r / mu).ln_1p());
        terms.push(-r * (mu / r).ln_1p());
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for t in terms {
            let u = s + t;
            if s.abs() >= t.abs() {
                c += (s - u) + t;
            } else {
                c += (t - u) + s;
            }
            s = u;
        }
        s + c
    }

    #[test]
    fn nb_zero_matches_figure_constant() {
        let p = CountParams::nb(2.5, 5.0).unwrap();
        let v = nb_log_pmf(0, &p).unwrap();
        assert!((v - 0.1317f64.ln()).abs() < 1e-3);
        // exact value (5/7.5)^5 = 0.131687...
        assert!((v.exp() - 0.131_687_242_798_353_9).abs() < 1e-14);
    }

    #[test]
    fn nb_zero_mean_limit() {
        let p = CountParams::nb(1e-300, 5.0).unwrap();
        assert!(nb_log_pmf(0, &p).unwrap().abs() < 1e-290);
    }

    #[test]
    fn nb_against_extended_precision_values() {
        // 50-digit reference values computed by term-by-term products
        let cases = [
            (0u64, 2.5, 5.0, -2.027_325_540_540_821_9),
            (3, 2.5, 5.0, -1.767_814_345_055_737_3),
            (17, 3.7, 0.5, -5.215_218_345_904_319),
            (250, 120.0, 2.25, -6.850_590_346_078_475_8),
            (1000, 900.0, 7.5, -6.876_868_507_820_925),
            (1000, 3.0, 0.5, -159.150_002_484_196_52),
            (40, 1e4, 0.5, -7.373_698_314_261_463),
        ];
        for (y, mu, r, want) in cases {
            let got = nb_log_pmf(y, &CountParams::nb(mu, r).unwrap()).unwrap();
            // relative error on the pmf equals absolute error on its log
            assert!((got - want).abs() < 1e-10, "y={y} mu={mu} r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn nb_rejects_non_finite() {
        let p = CountParams { mu: f64::NAN, r: 1.0, pi: 0.0, flavor: Flavor::NB };
        assert!(matches!(nb_log_pmf(1, &p), Err(Error::InvalidParameter(_))));
        let p = CountParams { mu: 1.0, r: f64::INFINITY, pi: 0.0, flavor: Flavor::NB };
        assert!(nb_log_pmf(1, &p).is_err());
    }

    #[test]
    fn zinb_figure_constant() {
        let p = CountParams::zinb(2.5, 5.0, 0.25).unwrap();
        let v = zinb_pmf(0, &p).unwrap();
        assert!((v - 0.3487).abs() < 1e-4);
        assert!((v - 0.348_765_432_098_765_4).abs() < 1e-14);
    }

    #[test]
    fn zinb_reference_value() {
        // 0.5 * Γ(4)/(Γ(2) 2!) (1/3)^2 (2/3)^2 = 2/27
        let p = CountParams::zinb(1.0, 2.0, 0.5).unwrap();
        assert!((zinb_pmf(2, &p).unwrap() - 2.0 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn zinb_without_inflation_is_nb() {
        let z = CountParams::zinb(3.3, 1.7, 0.0).unwrap();
        let n = CountParams::nb(3.3, 1.7).unwrap();
        for y in 0..60 {
            let a = zinb_log_pmf(y, &z).unwrap();
            let b = nb_log_pmf(y, &n).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn hnb_zero_is_exact() {
        for pi in [0.25, 0.05, 0.0, 1.0] {
            let p = CountParams::hnb(2.5, 5.0, pi).unwrap();
            assert_eq!(hnb_pmf(0, &p).unwrap(), pi);
        }
    }

    #[test]
    fn hnb_collapses_to_nb() {
        let (mu, r) = (2.5, 5.0);
        let p0 = nb_zero_log(mu, r).exp();
        let h = CountParams::hnb(mu, r, p0).unwrap();
        let n = CountParams::nb(mu, r).unwrap();
        for y in 1..50 {
            let a = hnb_pmf(y, &h).unwrap();
            let b = nb_log_pmf(y, &n).unwrap().exp();
            assert!((a - b).abs() < 1e-14 * b.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn hnb_degenerate_truncation() {
        let p = CountParams::hnb(1e-320, 1e5, 0.3).unwrap();
        assert!(matches!(hnb_pmf(2, &p), Err(Error::DegenerateTruncation { .. })));
        assert!(matches!(sample_count(3, &p, 1), Err(Error::DegenerateTruncation { .. })));
    }

    #[test]
    fn hnb_sampler_boundaries() {
        let p = CountParams::hnb(2.5, 5.0, 1.0).unwrap();
        assert!(sample_count(500, &p, 3).unwrap().iter().all(|&y| y == 0));
        let p = CountParams::hnb(2.5, 5.0, 0.0).unwrap();
        assert!(sample_count(5000, &p, 3).unwrap().iter().all(|&y| y > 0));
    }

    #[test]
    fn ztnb_inversion_fallback_is_valid() {
        // NB(0) is essentially 1 here; inversion must still produce positive values
        let mut rng = rng_from_seed(11);
        let (mu, r) = (1e-4, 0.5);
        let ln = nb_log_nonzero(mu, r).unwrap();
        let draws: Vec<u64> = (0..2000).map(|_| draw_ztnb_inversion(&mut rng, mu, r, ln)).collect();
        assert!(draws.iter().all(|&y| y >= 1));
        // P(Y=1 | Y>0) is close to 1 for tiny mu
        let ones = draws.iter().filter(|&&y| y == 1).count() as f64 / 2000.0;
        let p1 = (nb_log_pmf_raw(1, mu, r) - ln).exp();
        assert!((ones - p1).abs() < 4.0 * (p1 * (1.0 - p1) / 2000.0).sqrt() + 1e-3);
    }

    #[test]
    fn ztnb_log_series_regime() {
        // mu, r -> 0 with mu/r fixed: the truncated law tends to a logarithmic one
        let (mu, r) = (1e-6, 1e-9);
        let p = CountParams::hnb(mu, r, 0.0).unwrap();
        let n = 20_000;
        let draws = sample_count(n, &p, 8).unwrap();
        let theta = mu / (mu + r);
        let want_mean = -theta / ((1.0 - theta) * (1.0 - theta).ln());
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        let var = want_mean / (1.0 - theta) - want_mean * want_mean;
        assert!((mean - want_mean).abs() < 4.0 * (var / n as f64).sqrt(), "{mean} vs {want_mean}");
        let ones = draws.iter().filter(|&&y| y == 1).count() as f64 / n as f64;
        let p1 = -theta / (1.0 - theta).ln();
        assert!((ones - p1).abs() < 4.0 * (p1 * (1.0 - p1) / n as f64).sqrt());
    }

    #[test]
    fn zinb_sampler_zero_fraction() {
        let p = CountParams::zinb(2.5, 5.0, 0.25).unwrap();
        let n = 100_000;
        let draws = sample_count(n, &p, 2024).unwrap();
        let p0 = zinb_pmf(0, &p).unwrap();
        let frac = draws.iter().filter(|&&y| y == 0).count() as f64 / n as f64;
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!((frac - p0).abs() < 3.0 * se, "{frac} vs {p0}");
        // mean (1 - pi) mu, variance of ZINB for the standard error
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        let m = p.mean();
        let var = (1.0 - p.pi) * (p.mu + p.mu * p.mu / p.r) + p.pi * (1.0 - p.pi) * p.mu * p.mu;
        assert!((mean - m).abs() < 4.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = CountParams::hnb(4.0, 0.7, 0.3).unwrap();
        assert_eq!(sample_count(100, &p, 9).unwrap(), sample_count(100, &p, 9).unwrap());
    }

    fn total_mass(p: &CountParams) -> f64 {
        let sd = (p.mu + p.mu * p.mu / p.r).sqrt();
        let cap = (p.mu + 200.0 * sd + 1000.0) as u64;
        let mut s = 0.0;
        for y in 0..=cap {
            s += pmf(y, p).unwrap();
            if s >= 1.0 - 1e-12 {
                break;
            }
        }
        s
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pmfs_normalize(mu in 0.05f64..40.0, r in 0.5f64..20.0, pi in 0.0f64..=1.0) {
            for flavor in [Flavor::NB, Flavor::ZINB, Flavor::HNB] {
                let p = CountParams::new(mu, r, pi, flavor).unwrap();
                let s = total_mass(&p);
                prop_assert!((1.0 - 1e-8..=1.0 + 1e-10).contains(&s), "{flavor:?} mass {s}");
            }
        }

        #[test]
        fn zinb_zero_lower_bound(mu in 0.01f64..50.0, r in 0.1f64..30.0, pi in 0.0f64..=1.0) {
            let z = zinb_pmf(0, &CountParams::zinb(mu, r, pi).unwrap()).unwrap();
            let n = nb_log_pmf(0, &CountParams::nb(mu, r).unwrap()).unwrap().exp();
            prop_assert!(z >= n * (1.0 - 1e-15));
        }

        #[test]
        fn nb_matches_compensated_oracle(y in 0u64..=1000, mu in 0.01f64..2000.0, r in 0.5f64..50.0) {
            let got = nb_log_pmf(y, &CountParams::nb(mu, r).unwrap()).unwrap();
            let want = oracle_log_nb(y, mu, r);
            prop_assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }

        #[test]
        fn hnb_zero_mass_exact_including_deflation(mu in 0.1f64..20.0, r in 0.5f64..10.0, pi in 0.0f64..=1.0) {
            let p = CountParams::hnb(mu, r, pi).unwrap();
            prop_assert_eq!(hnb_pmf(0, &p).unwrap(), pi);
        }
    }
}
