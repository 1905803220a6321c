//! The truncated/truncated bridge function G(σ; Δj, Δk) and its inverse.
//!
//! With (Z_j, Z_k) and an independent copy (Z_j', Z_k') of the latent pair, the two
//! four-dimensional probabilities are
//!
//! Φ4(a; Σ4a) = P(Z_j ≤ -Δj, Z_k' ≤ -Δk, Z_j ≤ Z_j', Z_k' ≤ Z_k)
//! Φ4(a; Σ4b) = P(Z_j ≤ -Δj, Z_k ≤ -Δk, Z_j ≤ Z_j', Z_k ≤ Z_k')
//!
//! Conditioning on two coordinates leaves univariate or fixed-correlation bivariate normal
//! probabilities, so `bridge_tt` evaluates both terms by deterministic product quadrature.
//! `bridge_tt_qmc` evaluates the same expression through the general `phi4`.

use super::mvn::phi4;
use crate::error::{Error, Result};
use crate::quad::{Bvn, CompositeRule};
use crate::roots;
use crate::special::norm_cdf;
use nalgebra::Matrix4;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

/// Search interval for the latent correlation.
pub const SIGMA_BOUND: f64 = 0.9999;

const LOWER: f64 = -6.5;
const UPPER: f64 = 6.5;

const NODES: usize = 8;

fn bvn() -> &'static Bvn {
    static B: OnceLock<Bvn> = OnceLock::new();
    B.get_or_init(|| Bvn::new(FRAC_1_SQRT_2))
}

fn base_rule() -> &'static CompositeRule {
    static R: OnceLock<CompositeRule> = OnceLock::new();
    R.get_or_init(|| CompositeRule::new(NODES, 1.0))
}

#[inline]
fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn sigma4a(s: f64) -> Matrix4<f64> {
    let h = FRAC_1_SQRT_2;
    Matrix4::new(
        1.0, 0.0, h, -s * h,
        0.0, 1.0, -s * h, h,
        h, -s * h, 1.0, -s,
        -s * h, h, -s, 1.0,
    )
}

pub fn sigma4b(s: f64) -> Matrix4<f64> {
    let h = FRAC_1_SQRT_2;
    Matrix4::new(
        1.0, s, h, s * h,
        s, 1.0, s * h, h,
        h, s * h, 1.0, s,
        s * h, h, s, 1.0,
    )
}

/// Panel rule for latent correlation `sigma`; the integrands vary on the scale sqrt(1 - σ²).
fn rule_for(sigma: f64) -> CompositeRule {
    let s = (1.0 - sigma * sigma).sqrt();
    base_rule().with_width((3.0 * s).clamp(0.04, 2.0))
}

fn phi4_a(a1: f64, a2: f64, sigma: f64, rule: &CompositeRule) -> f64 {
    let s = (1.0 - sigma * sigma).sqrt();
    let mut total = 0.0;
    rule.for_each(LOWER, a1, |x, wx| {
        let mut inner = 0.0;
        rule.for_each(LOWER, a2, |y, wy| {
            inner += wy * pdf(y) * norm_cdf((sigma * y - x) / s) * norm_cdf((sigma * x - y) / s);
        });
        total += wx * pdf(x) * inner;
    });
    total
}

fn phi4_b(a1: f64, a2: f64, sigma: f64, rule: &CompositeRule) -> f64 {
    let bvn = bvn();
    let s = (1.0 - sigma * sigma).sqrt();
    let c = sigma / (s * std::f64::consts::SQRT_2);
    let mut total = 0.0;
    rule.for_each(LOWER, a1, |x, wx| {
        let h = (a2 - sigma * x) / s;
        let mut inner = 0.0;
        rule.for_each(x, UPPER, |xp, wp| {
            inner += wp * pdf(xp) * bvn.cdf(h, c * (xp - x));
        });
        total += wx * pdf(x) * inner;
    });
    total
}

fn bridge_with(sigma: f64, dj: f64, dk: f64, rule: &CompositeRule) -> f64 {
    let g = -2.0 * phi4_a(-dj, -dk, sigma, rule) + 2.0 * phi4_b(-dj, -dk, sigma, rule);
    g.clamp(-1.0, 1.0)
}

fn check(sigma: f64, dj: f64, dk: f64) -> Result<()> {
    if !(sigma.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("latent correlation {sigma} must lie in (-1, 1)")));
    }
    if !dj.is_finite() || !dk.is_finite() {
        return Err(Error::InvalidParameter("truncation levels must be finite".into()));
    }
    Ok(())
}

/// Population Kendall's tau of two truncated latent Gaussian variables with latent correlation
/// `sigma` and truncation levels `dj`, `dk`.
pub fn bridge_tt(sigma: f64, dj: f64, dk: f64) -> Result<f64> {
    check(sigma, dj, dk)?;
    if sigma == 0.0 {
        return Ok(0.0);
    }
    Ok(bridge_with(sigma, dj, dk, &rule_for(sigma)))
}

/// The bridge evaluated literally through the quasi-Monte Carlo `phi4`.
pub fn bridge_tt_qmc(sigma: f64, dj: f64, dk: f64, tol: f64) -> Result<f64> {
    check(sigma, dj, dk)?;
    let a = [-dj, -dk, 0.0, 0.0];
    Ok(-2.0 * phi4(a, &sigma4a(sigma), tol)? + 2.0 * phi4(a, &sigma4b(sigma), tol)?)
}

/// Result of inverting the bridge for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub sigma: f64,
    /// τ̂ was outside the bridge's range on the search interval and was clamped.
    pub clamped: bool,
}

const LADDER: [f64; 8] = [0.25, 0.5, 0.75, 0.9, 0.97, 0.99, 0.999, SIGMA_BOUND];

/// Latent correlation whose bridge value equals `tau_hat`, searched on [-0.9999, 0.9999].
pub fn invert_bridge(tau_hat: f64, dj: f64, dk: f64) -> Result<Inversion> {
    check(0.0, dj, dk)?;
    if tau_hat.is_nan() {
        return Err(Error::InvalidParameter("tau_hat is NaN".into()));
    }
    if tau_hat == 0.0 {
        return Ok(Inversion { sigma: 0.0, clamped: false });
    }
    // G is increasing with G(0) = 0; climb a ladder away from zero until τ̂ is bracketed
    let dir = tau_hat.signum();
    let (mut lo, mut g_lo) = (0.0, 0.0);
    for &step in &LADDER {
        let s = dir * step;
        let g = bridge_tt(s, dj, dk)?;
        if dir * (g - tau_hat) >= 0.0 {
            let sigma = roots::brent(|x| Ok(bridge_tt(x, dj, dk)? - tau_hat), lo, s, g_lo - tau_hat, g - tau_hat, 1e-7)?;
            return Ok(Inversion { sigma, clamped: false });
        }
        lo = s;
        g_lo = g;
    }
    Ok(Inversion { sigma: dir * SIGMA_BOUND, clamped: true })
}
