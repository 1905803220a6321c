//! Gauss-Legendre rules and the bivariate normal distribution function.

use crate::special::norm_cdf;
use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// A Gauss-Legendre rule applied on equal-width panels.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    x: Vec<f64>,
    w: Vec<f64>,
    width: f64,
}

impl CompositeRule {
    pub fn new(nodes: usize, panel_width: f64) -> Self {
        let (x, w) = gauss_legendre(nodes);
        Self { x, w, width: panel_width }
    }

    pub fn with_width(&self, panel_width: f64) -> Self {
        Self { x: self.x.clone(), w: self.w.clone(), width: panel_width }
    }

    /// Visit (node, weight) pairs covering [a, b]; nothing when b <= a.
    pub fn for_each(&self, a: f64, b: f64, mut f: impl FnMut(f64, f64)) {
        if !(b > a) {
            return;
        }
        let panels = ((b - a) / self.width).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let mid = a + h * (p as f64 + 0.5);
            for (t, wt) in self.x.iter().zip(&self.w) {
                f(mid + 0.5 * h * t, 0.5 * h * wt);
            }
        }
    }
}

/// Bivariate normal lower orthant P(X <= h, Y <= k) at a fixed correlation `rho`, |rho| < 0.925.
///
/// Drezner-Wesolowsky integration over arcsin(rho) as arranged by Genz; the sine terms depend on
/// `rho` only and are precomputed.
#[derive(Debug, Clone)]
pub struct Bvn {
    terms: Vec<(f64, f64, f64)>,
    scale: f64,
}

impl Bvn {
    pub fn new(rho: f64) -> Self {
        assert!(rho.abs() < 0.925, "correlation {rho} outside the supported range");
        let n = if rho.abs() < 0.3 { 6 } else if rho.abs() < 0.75 { 12 } else { 20 };
        let (x, w) = gauss_legendre(n);
        let asr = rho.asin();
        let terms = x
            .iter()
            .zip(&w)
            .map(|(&t, &wt)| {
                let sn = (asr * (t + 1.0) / 2.0).sin();
                (wt, sn, 1.0 / (1.0 - sn * sn))
            })
            .collect();
        Self { terms, scale: asr / (4.0 * PI) }
    }

    pub fn cdf(&self, h: f64, k: f64) -> f64 {
        if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
            return 0.0;
        }
        if h == f64::INFINITY {
            return norm_cdf(k);
        }
        if k == f64::INFINITY {
            return norm_cdf(h);
        }
        let (h, k) = (-h, -k);
        let hk = h * k;
        let hs = 0.5 * (h * h + k * k);
        let s: f64 = self.terms.iter().map(|&(w, sn, inv)| w * ((sn * hk - hs) * inv).exp()).sum();
        (s * self.scale + norm_cdf(-h) * norm_cdf(-k)).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_exact_for_polynomials() {
        for n in [1, 2, 5, 10, 12, 20] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "n={n} deg={deg}: {got}");
            }
        }
        // tabulated 12-point node
        let (x, _) = gauss_legendre(12);
        assert!((x[0] + 0.981_560_634_246_719_2).abs() < 1e-15);
    }

    #[test]
    fn composite_integrates_gaussian() {
        let r = CompositeRule::new(10, 1.5);
        let mut s = 0.0;
        r.for_each(-9.0, 1.3, |x, w| s += w * (-0.5 * x * x).exp() / (2.0 * PI).sqrt());
        assert!((s - norm_cdf(1.3)).abs() < 1e-13, "{s}");
    }

    #[test]
    fn bvn_known_values() {
        // orthant: 1/4 + asin(rho)/(2 pi)
        for rho in [-0.9, -0.5, 0.0, 0.2, 0.5, std::f64::consts::FRAC_1_SQRT_2, 0.9] {
            let v = Bvn::new(rho).cdf(0.0, 0.0);
            assert!((v - (0.25 + rho.asin() / (2.0 * PI))).abs() < 1e-15, "{rho}");
        }
        // scipy.stats.multivariate_normal with abseps 1e-12
        let b = Bvn::new(std::f64::consts::FRAC_1_SQRT_2);
        assert!((b.cdf(0.5, -1.0) - 0.155_694_918_069_586).abs() < 1e-10);
        assert_eq!(Bvn::new(0.5).cdf(f64::NEG_INFINITY, 1.0), 0.0);
    }
}
