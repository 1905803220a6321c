#![allow(dead_code)]

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use zeroinfl::copula::kendall_tau;
use zeroinfl::rng::rng_from_seed;

/// n pairs from a standard bivariate normal with correlation `rho`; a coordinate at or below its
/// truncation level is replaced by the level itself, so truncated values tie below all others.
pub fn truncated_pairs(n: usize, rho: f64, dj: f64, dk: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let c = (1.0 - rho * rho).sqrt();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        let z2 = rho * z1 + c * e;
        a.push(z1.max(dj));
        b.push(z2.max(dk));
    }
    (a, b)
}

/// Kendall's tau over all pairs together with a batch-means standard error of the batch average.
pub fn kendall_with_se(a: &[f64], b: &[f64], batches: usize) -> (f64, f64, f64) {
    let m = a.len() / batches;
    let taus: Vec<f64> = (0..batches).map(|i| kendall_tau(&a[i * m..(i + 1) * m], &b[i * m..(i + 1) * m])).collect();
    let mean = taus.iter().sum::<f64>() / batches as f64;
    let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (kendall_tau(a, b), mean, (var / batches as f64).sqrt())
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Minimum over all row permutations of mean_i ||x_i - y_σ(i)||^order, raised to 1/order.
pub fn brute_force_wasserstein(x: &DMatrix<f64>, y: &DMatrix<f64>, order: u32) -> f64 {
    let n = x.nrows();
    let cost = |i: usize, k: usize| -> f64 {
        let d2: f64 = (0..x.ncols()).map(|j| (x[(i, j)] - y[(k, j)]).powi(2)).sum();
        if order == 1 { d2.sqrt() } else { d2 }
    };
    let best = permutations(n)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &k)| cost(i, k)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    (best / n as f64).powf(1.0 / order as f64)
}

pub fn random_matrix(rng: &mut impl rand::Rng, n: usize, p: usize, integer: bool) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| if integer { rng.random_range(0..5) as f64 } else { rng.random_range(-3.0..3.0) })
}

pub fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

pub fn zero_fraction(v: &[f64]) -> f64 {
    v.iter().filter(|&&x| x == 0.0).count() as f64 / v.len() as f64
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}
