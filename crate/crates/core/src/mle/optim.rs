//! BFGS minimizer on unconstrained parameters with central-difference gradients.

/// Stopping rule and budget.
#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Relative change in the objective between accepted iterates.
    pub rel_tol: f64,
    /// Sup-norm of the gradient, scaled by `max(1, |f|)`.
    pub grad_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { max_iter: 500, rel_tol: 1e-9, grad_tol: 1e-5 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, g| m.max(g.abs()))
}

/// Central-difference gradient.
pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            let xi = x[i];
            xp[i] = xi + h;
            let fp = f(&xp);
            xp[i] = xi - h;
            let fm = f(&xp);
            xp[i] = xi;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian built from gradient differences, symmetrized.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<Vec<f64>> {
    let k = x.len();
    let mut h = vec![vec![0.0; k]; k];
    let mut xp = x.to_vec();
    for i in 0..k {
        let step = 1e-4 * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let gp = numerical_gradient(f, &xp);
        xp[i] = x[i] - step;
        let gm = numerical_gradient(f, &xp);
        xp[i] = x[i];
        for j in 0..k {
            h[i][j] = (gp[j] - gm[j]) / (2.0 * step);
        }
    }
    for i in 0..k {
        for j in 0..i {
            let m = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = m;
            h[j][i] = m;
        }
    }
    h
}

fn small_gradient(g: &[f64], fx: f64, opts: &OptimOptions) -> bool {
    sup_norm(g) < opts.grad_tol * fx.abs().max(1.0)
}

fn mat_vec(h: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    h.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn identity(k: usize) -> Vec<Vec<f64>> {
    (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Minimize `f` from `x0`. Non-finite objective values are treated as +inf and rejected by the
/// line search, so the accepted trace is strictly non-increasing.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &OptimOptions) -> OptimResult {
    let k = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() { v } else { f64::INFINITY }
    };
    let mut x = x0.to_vec();
    let mut fx = eval(&x);
    let mut trace = vec![fx];
    if !fx.is_finite() {
        return OptimResult { x, value: fx, iterations: 0, converged: false, trace };
    }
    let mut g = numerical_gradient(&eval, &x);
    let mut hinv = identity(k);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut dir: Vec<f64> = mat_vec(&hinv, &g).iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            hinv = identity(k);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        // keep the first trial step bounded in parameter space
        let dn = sup_norm(&dir);
        let mut step = if dn > 5.0 { 5.0 / dn } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let fnew = eval(&xn);
            if fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if hinv != identity(k) {
                hinv = identity(k);
                continue;
            }
            converged = small_gradient(&g, fx, opts);
            break;
        };
        let gn = numerical_gradient(&eval, &xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let rel = (fx - fnew).abs() / fx.abs().max(1e-12);
        x = xn;
        fx = fnew;
        g = gn;
        trace.push(fx);
        if rel < opts.rel_tol && small_gradient(&g, fx, opts) {
            converged = true;
            break;
        }
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            // H+ = (I - rho s y') H (I - rho y s') + rho s s'
            let rho = 1.0 / sy;
            let hy = mat_vec(&hinv, &yv);
            let yhy = dot(&yv, &hy);
            for i in 0..k {
                for j in 0..k {
                    hinv[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
    }
    if !converged && small_gradient(&g, fx, opts) {
        // stationary within budget even if the objective is still creeping along a flat ridge
        converged = trace.len() >= 2 && {
            let n = trace.len();
            (trace[n - 2] - trace[n - 1]).abs() / trace[n - 1].abs().max(1e-12) < opts.rel_tol
        };
    }
    OptimResult { x, value: fx, iterations, converged, trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &OptimOptions { max_iter: 2000, ..Default::default() });
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_hessian() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1];
        let h = numerical_hessian(&f, &[0.3, -0.2]);
        assert!((h[0][0] - 6.0).abs() < 1e-5);
        assert!((h[0][1] - 1.0).abs() < 1e-5);
        assert!((h[1][1] - 4.0).abs() < 1e-5);
    }

    #[test]
    fn non_finite_start() {
        let r = minimize(|_x: &[f64]| f64::NAN, &[0.0], &OptimOptions::default());
        assert!(!r.converged);
        assert_eq!(r.iterations, 0);
    }
}
