use crate::error::{Error, Result};
use nalgebra::DMatrix;

fn check_order(order: u32) -> Result<()> {
    if order == 1 || order == 2 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("Wasserstein order must be 1 or 2, got {order}")))
    }
}

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting paths with
/// potentials). Returns `col[i]`, the column assigned to row i.
pub fn assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0; n];
    for j in 1..=n {
        col[p[j] - 1] = j - 1;
    }
    col
}

/// Sample Wasserstein distance between two equal-size 1-D samples via sorted matching.
pub fn wasserstein_1d(x: &[f64], y: &[f64], order: u32) -> Result<f64> {
    check_order(order)?;
    if x.len() != y.len() {
        return Err(Error::Shape(format!("samples of size {} and {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::Empty("Wasserstein distance of empty samples".into()));
    }
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let s: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).abs().powi(order as i32)).sum();
    Ok((s / a.len() as f64).powf(1.0 / order as f64))
}

/// Ground cost ‖a - b‖^order with the Euclidean norm.
fn ground_cost(x: &DMatrix<f64>, y: &DMatrix<f64>, order: u32) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), y.nrows(), |i, j| {
        let sq: f64 = (0..x.ncols()).map(|k| (x[(i, k)] - y[(j, k)]).powi(2)).sum();
        if order == 2 { sq } else { sq.sqrt() }
    })
}

/// Exact sample Wasserstein distance between the rows of X and Y: the minimum over
/// permutations of ((1/n) Σ ‖X_i - Y_θ(i)‖^order)^(1/order).
pub fn wasserstein_pd(x: &DMatrix<f64>, y: &DMatrix<f64>, order: u32) -> Result<f64> {
    check_order(order)?;
    if x.shape() != y.shape() {
        return Err(Error::Shape(format!("samples are {:?} and {:?}", x.shape(), y.shape())));
    }
    if x.nrows() == 0 {
        return Err(Error::Empty("Wasserstein distance of empty samples".into()));
    }
    let cost = ground_cost(x, y, order);
    let col = assignment(&cost);
    let total: f64 = col.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok((total / x.nrows() as f64).powf(1.0 / order as f64))
}

/// Arithmetic mean change (ω_TLNPN - ω_HNB) / ((ω_TLNPN + ω_HNB)/2); negative favours TLNPN.
pub fn amc(omega_hnb: f64, omega_tlnpn: f64) -> Result<f64> {
    if !(omega_hnb >= 0.0 && omega_tlnpn >= 0.0) {
        return Err(Error::InvalidParameter("distances must be nonnegative".into()));
    }
    if omega_hnb == 0.0 && omega_tlnpn == 0.0 {
        return Err(Error::UndefinedComparison);
    }
    Ok((omega_tlnpn - omega_hnb) / ((omega_tlnpn + omega_hnb) / 2.0))
}
