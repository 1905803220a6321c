use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Pairwise sample Kendall's tau (tau-a: tied pairs contribute 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KendallMatrix {
    pub tau: DMatrix<f64>,
}

fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sort `v` ascending and return the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    let k = k + mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-a between two equal-length finite columns, O(n log n) (Knight's algorithm).
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&i, &k| a[i].total_cmp(&a[k]).then(b[i].total_cmp(&b[k])));
    let sorted_a: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
    let pairs: Vec<(f64, f64)> = idx.iter().map(|&i| (a[i], b[i])).collect();
    let n1 = tied_pairs(&sorted_a);
    let n3 = tied_pairs(&pairs);
    let mut bs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut bs, &mut buf);
    let n2 = tied_pairs(&bs);
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let s = (n0 + n3) as f64 - (n1 + n2) as f64 - 2.0 * discordant as f64;
    s / n0 as f64
}

pub(crate) fn columns(data: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..data.ncols()).map(|j| data.column(j).iter().copied().collect()).collect()
}

pub(crate) fn check_no_constant(cols: &[Vec<f64>]) -> Result<()> {
    for (j, c) in cols.iter().enumerate() {
        if c.iter().all(|&v| v == c[0]) {
            return Err(Error::ConstantColumn { column: j });
        }
    }
    Ok(())
}

pub fn kendall_tau_matrix(data: &DMatrix<f64>) -> Result<KendallMatrix> {
    let (n, p) = data.shape();
    if n < 2 {
        return Err(Error::DegenerateData(format!("Kendall's tau needs n >= 2, got {n}")));
    }
    let cols = columns(data);
    check_no_constant(&cols)?;
    let mut tau = DMatrix::identity(p, p);
    for j in 0..p {
        for k in (j + 1)..p {
            let t = kendall_tau(&cols[j], &cols[k]);
            tau[(j, k)] = t;
            tau[(k, j)] = t;
        }
    }
    Ok(KendallMatrix { tau })
}
