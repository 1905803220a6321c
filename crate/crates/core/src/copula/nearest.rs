use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub const EIGEN_FLOOR: f64 = 1e-8;

/// Project a symmetric matrix to a positive definite correlation matrix: clip eigenvalues at
/// 1e-8, reconstruct, rescale to unit diagonal.
pub fn nearest_correlation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    if m.ncols() != p {
        return Err(Error::Shape(format!("matrix is {}x{}", p, m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCorrelation("non-finite entry".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
    let v = &eig.eigenvectors;
    let recon = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let d: Vec<f64> = (0..p).map(|i| 1.0 / recon[(i, i)].sqrt()).collect();
    let mut out = DMatrix::from_fn(p, p, |i, j| recon[(i, j)] * d[i] * d[j]);
    for i in 0..p {
        out[(i, i)] = 1.0;
        for j in 0..i {
            let v = (0.5 * (out[(i, j)] + out[(j, i)])).clamp(-1.0, 1.0);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pd_input_unchanged() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.0, -0.3, 0.2, -0.3, 1.0]);
        let out = nearest_correlation(&m).unwrap();
        assert!((out - &m).abs().max() < 1e-12);
        let id = DMatrix::<f64>::identity(4, 4);
        assert!((nearest_correlation(&id).unwrap() - &id).abs().max() < 1e-15);
    }

    #[test]
    fn clips_two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0]);
        let out = nearest_correlation(&m).unwrap();
        // eigenvalues 2.2 and 1e-8 on (1,1) and (1,-1): offdiag (1.1 - 5e-9) / (1.1 + 5e-9)
        let want = (1.1 - 0.5e-8) / (1.1 + 0.5e-8);
        assert!((out[(0, 1)] - want).abs() < 1e-14);
        assert!(out[(0, 1)] < 1.0);
        assert!(out.clone().cholesky().is_some());
    }

    #[test]
    fn repairs_indefinite() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let out = nearest_correlation(&m).unwrap();
        assert!(out.clone().symmetric_eigen().eigenvalues.min() > 0.0);
        assert_eq!(out, out.transpose());
        assert!((0..3).all(|i| out[(i, i)] == 1.0));
    }
}
