use super::matrix::{dot, norm2, DenseMatrix};
use crate::error::{Error, Result};

/// Thin QR factorization `V = Q · R`.
#[derive(Clone, Debug)]
pub struct QrFactors {
    /// `m × k` with orthonormal columns.
    pub q: DenseMatrix,
    /// `k × k` upper triangular with nonnegative diagonal.
    pub r: DenseMatrix,
}

/// Thin QR by modified Gram–Schmidt with one reorthogonalization pass.
///
/// Fails with [`Error::RankDeficient`] naming the first column whose residual
/// after projection falls below `1e-12 · ‖V‖_F`.
pub fn thin_qr(v: &DenseMatrix) -> Result<QrFactors> {
    let (m, k) = v.shape();
    if k > m {
        return Err(Error::input(format!(
            "thin QR needs at least as many rows as columns, got {m}x{k}"
        )));
    }
    if !v.is_finite() {
        return Err(Error::input("matrix contains non-finite entries"));
    }
    let scale = v.frobenius_norm();
    let mut q_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut r = DenseMatrix::zeros(k, k);
    for j in 0..k {
        let mut w = v.column(j);
        for _ in 0..2 {
            for (i, qi) in q_cols.iter().enumerate() {
                let c = dot(qi, &w);
                r[(i, j)] += c;
                for (x, y) in w.iter_mut().zip(qi) {
                    *x -= c * y;
                }
            }
        }
        let nw = norm2(&w);
        if nw <= 1e-12 * scale || nw == 0.0 {
            return Err(Error::RankDeficient { column: j });
        }
        r[(j, j)] = nw;
        w.iter_mut().for_each(|x| *x /= nw);
        q_cols.push(w);
    }
    let q = DenseMatrix::from_fn(m, k, |i, j| q_cols[j][i]);
    Ok(QrFactors { q, r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity() {
        let qr = thin_qr(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(qr.q, DenseMatrix::identity(3));
        assert_eq!(qr.r, DenseMatrix::identity(3));
    }

    #[test]
    fn orthogonal_columns() {
        let v = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 0.0], [0.0, 3.0]]).unwrap();
        let qr = thin_qr(&v).unwrap();
        let q = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(qr.q, q);
        assert_eq!(qr.r, DenseMatrix::from_diag(&[2.0, 3.0]));
    }

    #[test]
    fn rank_deficient_names_column() {
        let v = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0], [1.0, 2.0, 1.0], [0.0, 0.0, 1.0]]).unwrap();
        match thin_qr(&v) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, 1),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        assert!(thin_qr(&DenseMatrix::zeros(3, 2)).is_err());
        assert!(thin_qr(&DenseMatrix::zeros(2, 3)).is_err());
    }
}
