use super::matrix::{dot, DenseMatrix};
use crate::par::{self, Execution};

/// A real linear map `ℝ^ncols → ℝ^nrows` that can be applied and transposed.
///
/// Iterative decompositions only need products with the operator, which lets
/// structured matrices (sparse plus low-rank) avoid materialization.
pub trait LinearMap: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `y = Aᵀ x`; `y` is overwritten.
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

const PAR_MIN_ROWS: usize = 256;

impl LinearMap for DenseMatrix {
    fn nrows(&self) -> usize {
        self.rows()
    }

    fn ncols(&self) -> usize {
        self.cols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let exec = if self.rows() >= PAR_MIN_ROWS {
            Execution::default()
        } else {
            Execution::Sequential
        };
        par::for_each_row_mut(y, 1, exec, |i, yi| yi[0] = dot(self.row(i), x));
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let cols = self.cols();
        let exec = if cols >= PAR_MIN_ROWS {
            Execution::default()
        } else {
            Execution::Sequential
        };
        // Chunked over output columns; each y_j accumulates rows in index order.
        const CHUNK: usize = 64;
        par::for_each_row_mut(y, CHUNK.min(cols), exec, |c, ychunk| {
            let start = c * CHUNK.min(cols);
            ychunk.fill(0.0);
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &self.row(i)[start..start + ychunk.len()];
                for (yj, &a) in ychunk.iter_mut().zip(row) {
                    *yj += xi * a;
                }
            }
        });
    }
}

/// View of an operator as its transpose.
pub struct Transposed<'a, T: ?Sized>(pub &'a T);

impl<T: LinearMap + ?Sized> LinearMap for Transposed<'_, T> {
    fn nrows(&self) -> usize {
        self.0.ncols()
    }

    fn ncols(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply_transpose(x, y)
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply(x, y)
    }
}

/// `S + L·Rᵀ` where `S` is sparse (CSR by row) and `L`, `R` are thin dense
/// factors. Represents a partially observed matrix whose missing cells are
/// filled from a low-rank model.
pub struct SparsePlusLowRank<'a> {
    rows: usize,
    cols: usize,
    row_ptr: &'a [usize],
    col_idx: &'a [usize],
    values: Vec<f64>,
    left: &'a DenseMatrix,
    right: &'a DenseMatrix,
}

impl<'a> SparsePlusLowRank<'a> {
    /// `values[p]` is the sparse entry at row `r` (where
    /// `row_ptr[r] <= p < row_ptr[r + 1]`) and column `col_idx[p]`.
    pub fn new(
        row_ptr: &'a [usize],
        col_idx: &'a [usize],
        values: Vec<f64>,
        left: &'a DenseMatrix,
        right: &'a DenseMatrix,
    ) -> Self {
        assert_eq!(left.cols(), right.cols());
        assert_eq!(row_ptr.len(), left.rows() + 1);
        assert_eq!(col_idx.len(), values.len());
        SparsePlusLowRank {
            rows: left.rows(),
            cols: right.rows(),
            row_ptr,
            col_idx,
            values,
            left,
            right,
        }
    }
}

impl LinearMap for SparsePlusLowRank<'_> {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let k = self.right.cols();
        let mut rtx = vec![0.0; k];
        for (j, &xj) in x.iter().enumerate() {
            for (acc, &r) in rtx.iter_mut().zip(self.right.row(j)) {
                *acc += r * xj;
            }
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = dot(self.left.row(i), &rtx);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yi = s;
        }
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let k = self.left.cols();
        let mut ltx = vec![0.0; k];
        for (i, &xi) in x.iter().enumerate() {
            for (acc, &l) in ltx.iter_mut().zip(self.left.row(i)) {
                *acc += l * xi;
            }
        }
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = dot(self.right.row(j), &ltx);
        }
        for (i, &xi) in x.iter().enumerate() {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[p]] += self.values[p] * xi;
            }
        }
    }
}
