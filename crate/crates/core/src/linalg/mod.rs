//! Dense matrices, decompositions, and norms.

mod cholesky;
mod csv;
mod matrix;
mod operator;
mod qr;
mod svd;

pub use cholesky::Cholesky;
pub use csv::{parse_matrix_csv, read_matrix_csv, write_matrix_csv};
pub use matrix::{dot, frobenius_sq, masked_sq_norm, norm2, DenseMatrix};
pub use operator::{LinearMap, SparsePlusLowRank, Transposed};
pub use qr::{thin_qr, QrFactors};
pub use svd::{jacobi_svd, thin_svd, thin_svd_with, truncated_svd, SvdFactors, SvdMethod};
