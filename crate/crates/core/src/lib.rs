//! Regularized SVD and its application to Top-N recommendation.
//!
//! * [`linalg`]: dense matrices, thin SVD (Jacobi and Lanczos), thin QR.
//! * [`solver`]: alternating ridge updates and the closed-form shrinkage solution.
//! * [`completion`]: impute-and-factorize matrix completion over observed entries.
//! * [`datasets`]: rating-file parsers, binarization, and mask-out splits.
//! * [`evaluation`]: Top-N precision, recall, and F1 over masked ratings.
//! * [`synthetic`]: seeded test matrices and rating sets shaped like public benchmarks.
//! * [`report`]: CSV tables with `%g` number formatting.
//! * [`par`]: the sequential / rayon execution switch.

pub mod completion;
pub mod datasets;
pub mod error;
pub mod linalg;
pub mod evaluation;
pub mod par;
pub mod report;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, SvdFactors};
pub use par::Execution;
pub use solver::{rsvd_als, rsvd_closed_form, RsvdConfig, RsvdSolution};
