//! Complex linear algebra and random sampling shared by every module.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{left_pinv, solve_hermitian, Cholesky, Qr};
pub use matrix::ComplexMatrix;
pub use rng::{sample_cn, RngStream};
