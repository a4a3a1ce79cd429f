//! Cascaded-channel laboratory for double-RIS aided massive MIMO uplinks.
//!
//! The crate covers the classical half of the pipeline:
//!
//! - [`numerics`]: dense complex matrices, Cholesky/QR based solves and
//!   counter-based random streams.
//! - [`channel`]: Rician link generation with path loss and the cascaded
//!   matrices `H1k`, `H2k`, `H3k`.
//! - [`pilot`]: reflection schedules and noisy received-signal synthesis.
//! - [`estimators`]: LS and LMMSE estimators plus the NMSE metric.
//!
//! Everything is generic over the real scalar type ([`Real`]); the aliases
//! below fix it to `f64`, which is what the estimator path uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod estimators;
pub mod numerics;
pub mod pilot;
pub mod scalar;

pub use error::{Error, Result};
pub use numerics::{ComplexMatrix, RngStream};
pub use scalar::Real;

pub use num_complex::Complex;

/// Complex scalar in double precision.
pub type C64 = Complex<f64>;
/// Complex matrix in double precision.
pub type CMatrix = ComplexMatrix<f64>;
/// Complex matrix in single precision.
pub type CMatrix32 = ComplexMatrix<f32>;
/// One realization of the constituent links in double precision.
pub type ChannelSet64 = channel::ChannelSet<f64>;
/// Cascaded matrices in double precision.
pub type Cascaded64 = channel::CascadedChannels<f64>;
/// Channel correlation prior in double precision.
pub type Correlation64 = estimators::CorrelationMatrix<f64>;
