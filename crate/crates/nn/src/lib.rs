//! Reverse-mode tensor engine and the SC-attention channel denoiser.
//!
//! [`Tape`] records operations on [`Tensor`]s and differentiates scalar
//! roots. [`NetParams`] builds the attention network on a tape, and
//! [`train`] fits it with Adam on packed complex channel pairs.
//!
//! Training runs in `f32`; gradient checks use `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod checkpoint;
pub mod element;
pub mod error;
pub mod gradcheck;
pub mod net;
pub mod param;
pub mod suite;
pub mod tape;
pub mod tensor;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use element::Element;
pub use error::{NnError, Result};
pub use gradcheck::grad_check;
pub use net::{
    nmse_loss, pack_complex, self_attention, unpack_complex, AttentionLayerParams, NetConfig, NetParams, OutputHead,
};
pub use param::Parameter;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
pub use train::{evaluate_nmse, predict_batch, train, EpochRecord, Pair, TrainConfig, TrainHistory, TrainOutcome};

/// Training-precision network.
pub type Net = NetParams<f32>;
/// Gradient-check precision network.
pub type Net64 = NetParams<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
