//! Noise-robust keyword spotting at desk scale.
//!
//! Everything needed to pretrain, fine-tune and evaluate small Keyword
//! Transformer models lives in this crate: a tape-based autodiff engine
//! ([`tensor`]), an MFCC front-end ([`dsp`]), dataset construction with
//! exact-SNR noise mixing ([`data`]), the KWT model ([`model`]),
//! student-teacher pretraining ([`pretrain`]), supervised training
//! ([`train`]) and the SNR-sweep evaluation harness ([`eval`]).

pub mod data;
pub mod dsp;
pub mod eval;
pub mod methods;
pub mod model;
pub mod pretrain;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use methods::TrainingMethod;
pub use scalar::Scalar;
pub use tensor::{ParameterSet, Tape, Tensor, TensorError, TensorId};
