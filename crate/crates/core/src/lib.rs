//! Desk-scale toolkit for learning under instance-dependent label noise:
//! a minimal deterministic MLP trainer, controllable noise generators
//! (class-conditional and instance-dependent), a statistical test of the
//! class-conditional-noise assumption, memorization analysis, and SEAL label
//! correction by whole-run prediction averaging.
//!
//! Core math is generic over the scalar type through [`Scalar`] (`f32` or
//! `f64`); the `*64` aliases below pin the default double-precision variants.

pub mod analysis;
pub mod data;
pub mod error;
pub mod hypothesis;
pub mod matrix;
pub mod nn;
pub mod noise;
pub mod rng;
pub mod scalar;
pub mod seal;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases for the main types.
pub type Matrix64 = matrix::Matrix<f64>;
pub type LabeledDataset64 = data::LabeledDataset<f64>;
pub type NoisyDataset64 = data::NoisyDataset<f64>;
pub type TransitionMatrix64 = noise::TransitionMatrix<f64>;
pub type PredictionTrace64 = nn::PredictionTrace<f64>;
pub type Params64 = nn::Params<f64>;
pub type SoftLabels64 = seal::SoftLabels<f64>;
pub type HypothesisReport64 = hypothesis::HypothesisReport<f64>;

/// Single-precision aliases.
pub type Matrix32 = matrix::Matrix<f32>;
pub type LabeledDataset32 = data::LabeledDataset<f32>;
pub type NoisyDataset32 = data::NoisyDataset<f32>;
pub type SoftLabels32 = seal::SoftLabels<f32>;
