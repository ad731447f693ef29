//! Unsupervised closed-loop transcription at desk scale.
//!
//! The numeric core ([`numerics`], [`rate`], [`model`]) is generic over the
//! [`Scalar`] type; everything above it works in `f64` through the aliases
//! re-exported here.

pub mod cluster;
pub mod cli;
pub mod data;
pub mod error;
pub mod generation;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod rate;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = numerics::Mat<f64>;
pub type Features = rate::FeatureBatch<f64>;
pub type Membership = rate::Membership<f64>;
pub type RateParams = rate::RateParams<f64>;
pub type RateBreakdown = rate::RateBreakdown<f64>;
pub type Network = model::Network<f64>;
pub type NetworkGrads = model::NetworkGrads<f64>;
pub type AdamParams = model::AdamParams<f64>;
pub type AdamState = model::AdamState<f64>;
