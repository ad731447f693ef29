//! Encoder, decoder and cluster head as small fully-connected networks with
//! reverse-mode gradients, plus the Adam optimiser.

pub mod adam;
mod encode;
pub mod network;

pub use adam::{adam_step, AdamParams, AdamState, Moments};
pub use encode::{encode, encode_backward, encode_features, EncodeTape};
pub use network::{Activation, GradTape, Layer, Network, NetworkGrads, LEAKY_SLOPE};
