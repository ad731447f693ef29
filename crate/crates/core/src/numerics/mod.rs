//! Dense real linear algebra and the seeded random stream.

pub mod linalg;
pub mod matrix;
pub mod rng;

pub use linalg::{cholesky_logdet, spd_solve, sym_eig, Cholesky, SymEig};
pub use matrix::{dot, norm, Mat};
pub use rng::{Rng, Stream};
