//! Principal components by volume (determinant) maximisation.
//!
//! The crate maximises `f_d(X) = ln det(XᵀAᵀAX) − ln det(XᵀX)` over full
//! column-rank `X`, whose maximisers span the leading right singular subspace
//! of `A` and which has no spurious local maxima. It ships six steepest-ascent
//! solvers, the stationary-point classification calculus, random test
//! matrices with known ground truth, and a benchmark harness.

pub mod error;
pub mod metrics;
pub mod numerics;
pub mod objective;
pub mod randgen;
pub mod solvers;
pub mod stationary;

pub mod cli;

pub use error::{Error, Result};
pub use numerics::Matrix;
pub use objective::{DataMatrix, LoadingMatrix};
