//! Simultaneous input and state estimation (SISE) for linear discrete-time
//! systems whose output is only observed through a quantizer.
//!
//! The observation model `p(y | x)` of a quantized output is approximated by
//! Gauss-Legendre quadrature over the quantization cell, which turns it into a
//! Gaussian mixture in the state. Filtering then becomes a Gaussian sum filter:
//!
//! * [`gsf_prior`] runs the filter under a Gaussian i.i.d. input prior.
//! * [`gsf_limit`] runs the uninformative-prior limit of the same recursion,
//!   which is a bank of LTI SISE updates, one per mixture component.
//! * [`reduction`] keeps the mixture size bounded with Runnalls-style merging.
//! * [`baselines`] holds the LTI SISE filter and an extended-state Kalman
//!   filter used as reference implementations.
//! * [`sim`] simulates trajectories and runs paired Monte Carlo experiments.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bank;
pub mod baselines;
mod error;
pub mod gsf_limit;
pub mod gsf_prior;
pub mod likelihood;
pub mod linalg;
pub mod mixture;
pub mod model;
pub mod reduction;
pub mod sim;

pub use bank::{Executor, Sequential};
pub use error::{Error, Result};
pub use likelihood::{LikelihoodGmm, QuadratureRule, TruncationPolicy};
pub use mixture::{Gaussian, MixtureBelief, Stage};
pub use model::{ExtendedModel, Hyperrectangle, InputPrior, Quantizer, SystemModel};
pub use reduction::{CostSpace, ReductionConfig};

/// Dense column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
