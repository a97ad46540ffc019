//! Ridge-type linear shrinkage estimation of a normal mean matrix.
//!
//! Observations form a `p x n` matrix `X` whose columns are independent
//! `N_p(theta_i, Sigma)` draws with known covariance `Sigma`. The estimators
//! here pull `X` toward its row-mean matrix through a ridge-regularized
//! inverse of `W = (X - Xbar)(X - Xbar)^T Sigma^{-1}`, with shrinkage weights
//! selected by an unbiased estimate of the risk difference against `X`.
//!
//! Module map:
//! - [`matmodel`]: centering, whitening, the singular-value spectrum, and the
//!   ridge trace functionals every other module consumes.
//! - [`estimators`]: the shrinkage estimator families and the data-driven
//!   weights, with positive-part variants.
//! - [`sure`]: unbiased risk-difference estimates, minimaxity condition
//!   checkers, and the known-prior optimal weights.
//! - [`simlab`]: Monte Carlo risk tables over synthetic low-rank-plus-tail
//!   mean matrices under normal and non-normal noise.
//! - [`rmt`]: high-dimensional consistency experiments for the estimated
//!   weights and a Marchenko-Pastur Stieltjes diagnostic.

pub mod error;
pub mod estimators;
pub mod matmodel;
pub mod rmt;
pub mod rng;
pub mod simlab;
pub mod sure;

pub use error::{Result, ShrinkError};
