//! Estimation and testing for event-count series driven by a
//! non-homogeneous Poisson process.
//!
//! Counts binned over a study period `(a, b]` are modeled as independent
//! Poisson draws whose log means are linear in integrated cubic B-spline
//! covariates, which turns smooth intensity estimation into an ordinary
//! Poisson regression with a canonical log link:
//!
//! ```text
//! X_n ~ Poisson(mu_n),   log mu_n = sum_l beta_l * Int_{bin n} B_l(t) dt
//! lambda(t) = exp( sum_l beta_l * B_l(t) )
//! ```
//!
//! The crate provides:
//!
//! * [`basis`] — clamped cubic B-spline bases with analytic first and
//!   second derivatives and exact span-wise integrals,
//! * [`model`] — design construction, Poisson log-likelihood, Fisher
//!   information, and the Fisher-scoring MLE,
//! * [`inference`] — pointwise curves for the intensity and its first two
//!   derivatives with delta-method confidence bands,
//! * [`changepoint`] — an exact conditional-binomial test for a drop in
//!   mean intensity after a pre-specified bin,
//! * [`simulate`] — seeded NHPP simulation (binned counts and event
//!   times) and a parametric bootstrap,
//! * [`linalg`] — the small dense symmetric solves the fit needs.
//!
//! The crate is `no_std` (with `alloc`); every transcendental call goes
//! through `libm`, so results are bit-for-bit reproducible across targets.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
// index-heavy triangular and symmetric matrix loops read better indexed
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod basis;
pub mod changepoint;
pub mod inference;
pub mod linalg;
mod math;
pub mod model;
pub mod simulate;

pub use basis::{Deriv, SplineBasis, StudyPeriod};
pub use model::{CountSeries, DesignMatrix, FitOptions, FitResult};
