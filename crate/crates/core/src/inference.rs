//! Pointwise curves and delta-method confidence bands for the fitted
//! intensity and its first two derivatives.
//!
//! With `g(t) = sum_l beta_l B_l(t)` the three curves are
//!
//! ```text
//! lambda(t)   = exp(g(t))
//! lambda'(t)  = exp(g(t)) * g'(t)
//! lambda''(t) = exp(g(t)) * (g''(t) + g'(t)^2)
//! ```
//!
//! and their gradients with respect to `beta` (used by the delta method
//! `Var[h(beta_hat)] ~ grad' I^{-1} grad`) are
//!
//! ```text
//! d lambda   / d beta_l = lambda * B_l
//! d lambda'  / d beta_l = lambda * (B_l' + B_l g')
//! d lambda'' / d beta_l = lambda * (B_l'' + B_l (g'' + g'^2) + 2 B_l' g')
//! ```
//!
//! Bands are pointwise 95% Wald intervals. For the intensity itself an
//! optional log-scale band exponentiates a symmetric interval for
//! `log lambda`, which keeps the lower limit positive.

use alloc::vec::Vec;

use thiserror::Error;

use crate::basis::{BasisError, Deriv, SplineBasis};
use crate::math;
use crate::model::FitResult;

/// Two-sided 95% standard-normal quantile used for all bands.
pub const NORMAL_Q975: f64 = 1.959964;

/// Errors from curve evaluation and band construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    /// Coefficient count does not match the basis.
    #[error("coefficient vector has length {got} but the basis has {expected} functions")]
    LengthMismatch { got: usize, expected: usize },
    /// Log-scale bands are defined for the intensity itself only.
    #[error("log-scale bands apply to the intensity (order 0) only")]
    LogBandNeedsValueOrder,
}

/// Scale on which the 95% band is symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandScale {
    /// `estimate +/- z * se` on the natural scale.
    #[default]
    Natural,
    /// Symmetric for `log lambda`, then exponentiated (order 0 only).
    Log,
}

/// A curve sampled on a grid with pointwise standard errors and a 95%
/// confidence band.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveEstimate {
    /// Which derivative of the intensity this is.
    pub order: Deriv,
    pub grid: Vec<f64>,
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

fn check_len(beta: &[f64], basis: &SplineBasis) -> Result<(), InferenceError> {
    if beta.len() != basis.num_basis() {
        return Err(InferenceError::LengthMismatch {
            got: beta.len(),
            expected: basis.num_basis(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `lambda(t)`, `lambda'(t)` or `lambda''(t)` for the given coefficients.
pub fn curve_value(
    beta: &[f64],
    basis: &SplineBasis,
    t: f64,
    order: Deriv,
) -> Result<f64, InferenceError> {
    check_len(beta, basis)?;
    let b0 = basis.eval(t, Deriv::Value)?;
    let lambda = math::exp(dot(beta, &b0));
    Ok(match order {
        Deriv::Value => lambda,
        Deriv::First => {
            let g1 = dot(beta, &basis.eval(t, Deriv::First)?);
            lambda * g1
        }
        Deriv::Second => {
            let g1 = dot(beta, &basis.eval(t, Deriv::First)?);
            let g2 = dot(beta, &basis.eval(t, Deriv::Second)?);
            lambda * (g2 + g1 * g1)
        }
    })
}

/// Gradient of the order-`order` curve at `t` with respect to `beta`.
pub fn curve_gradient(
    beta: &[f64],
    basis: &SplineBasis,
    t: f64,
    order: Deriv,
) -> Result<Vec<f64>, InferenceError> {
    check_len(beta, basis)?;
    let b0 = basis.eval(t, Deriv::Value)?;
    let lambda = math::exp(dot(beta, &b0));
    Ok(match order {
        Deriv::Value => b0.iter().map(|&b| lambda * b).collect(),
        Deriv::First => {
            let b1 = basis.eval(t, Deriv::First)?;
            let g1 = dot(beta, &b1);
            b0.iter()
                .zip(&b1)
                .map(|(&b, &bp)| lambda * (bp + b * g1))
                .collect()
        }
        Deriv::Second => {
            let b1 = basis.eval(t, Deriv::First)?;
            let b2 = basis.eval(t, Deriv::Second)?;
            let g1 = dot(beta, &b1);
            let g2 = dot(beta, &b2);
            let curv = g2 + g1 * g1;
            b0.iter()
                .zip(b1.iter().zip(&b2))
                .map(|(&b, (&bp, &bpp))| lambda * (bpp + b * curv + 2.0 * bp * g1))
                .collect()
        }
    })
}

/// Delta-method variance of the order-`order` curve at `t`:
/// `grad' Cov(beta_hat) grad`, clamped at zero against round-off.
pub fn delta_method_variance(
    fit: &FitResult,
    basis: &SplineBasis,
    t: f64,
    order: Deriv,
) -> Result<f64, InferenceError> {
    let grad = curve_gradient(&fit.beta_hat, basis, t, order)?;
    Ok(fit.covariance.quadratic_form(&grad).max(0.0))
}

/// Samples the curve on `grid` with natural-scale 95% bands.
pub fn intensity(
    fit: &FitResult,
    basis: &SplineBasis,
    grid: &[f64],
    order: Deriv,
) -> Result<CurveEstimate, InferenceError> {
    intensity_with_bands(fit, basis, grid, order, BandScale::Natural)
}

/// Samples the curve on `grid` with 95% bands on the requested scale.
pub fn intensity_with_bands(
    fit: &FitResult,
    basis: &SplineBasis,
    grid: &[f64],
    order: Deriv,
    scale: BandScale,
) -> Result<CurveEstimate, InferenceError> {
    if scale == BandScale::Log && order != Deriv::Value {
        return Err(InferenceError::LogBandNeedsValueOrder);
    }
    check_len(&fit.beta_hat, basis)?;
    let mut value = Vec::with_capacity(grid.len());
    let mut std_error = Vec::with_capacity(grid.len());
    let mut ci_low = Vec::with_capacity(grid.len());
    let mut ci_high = Vec::with_capacity(grid.len());
    for &t in grid {
        let v = curve_value(&fit.beta_hat, basis, t, order)?;
        let se = math::sqrt(delta_method_variance(fit, basis, t, order)?);
        let (lo, hi) = match scale {
            BandScale::Natural => (v - NORMAL_Q975 * se, v + NORMAL_Q975 * se),
            BandScale::Log => {
                // se(log lambda) = se(lambda) / lambda by the delta method
                let half = NORMAL_Q975 * se / v;
                (v * math::exp(-half), v * math::exp(half))
            }
        };
        value.push(v);
        std_error.push(se);
        ci_low.push(lo);
        ci_high.push(hi);
    }
    Ok(CurveEstimate {
        order,
        grid: grid.to_vec(),
        value,
        std_error,
        ci_low,
        ci_high,
    })
}
