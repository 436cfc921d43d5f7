//! Poisson regression of binned counts on integrated B-spline covariates.
//!
//! With bin counts `X_n` and design entries
//! `D_nl = Int_{bin n} B_l(t) dt`, the model is the canonical-link Poisson
//! GLM
//!
//! ```text
//! X_n ~ Poisson(mu_n),   log mu_n = eta_n = sum_l beta_l D_nl,
//! ```
//!
//! so the fitted intensity is `lambda(t) = exp(sum_l beta_l B_l(t))`. The
//! log-likelihood (including its data-dependent constant) is
//!
//! ```text
//! l(beta) = sum_n [ X_n eta_n - exp(eta_n) - ln X_n! ],
//! ```
//!
//! the score is `U(beta) = D' (X - mu)` and, because the log link is
//! canonical, the observed and expected information coincide:
//!
//! ```text
//! I(beta) = sum_n exp(eta_n) d_n d_n'.
//! ```
//!
//! [`fit_mle`] runs Fisher scoring (= Newton) with step halving; the
//! problem is concave, so with a feasible start the iteration converges in
//! a handful of steps.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::basis::{BasisError, SplineBasis, StudyPeriod};
use crate::linalg::{self, Matrix};
use crate::math;

/// Linear predictors beyond this magnitude are rejected: `exp` would
/// overflow (or underflow to an exact zero weight) shortly after.
pub const ETA_BOUND: f64 = 700.0;

/// Errors from design construction and model fitting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A count vector whose length does not match the period's bin count.
    #[error("count series has {got} entries but the period defines {expected} bins")]
    LengthMismatch { got: usize, expected: usize },
    /// Basis and period (or series and design) cover different domains.
    #[error("basis, period and series must cover the same study period")]
    DomainMismatch,
    /// Raw design entries must be finite and nonnegative.
    #[error("design entries must be finite and nonnegative")]
    InvalidDesign,
    /// `|eta_n| > ETA_BOUND` or non-finite at the given 0-based bin.
    #[error("linear predictor overflow at bin index {bin}: eta = {eta}")]
    LinearPredictorOverflow { bin: usize, eta: f64 },
    /// The Fisher information is numerically singular.
    #[error(
        "Fisher information is singular: the basis is more flexible than \
         the data can identify; reduce the interior knot count"
    )]
    RankDeficient,
    /// Every count is zero, so the log-intensity MLE diverges.
    #[error("all counts are zero: the log-intensity MLE is unbounded below")]
    AllZeroSeries,
    /// Fisher scoring did not meet either tolerance in the allowed
    /// iterations; the last iterate is attached for diagnosis.
    #[error("fit did not converge after {iterations} iterations")]
    NotConverged {
        iterations: usize,
        last_beta: Vec<f64>,
    },
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// A validated series of bin counts over a study period.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSeries {
    period: StudyPeriod,
    counts: Vec<u64>,
    label: String,
}

impl CountSeries {
    /// Validates that there is one count per bin.
    pub fn new(
        period: StudyPeriod,
        counts: Vec<u64>,
        label: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if counts.len() != period.n_bins() {
            return Err(ModelError::LengthMismatch {
                got: counts.len(),
                expected: period.n_bins(),
            });
        }
        Ok(CountSeries {
            period,
            counts,
            label: label.into(),
        })
    }

    pub fn period(&self) -> &StudyPeriod {
        &self.period
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Total event count over the whole period.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Design matrix of integrated basis functions: entry `(n, l)` is
/// `Int_{bin n} B_l(t) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    period: StudyPeriod,
    entries: Matrix,
}

impl DesignMatrix {
    /// Builds a design from raw row-major entries (mainly useful for
    /// tests and custom covariates). Entries must be finite and
    /// nonnegative.
    pub fn from_entries(
        period: StudyPeriod,
        num_basis: usize,
        entries: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if entries.len() != period.n_bins() * num_basis {
            return Err(ModelError::LengthMismatch {
                got: entries.len(),
                expected: period.n_bins() * num_basis,
            });
        }
        if !entries.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(ModelError::InvalidDesign);
        }
        Ok(DesignMatrix {
            period,
            entries: Matrix::from_rows(period.n_bins(), num_basis, entries),
        })
    }

    pub fn period(&self) -> &StudyPeriod {
        &self.period
    }

    pub fn n_bins(&self) -> usize {
        self.entries.rows()
    }

    pub fn num_basis(&self) -> usize {
        self.entries.cols()
    }

    /// Row of integrated covariates for 0-based bin `n`.
    pub fn row(&self, n: usize) -> &[f64] {
        self.entries.row(n)
    }

    pub fn entry(&self, n: usize, l: usize) -> f64 {
        self.entries.get(n, l)
    }
}

/// Integrates every basis function over every bin of the period.
///
/// The basis must have been built on the same domain as `period`.
pub fn build_design(basis: &SplineBasis, period: &StudyPeriod) -> Result<DesignMatrix, ModelError> {
    let (a, b) = basis.domain();
    if a != period.start() || b != period.end() {
        return Err(ModelError::DomainMismatch);
    }
    let n = period.n_bins();
    let l = basis.num_basis();
    let mut entries = Vec::with_capacity(n * l);
    for i in 0..n {
        let (lo, hi) = period.bin_edges(i);
        entries.extend(basis.integrate(lo, hi)?);
    }
    Ok(DesignMatrix {
        period: *period,
        entries: Matrix::from_rows(n, l, entries),
    })
}

/// Linear predictors `eta = D beta`, rejecting any `|eta_n| > ETA_BOUND`.
fn linear_predictors(design: &DesignMatrix, beta: &[f64]) -> Result<Vec<f64>, ModelError> {
    if beta.len() != design.num_basis() {
        return Err(ModelError::LengthMismatch {
            got: beta.len(),
            expected: design.num_basis(),
        });
    }
    let mut eta = Vec::with_capacity(design.n_bins());
    for n in 0..design.n_bins() {
        let e: f64 = design.row(n).iter().zip(beta).map(|(d, b)| d * b).sum();
        if !e.is_finite() || math::abs(e) > ETA_BOUND {
            return Err(ModelError::LinearPredictorOverflow { bin: n, eta: e });
        }
        eta.push(e);
    }
    Ok(eta)
}

fn check_series(design: &DesignMatrix, counts: &CountSeries) -> Result<(), ModelError> {
    if counts.counts().len() != design.n_bins() {
        return Err(ModelError::LengthMismatch {
            got: counts.counts().len(),
            expected: design.n_bins(),
        });
    }
    if counts.period() != design.period() {
        return Err(ModelError::DomainMismatch);
    }
    Ok(())
}

/// Poisson log-likelihood `sum_n [X_n eta_n - exp(eta_n) - ln X_n!]`,
/// including the data-dependent constant.
pub fn log_likelihood(
    design: &DesignMatrix,
    counts: &CountSeries,
    beta: &[f64],
) -> Result<f64, ModelError> {
    check_series(design, counts)?;
    let eta = linear_predictors(design, beta)?;
    let mut ll = 0.0;
    for (x, e) in counts.counts().iter().zip(&eta) {
        ll += *x as f64 * e - math::exp(*e) - math::ln_factorial(*x);
    }
    Ok(ll)
}

/// Score vector `U(beta) = D' (X - mu)`.
pub fn score(
    design: &DesignMatrix,
    counts: &CountSeries,
    beta: &[f64],
) -> Result<Vec<f64>, ModelError> {
    check_series(design, counts)?;
    let eta = linear_predictors(design, beta)?;
    let mu: Vec<f64> = eta.iter().map(|&e| math::exp(e)).collect();
    Ok(score_from(design, counts.counts(), &mu))
}

fn score_from(design: &DesignMatrix, counts: &[u64], mu: &[f64]) -> Vec<f64> {
    let l = design.num_basis();
    let mut u = vec![0.0; l];
    for n in 0..design.n_bins() {
        let resid = counts[n] as f64 - mu[n];
        for (u_l, d_nl) in u.iter_mut().zip(design.row(n)) {
            *u_l += resid * d_nl;
        }
    }
    u
}

/// Fisher information `I(beta) = sum_n exp(eta_n) d_n d_n'`.
pub fn fisher_information(design: &DesignMatrix, beta: &[f64]) -> Result<Matrix, ModelError> {
    let eta = linear_predictors(design, beta)?;
    let mu: Vec<f64> = eta.iter().map(|&e| math::exp(e)).collect();
    Ok(information_from(design, &mu))
}

fn information_from(design: &DesignMatrix, mu: &[f64]) -> Matrix {
    let l = design.num_basis();
    let mut info = Matrix::zeros(l, l);
    for n in 0..design.n_bins() {
        let row = design.row(n);
        let w = mu[n];
        for i in 0..l {
            let wi = w * row[i];
            if wi == 0.0 {
                continue;
            }
            for j in 0..=i {
                let v = info.get(i, j) + wi * row[j];
                info.set(i, j, v);
            }
        }
    }
    for i in 0..l {
        for j in 0..i {
            let v = info.get(i, j);
            info.set(j, i, v);
        }
    }
    info
}

/// Stopping rules and iteration caps for [`fit_mle`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Converged when the log-likelihood improves by less than this.
    pub loglik_tolerance: f64,
    /// Converged when the score max-norm falls below this.
    pub score_tolerance: f64,
    pub max_iterations: usize,
    /// Cap on step halvings within one iteration.
    pub max_step_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            loglik_tolerance: 1e-10,
            score_tolerance: 1e-8,
            max_iterations: 100,
            max_step_halvings: 30,
        }
    }
}

/// A converged maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Coefficient estimates, one per basis function.
    pub beta_hat: Vec<f64>,
    /// Inverse Fisher information at the optimum.
    pub covariance: Matrix,
    /// Log-likelihood at the optimum (constant included).
    pub log_likelihood: f64,
    /// Fisher-scoring iterations used.
    pub iterations: usize,
    /// Always true for a returned fit; kept for bookkeeping in callers
    /// that serialize results.
    pub converged: bool,
    /// Fitted means `mu_n`, one per bin.
    pub fitted_means: Vec<f64>,
}

impl FitResult {
    /// Standard errors of the coefficients (square roots of the
    /// covariance diagonal).
    pub fn beta_std_errors(&self) -> Vec<f64> {
        (0..self.beta_hat.len())
            .map(|l| math::sqrt(self.covariance.get(l, l)))
            .collect()
    }
}

/// Maximizes the Poisson log-likelihood by Fisher scoring.
///
/// Starts from the constant empirical rate (`beta_l = ln(mean/delta)` for
/// every `l`, which by partition of unity makes the starting intensity the
/// observed average rate) and takes damped Newton steps, halving the step
/// until the log-likelihood does not decrease. Convergence is declared
/// when the improvement drops below `loglik_tolerance` or the score
/// max-norm drops below `score_tolerance`.
pub fn fit_mle(
    design: &DesignMatrix,
    counts: &CountSeries,
    options: &FitOptions,
) -> Result<FitResult, ModelError> {
    check_series(design, counts)?;
    let total = counts.total();
    if total == 0 {
        return Err(ModelError::AllZeroSeries);
    }
    let n = design.n_bins();
    let delta = design.period().bin_width();
    let mean = total as f64 / n as f64;
    let mut beta = vec![math::ln(mean / delta); design.num_basis()];
    let mut ll = log_likelihood(design, counts, &beta)?;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        iterations += 1;
        let eta = linear_predictors(design, &beta)?;
        let mu: Vec<f64> = eta.iter().map(|&e| math::exp(e)).collect();
        let u = score_from(design, counts.counts(), &mu);
        if max_abs(&u) < options.score_tolerance {
            converged = true;
            break;
        }
        let info = information_from(design, &mu);
        let chol = linalg::cholesky(&info).ok_or(ModelError::RankDeficient)?;
        let direction = linalg::cholesky_solve(&chol, &u);

        // damped Newton step: halve until the log-likelihood is not worse
        let mut step = 1.0;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for _ in 0..=options.max_step_halvings {
            let cand: Vec<f64> = beta
                .iter()
                .zip(&direction)
                .map(|(b, d)| b + step * d)
                .collect();
            match log_likelihood(design, counts, &cand) {
                Ok(cand_ll) if cand_ll >= ll => {
                    accepted = Some((cand, cand_ll));
                    break;
                }
                // overflow or a decrease: shorten the step
                _ => step *= 0.5,
            }
        }
        let Some((new_beta, new_ll)) = accepted else {
            // no step length improves: numerically at the optimum
            break;
        };
        let improvement = new_ll - ll;
        beta = new_beta;
        ll = new_ll;
        if improvement < options.loglik_tolerance {
            converged = true;
            break;
        }
    }

    if !converged {
        // the loop may have stopped right on the optimum
        let final_score = score(design, counts, &beta)?;
        converged = max_abs(&final_score) < options.score_tolerance;
    }
    if !converged {
        return Err(ModelError::NotConverged {
            iterations,
            last_beta: beta,
        });
    }

    let eta = linear_predictors(design, &beta)?;
    let fitted_means: Vec<f64> = eta.iter().map(|&e| math::exp(e)).collect();
    let info = information_from(design, &fitted_means);
    let chol = linalg::cholesky(&info).ok_or(ModelError::RankDeficient)?;
    let covariance = linalg::cholesky_inverse(&chol);
    let log_likelihood = log_likelihood(design, counts, &beta)?;
    Ok(FitResult {
        beta_hat: beta,
        covariance,
        log_likelihood,
        iterations,
        converged,
        fitted_means,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, &x| acc.max(math::abs(x)))
}
