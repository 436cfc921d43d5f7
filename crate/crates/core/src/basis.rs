//! Clamped cubic B-spline bases on a bounded study period.
//!
//! The study period `(a, b]` is divided into `N` equal bins of width
//! `delta = (b - a) / N`. A basis is built from `m` equally spaced interior
//! knots, with the boundary knots `a` and `b` repeated to multiplicity 4
//! (degree + 1), giving `L = m + 4` basis functions that span all cubic
//! splines on `[a, b]` with simple interior knots:
//!
//! ```text
//! tau = (a, a, a, a, k_1, ..., k_m, b, b, b, b)
//! ```
//!
//! Values follow the Cox-de Boor recursion; derivatives use
//!
//! ```text
//! B'_{i,p}(t) = p * ( B_{i,p-1}(t) / (tau_{i+p} - tau_i)
//!             - B_{i+1,p-1}(t) / (tau_{i+p+1} - tau_{i+1}) )
//! ```
//!
//! with the convention that a term is dropped when its denominator is zero
//! (repeated knots). Integrals are computed with a 3-point Gauss-Legendre
//! rule applied piecewise between knots, which is exact for cubics.
//!
//! At the right boundary every function takes its left-limit value, so the
//! basis is well defined on all of `[a, b]` and sums to one there.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

/// Polynomial degree of every basis in this crate.
pub const SPLINE_DEGREE: usize = 3;

// 3-point Gauss-Legendre rule on [-1, 1]: nodes 0, +/- sqrt(3/5) and
// weights 8/9, 5/9. Exact for polynomials up to degree 5.
const GL3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Errors from study-period and basis construction or evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasisError {
    /// The period bounds are not finite numbers with `b > a`.
    #[error("study period must have finite bounds with b > a, got ({a}, {b}]")]
    InvalidPeriod { a: f64, b: f64 },
    /// Fewer than two bins.
    #[error("study period needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    /// More basis functions than bins: the regression cannot identify them.
    #[error(
        "{num_basis} basis functions cannot be identified from {n_bins} bins; \
         reduce the interior knot count"
    )]
    TooManyKnots { num_basis: usize, n_bins: usize },
    /// Evaluation point outside `[a, b]` (or not finite).
    #[error("t = {t} lies outside the basis domain [{a}, {b}]")]
    OutOfDomain { t: f64, a: f64, b: f64 },
    /// Integration interval is empty, inverted, or not finite.
    #[error("integration interval [{lo}, {hi}) is empty or inverted")]
    EmptyInterval { lo: f64, hi: f64 },
}

/// Derivative order used throughout the crate: the curve itself or its
/// first or second derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Deriv {
    Value,
    First,
    Second,
}

impl Deriv {
    /// All orders, lowest first.
    pub const ALL: [Deriv; 3] = [Deriv::Value, Deriv::First, Deriv::Second];

    /// Numeric order: 0, 1 or 2.
    pub fn order(self) -> usize {
        match self {
            Deriv::Value => 0,
            Deriv::First => 1,
            Deriv::Second => 2,
        }
    }

    /// Inverse of [`Deriv::order`]; `None` above 2.
    pub fn from_order(order: usize) -> Option<Deriv> {
        match order {
            0 => Some(Deriv::Value),
            1 => Some(Deriv::First),
            2 => Some(Deriv::Second),
            _ => None,
        }
    }
}

/// A half-open study period `(a, b]` split into `N` equal bins.
///
/// Bin `i` (0-based) is `(a + i*delta, a + (i+1)*delta]` with
/// `delta = (b - a) / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyPeriod {
    a: f64,
    b: f64,
    n_bins: usize,
}

impl StudyPeriod {
    /// Validates `b > a` (finite) and `n_bins >= 2`.
    pub fn new(a: f64, b: f64, n_bins: usize) -> Result<Self, BasisError> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(BasisError::InvalidPeriod { a, b });
        }
        if n_bins < 2 {
            return Err(BasisError::TooFewBins(n_bins));
        }
        Ok(StudyPeriod { a, b, n_bins })
    }

    /// Left end of the period.
    pub fn start(&self) -> f64 {
        self.a
    }

    /// Right end of the period.
    pub fn end(&self) -> f64 {
        self.b
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Common bin width `delta = (b - a) / N`.
    pub fn bin_width(&self) -> f64 {
        (self.b - self.a) / self.n_bins as f64
    }

    /// Edges `(lo, hi)` of 0-based bin `i`; the bin is the interval
    /// `(lo, hi]`.
    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        assert!(i < self.n_bins, "bin index out of range");
        let delta = self.bin_width();
        (self.a + i as f64 * delta, self.a + (i + 1) as f64 * delta)
    }

    /// 0-based index of the bin containing `t` under `(lo, hi]` binning,
    /// or `None` when `t` is outside `(a, b]`.
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        if !(t > self.a && t <= self.b) {
            return None;
        }
        let f = (t - self.a) / self.bin_width();
        let idx = libm::ceil(f) as usize;
        Some(idx.saturating_sub(1).min(self.n_bins - 1))
    }
}

/// A clamped cubic B-spline basis on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    knots: Vec<f64>,
    num_basis: usize,
}

impl SplineBasis {
    /// Builds the basis with `interior_knot_count` equally spaced interior
    /// knots on the period's domain.
    ///
    /// The resulting `L = interior_knot_count + 4` functions must not
    /// exceed the number of bins, otherwise the design matrix cannot have
    /// full column rank.
    pub fn uniform(period: &StudyPeriod, interior_knot_count: usize) -> Result<Self, BasisError> {
        let num_basis = interior_knot_count + SPLINE_DEGREE + 1;
        if num_basis > period.n_bins() {
            return Err(BasisError::TooManyKnots {
                num_basis,
                n_bins: period.n_bins(),
            });
        }
        let (a, b) = (period.start(), period.end());
        let m = interior_knot_count;
        let mut knots = Vec::with_capacity(num_basis + SPLINE_DEGREE + 1);
        for _ in 0..=SPLINE_DEGREE {
            knots.push(a);
        }
        for j in 1..=m {
            knots.push(a + j as f64 * (b - a) / (m + 1) as f64);
        }
        for _ in 0..=SPLINE_DEGREE {
            knots.push(b);
        }
        Ok(SplineBasis { knots, num_basis })
    }

    /// Number of basis functions `L`.
    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    /// The full knot vector, boundary multiplicities included.
    pub fn knot_vector(&self) -> &[f64] {
        &self.knots
    }

    /// The interior knots only.
    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[SPLINE_DEGREE + 1..self.knots.len() - SPLINE_DEGREE - 1]
    }

    /// Domain `(a, b)` the basis lives on.
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Evaluates all `L` basis functions (or their derivative of the given
    /// order) at `t` in `[a, b]`.
    ///
    /// At `t = b` the left-limit values are returned, matching the
    /// half-open `(a, b]` convention of the bins.
    pub fn eval(&self, t: f64, deriv: Deriv) -> Result<Vec<f64>, BasisError> {
        let (a, b) = self.domain();
        if !(t.is_finite() && t >= a && t <= b) {
            return Err(BasisError::OutOfDomain { t, a, b });
        }
        let span = self.find_span(t);
        Ok(match deriv {
            Deriv::Value => dense_values(&self.knots, SPLINE_DEGREE, span, t),
            _ => dense_derivatives(&self.knots, SPLINE_DEGREE, span, t, deriv.order()),
        })
    }

    /// Exact integrals `Int_lo^hi B_l(t) dt` for all `L` functions.
    ///
    /// The interval must satisfy `a <= lo < hi <= b`. Integration splits
    /// the interval at the knots so each Gauss-Legendre panel sees a
    /// single cubic polynomial.
    pub fn integrate(&self, lo: f64, hi: f64) -> Result<Vec<f64>, BasisError> {
        let (a, b) = self.domain();
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(BasisError::EmptyInterval { lo, hi });
        }
        if lo < a || hi > b {
            let t = if lo < a { lo } else { hi };
            return Err(BasisError::OutOfDomain { t, a, b });
        }
        let mut acc = vec![0.0; self.num_basis];
        let mut piece_lo = lo;
        for &k in self.interior_knots() {
            if k > piece_lo && k < hi {
                self.gauss_panel(piece_lo, k, &mut acc);
                piece_lo = k;
            }
        }
        self.gauss_panel(piece_lo, hi, &mut acc);
        Ok(acc)
    }

    /// Adds the 3-point Gauss-Legendre integral over `[lo, hi]` (a single
    /// polynomial piece) to `acc`.
    fn gauss_panel(&self, lo: f64, hi: f64, acc: &mut [f64]) {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for (node, weight) in GL3_NODES.iter().zip(GL3_WEIGHTS) {
            let t = mid + half * node;
            let span = self.find_span(t);
            let vals = dense_values(&self.knots, SPLINE_DEGREE, span, t);
            let w = half * weight;
            for (a_l, v_l) in acc.iter_mut().zip(vals) {
                *a_l += w * v_l;
            }
        }
    }

    /// Knot span index `s` with `tau_s <= t < tau_{s+1}`, clamped to the
    /// last non-empty span when `t >= b`.
    fn find_span(&self, t: f64) -> usize {
        let l = self.num_basis;
        if t >= self.knots[l] {
            return l - 1;
        }
        let mut lo = SPLINE_DEGREE;
        let mut hi = l;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }
}

/// The `degree + 1` basis functions of the given degree that are non-zero
/// on span `span`, evaluated at `t` (Cox-de Boor triangle).
fn nonzero_values(knots: &[f64], degree: usize, span: usize, t: f64) -> Vec<f64> {
    let mut vals = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    vals[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = vals[r] / (right[r + 1] + left[j - r]);
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    vals
}

/// All basis functions of `degree` on the given knot vector evaluated at
/// `t`, as a dense vector of length `knots.len() - degree - 1`.
///
/// `span` is the cubic-level span containing `t`; it is valid for every
/// degree below the cubic one as well.
fn dense_values(knots: &[f64], degree: usize, span: usize, t: f64) -> Vec<f64> {
    let n_funcs = knots.len() - degree - 1;
    let mut out = vec![0.0; n_funcs];
    let vals = nonzero_values(knots, degree, span, t);
    for (offset, v) in vals.into_iter().enumerate() {
        out[span - degree + offset] = v;
    }
    out
}

/// Dense derivative vector of the given order, by applying the derivative
/// recursion `order` times on top of the lower-degree values.
fn dense_derivatives(knots: &[f64], degree: usize, span: usize, t: f64, order: usize) -> Vec<f64> {
    if order == 0 {
        return dense_values(knots, degree, span, t);
    }
    let lower = dense_derivatives(knots, degree - 1, span, t, order - 1);
    let n_funcs = knots.len() - degree - 1;
    let p = degree as f64;
    let mut out = vec![0.0; n_funcs];
    for (i, out_i) in out.iter_mut().enumerate() {
        let mut v = 0.0;
        let d_left = knots[i + degree] - knots[i];
        if d_left > 0.0 {
            v += p * lower[i] / d_left;
        }
        let d_right = knots[i + degree + 1] - knots[i + 1];
        if d_right > 0.0 {
            v -= p * lower[i + 1] / d_right;
        }
        *out_i = v;
    }
    out
}
