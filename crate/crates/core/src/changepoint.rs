//! Exact conditional test for a drop in intensity after a pre-specified
//! bin.
//!
//! Under a homogeneous Poisson process the bin counts are iid Poisson, so
//! conditionally on the total `S = sum_n X_n` the count before the change
//! bin,
//!
//! ```text
//! S_K = sum_{n <= K} X_n  |  S = s   ~   Binomial(s, K / N),
//! ```
//!
//! depends on nothing unknown. A surplus of events before the change
//! point is therefore evidence of a drop, and the test rejects for large
//! `S_K`. Two tail conventions are supported:
//!
//! * [`TestVariant::Strict`]: `p = P(X > s_K)` (one minus the CDF at
//!   `s_K`),
//! * [`TestVariant::Inclusive`]: `p = P(X >= s_K)`, which includes the
//!   observed table and is never smaller.
//!
//! Tail probabilities are computed two independent ways. The default
//! path sums pmf terms over whichever tail has fewer of them, generating
//! the terms with the stable mode-anchored recurrence
//! `w(k+1) = w(k) (n-k)/(k+1) * p/q` and normalizing by the total — no
//! logarithms enter, so the result is accurate to a few ulp even for
//! large `n`. The second route evaluates the regularized incomplete beta
//! function by continued fraction. The two cross-check each other in the
//! tests.

use core::ops::RangeInclusive;

use thiserror::Error;

use crate::math;
use crate::model::CountSeries;

/// Errors from the exact change-point test and its binomial kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChangePointError {
    /// The change bin must leave at least one bin on each side.
    #[error("change bin k = {k} must satisfy 1 <= k <= {max}")]
    KOutOfRange { k: usize, max: usize },
    /// No events anywhere: the conditional distribution is degenerate.
    #[error("the series has no events, so the conditional test is undefined")]
    NoEvents,
    /// The binomial success probability left (0, 1).
    #[error("success probability must lie strictly inside (0, 1), got {0}")]
    InvalidProbability(f64),
    /// Tail start beyond the number of trials.
    #[error("tail start x = {x} exceeds the number of trials n = {n}")]
    ValueOutOfRange { x: u64, n: u64 },
}

/// Which upper tail the binomial kernel accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// `P(X > x)`
    Greater,
    /// `P(X >= x)`
    GreaterEqual,
}

/// Tail convention of the reported p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestVariant {
    /// `p = P(X > observed)`: one minus the CDF at the observed count.
    #[default]
    Strict,
    /// `p = P(X >= observed)`: includes the observed table.
    Inclusive,
}

impl TestVariant {
    fn tail(self) -> Tail {
        match self {
            TestVariant::Strict => Tail::Greater,
            TestVariant::Inclusive => Tail::GreaterEqual,
        }
    }

    /// Stable lowercase name, used by output writers.
    pub fn name(self) -> &'static str {
        match self {
            TestVariant::Strict => "strict",
            TestVariant::Inclusive => "inclusive",
        }
    }
}

/// Outcome of the exact conditional test.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointResult {
    /// Number of bins before the change (1-based count, so bins
    /// `0..k` in 0-based indexing).
    pub k: usize,
    /// Total number of bins `N`.
    pub n_bins: usize,
    /// Events observed in the first `k` bins.
    pub sum_before: u64,
    /// Events observed over the whole period.
    pub sum_total: u64,
    /// Null success probability `K / N`.
    pub null_probability: f64,
    /// Upper-tail p-value under the chosen variant.
    pub p_value: f64,
    pub variant: TestVariant,
}

impl ChangePointResult {
    pub fn sum_after(&self) -> u64 {
        self.sum_total - self.sum_before
    }

    /// Average events per bin before the change.
    pub fn mean_before(&self) -> f64 {
        self.sum_before as f64 / self.k as f64
    }

    /// Average events per bin from the change bin onwards.
    pub fn mean_after(&self) -> f64 {
        self.sum_after() as f64 / (self.n_bins - self.k) as f64
    }
}

/// Runs the exact conditional-binomial change-point test with the change
/// placed after the first `k` bins (`1 <= k <= N - 1`).
pub fn exact_test(
    counts: &CountSeries,
    k: usize,
    variant: TestVariant,
) -> Result<ChangePointResult, ChangePointError> {
    let n_bins = counts.period().n_bins();
    if k < 1 || k > n_bins - 1 {
        return Err(ChangePointError::KOutOfRange {
            k,
            max: n_bins - 1,
        });
    }
    let sum_total = counts.total();
    if sum_total == 0 {
        return Err(ChangePointError::NoEvents);
    }
    let sum_before: u64 = counts.counts()[..k].iter().sum();
    let null_probability = k as f64 / n_bins as f64;
    let p_value = binomial_tail(sum_total, null_probability, sum_before, variant.tail())?;
    Ok(ChangePointResult {
        k,
        n_bins,
        sum_before,
        sum_total,
        null_probability,
        p_value,
        variant,
    })
}

/// Compensated (Kahan) accumulator.
#[derive(Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

/// Sums of unnormalized `Binomial(n, p)` pmf weights: the weights are 1
/// at the mode and follow the exact ratio recurrence outwards, so every
/// term is accurate to a few ulp without any log-gamma evaluation.
/// Returns `(sum over range, sum over all k)`; the tail probability over
/// `range` is their quotient.
fn weight_sums(n: u64, p: f64, range: RangeInclusive<u64>) -> (f64, f64) {
    let q = 1.0 - p;
    let mode = libm::floor((n as f64 + 1.0) * p) as u64;
    let mode = mode.min(n);
    let mut partial = Kahan::default();
    let mut total = Kahan::default();
    // upward from the mode
    let mut w = 1.0;
    let mut k = mode;
    loop {
        total.add(w);
        if range.contains(&k) {
            partial.add(w);
        }
        if k == n || w == 0.0 {
            break;
        }
        w *= (n - k) as f64 / (k + 1) as f64 * (p / q);
        k += 1;
    }
    // downward from the mode
    let mut w = 1.0;
    let mut k = mode;
    while k > 0 && w > 0.0 {
        w *= k as f64 / (n - k + 1) as f64 * (q / p);
        k -= 1;
        total.add(w);
        if range.contains(&k) {
            partial.add(w);
        }
    }
    (partial.value(), total.value())
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Upper-tail probability of a `Binomial(n, p)` distribution at `x`, by
/// normalized pmf summation.
///
/// The tail is summed directly when it excludes the mode, so a tiny
/// far-tail mass keeps its relative accuracy; when the tail contains the
/// mode it is at least `1/(n + 1)`, and the complement of the lower sum
/// is accurate there.
///
/// Requires `0 < p < 1` and `x <= n`.
pub fn binomial_tail(n: u64, p: f64, x: u64, tail: Tail) -> Result<f64, ChangePointError> {
    check_kernel_args(n, p, x)?;
    let from = match tail {
        Tail::Greater => x + 1,
        Tail::GreaterEqual => x,
    };
    if from > n {
        return Ok(0.0);
    }
    if from == 0 {
        return Ok(1.0);
    }
    let mode = (libm::floor((n as f64 + 1.0) * p) as u64).min(n);
    Ok(if from > mode {
        let (upper, all) = weight_sums(n, p, from..=n);
        clamp01(upper / all)
    } else {
        let (lower, all) = weight_sums(n, p, 0..=from - 1);
        clamp01(1.0 - lower / all)
    })
}

/// Same tail probability through the regularized incomplete beta
/// function: `P(X >= x) = I_p(x, n - x + 1)`.
///
/// Kept as an independent computational route; the tests require the two
/// to agree to near machine precision.
pub fn binomial_tail_incbeta(n: u64, p: f64, x: u64, tail: Tail) -> Result<f64, ChangePointError> {
    check_kernel_args(n, p, x)?;
    let from = match tail {
        Tail::Greater => x + 1,
        Tail::GreaterEqual => x,
    };
    if from > n {
        return Ok(0.0);
    }
    if from == 0 {
        return Ok(1.0);
    }
    Ok(clamp01(reg_inc_beta(
        from as f64,
        (n - from) as f64 + 1.0,
        p,
    )))
}

fn check_kernel_args(n: u64, p: f64, x: u64) -> Result<(), ChangePointError> {
    if !(p.is_finite() && p > 0.0 && p < 1.0) {
        return Err(ChangePointError::InvalidProbability(p));
    }
    if x > n {
        return Err(ChangePointError::ValueOutOfRange { x, n });
    }
    Ok(())
}

/// Regularized incomplete beta `I_x(a, b)` by continued fraction
/// (modified Lentz), for `a, b >= 1` as produced by the binomial mapping.
fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = math::ln_gamma(a + b) - math::ln_gamma(a) - math::ln_gamma(b)
        + a * math::ln(x)
        + b * math::ln_1p(-x);
    let front = math::exp(ln_front);
    // use the fraction on the side where it converges fast
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cont_frac(a, b, x) / a
    } else {
        1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b
    }
}

fn beta_cont_frac(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 400;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if math::abs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        // even step
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if math::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if math::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if math::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if math::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if math::abs(del - 1.0) < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::StudyPeriod;
    use crate::model::CountSeries;

    /// Independent log-gamma route to `ln P(X = k)`, for oracle checks.
    fn ln_pmf(n: u64, p: f64, k: u64) -> f64 {
        math::ln_factorial(n) - math::ln_factorial(k) - math::ln_factorial(n - k)
            + k as f64 * math::ln(p)
            + (n - k) as f64 * math::ln_1p(-p)
    }

    /// Series on 125 bins whose first-114-bin and remaining sums are as
    /// given; the test statistic depends on nothing else.
    fn segmented_series(before: u64, after: u64) -> CountSeries {
        let period = StudyPeriod::new(1891.0, 2016.0, 125).unwrap();
        let mut counts = vec![0u64; 125];
        counts[0] = before;
        counts[114] = after;
        CountSeries::new(period, counts, "segmented").unwrap()
    }

    #[test]
    fn small_binomial_tail_is_exact() {
        // P(X >= 5) for Binomial(10, 1/2) = 638/1024 = 0.623046875
        let ge = binomial_tail(10, 0.5, 5, Tail::GreaterEqual).unwrap();
        assert!((ge - 0.623046875).abs() < 1e-15);
        // P(X > 5) = P(X >= 5) - P(X = 5), with P(X = 5) = 252/1024
        let gt = binomial_tail(10, 0.5, 5, Tail::Greater).unwrap();
        assert!((gt - 0.376953125).abs() < 1e-15);
    }

    #[test]
    fn tail_edges_are_exact() {
        assert_eq!(binomial_tail(17, 0.3, 0, Tail::GreaterEqual).unwrap(), 1.0);
        assert_eq!(binomial_tail(17, 0.3, 17, Tail::Greater).unwrap(), 0.0);
        // P(X >= n) = p^n
        let pn = binomial_tail(17, 0.3, 17, Tail::GreaterEqual).unwrap();
        assert!((pn - 0.3f64.powi(17)).abs() < 1e-22);
    }

    #[test]
    fn the_two_routes_agree_to_machine_precision() {
        let cases = [
            (10u64, 0.5, 5u64),
            (100, 0.05, 3),
            (682, 0.912, 639),
            (280, 0.912, 267),
            (227, 0.912, 214),
            (1000, 0.3, 320),
            (5000, 0.7, 3555),
        ];
        for (n, p, x) in cases {
            for tail in [Tail::Greater, Tail::GreaterEqual] {
                let sum_route = binomial_tail(n, p, x, tail).unwrap();
                let beta_route = binomial_tail_incbeta(n, p, x, tail).unwrap();
                assert!(
                    (sum_route - beta_route).abs() < 1e-12,
                    "routes disagree at n={n} p={p} x={x}: {sum_route} vs {beta_route}"
                );
            }
        }
    }

    #[test]
    fn tail_matches_independent_reference_values() {
        // frozen from an independent survival-function implementation
        let sf = binomial_tail(1000, 0.3, 320, Tail::Greater).unwrap();
        assert!((sf - 0.07923158318575903).abs() < 1e-12);
        let sf = binomial_tail(682, 0.912, 600, Tail::Greater).unwrap();
        assert!((sf - 0.9973233872083077).abs() < 1e-11);
    }

    #[test]
    fn telescoping_identity_holds() {
        for x in [0u64, 1, 7, 50, 99, 100] {
            let ge = binomial_tail(100, 0.37, x, Tail::GreaterEqual).unwrap();
            let gt = binomial_tail(100, 0.37, x, Tail::Greater).unwrap();
            let pmf = math::exp(ln_pmf(100, 0.37, x));
            assert!((ge - gt - pmf).abs() < 1e-14);
            assert!(gt <= ge);
        }
    }

    #[test]
    fn mirror_symmetry_holds() {
        // P_p(X >= x) = 1 - P_{1-p}(X > n - x)
        for (n, p, x) in [(50u64, 0.2, 13u64), (200, 0.912, 170), (9, 0.5, 4)] {
            let left = binomial_tail(n, p, x, Tail::GreaterEqual).unwrap();
            let right = 1.0 - binomial_tail(n, 1.0 - p, n - x, Tail::Greater).unwrap();
            assert!((left - right).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_probability_decreases_in_x() {
        let mut last = 1.0f64;
        for x in 0..=60u64 {
            let v = binomial_tail(60, 0.4, x, Tail::GreaterEqual).unwrap();
            assert!(v <= last + 1e-15);
            last = v;
        }
    }

    #[test]
    fn kernel_rejects_bad_arguments() {
        assert!(matches!(
            binomial_tail(10, 0.0, 3, Tail::Greater),
            Err(ChangePointError::InvalidProbability(_))
        ));
        assert!(matches!(
            binomial_tail(10, 1.0, 3, Tail::Greater),
            Err(ChangePointError::InvalidProbability(_))
        ));
        assert!(matches!(
            binomial_tail(10, f64::NAN, 3, Tail::Greater),
            Err(ChangePointError::InvalidProbability(_))
        ));
        assert!(matches!(
            binomial_tail(10, 0.5, 11, Tail::Greater),
            Err(ChangePointError::ValueOutOfRange { x: 11, n: 10 })
        ));
    }

    #[test]
    fn whole_period_case_reproduces_the_known_p_values() {
        let counts = segmented_series(639, 43);
        let strict = exact_test(&counts, 114, TestVariant::Strict).unwrap();
        assert_eq!(strict.sum_before, 639);
        assert_eq!(strict.sum_total, 682);
        assert_eq!(strict.sum_after(), 43);
        assert!((strict.null_probability - 0.912).abs() < 1e-15);
        assert!((strict.p_value - 0.006804989389127451).abs() < 1e-10);
        let incl = exact_test(&counts, 114, TestVariant::Inclusive).unwrap();
        assert!((incl.p_value - 0.010222269204775356).abs() < 1e-10);
        assert!(strict.p_value < incl.p_value);
    }

    #[test]
    fn segment_sums_drive_the_averages() {
        let counts = segmented_series(639, 43);
        let res = exact_test(&counts, 114, TestVariant::Strict).unwrap();
        assert!((res.mean_before() - 639.0 / 114.0).abs() < 1e-12);
        assert!((res.mean_after() - 43.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn sub_series_cases_reproduce_the_known_p_values() {
        // counts restricted to a sub-population: totals 280 and 227
        let cold = segmented_series(267, 13);
        let p = exact_test(&cold, 114, TestVariant::Strict).unwrap().p_value;
        assert!((p - 0.002764973805590404).abs() < 1e-10);
        let snow = segmented_series(214, 13);
        let p = exact_test(&snow, 114, TestVariant::Strict).unwrap().p_value;
        assert!((p - 0.03325403688502826).abs() < 1e-10);
    }

    #[test]
    fn statistic_depends_only_on_segment_sums() {
        let period = StudyPeriod::new(1891.0, 2016.0, 125).unwrap();
        let mut spread = vec![5u64; 125];
        spread[0] = 69;
        // same segment sums, completely different arrangement
        let before: u64 = spread[..114].iter().sum();
        let after: u64 = spread[114..].iter().sum();
        let mut uneven = vec![0u64; 125];
        uneven[113] = before;
        uneven[124] = after;
        let a = CountSeries::new(period, spread, "spread").unwrap();
        let b = CountSeries::new(period, uneven, "uneven").unwrap();
        let pa = exact_test(&a, 114, TestVariant::Strict).unwrap();
        let pb = exact_test(&b, 114, TestVariant::Strict).unwrap();
        assert_eq!(pa.p_value.to_bits(), pb.p_value.to_bits());
    }

    #[test]
    fn degenerate_extremes_behave() {
        // everything before the change: strict tail beyond the maximum is 0
        let all_before = segmented_series(100, 0);
        let res = exact_test(&all_before, 114, TestVariant::Strict).unwrap();
        assert_eq!(res.p_value, 0.0);
        // nothing before the change: the strict tail is 1 - P(X = 0)
        let none_before = segmented_series(0, 100);
        let res = exact_test(&none_before, 114, TestVariant::Strict).unwrap();
        let pmf0 = math::exp(ln_pmf(100, 0.912, 0));
        assert!((res.p_value - (1.0 - pmf0)).abs() < 1e-14);
        // inclusive with nothing observed is exactly 1
        let res = exact_test(&none_before, 114, TestVariant::Inclusive).unwrap();
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn change_bin_bounds_are_enforced() {
        let counts = segmented_series(10, 10);
        assert!(matches!(
            exact_test(&counts, 0, TestVariant::Strict),
            Err(ChangePointError::KOutOfRange { k: 0, max: 124 })
        ));
        assert!(matches!(
            exact_test(&counts, 125, TestVariant::Strict),
            Err(ChangePointError::KOutOfRange { k: 125, max: 124 })
        ));
        assert!(exact_test(&counts, 124, TestVariant::Strict).is_ok());
    }

    #[test]
    fn empty_series_is_rejected() {
        let counts = segmented_series(0, 0);
        assert!(matches!(
            exact_test(&counts, 114, TestVariant::Strict),
            Err(ChangePointError::NoEvents)
        ));
    }
}
