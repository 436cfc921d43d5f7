//! Independent checks of the spline basis against oracles that do not share
//! code with the implementation: central finite differences for the
//! derivative orders, hand-integrated antiderivatives for the Bernstein
//! special case, and property tests for the algebraic invariants.

#![allow(clippy::needless_range_loop)]

use nhpp_core::{Deriv, SplineBasis, StudyPeriod};
use proptest::prelude::*;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_f64(state: &mut u64) -> f64 {
    (splitmix64(state) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn century_basis() -> (StudyPeriod, SplineBasis) {
    let period = StudyPeriod::new(1891.0, 2016.0, 125).unwrap();
    let basis = SplineBasis::uniform(&period, 9).unwrap();
    (period, basis)
}

/// Draws points in the open interior of the domain that keep a guard gap
/// away from every knot, so a finite-difference stencil of width `gap`
/// never straddles a join where the third derivative jumps.
fn interior_points_avoiding_knots(basis: &SplineBasis, gap: f64, count: usize) -> Vec<f64> {
    let (a, b) = basis.domain();
    let mut state = 0x5eed_u64;
    let mut points = Vec::with_capacity(count);
    while points.len() < count {
        let t = a + gap + (b - a - 2.0 * gap) * unit_f64(&mut state);
        let clear = basis
            .knot_vector()
            .iter()
            .all(|&k| (t - k).abs() > 2.0 * gap);
        if clear {
            points.push(t);
        }
    }
    points
}

fn rel_err(exact: f64, approx: f64) -> f64 {
    (exact - approx).abs() / exact.abs().max(1e-3)
}

#[test]
fn first_derivative_matches_central_differences() {
    let (_, basis) = century_basis();
    let h = 1e-3;
    for &t in &interior_points_avoiding_knots(&basis, h, 1000) {
        let exact = basis.eval(t, Deriv::First).unwrap();
        let above = basis.eval(t + h, Deriv::Value).unwrap();
        let below = basis.eval(t - h, Deriv::Value).unwrap();
        for l in 0..basis.num_basis() {
            let fd = (above[l] - below[l]) / (2.0 * h);
            assert!(
                rel_err(exact[l], fd) < 1e-6,
                "order-1 mismatch at t={t}, l={l}: analytic {} vs fd {}",
                exact[l],
                fd
            );
        }
    }
}

#[test]
fn second_derivative_matches_central_differences() {
    let (_, basis) = century_basis();
    let h = 1e-3;
    for &t in &interior_points_avoiding_knots(&basis, h, 1000) {
        let exact = basis.eval(t, Deriv::Second).unwrap();
        let above = basis.eval(t + h, Deriv::Value).unwrap();
        let mid = basis.eval(t, Deriv::Value).unwrap();
        let below = basis.eval(t - h, Deriv::Value).unwrap();
        let d1_above = basis.eval(t + h, Deriv::First).unwrap();
        let d1_below = basis.eval(t - h, Deriv::First).unwrap();
        for l in 0..basis.num_basis() {
            let fd_values = (above[l] - 2.0 * mid[l] + below[l]) / (h * h);
            let fd_slopes = (d1_above[l] - d1_below[l]) / (2.0 * h);
            assert!(
                rel_err(exact[l], fd_values) < 1e-4,
                "order-2 vs value stencil at t={t}, l={l}: {} vs {}",
                exact[l],
                fd_values
            );
            assert!(
                rel_err(exact[l], fd_slopes) < 1e-6,
                "order-2 vs slope stencil at t={t}, l={l}: {} vs {}",
                exact[l],
                fd_slopes
            );
        }
    }
}

/// On a single span the clamped basis reduces to the four Bernstein cubics,
/// whose antiderivatives are short closed forms. The quadrature must hit
/// them to near machine precision.
#[test]
fn bernstein_integrals_match_antiderivatives() {
    let period = StudyPeriod::new(0.0, 1.0, 4).unwrap();
    let basis = SplineBasis::uniform(&period, 0).unwrap();
    let antiderivative = |l: usize, x: f64| -> f64 {
        match l {
            0 => (1.0 - (1.0 - x).powi(4)) / 4.0,
            1 => 1.5 * x * x - 2.0 * x.powi(3) + 0.75 * x.powi(4),
            2 => x.powi(3) - 0.75 * x.powi(4),
            3 => x.powi(4) / 4.0,
            _ => unreachable!(),
        }
    };
    let mut state = 0xbee5_u64;
    for _ in 0..200 {
        let mut lo = unit_f64(&mut state);
        let mut hi = unit_f64(&mut state);
        if lo > hi {
            core::mem::swap(&mut lo, &mut hi);
        }
        if hi - lo < 1e-3 {
            continue;
        }
        let ints = basis.integrate(lo, hi).unwrap();
        for l in 0..4 {
            let exact = antiderivative(l, hi) - antiderivative(l, lo);
            assert!(
                (ints[l] - exact).abs() < 1e-12,
                "integral of Bernstein {l} over [{lo}, {hi}]: {} vs {}",
                ints[l],
                exact
            );
        }
    }
}

/// Uniform interior knots make the basis symmetric about the domain
/// midpoint, so the full-domain integrals must come in mirror pairs.
#[test]
fn full_domain_integrals_are_symmetric() {
    let (_, basis) = century_basis();
    let (a, b) = basis.domain();
    let ints = basis.integrate(a, b).unwrap();
    let n = ints.len();
    for l in 0..n {
        assert!(
            (ints[l] - ints[n - 1 - l]).abs() < 1e-10,
            "mirror pair ({l}, {}) differs: {} vs {}",
            n - 1 - l,
            ints[l],
            ints[n - 1 - l]
        );
        assert!(ints[l] > 0.0);
    }
}

proptest! {
    #[test]
    fn partition_of_unity_everywhere(m in 0usize..=12, u in 0.0f64..1.0) {
        prop_assume!(u > 0.0);
        let period = StudyPeriod::new(1891.0, 2016.0, 125).unwrap();
        let basis = SplineBasis::uniform(&period, m).unwrap();
        let t = 1891.0 + 125.0 * u;
        let values = basis.eval(t, Deriv::Value).unwrap();
        let sum: f64 = values.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12, "sum {} at t={}", sum, t);
        for &v in &values {
            prop_assert!(v >= 0.0);
        }
    }

    #[test]
    fn derivative_rows_sum_to_zero(m in 0usize..=12, u in 0.0f64..1.0) {
        prop_assume!(u > 0.0);
        let period = StudyPeriod::new(1891.0, 2016.0, 125).unwrap();
        let basis = SplineBasis::uniform(&period, m).unwrap();
        let t = 1891.0 + 125.0 * u;
        let d1: f64 = basis.eval(t, Deriv::First).unwrap().iter().sum();
        let d2: f64 = basis.eval(t, Deriv::Second).unwrap().iter().sum();
        prop_assert!(d1.abs() < 1e-10, "first-derivative sum {} at t={}", d1, t);
        prop_assert!(d2.abs() < 1e-10, "second-derivative sum {} at t={}", d2, t);
    }

    #[test]
    fn integration_is_additive(
        m in 0usize..=12,
        u1 in 0.0f64..1.0,
        u2 in 0.0f64..1.0,
        u3 in 0.0f64..1.0,
    ) {
        let period = StudyPeriod::new(1891.0, 2016.0, 125).unwrap();
        let basis = SplineBasis::uniform(&period, m).unwrap();
        let mut ts = [u1, u2, u3].map(|u| 1891.0 + 125.0 * u);
        ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let [lo, mid, hi] = ts;
        prop_assume!(mid - lo > 1e-6 && hi - mid > 1e-6);
        let left = basis.integrate(lo, mid).unwrap();
        let right = basis.integrate(mid, hi).unwrap();
        let whole = basis.integrate(lo, hi).unwrap();
        for l in 0..basis.num_basis() {
            prop_assert!(
                (left[l] + right[l] - whole[l]).abs() < 1e-12,
                "additivity broke for component {} on [{}, {}, {}]",
                l, lo, mid, hi
            );
        }
    }

    #[test]
    fn support_is_local(u in 0.0f64..1.0) {
        prop_assume!(u > 0.0);
        let period = StudyPeriod::new(1891.0, 2016.0, 125).unwrap();
        let basis = SplineBasis::uniform(&period, 9).unwrap();
        let t = 1891.0 + 125.0 * u;
        let knots = basis.knot_vector();
        let values = basis.eval(t, Deriv::Value).unwrap();
        for l in 0..basis.num_basis() {
            if t < knots[l] || t > knots[l + 4] {
                prop_assert!(
                    values[l] == 0.0,
                    "component {} nonzero ({}) outside [{}, {}] at t={}",
                    l, values[l], knots[l], knots[l + 4], t
                );
            }
        }
    }
}
