//! Float helpers routed through `libm`.
//!
//! Keeping every transcendental call behind one module guarantees the same
//! bit pattern on every target and keeps the crate free of `std`-only
//! inherent float methods.

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// `ln(1 + x)`, accurate for small `|x|`.
pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// `ln Gamma(x)` for `x > 0`.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln(k!)` as `ln Gamma(k + 1)`.
pub(crate) fn ln_factorial(k: u64) -> f64 {
    libm::lgamma(k as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_matches_direct_products() {
        let mut acc = 0.0f64;
        for k in 1..=20u64 {
            acc += ln(k as f64);
            assert!((ln_factorial(k) - acc).abs() < 1e-10 * acc.max(1.0));
        }
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
    }

    #[test]
    fn ln_1p_is_accurate_near_zero() {
        let x = 1e-12;
        assert!((ln_1p(x) - x).abs() < 1e-24);
    }
}
