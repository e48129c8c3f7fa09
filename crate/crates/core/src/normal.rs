//! Standard normal helpers.
//!
//! `upper_tail` is the complementary CDF `Φ(x) = P(Z > x)`, which is the
//! convention every likelihood formula in this crate is written against.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// `1 / sqrt(2π)`.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Upper-tail probability of the standard normal, `P(Z > x)`.
pub fn upper_tail(x: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else if x == f64::NEG_INFINITY {
        1.0
    } else {
        0.5 * erfc(x * FRAC_1_SQRT_2)
    }
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (-0.5 * x * x).exp()
    }
}

/// Inverse of [`upper_tail`]: the `x` with `P(Z > x) = p`.
///
/// Returns `+∞` for `p <= 0` and `-∞` for `p >= 1`.
pub fn upper_tail_inv(p: f64) -> f64 {
    if p <= 0.0 {
        f64::INFINITY
    } else if p >= 1.0 {
        f64::NEG_INFINITY
    } else {
        // one Newton step polishes the series inverse to near machine precision
        let x = SQRT_2 * erfc_inv(2.0 * p);
        let d = pdf(x);
        if d > 0.0 {
            x + (upper_tail(x) - p) / d
        } else {
            x
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tail_limits_and_center() {
        assert_eq!(upper_tail(0.0), 0.5);
        assert_eq!(upper_tail(f64::NEG_INFINITY), 1.0);
        assert_eq!(upper_tail(f64::INFINITY), 0.0);
        assert_eq!(pdf(f64::INFINITY), 0.0);
        assert_eq!(pdf(f64::NEG_INFINITY), 0.0);
        assert_abs_diff_eq!(pdf(0.0), 0.398_942_3, epsilon = 1e-7);
    }

    #[test]
    fn tail_symmetry_on_grid() {
        for k in -800..=800 {
            let x = k as f64 * 0.01;
            assert_abs_diff_eq!(upper_tail(x) + upper_tail(-x), 1.0, epsilon = 1e-12);
            assert_eq!(pdf(x), pdf(-x));
        }
    }

    #[test]
    fn density_is_negative_slope_of_tail() {
        let h = 1e-5;
        for k in -500..=500 {
            let x = k as f64 * 0.01;
            let slope = (upper_tail(x + h) - upper_tail(x - h)) / (2.0 * h);
            assert!((slope + pdf(x)).abs() <= 1e-6, "x = {x}");
        }
    }

    #[test]
    fn tail_strictly_decreasing() {
        let mut prev = upper_tail(-5.0);
        for k in -499..=800 {
            let v = upper_tail(k as f64 * 0.01);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn inverse_round_trip() {
        assert_eq!(upper_tail_inv(0.5), 0.0);
        for &p in &[1e-6, 0.01, 0.05, 0.1, 0.3, 0.7, 0.9, 0.999] {
            assert_abs_diff_eq!(upper_tail(upper_tail_inv(p)), p, epsilon = 1e-13);
        }
    }

    proptest::proptest! {
        #[test]
        fn tail_is_symmetric(x in -40.0f64..40.0) {
            proptest::prop_assert!((upper_tail(x) + upper_tail(-x) - 1.0).abs() <= 1e-12);
        }
    }
}
