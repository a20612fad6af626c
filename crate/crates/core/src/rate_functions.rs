//! Closed-form rate functions.
//!
//! * `I_r`: upper deviations of the first `r` rows, speed `m`.
//! * `J`, `J'`, `J''`: lower deviations of the largest GUE eigenvalue, speed `m^2`.
//! * `K`: lower deviations of the largest traceless GUE eigenvalue, speed `m^2`.
//!
//! Wherever the textbook form subtracts nearly equal quantities the expressions
//! are rewritten algebraically (conjugate multiplication, difference of cubes);
//! the rewrites are exact identities.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{domain, Result};
use crate::quadrature::{integrate, QuadConfig};

/// A rate: nonnegative and finite, or `+∞` on purpose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateValue {
    Finite(f64),
    Infinite,
}

impl RateValue {
    /// The value as an `f64`, `+∞` mapping to `f64::INFINITY`.
    pub fn value(self) -> f64 {
        match self {
            RateValue::Finite(v) => v,
            RateValue::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            RateValue::Finite(v) => Some(v),
            RateValue::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, RateValue::Infinite)
    }
}

impl fmt::Display for RateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateValue::Finite(v) => write!(f, "{v}"),
            RateValue::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for RateValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RateValue::Finite(v) => s.serialize_f64(*v),
            RateValue::Infinite => s.serialize_str("inf"),
        }
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(terms: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &t in terms {
        let s = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
        sum = s;
    }
    sum + comp
}

/// `2 ∫_2^x sqrt((z/2)^2 - 1) dz` from its antiderivative, for `x >= 2`.
pub fn i1_antiderivative(x: f64) -> f64 {
    let root = (x * x - 4.0).max(0.0).sqrt();
    x * root / 2.0 - 2.0 * (x / 2.0).acosh()
}

/// `2 ∫_2^x sqrt((z/2)^2 - 1) dz` by adaptive quadrature; the cross-check for
/// [`i1_antiderivative`].
pub fn i1_quadrature(x: f64, cfg: &QuadConfig) -> Result<f64> {
    if x < 2.0 {
        return domain(format!("I_1 quadrature needs x >= 2, got {x}"));
    }
    Ok(integrate(|z: f64| 2.0 * ((z / 2.0).powi(2) - 1.0).max(0.0).sqrt(), 2.0, x, cfg)?.value)
}

/// `I_r(x_1, ..., x_r)`: finite iff `x_1 >= ... >= x_r >= 2`.
pub fn rate_i_r(xs: &[f64]) -> RateValue {
    let ordered = xs.windows(2).all(|w| w[0] >= w[1]);
    if !ordered || !xs.iter().all(|&x| x >= 2.0 && x.is_finite()) {
        return RateValue::Infinite;
    }
    RateValue::Finite(xs.iter().map(|&x| i1_antiderivative(x)).sum())
}

/// `J(x)`, zero for `x >= 2`.
pub fn rate_j(x: f64) -> RateValue {
    if x.is_nan() {
        return RateValue::Infinite;
    }
    if x >= 2.0 {
        return RateValue::Finite(0.0);
    }
    if x == f64::NEG_INFINITY {
        return RateValue::Infinite;
    }
    let s = (12.0 + x * x).sqrt();
    let (poly, log_term) = if x >= 0.0 {
        (-x * (-72.0 * x + x * x * x + 30.0 * s + x * x * s), ((x + s) / 6.0).ln())
    } else {
        // x^3 + x^2 s = 12 x^2 / (s - x) and x + s = 12 / (s - x)
        let d = s - x;
        (-x * (-72.0 * x + 30.0 * s + 12.0 * x * x / d), (2.0 / d).ln())
    };
    RateValue::Finite((poly / 216.0 - log_term).max(0.0))
}

/// `J'(x) = (-x^3 + 36x - (12 + x^2)^{3/2}) / 54` on `x <= 2`.
pub fn rate_j_prime(x: f64) -> Result<f64> {
    if !(x <= 2.0) {
        return domain(format!("J' is evaluated on x <= 2 (identically 0 beyond), got {x}"));
    }
    let s = (12.0 + x * x).sqrt();
    let cubic = if x >= 0.0 {
        -x * x * x - s * s * s
    } else {
        // |x|^3 - s^3 = -12 (x^2 + |x| s + s^2) / (|x| + s)
        let ax = -x;
        -12.0 * (x * x + ax * s + s * s) / (ax + s)
    };
    Ok((cubic + 36.0 * x) / 54.0)
}

/// `J''(x) = (12 - x^2 - x sqrt(12 + x^2)) / 18` on `x <= 2`.
pub fn rate_j_second(x: f64) -> Result<f64> {
    if !(x <= 2.0) {
        return domain(format!("J'' is evaluated on x <= 2 (identically 0 beyond), got {x}"));
    }
    let s = (12.0 + x * x).sqrt();
    let inner = if x >= 0.0 {
        12.0 - x * x - x * s
    } else {
        let ax = -x;
        12.0 + 12.0 * ax / (s + ax)
    };
    Ok(inner / 18.0)
}

/// `K(x)`: `+∞` for `x <= 0`, zero for `x >= 2`, explicit in between.
pub fn rate_k_closed(x: f64) -> RateValue {
    if x.is_nan() || x <= 0.0 {
        return RateValue::Infinite;
    }
    if x >= 2.0 {
        return RateValue::Finite(0.0);
    }
    let cbrt2 = 2f64.cbrt();
    let cbrt3 = 3f64.cbrt();
    let two_23 = cbrt2 * cbrt2;
    let three_23 = cbrt3 * cbrt3;
    let three_16 = 3f64.powf(1.0 / 6.0);
    let three_56 = 3f64.powf(5.0 / 6.0);

    let root81 = (81.0 * x * x + 12.0).sqrt();
    // a = sqrt(81x^2 + 12) - 9x, by its conjugate
    let a = 12.0 / (root81 + 9.0 * x);
    let a13 = a.cbrt();
    let a23 = a13 * a13;
    let r = (27.0 * x * x + 4.0).sqrt();

    // 2·3^{1/3} - 2^{1/3} a^{2/3} = (24 - 2a^2) / (u^2 + uv + v^2) with 24 - 2a^2 = 36 x a
    let u = 2.0 * cbrt3;
    let v = cbrt2 * a23;
    let gap = 36.0 * x * a / (u * u + u * v + v * v);
    debug_assert!(a > 0.0 && gap > 0.0, "radicands positive on (0, 2)");

    let terms = [
        3.0 * (9.0 * cbrt2 * three_23 * a23 - 8.0) * x * x,
        9.0 * cbrt2 * three_16 * a13 * (r * a13 - 5.0 * cbrt2 * three_16) * x,
        -6.0 * cbrt2 * three_23 * a23,
        -3.0 * two_23 * three_56 * r * a13,
        16.0 * a.ln(),
        -48.0 * gap.ln(),
        60.0,
        32.0 * 6f64.ln(),
    ];
    RateValue::Finite((compensated_sum(&terms) / 48.0).max(0.0))
}

/// Large-`|x|` / small-`x` equivalents of `K_η`:
/// `x^2/(2(1-η)) + log(-x/(1-η))` for `η < 1, x < 0`, and `-log x` for `η = 1, 0 < x < 1`.
pub fn k_eta_asymptotic(x: f64, eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return domain(format!("eta must lie in [0, 1], got {eta}"));
    }
    if eta < 1.0 {
        if !(x < 0.0) {
            return domain(format!("the eta < 1 equivalent holds as x -> -inf; got x = {x}"));
        }
        let c = 1.0 - eta;
        Ok(x * x / (2.0 * c) + (-x / c).ln())
    } else {
        if !(x > 0.0 && x < 1.0) {
            return domain(format!("the eta = 1 equivalent holds as x -> 0+; got x = {x}"));
        }
        Ok(-x.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // K at selected points, evaluated from the explicit formula with 30-digit
    // arithmetic (mpmath) and cross-checked there against the variational integral.
    const K_REFERENCE: [(f64, f64); 6] = [
        (0.1, 2.0575604190400756),
        (0.5, 0.5559851239619482),
        (1.0, 0.11994737273035107),
        (1.5, 0.012191229161312133),
        (1.9, 8.57603204172396e-05),
        (1.999, 8.335677884415092e-11),
    ];

    fn j(x: f64) -> f64 {
        rate_j(x).value()
    }

    #[test]
    fn i_r_examples() {
        assert_eq!(rate_i_r(&[2.0]), RateValue::Finite(0.0));
        assert!((rate_i_r(&[3.0]).value() - 1.42926).abs() < 1e-5);
        assert_eq!(rate_i_r(&[3.0, 1.5]), RateValue::Infinite);
        assert_eq!(rate_i_r(&[2.5, 3.0]), RateValue::Infinite);
        assert_eq!(rate_i_r(&[f64::NAN]), RateValue::Infinite);
        let two = rate_i_r(&[3.0, 2.5]).value();
        assert!((two - i1_antiderivative(3.0) - i1_antiderivative(2.5)).abs() < 1e-15);
    }

    #[test]
    fn i1_quadrature_matches_antiderivative() {
        let cfg = QuadConfig { abs_tol: 1e-13, rel_tol: 0.0, max_intervals: 5000 };
        for i in 0..=80 {
            let x = 2.0 + i as f64 * 0.1;
            let q = i1_quadrature(x, &cfg).unwrap();
            assert!((q - i1_antiderivative(x)).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn i_r_monotone_in_each_coordinate() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let lo = 2.0 + 4.0 * next();
            let hi = lo + 3.0 * next();
            let bump = 0.5 * next();
            let base = rate_i_r(&[hi, lo]).value();
            assert!(rate_i_r(&[hi + bump, lo]).value() >= base);
            if lo + bump <= hi {
                assert!(rate_i_r(&[hi, lo + bump]).value() >= base);
            }
        }
    }

    #[test]
    fn j_examples() {
        assert_eq!(j(2.0), 0.0);
        assert_eq!(j(5.0), 0.0);
        assert!((j(0.0) - 0.5 * 3f64.ln()).abs() < 1e-15);
        let x = -10.0;
        assert!((j(x) - (x * x / 2.0 + (-x).ln() + 0.75)).abs() <= 2.0 / (x * x));
        assert!(j(1.9999) < 1e-10);
    }

    #[test]
    fn j_prime_examples() {
        assert!(rate_j_prime(2.0).unwrap().abs() < 1e-15);
        let x = -10.0;
        assert!((rate_j_prime(x).unwrap() - (x + 1.0 / x)).abs() <= 4.0 / 1000.0);
        let h = 1e-5;
        let fd = (j(1.0 + h) - j(1.0 - h)) / (2.0 * h);
        assert!((fd - rate_j_prime(1.0).unwrap()).abs() < 1e-8);
        assert!(rate_j_prime(2.5).is_err());
        assert!(rate_j_prime(f64::NAN).is_err());
    }

    #[test]
    fn j_second_examples() {
        assert!(rate_j_second(2.0).unwrap().abs() < 1e-15);
        assert!((rate_j_second(0.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(rate_j_second(2.1).is_err());
        for i in 0..2200 {
            let x = -20.0 + i as f64 * 0.01;
            let v = rate_j_second(x).unwrap();
            assert!(v > 0.0 && v < 1.0, "J''({x}) = {v}");
        }
    }

    #[test]
    fn j_is_convex_nonincreasing_and_consistent() {
        let h = 1e-3;
        for i in 0..400 {
            let x = -18.0 + i as f64 * 0.05;
            if x + h > 2.0 {
                break;
            }
            let second = (j(x + h) - 2.0 * j(x) + j(x - h)) / (h * h);
            assert!(second >= -1e-8);
            assert!((second - rate_j_second(x).unwrap()).abs() < 1e-6 * (1.0 + x * x), "x = {x}");
            assert!(j(x + h) <= j(x));
            assert!(rate_j_prime(x).unwrap() <= 0.0);
        }
    }

    #[test]
    fn j_negative_branch_is_smooth_across_zero() {
        for &x in &[-1e-9, -1e-6, 1e-9, 1e-6] {
            assert!((j(x) - j(0.0) - rate_j_prime(0.0).unwrap() * x).abs() < 1e-9);
        }
        assert!((rate_j_prime(-1e-12).unwrap() - rate_j_prime(1e-12).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn k_closed_examples() {
        assert_eq!(rate_k_closed(-0.5), RateValue::Infinite);
        assert_eq!(rate_k_closed(0.0), RateValue::Infinite);
        assert_eq!(rate_k_closed(2.0), RateValue::Finite(0.0));
        assert!(rate_k_closed(2.0 - 1e-9).value() < 1e-6);
        for (x, want) in K_REFERENCE {
            let got = rate_k_closed(x).value();
            assert!((got - want).abs() < 1e-12 * (1.0 + want), "K({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn k_closed_monotone_and_log_asymptotics() {
        let mut prev = f64::INFINITY;
        for i in 1..2000 {
            let x = i as f64 * 0.001;
            let v = rate_k_closed(x).value();
            assert!(v <= prev + 1e-13, "K not nonincreasing at {x}");
            prev = v;
        }
        for i in 1..50 {
            let x = i as f64 * 0.001;
            assert!((rate_k_closed(x).value() + x.ln()).abs() <= 8.0);
        }
        assert!(rate_k_closed(1e-8).value().is_finite());
    }

    #[test]
    fn asymptotic_examples() {
        assert!((k_eta_asymptotic(-10.0, 0.0).unwrap() - 52.3026).abs() < 1e-4);
        assert!((k_eta_asymptotic(0.01, 1.0).unwrap() - 4.6052).abs() < 1e-4);
        assert!((k_eta_asymptotic(-10.0, 0.5).unwrap() - 102.996).abs() < 1e-3);
        assert!(k_eta_asymptotic(1.0, 0.5).is_err());
        assert!(k_eta_asymptotic(2.0, 1.0).is_err());
        assert!(k_eta_asymptotic(-1.0, 1.5).is_err());
    }

    #[test]
    fn rate_value_serializes_infinity_as_tag() {
        assert_eq!(serde_json::to_string(&RateValue::Infinite).unwrap(), r#""inf""#);
        assert_eq!(serde_json::to_string(&RateValue::Finite(0.5)).unwrap(), "0.5");
        assert_eq!(RateValue::Infinite.to_string(), "inf");
    }
}
