//! Kolmogorov–Smirnov statistics.

use serde::Serialize;

use crate::error::{invalid, Result};

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return invalid("KS statistic is undefined for NaN samples");
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample statistic `sup |F_a - F_b|`; ties across samples are stepped together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return invalid("KS needs two nonempty samples");
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-sample statistic against a continuous distribution function.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<f64> {
    if xs.is_empty() {
        return invalid("KS needs a nonempty sample");
    }
    let xs = sorted(xs)?;
    let n = xs.len() as f64;
    Ok(xs.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs())
    }))
}

/// Asymptotic two-sample critical value `c(α) sqrt((n+m)/(n m))`, `c(α) = sqrt(-ln(α/2)/2)`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || n == 0 || m == 0 {
        return invalid("critical value needs 0 < alpha < 1 and nonempty samples");
    }
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    Ok(c * ((n + m) / (n * m)).sqrt())
}

/// Asymptotic survival function of the Kolmogorov distribution, `P(K > t)`.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 0.3 {
        // the alternating series converges slowly here and the value is 1 to f64 precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * t * t).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub pass: bool,
}

/// Two-sample test; `threshold` overrides the `alpha` critical value when given.
pub fn ks_test(a: &[f64], b: &[f64], alpha: f64, threshold: Option<f64>) -> Result<KsOutcome> {
    let statistic = ks_two_sample(a, b)?;
    let threshold = match threshold {
        Some(t) => t,
        None => ks_critical_value(alpha, a.len(), b.len())?,
    };
    let (n, m) = (a.len() as f64, b.len() as f64);
    let p_value = kolmogorov_sf(statistic * (n * m / (n + m)).sqrt());
    Ok(KsOutcome { statistic, threshold, p_value, pass: statistic <= threshold })
}
