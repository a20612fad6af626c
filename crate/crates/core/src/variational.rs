//! Constrained equilibrium measure, the variational form of `K`, the discrete
//! spectral rate and the Legendre machinery linking `J`, `K` and `K_η`.
//!
//! For `0 < x < 2` the zero-mean minimizer of the spectral rate supported on
//! `(-∞, x]` lives on `[L + x, x]`. Shifted to `[L, 0]` its density is
//!
//! ```text
//! f_x(y) = sqrt(y (L - y)) (2 c2 + L + 2 (x + y)) / (4 π y)
//! ```
//!
//! with `L` and the multiplier `c2` in closed form.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::quadrature::{integrate, QuadConfig};
use crate::rate_functions::{rate_j, rate_j_prime, rate_j_second, rate_k_closed, RateValue};

/// Tolerances for the root finders and quadratures in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalConfig {
    pub quad: QuadConfig,
    /// Residual tolerance for root finding.
    pub root_tol: f64,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        Self { quad: QuadConfig { abs_tol: 1e-10, rel_tol: 0.0, max_intervals: 4000 }, root_tol: 1e-12 }
    }
}

/// The minimizer for endpoint `x`, shifted to `[L, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumMeasure {
    pub x: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub c2: f64,
}

/// `x^2 - y^2`-style differences of cube roots: `u - v` given `u^3 - v^3`.
fn cube_root_gap(u: f64, v: f64, cube_diff: f64) -> f64 {
    cube_diff / (u * u + u * v + v * v)
}

pub fn equilibrium_measure(x: f64) -> Result<EquilibriumMeasure> {
    if !(x > 0.0 && x < 2.0) {
        return domain(format!("equilibrium measure needs 0 < x < 2, got {x}"));
    }
    let root81 = (81.0 * x * x + 12.0).sqrt();
    let a = 12.0 / (root81 + 9.0 * x);
    let a13 = a.cbrt();
    let a23 = a13 * a13;
    let (cbrt2, cbrt3, cbrt6) = (2f64.cbrt(), 3f64.cbrt(), 6f64.cbrt());

    // 12 - a^2 = 18 x a removes the cancellation as x -> 0
    let l_num = 2.0 * cube_root_gap(cbrt2 * cbrt2 * a23, 2.0 * cbrt6, -72.0 * x * a);
    let l = l_num / (cbrt3 * cbrt3 * a13);

    let first = cube_root_gap(2.0 * cbrt3 * cbrt3, cbrt6 * a23, 108.0 * x * a) / (cbrt2 * cbrt2 * a13);
    let second =
        (cbrt2 * cbrt3 * cbrt3 * a23 + 6.0 * cbrt2 * cbrt2 * cbrt3 / a23 + 6.0) / (18.0 * x);
    let c2 = first - second - x;
    Ok(EquilibriumMeasure { x, l, c2 })
}

impl EquilibriumMeasure {
    /// `f_x(y)`; zero off `(L, 0)`.
    pub fn density(&self, y: f64) -> f64 {
        if !(y > self.l && y < 0.0) {
            return 0.0;
        }
        (y * (self.l - y)).sqrt() * (2.0 * self.c2 + self.l + 2.0 * (self.x + y)) / (4.0 * PI * y)
    }

    /// `∫_L^0 h(y) f_x(y) dy`.
    ///
    /// `y = -u^2` removes the `1/sqrt(-y)` blow-up at 0 and `u = sqrt(-L) sin φ`
    /// the square-root edge at `L`, leaving `(L/2π) ∫_0^{π/2} h(y) cos^2 φ g(y) dφ`
    /// with `y = L sin^2 φ` and `g` the linear factor of the density.
    pub fn integrate<H: Fn(f64) -> f64>(&self, h: H, cfg: &QuadConfig) -> Result<f64> {
        let (l, x, c2) = (self.l, self.x, self.c2);
        let integrand = |phi: f64| {
            let (s, c) = phi.sin_cos();
            let y = l * s * s;
            h(y) * c * c * (2.0 * c2 + l + 2.0 * (x + y))
        };
        Ok(l / (2.0 * PI) * integrate(integrand, 0.0, FRAC_PI_2, cfg)?.value)
    }

    /// `∫ f_x`, which should be 1.
    pub fn mass(&self, cfg: &QuadConfig) -> Result<f64> {
        self.integrate(|_| 1.0, cfg)
    }

    /// `∫ y f_x`, which should be `-x`.
    pub fn first_moment(&self, cfg: &QuadConfig) -> Result<f64> {
        self.integrate(|y| y, cfg)
    }

    /// `I(μ0) = ¼∫(x+y)^2 f - ∫ log(-y) f + x^2/4 + c2 x/2 - 3/4`.
    pub fn energy(&self, cfg: &QuadConfig) -> Result<f64> {
        let x = self.x;
        let quadratic = self.integrate(|y| 0.25 * (x + y) * (x + y), cfg)?;
        // log(-y) = log(-L) + 2 log sin φ; integrate the singular part in φ directly
        let log_part = self.integrate_log(cfg)?;
        Ok(quadratic - log_part + x * x / 4.0 + self.c2 * x / 2.0 - 0.75)
    }

    fn integrate_log(&self, cfg: &QuadConfig) -> Result<f64> {
        let (l, x, c2) = (self.l, self.x, self.c2);
        let log_neg_l = (-l).ln();
        let integrand = |phi: f64| {
            let (s, c) = phi.sin_cos();
            let y = l * s * s;
            (log_neg_l + 2.0 * s.ln()) * c * c * (2.0 * c2 + l + 2.0 * (x + y))
        };
        Ok(l / (2.0 * PI) * integrate(integrand, 0.0, FRAC_PI_2, cfg)?.value)
    }
}

/// `K(x)` as the spectral rate of the constrained minimizer.
pub fn rate_k_variational(x: f64) -> Result<RateValue> {
    rate_k_variational_with(x, &VariationalConfig::default())
}

pub fn rate_k_variational_with(x: f64, cfg: &VariationalConfig) -> Result<RateValue> {
    if x.is_nan() {
        return domain("K is undefined at NaN");
    }
    if x <= 0.0 {
        return Ok(RateValue::Infinite);
    }
    if x >= 2.0 {
        return Ok(RateValue::Finite(0.0));
    }
    let mu = equilibrium_measure(x)?;
    Ok(RateValue::Finite(mu.energy(&cfg.quad)?.max(0.0)))
}

/// Probability measure with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    atoms: Vec<(f64, f64)>,
}

/// Semicircle distribution function on `[-2, 2]`.
pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        return 0.0;
    }
    if x >= 2.0 {
        return 1.0;
    }
    0.5 + (x * (4.0 - x * x).sqrt() / 2.0 + 2.0 * (x / 2.0).asin()) / (2.0 * PI)
}

/// Semicircle quantile by bisection.
pub fn semicircle_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if semicircle_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return invalid("a measure needs at least one atom");
        }
        if atoms.iter().any(|&(x, w)| !x.is_finite() || !(w > 0.0)) {
            return invalid("atoms need finite locations and positive weights");
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("weights sum to {total}, expected 1"));
        }
        Ok(Self { atoms })
    }

    /// Equal weights on the given points.
    pub fn empirical(points: &[f64]) -> Result<Self> {
        let w = 1.0 / points.len() as f64;
        Self::new(points.iter().map(|&x| (x, w)).collect())
    }

    /// Semicircle discretized at the `n` quantile midpoints `(i + 1/2)/n`.
    pub fn semicircle(n: usize) -> Result<Self> {
        let points: Vec<f64> = (0..n).map(|i| semicircle_quantile((i as f64 + 0.5) / n as f64)).collect();
        Self::empirical(&points)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }
}

/// Spectral rate of a discrete measure with self-energy regularization.
///
/// Each atom is read as mass spread uniformly over its local spacing `b_i`, whose
/// logarithmic self-energy is `w_i^2 (log b_i - 3/2)`:
///
/// ```text
/// ½ Σ w_i x_i^2 - Σ_{i≠j} w_i w_j log|x_i - x_j| - Σ w_i^2 (log b_i - 3/2) - 3/4
/// ```
///
/// Returns `+∞` for a single atom or coincident atoms.
pub fn spectral_rate(mu: &DiscreteMeasure) -> f64 {
    let mut atoms = mu.atoms.clone();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = atoms.len();
    if n < 2 || atoms.windows(2).any(|p| p[0].0 == p[1].0) {
        return f64::INFINITY;
    }
    let x: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    let w: Vec<f64> = atoms.iter().map(|a| a.1).collect();
    let spacing = |i: usize| -> f64 {
        if i == 0 {
            x[1] - x[0]
        } else if i == n - 1 {
            x[n - 1] - x[n - 2]
        } else {
            0.5 * (x[i + 1] - x[i - 1])
        }
    };
    let quadratic: f64 = 0.5 * x.iter().zip(&w).map(|(x, w)| w * x * x).sum::<f64>();
    let mut cross = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in i + 1..n {
            row += w[j] * (x[j] - x[i]).ln();
        }
        cross += 2.0 * w[i] * row;
    }
    let self_energy: f64 = (0..n).map(|i| w[i] * w[i] * (spacing(i).ln() - 1.5)).sum();
    quadratic - cross - self_energy - 0.75
}

/// `S(y)`: the root of `J'(t) = y` on `t <= 2`, for `y <= 0`.
pub fn legendre_s(y: f64) -> Result<f64> {
    legendre_s_with(y, &VariationalConfig::default())
}

pub fn legendre_s_with(y: f64, cfg: &VariationalConfig) -> Result<f64> {
    if !(y <= 0.0) {
        return domain(format!("S(y) is defined for y <= 0, got {y}"));
    }
    if y == 0.0 {
        return Ok(2.0);
    }
    // J' is increasing, J'(min(y,-6) - 1) < y and J'(2) = 0 >= y
    let (mut lo, mut hi) = (y.min(-6.0) - 1.0, 2.0f64);
    let mut t = if y < -6.0 { y + 0.5 } else { 0.5 * (lo + hi) };
    let tol = cfg.root_tol * y.abs().max(1.0);
    for _ in 0..200 {
        let resid = rate_j_prime(t)? - y;
        if resid.abs() <= tol {
            return Ok(t);
        }
        if resid < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let slope = rate_j_second(t)?;
        let newton = t - resid / slope;
        t = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            return Ok(t);
        }
    }
    Err(Error::NumericFailure(format!("S({y}) did not converge")))
}

/// `H_{x,η}(y) = x y - y S(y) + J(S(y)) + η y^2 / 2`.
fn legendre_objective(x: f64, eta: f64, y: f64, cfg: &VariationalConfig) -> Result<f64> {
    let s = legendre_s_with(y, cfg)?;
    Ok(x * y - y * s + rate_j(s).value() + 0.5 * eta * y * y)
}

/// Below this `x`, `K_1` is taken from the closed form.
pub const K_ETA_CLOSED_BELOW: f64 = 1e-3;

/// `K_η(x) = sup_{y <= 0} H_{x,η}(y)`; `K_0 = J` and `K_1 = K`.
pub fn rate_k_eta(x: f64, eta: f64) -> Result<RateValue> {
    rate_k_eta_with(x, eta, &VariationalConfig::default())
}

pub fn rate_k_eta_with(x: f64, eta: f64, cfg: &VariationalConfig) -> Result<RateValue> {
    if !(0.0..=1.0).contains(&eta) {
        return domain(format!("eta must lie in [0, 1], got {eta}"));
    }
    if x.is_nan() {
        return domain("K_eta is undefined at NaN");
    }
    if x >= 2.0 {
        return Ok(RateValue::Finite(0.0));
    }
    if eta == 1.0 && x <= 0.0 {
        return Ok(RateValue::Infinite);
    }
    if eta == 1.0 && x < K_ETA_CLOSED_BELOW {
        // the maximizer sits near y = -1/x, where S(y) - y and the y^2 terms of H
        // cancel beyond f64 precision
        return Ok(rate_k_closed(x));
    }
    // H' = x - S(y) + η y is decreasing with H'(0) = x - 2 < 0.  Using
    // 0 < S(y) - y <= 2, and S(y) - y < -2/(y+1) for y < -6, gives a point with H' > 0.
    let grad = |y: f64| -> Result<f64> { Ok(x - legendre_s_with(y, cfg)? + eta * y) };
    let mut lo = if eta < 1.0 { (x - 2.0) / (1.0 - eta) - 1.0 } else { (-2.0 / x - 1.0).min(-7.0) };
    let mut hi = 0.0f64;
    let mut tries = 0;
    while grad(lo)? <= 0.0 {
        // only reachable through rounding in S; widen and retry
        hi = lo;
        lo *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::NumericFailure(format!("no bracket for K_eta({x}, {eta})")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-13 * mid.abs().max(1.0) {
            break;
        }
        if grad(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y_star = 0.5 * (lo + hi);
    let value = legendre_objective(x, eta, y_star, cfg)?.max(legendre_objective(x, eta, 0.0, cfg)?);
    Ok(RateValue::Finite(value.max(0.0)))
}

/// Gaussian-side rate `G_η(z) = z^2/(2η)` for `z <= 0`, zero otherwise.
pub fn gaussian_rate(z: f64, eta: f64) -> f64 {
    if z <= 0.0 {
        z * z / (2.0 * eta)
    } else {
        0.0
    }
}

/// `|inf_y {K_η(y) + G_η(x - y)} - J(x)|`, the infimum taken over a grid and refined
/// by golden-section search (the objective is convex in `y`).
pub fn inf_convolution_check(x: f64, eta: f64) -> Result<f64> {
    inf_convolution_check_with(x, eta, &VariationalConfig::default())
}

pub fn inf_convolution_check_with(x: f64, eta: f64, cfg: &VariationalConfig) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return domain(format!("inf-convolution check needs 0 < eta <= 1, got {eta}"));
    }
    if !(x <= 2.0) {
        return domain(format!("inf-convolution check needs x <= 2, got {x}"));
    }
    let objective = |y: f64| -> Result<f64> {
        Ok(rate_k_eta_with(y, eta, cfg)?.value() + gaussian_rate(x - y, eta))
    };
    const GRID: usize = 240;
    let (lo, hi) = (x - 0.5, 2.5);
    let step = (hi - lo) / GRID as f64;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..=GRID {
        let v = objective(lo + i as f64 * step)?;
        if v < best.1 {
            best = (i, v);
        }
    }
    let (mut a, mut b) = (lo + (best.0 as f64 - 1.0) * step, lo + (best.0 as f64 + 1.0) * step);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (objective(c)?, objective(d)?);
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = objective(d)?;
        }
    }
    let inf = best.1.min(fc).min(fd);
    Ok((inf - rate_j(x).value()).abs())
}
