//! GUE, traceless GUE and block-ensemble spectra, the joint eigenvalue density
//! and the Brownian cut-point functional.
//!
//! Entry law: diagonal `N(0,1)`, off-diagonal real and imaginary parts `N(0,1/2)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::seeded;
use crate::tableaux::max_over_cuts;
use crate::wordmodel::AlphabetDistribution;

/// Largest dimension accepted by [`log_joint_density`].
pub const DENSITY_MAX_DIM: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Gue,
    Traceless,
    Block,
}

/// Eigenvalues sorted nonincreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub eigenvalues: Vec<f64>,
    pub m: usize,
    pub ensemble: Ensemble,
}

impl SpectrumSample {
    fn from_unsorted(mut eigenvalues: Vec<f64>, ensemble: Ensemble) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self { m: eigenvalues.len(), eigenvalues, ensemble }
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Eigenvalues divided by `sqrt(m)`.
    pub fn scaled(&self) -> Vec<f64> {
        let s = (self.m as f64).sqrt();
        self.eigenvalues.iter().map(|l| l / s).collect()
    }

    /// `seed,m,λ_1,...,λ_r` with `r` clipped to `m`.
    pub fn csv_row(&self, seed: u64, r: usize) -> String {
        let mut row = format!("{seed},{}", self.m);
        for l in self.eigenvalues.iter().take(r) {
            row.push_str(&format!(",{l:.12e}"));
        }
        row
    }
}

/// Eigenvalues of a Hermitian matrix stored densely in row-major order.
///
/// Complex Householder reduction to a tridiagonal matrix whose off-diagonal can be
/// made real by a diagonal unitary, followed by implicit-shift QL.
pub fn hermitian_eigenvalues(a: &[Complex64], m: usize) -> Result<Vec<f64>> {
    if a.len() != m * m {
        return invalid(format!("expected {} entries for a {m}x{m} matrix, got {}", m * m, a.len()));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut a = a.to_vec();
    let mut d = vec![0.0; m];
    let mut e = vec![0.0; m];
    let mut v = vec![Complex64::new(0.0, 0.0); m];
    let mut p = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..m.saturating_sub(2) {
        d[k] = a[k * m + k].re;
        let lo = k + 1;
        let alpha = (lo..m).map(|i| a[i * m + k].norm_sqr()).sum::<f64>().sqrt();
        e[k] = alpha;
        let tail = (lo + 1..m).map(|i| a[i * m + k].norm_sqr()).sum::<f64>();
        if tail == 0.0 {
            // already tridiagonal in this column; the phase of the entry is irrelevant
            continue;
        }
        let x0 = a[lo * m + k];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { Complex64::new(1.0, 0.0) };
        for i in lo..m {
            v[i] = a[i * m + k];
        }
        v[lo] += phase * alpha;
        let vnorm = (lo..m).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
        for vi in &mut v[lo..m] {
            *vi /= vnorm;
        }
        // p = B v, κ = v* p, w = 2p - 2κ v, B <- B - v w* - w v*
        for i in lo..m {
            let row = &a[i * m..i * m + m];
            p[i] = (lo..m).map(|j| row[j] * v[j]).sum();
        }
        let kappa: f64 = (lo..m).map(|i| (v[i].conj() * p[i]).re).sum();
        for i in lo..m {
            p[i] = 2.0 * p[i] - 2.0 * kappa * v[i];
        }
        for i in lo..m {
            for j in lo..m {
                a[i * m + j] -= v[i] * p[j].conj() + p[i] * v[j].conj();
            }
        }
    }
    if m >= 2 {
        d[m - 2] = a[(m - 2) * m + m - 2].re;
        e[m - 2] = a[(m - 1) * m + m - 2].norm();
    }
    d[m - 1] = a[(m - 1) * m + m - 1].re;
    e[m - 1] = 0.0;
    tridiagonal_ql(&mut d, &mut e)?;
    Ok(d)
}

/// Implicit-shift QL on a symmetric tridiagonal matrix; `e[i]` couples `i` and `i+1`.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    let budget = 50 * n.max(1);
    let mut iterations = 0;
    for l in 0..n {
        loop {
            let mut mm = l;
            while mm + 1 < n {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iterations += 1;
            if iterations > budget {
                return Err(Error::NumericFailure(format!(
                    "tridiagonal QL did not converge within {budget} iterations"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[mm] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..mm).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }
    Ok(())
}

/// Dense `m x m` GUE matrix, upper triangle drawn row by row.
pub fn sample_gue_matrix<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<Complex64> {
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = vec![Complex64::new(0.0, 0.0); m * m];
    for i in 0..m {
        a[i * m + i] = Complex64::new(rng.sample(StandardNormal), 0.0);
        for j in i + 1..m {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(re * half, im * half);
            a[i * m + j] = z;
            a[j * m + i] = z.conj();
        }
    }
    a
}

pub fn sample_gue_spectrum_with<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<SpectrumSample> {
    if m == 0 {
        return invalid("GUE dimension must be at least 1");
    }
    let a = sample_gue_matrix(m, rng);
    Ok(SpectrumSample::from_unsorted(hermitian_eigenvalues(&a, m)?, Ensemble::Gue))
}

pub fn sample_gue_spectrum(m: usize, seed: u64) -> Result<SpectrumSample> {
    sample_gue_spectrum_with(m, &mut seeded(seed))
}

/// Spectrum of `X - (tr X / m) I`.
pub fn traceless(s: &SpectrumSample) -> Result<SpectrumSample> {
    if s.ensemble != Ensemble::Gue {
        return invalid(format!("traceless expects a GUE sample, got {:?}", s.ensemble));
    }
    let mean = s.eigenvalues.iter().sum::<f64>() / s.m as f64;
    let eigenvalues = s.eigenvalues.iter().map(|l| l - mean).collect();
    Ok(SpectrumSample { eigenvalues, m: s.m, ensemble: Ensemble::Traceless })
}

fn log_factorial(j: usize) -> f64 {
    (2..=j).map(|i| (i as f64).ln()).sum()
}

/// `log φ_m(ξ)` for the density of the unordered eigenvalues of a GUE matrix
/// scaled by `1/sqrt(m)`.
pub fn log_joint_density(xi: &[f64]) -> Result<f64> {
    let m = xi.len();
    if m == 0 || m > DENSITY_MAX_DIM {
        return invalid(format!("density is available for 1 <= m <= {DENSITY_MAX_DIM}, got {m}"));
    }
    let mf = m as f64;
    let log_z = 0.5 * mf * (2.0 * std::f64::consts::PI).ln() - 0.5 * mf * mf * mf.ln()
        + (1..=m).map(log_factorial).sum::<f64>();
    let mut vandermonde = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let gap = (xi[i] - xi[j]).abs();
            if gap == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            vandermonde += gap.ln();
        }
    }
    let quad: f64 = xi.iter().map(|x| x * x).sum();
    Ok(-log_z - 0.5 * mf * quad + 2.0 * vandermonde)
}

#[derive(Debug, Deserialize)]
struct RawBlockSpec {
    probs: Vec<f64>,
    mults: Vec<usize>,
}

/// Distinct letter probabilities `p(1) > ... > p(l)` with multiplicities `d_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBlockSpec")]
pub struct BlockEnsembleSpec {
    probs: Vec<f64>,
    mults: Vec<usize>,
}

impl TryFrom<RawBlockSpec> for BlockEnsembleSpec {
    type Error = Error;
    fn try_from(raw: RawBlockSpec) -> Result<Self> {
        Self::new(raw.probs, raw.mults)
    }
}

impl BlockEnsembleSpec {
    pub fn new(probs: Vec<f64>, mults: Vec<usize>) -> Result<Self> {
        if probs.is_empty() || probs.len() != mults.len() {
            return invalid("probs and mults must be nonempty and of equal length");
        }
        if mults.contains(&0) {
            return invalid("multiplicities must be positive");
        }
        if probs.iter().any(|p| !(*p > 0.0)) || probs.windows(2).any(|w| !(w[0] > w[1])) {
            return invalid("probabilities must be positive and strictly decreasing");
        }
        let total: f64 = probs.iter().zip(&mults).map(|(p, &d)| p * d as f64).sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("sum of d_i p(i) is {total}, expected 1"));
        }
        Ok(Self { probs, mults })
    }

    /// Groups equal letter probabilities (to `tol`) of a distribution.
    pub fn from_distribution(dist: &AlphabetDistribution, tol: f64) -> Result<Self> {
        let mut sorted = dist.probs().to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut probs: Vec<f64> = Vec::new();
        let mut mults: Vec<usize> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        for p in sorted {
            match probs.last() {
                Some(&q) if (q - p).abs() <= tol => {
                    *mults.last_mut().unwrap() += 1;
                    *sums.last_mut().unwrap() += p;
                }
                _ => {
                    probs.push(p);
                    mults.push(1);
                    sums.push(p);
                }
            }
        }
        // representative value: block mean, so that Σ d_i p(i) stays exact
        let probs = sums.iter().zip(&mults).map(|(s, &d)| s / d as f64).collect();
        Self::new(probs, mults)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mults(&self) -> &[usize] {
        &self.mults
    }

    pub fn m(&self) -> usize {
        self.mults.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSample {
    pub lambda_tilde_1_0: f64,
    /// Spectrum of the modified `d_1 x d_1` block.
    pub block: SpectrumSample,
}

/// Top eigenvalue of the `p_max` block after the modification
/// `X_ii - sqrt(p(i)) Σ_h sqrt(p(h)) X_hh`.
///
/// Off-diagonal entries of the other blocks cannot affect the result, so only
/// their diagonals are drawn.
pub fn sample_block_traceless_with<R: Rng + ?Sized>(spec: &BlockEnsembleSpec, rng: &mut R) -> Result<BlockSample> {
    let d1 = spec.mults[0];
    let sqrt_p1 = spec.probs[0].sqrt();
    let mut block = sample_gue_matrix(d1, rng);
    let mut weighted: f64 = (0..d1).map(|i| sqrt_p1 * block[i * d1 + i].re).sum();
    for (&p, &d) in spec.probs.iter().zip(&spec.mults).skip(1) {
        let sp = p.sqrt();
        for _ in 0..d {
            let x: f64 = rng.sample(StandardNormal);
            weighted += sp * x;
        }
    }
    for i in 0..d1 {
        block[i * d1 + i].re -= sqrt_p1 * weighted;
    }
    let block = SpectrumSample::from_unsorted(hermitian_eigenvalues(&block, d1)?, Ensemble::Block);
    Ok(BlockSample { lambda_tilde_1_0: block.largest(), block })
}

pub fn sample_block_traceless(spec: &BlockEnsembleSpec, seed: u64) -> Result<BlockSample> {
    sample_block_traceless_with(spec, &mut seeded(seed))
}

/// Default number of grid steps for the Brownian functional.
pub const DEFAULT_BROWNIAN_STEPS: usize = 4096;

/// Grid sampler for `sup Σ_r (B^r_{t_r} - B^r_{t_{r-1}})` over `0 = t_0 <= ... <= t_k = 1`
/// with equicorrelated coordinates.
#[derive(Debug, Clone)]
pub struct BrownianSampler {
    k: usize,
    steps: usize,
    chol: Vec<f64>,
}

/// Lower Cholesky factor of a positive semidefinite matrix; zero pivots are allowed
/// when the rest of their column vanishes.
fn semidefinite_cholesky(c: &[f64], k: usize) -> Result<Vec<f64>> {
    let tol = 1e-12;
    let mut l = vec![0.0; k * k];
    for j in 0..k {
        let diag = c[j * k + j] - (0..j).map(|h| l[j * k + h] * l[j * k + h]).sum::<f64>();
        if diag < -tol {
            return invalid("correlation matrix is not positive semidefinite");
        }
        let pivot = diag.max(0.0).sqrt();
        l[j * k + j] = pivot;
        for i in j + 1..k {
            let rest = c[i * k + j] - (0..j).map(|h| l[i * k + h] * l[j * k + h]).sum::<f64>();
            if pivot <= tol.sqrt() {
                if rest.abs() > 1e-8 {
                    return invalid("correlation matrix is not positive semidefinite");
                }
                l[i * k + j] = 0.0;
            } else {
                l[i * k + j] = rest / pivot;
            }
        }
    }
    Ok(l)
}

impl BrownianSampler {
    pub fn new(k: usize, steps: usize, rho: f64) -> Result<Self> {
        if k == 0 {
            return invalid("k must be at least 1");
        }
        if steps < k {
            return invalid(format!("need at least k = {k} grid steps, got {steps}"));
        }
        if !rho.is_finite() || rho > 1.0 {
            return invalid(format!("correlation {rho} out of range"));
        }
        let mut c = vec![rho; k * k];
        for i in 0..k {
            c[i * k + i] = 1.0;
        }
        let chol = semidefinite_cholesky(&c, k)?;
        Ok(Self { k, steps, chol })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (k, n) = (self.k, self.steps);
        let scale = 1.0 / (n as f64).sqrt();
        let mut paths = vec![vec![0.0; n + 1]; k];
        let mut z = vec![0.0; k];
        for t in 0..n {
            for zi in &mut z {
                *zi = rng.sample(StandardNormal);
            }
            for r in 0..k {
                let row = &self.chol[r * k..r * k + r + 1];
                let inc: f64 = row.iter().zip(&z).map(|(l, z)| l * z).sum();
                paths[r][t + 1] = paths[r][t] + inc * scale;
            }
        }
        let refs: Vec<&[f64]> = paths.iter().map(Vec::as_slice).collect();
        max_over_cuts(&refs)
    }
}

pub fn brownian_functional_sample(k: usize, steps: usize, rho: f64, seed: u64) -> Result<f64> {
    Ok(BrownianSampler::new(k, steps, rho)?.sample(&mut seeded(seed)))
}

/// The cut-point sup applied to explicit per-coordinate increments.
pub fn functional_of_increments(increments: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = increments.first() else {
        return invalid("at least one coordinate is required");
    };
    if increments.iter().any(|row| row.len() != first.len()) {
        return invalid("all coordinates need the same number of increments");
    }
    let paths: Vec<Vec<f64>> = increments
        .iter()
        .map(|row| {
            std::iter::once(0.0)
                .chain(row.iter().scan(0.0, |acc, x| {
                    *acc += x;
                    Some(*acc)
                }))
                .collect()
        })
        .collect();
    let refs: Vec<&[f64]> = paths.iter().map(Vec::as_slice).collect();
    Ok(max_over_cuts(&refs))
}
