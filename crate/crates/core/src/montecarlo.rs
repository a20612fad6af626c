//! Direct Monte Carlo estimates of row and eigenvalue tails, distributional
//! identity tests and concentration fits.
//!
//! Replication `i` of grid point `g` always draws from `substream(seed, g, i)`
//! and reductions are index-ordered, so results do not depend on the number of
//! worker threads.

use std::fmt::Write as _;

use log::{info, warn};
use rand_distr::StandardNormal;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rate_functions::{rate_i_r, rate_k_closed, RateValue};
use crate::rmt::{
    sample_block_traceless_with, sample_gue_spectrum_with, traceless, BlockEnsembleSpec, BrownianSampler,
};
use crate::rng::{substream, SimRng};
use crate::stats::{ks_test, KsOutcome};
use crate::tableaux::{FirstRow, RskInserter, SmallFirstRow};
use crate::variational::rate_k_eta;
use crate::wordmodel::{AlphabetDistribution, LetterSampler};

/// Schema tag written as the first line of every CSV table.
pub const CSV_SCHEMA: &str = "# rskld-ldp-table v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

/// Normalizing speed of an LDP: the grid size or its square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speed {
    M,
    M2,
    K,
    K2,
}

impl Speed {
    pub fn value(self, size: usize) -> f64 {
        let s = size as f64;
        match self {
            Speed::M | Speed::K => s,
            Speed::M2 | Speed::K2 => s * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub hits: u64,
    pub reps: u64,
    pub speed: Speed,
    pub speed_value: f64,
    /// `-log(p_hat) / speed`, infinite when there were no hits.
    pub rate_estimate: RateValue,
}

impl TailEstimate {
    pub fn from_hits(hits: u64, reps: u64, speed: Speed, speed_value: f64) -> Self {
        let p_hat = hits as f64 / reps as f64;
        let stderr = (p_hat * (1.0 - p_hat) / reps as f64).sqrt();
        let rate_estimate =
            if hits == 0 { RateValue::Infinite } else { RateValue::Finite((-p_hat.ln() / speed_value).max(0.0)) };
        Self { p_hat, stderr, hits, reps, speed, speed_value, rate_estimate }
    }
}

/// Letter law of a word experiment; the grid size is `m` for the uniform law and
/// `k` for the top-block law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    #[default]
    Uniform,
    /// `k` letters of probability `p_max` and `tail` letters sharing the rest.
    TopBlock { p_max: f64, tail: usize },
}

impl ModelSpec {
    pub fn distribution(&self, size: usize) -> Result<AlphabetDistribution> {
        match self {
            ModelSpec::Uniform => AlphabetDistribution::uniform(size),
            ModelSpec::TopBlock { p_max, tail } => AlphabetDistribution::with_top_block(size, *p_max, *tail),
        }
    }

    fn default_speed(&self, side: Side) -> Speed {
        match (self, side) {
            (ModelSpec::Uniform, Side::Upper) => Speed::M,
            (ModelSpec::Uniform, Side::Lower) => Speed::M2,
            (ModelSpec::TopBlock { .. }, Side::Upper) => Speed::K,
            (ModelSpec::TopBlock { .. }, Side::Lower) => Speed::K2,
        }
    }
}

/// What is sampled: RSK rows of random words or the traceless GUE spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Words,
    TracelessGue,
}

/// A scalar threshold tests the first row; a vector `x` tests the joint event on
/// the first `len(x)` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Scalar(f64),
    Joint(Vec<f64>),
}

impl Threshold {
    pub fn values(&self) -> &[f64] {
        match self {
            Threshold::Scalar(x) => std::slice::from_ref(x),
            Threshold::Joint(xs) => xs,
        }
    }

    pub fn label(&self) -> String {
        self.values().iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub source: Source,
    #[serde(default)]
    pub model: ModelSpec,
    /// Word length; ignored for spectra.
    #[serde(default)]
    pub n: usize,
    /// `m` (uniform words, spectra) or `k` (top-block words).
    pub sizes: Vec<usize>,
    pub thresholds: Vec<Threshold>,
    pub side: Side,
    pub reps: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<Speed>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return invalid("reps must be at least 1");
        }
        if self.sizes.contains(&0) {
            return invalid("grid sizes must be positive");
        }
        for t in &self.thresholds {
            if t.values().is_empty() || t.values().iter().any(|x| !x.is_finite()) {
                return invalid("thresholds must be finite and nonempty");
            }
            if self.side == Side::Lower && t.values().len() != 1 {
                return invalid("lower-tail thresholds must be scalars");
            }
        }
        match self.source {
            Source::Words if self.n == 0 => return invalid("word experiments need n >= 1"),
            Source::TracelessGue if self.model != ModelSpec::Uniform => {
                return invalid("spectral experiments take the uniform model")
            }
            _ => {}
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return invalid("workers must be at least 1");
            }
        }
        for &size in &self.sizes {
            if self.source == Source::Words {
                self.model.distribution(size)?;
            }
            let rows = self.rows_needed();
            let available = match (self.source, &self.model) {
                (Source::Words, ModelSpec::TopBlock { tail, .. }) => size + tail,
                _ => size,
            };
            if rows > available {
                return invalid(format!("joint threshold on {rows} rows exceeds alphabet size {available}"));
            }
        }
        Ok(())
    }

    pub fn speed(&self) -> Speed {
        self.speed.unwrap_or_else(|| self.model.default_speed(self.side))
    }

    fn rows_needed(&self) -> usize {
        self.thresholds.iter().map(|t| t.values().len()).max().unwrap_or(1)
    }
}

/// Runs `job` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Index-ordered results of `reps` independent replications.
fn replicate<T, F>(reps: u64, seed: u64, stream: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut SimRng) -> Result<T> + Sync,
{
    (0..reps).into_par_iter().map(|i| f(&mut substream(seed, stream, i))).collect()
}

/// Hypothesis checks for top-block word experiments: `k^3/p_max <= n/10` and
/// `n p_2nd^2 / p_max <= exp(-k)`.
pub fn hypothesis_warnings(dist: &AlphabetDistribution, n: usize) -> Vec<String> {
    let stats = dist.multiplicity_stats();
    let mut out = Vec::new();
    let (k, nf) = (stats.k as f64, n as f64);
    if k.powi(3) / stats.p_max > nf / 10.0 {
        out.push(format!("k^3/p_max = {:.3e} exceeds n/10 = {:.3e}", k.powi(3) / stats.p_max, nf / 10.0));
    }
    if let Some(p2) = stats.p_2nd {
        let lhs = nf * p2 * p2 / stats.p_max;
        if lhs > (-k).exp() {
            out.push(format!("n p_2nd^2 / p_max = {lhs:.3e} exceeds exp(-k) = {:.3e}", (-k).exp()));
        }
    }
    out
}

/// First `r` normalized rows `(R_i - n p_max) / sqrt(n k p_max)` of one random word.
fn word_rows(sampler: &LetterSampler, m: usize, n: usize, r: usize, p_max: f64, k: usize, rng: &mut SimRng) -> Vec<f64> {
    let mean = n as f64 * p_max;
    let scale = (n as f64 * k as f64 * p_max).sqrt();
    if r == 1 && m <= 64 {
        let mut row = SmallFirstRow::default();
        let mut buf = [0u32; 4096];
        let mut left = n;
        while left > 0 {
            let chunk = left.min(buf.len());
            sampler.fill(rng, &mut buf[..chunk]);
            for &l in &buf[..chunk] {
                row.push(l);
            }
            left -= chunk;
        }
        vec![(row.len() as f64 - mean) / scale]
    } else if r == 1 {
        let mut row = FirstRow::new(m);
        for _ in 0..n {
            row.push(sampler.sample(rng));
        }
        vec![(row.len() as f64 - mean) / scale]
    } else {
        let mut rsk = RskInserter::new(m);
        for _ in 0..n {
            rsk.insert(sampler.sample(rng));
        }
        (1..=r).map(|i| (rsk.row_len(i) as f64 - mean) / scale).collect()
    }
}

/// Replications handled together by [`first_rows_interleaved`].
const LANES: usize = 8;

/// First-row lengths of `rngs.len()` independent words, advanced in lockstep so
/// the per-letter dependency chains of different words overlap. Each word sees
/// exactly the letters [`word_rows`] would draw from the same generator.
fn first_rows_interleaved(sampler: &LetterSampler, n: usize, rngs: &mut [SimRng]) -> Vec<usize> {
    const BLOCK: usize = 4096;
    let lanes = rngs.len();
    let mut rows = vec![SmallFirstRow::default(); lanes];
    let mut bufs = vec![[0u32; BLOCK]; lanes];
    let mut left = n;
    while left > 0 {
        let chunk = left.min(BLOCK);
        for (rng, buf) in rngs.iter_mut().zip(bufs.iter_mut()) {
            sampler.fill(rng, &mut buf[..chunk]);
        }
        if lanes == LANES {
            let rows: &mut [SmallFirstRow; LANES] = (&mut rows[..]).try_into().expect("full lane set");
            for t in 0..chunk {
                for w in 0..LANES {
                    rows[w].push(bufs[w][t]);
                }
            }
        } else {
            for (row, buf) in rows.iter_mut().zip(&bufs) {
                for &l in &buf[..chunk] {
                    row.push(l);
                }
            }
        }
        left -= chunk;
    }
    rows.iter().map(SmallFirstRow::len).collect()
}

/// Normalized first rows of `reps` words, replication `i` drawn from `substream(seed, stream, i)`.
fn first_rows_batch(
    sampler: &LetterSampler,
    n: usize,
    p_max: f64,
    k: usize,
    reps: u64,
    seed: u64,
    stream: u64,
) -> Vec<f64> {
    let mean = n as f64 * p_max;
    let scale = (n as f64 * k as f64 * p_max).sqrt();
    let starts: Vec<u64> = (0..reps).step_by(LANES).collect();
    let chunks: Vec<Vec<f64>> = starts
        .into_par_iter()
        .map(|start| {
            let mut rngs: Vec<SimRng> =
                (start..(start + LANES as u64).min(reps)).map(|i| substream(seed, stream, i)).collect();
            first_rows_interleaved(sampler, n, &mut rngs)
                .into_iter()
                .map(|len| (len as f64 - mean) / scale)
                .collect()
        })
        .collect();
    chunks.concat()
}

/// First `r` eigenvalues of a traceless GUE matrix divided by `sqrt(m)`.
fn spectrum_rows(m: usize, r: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
    let s = traceless(&sample_gue_spectrum_with(m, rng)?)?;
    let mut xi = s.scaled();
    xi.truncate(r);
    Ok(xi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub size: usize,
    pub n: usize,
    pub threshold: Threshold,
    pub side: Side,
    pub estimate: TailEstimate,
    /// Tail of the first row alone, reported for joint thresholds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_row_p_hat: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn hit(values: &[f64], threshold: &[f64], side: Side) -> bool {
    match side {
        Side::Upper => threshold.iter().zip(values).all(|(x, v)| v >= x),
        Side::Lower => values[0] <= threshold[0],
    }
}

/// Tail estimates for every `(size, threshold)` pair of the grid. All thresholds
/// at one size share the same sample.
pub fn estimate_tails(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    cfg.validate()?;
    info!("tail experiment: {}", serde_json::to_string(cfg)?);
    let speed = cfg.speed();
    let r = cfg.rows_needed();
    let mut points = Vec::new();
    for (g, &size) in cfg.sizes.iter().enumerate() {
        let (samples, warnings) = match cfg.source {
            Source::Words => {
                let dist = cfg.model.distribution(size)?;
                let stats = dist.multiplicity_stats();
                let warnings =
                    if matches!(cfg.model, ModelSpec::TopBlock { .. }) { hypothesis_warnings(&dist, cfg.n) } else { Vec::new() };
                for w in &warnings {
                    warn!("size {size}: {w}");
                }
                let sampler = LetterSampler::new(&dist);
                let (m, n) = (dist.m(), cfg.n);
                let samples = if r == 1 && m <= 64 {
                    with_workers(cfg.workers, || {
                        first_rows_batch(&sampler, n, stats.p_max, stats.k, cfg.reps, cfg.seed, g as u64)
                            .into_iter()
                            .map(|x| vec![x])
                            .collect()
                    })?
                } else {
                    with_workers(cfg.workers, || {
                        replicate(cfg.reps, cfg.seed, g as u64, |rng| {
                            Ok(word_rows(&sampler, m, n, r, stats.p_max, stats.k, rng))
                        })
                    })??
                };
                (samples, warnings)
            }
            Source::TracelessGue => {
                let samples =
                    with_workers(cfg.workers, || replicate(cfg.reps, cfg.seed, g as u64, |rng| spectrum_rows(size, r, rng)))??;
                (samples, Vec::new())
            }
        };
        let mut size_points: Vec<GridPoint> = Vec::new();
        for t in &cfg.thresholds {
            let x = t.values();
            let hits = samples.iter().filter(|v| hit(v, x, cfg.side)).count() as u64;
            let first_row_p_hat = (x.len() > 1).then(|| {
                samples.iter().filter(|v| hit(&v[..1], &x[..1], cfg.side)).count() as f64 / cfg.reps as f64
            });
            let estimate = TailEstimate::from_hits(hits, cfg.reps, speed, speed.value(size));
            if let Some(p1) = first_row_p_hat {
                if estimate.p_hat > p1 {
                    return Err(Error::NumericFailure(format!("joint tail {} exceeds first-row tail {p1}", estimate.p_hat)));
                }
            }
            size_points.push(GridPoint {
                size,
                n: if cfg.source == Source::Words { cfg.n } else { 0 },
                threshold: t.clone(),
                side: cfg.side,
                estimate,
                first_row_p_hat,
                warnings: warnings.clone(),
            });
        }
        check_nesting(&size_points)?;
        points.extend(size_points);
    }
    Ok(points)
}

/// Scalar tails on one sample must be monotone in the threshold.
fn check_nesting(points: &[GridPoint]) -> Result<()> {
    let mut scalar: Vec<(f64, f64, Side)> = points
        .iter()
        .filter_map(|p| match p.threshold {
            Threshold::Scalar(x) => Some((x, p.estimate.p_hat, p.side)),
            Threshold::Joint(_) => None,
        })
        .collect();
    scalar.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in scalar.windows(2) {
        let ok = match w[0].2 {
            Side::Upper => w[1].1 <= w[0].1,
            Side::Lower => w[1].1 >= w[0].1,
        };
        if !ok {
            return Err(Error::NumericFailure(format!("tail estimates not monotone between x = {} and {}", w[0].0, w[1].0)));
        }
    }
    Ok(())
}

/// Word-row tails; the configuration must use the word source.
pub fn estimate_row_tail(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    if cfg.source != Source::Words {
        return invalid("estimate_row_tail samples words");
    }
    estimate_tails(cfg)
}

/// Tail of `ξ_1 = λ_1^0 / sqrt(m)` for the traceless GUE, at speed `m` (upper) or `m^2` (lower).
pub fn estimate_eigen_tail(m: usize, x: f64, side: Side, reps: u64, seed: u64) -> Result<TailEstimate> {
    let cfg = ExperimentConfig {
        source: Source::TracelessGue,
        model: ModelSpec::Uniform,
        n: 0,
        sizes: vec![m],
        thresholds: vec![Threshold::Scalar(x)],
        side,
        reps,
        seed,
        workers: None,
        speed: None,
    };
    Ok(estimate_tails(&cfg)?[0].estimate)
}

/// The rate function matching a grid point of an experiment.
pub fn reference_rate(cfg: &ExperimentConfig, point: &GridPoint) -> Result<RateValue> {
    let x = point.threshold.values();
    match (cfg.side, &cfg.model) {
        (Side::Upper, _) => Ok(rate_i_r(x)),
        (Side::Lower, ModelSpec::Uniform) => Ok(rate_k_closed(x[0])),
        (Side::Lower, ModelSpec::TopBlock { p_max, .. }) => {
            let eta = (point.size as f64 * p_max).min(1.0);
            rate_k_eta(x[0], eta)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpRow {
    pub point: GridPoint,
    pub rate_function_value: RateValue,
    /// `rate_estimate / rate_function_value`; `None` when either side is infinite or zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpTable {
    pub config: ExperimentConfig,
    pub rows: Vec<LdpRow>,
}

pub const CSV_COLUMNS: &str =
    "source,model,size,n,threshold,side,speed,speed_value,reps,hits,p_hat,stderr,rate_estimate,rate_function_value,ratio";

fn fmt_rate(v: RateValue) -> String {
    match v {
        RateValue::Finite(x) => format!("{x:e}"),
        RateValue::Infinite => "inf".into(),
    }
}

impl LdpTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_SCHEMA}\n{CSV_COLUMNS}\n");
        let source = serde_json::to_value(self.config.source).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default();
        let model = match self.config.model {
            ModelSpec::Uniform => "uniform".to_string(),
            ModelSpec::TopBlock { p_max, tail } => format!("top_block(p_max={p_max};tail={tail})"),
        };
        for row in &self.rows {
            let p = &row.point;
            let e = &p.estimate;
            let speed = serde_json::to_value(e.speed).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default();
            let side = if p.side == Side::Upper { "upper" } else { "lower" };
            let ratio = row.ratio.map_or_else(|| "nan".to_string(), |r| format!("{r:e}"));
            let _ = writeln!(
                out,
                "{source},{model},{},{},{},{side},{speed},{},{},{},{:e},{:e},{},{},{ratio}",
                p.size,
                p.n,
                p.threshold.label(),
                e.speed_value,
                e.reps,
                e.hits,
                e.p_hat,
                e.stderr,
                fmt_rate(e.rate_estimate),
                fmt_rate(row.rate_function_value),
            );
        }
        out
    }
}

/// Tail estimates joined with the matching rate function.
pub fn ldp_slope_experiment(cfg: &ExperimentConfig) -> Result<LdpTable> {
    let points = estimate_tails(cfg)?;
    let rows = points
        .into_iter()
        .map(|point| {
            let rate_function_value = reference_rate(cfg, &point)?;
            let ratio = match (point.estimate.rate_estimate, rate_function_value) {
                (RateValue::Finite(est), RateValue::Finite(rf)) if rf > 0.0 => Some(est / rf),
                _ => None,
            };
            Ok(LdpRow { point, rate_function_value, ratio })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LdpTable { config: cfg.clone(), rows })
}

/// Scalar samplers compared by [`identity_ks_test`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "snake_case")]
pub enum ScalarSampler {
    /// Largest eigenvalue of an `m x m` GUE matrix.
    GueTop { m: usize },
    /// Largest eigenvalue of an `m x m` traceless GUE matrix.
    TracelessTop { m: usize },
    /// `λ̃_1^0 + sqrt(p_max) g` for the generalized traceless ensemble.
    BlockPlusGaussian { block: BlockEnsembleSpec },
    /// Grid approximation of the equicorrelated Brownian cut-point functional.
    Brownian { k: usize, steps: usize, rho: f64 },
}

enum Prepared<'a> {
    GueTop(usize),
    TracelessTop(usize),
    Block(&'a BlockEnsembleSpec),
    Brownian(BrownianSampler),
}

impl ScalarSampler {
    fn prepare(&self) -> Result<Prepared<'_>> {
        Ok(match self {
            ScalarSampler::GueTop { m } if *m >= 1 => Prepared::GueTop(*m),
            ScalarSampler::TracelessTop { m } if *m >= 1 => Prepared::TracelessTop(*m),
            ScalarSampler::GueTop { .. } | ScalarSampler::TracelessTop { .. } => {
                return invalid("matrix dimension must be at least 1")
            }
            ScalarSampler::BlockPlusGaussian { block } => Prepared::Block(block),
            ScalarSampler::Brownian { k, steps, rho } => Prepared::Brownian(BrownianSampler::new(*k, *steps, *rho)?),
        })
    }
}

impl Prepared<'_> {
    fn draw(&self, rng: &mut SimRng) -> Result<f64> {
        match self {
            Prepared::GueTop(m) => Ok(sample_gue_spectrum_with(*m, rng)?.largest()),
            Prepared::TracelessTop(m) => Ok(traceless(&sample_gue_spectrum_with(*m, rng)?)?.largest()),
            Prepared::Block(spec) => {
                let lambda = sample_block_traceless_with(spec, rng)?.lambda_tilde_1_0;
                let g: f64 = rng.sample(StandardNormal);
                Ok(lambda + spec.probs()[0].sqrt() * g)
            }
            Prepared::Brownian(s) => Ok(s.sample(rng)),
        }
    }
}

/// Draws `reps` values of `sampler` from stream `stream` under `seed`.
pub fn sample_scalars(sampler: &ScalarSampler, reps: u64, seed: u64, stream: u64) -> Result<Vec<f64>> {
    let prepared = sampler.prepare()?;
    replicate(reps, seed, stream, |rng| prepared.draw(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsOptions {
    pub alpha: f64,
    /// Fixed acceptance threshold on the statistic, replacing the `alpha` critical value.
    pub threshold: Option<f64>,
    pub workers: Option<usize>,
}

impl Default for KsOptions {
    fn default() -> Self {
        Self { alpha: 1e-3, threshold: None, workers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub a: ScalarSampler,
    pub b: ScalarSampler,
    pub reps: u64,
    pub seed: u64,
    pub ks: KsOutcome,
}

/// Two-sample KS test of equality in law; `a` and `b` use independent streams.
pub fn identity_ks_test(
    a: &ScalarSampler,
    b: &ScalarSampler,
    reps: u64,
    seed: u64,
    opts: &KsOptions,
) -> Result<IdentityReport> {
    if reps < 100 {
        return invalid(format!("identity tests need at least 100 reps, got {reps}"));
    }
    let (xa, xb) = with_workers(opts.workers, || -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((sample_scalars(a, reps, seed, 0)?, sample_scalars(b, reps, seed, 1)?))
    })??;
    let ks = ks_test(&xa, &xb, opts.alpha, opts.threshold)?;
    info!("KS {:?} vs {:?}: D = {:.5}, threshold {:.5}", a, b, ks.statistic, ks.threshold);
    Ok(IdentityReport { a: a.clone(), b: b.clone(), reps, seed, ks })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub n: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    #[serde(default)]
    pub model: ModelSpec,
    pub grid: Vec<SizePoint>,
    /// Deviations `ε` for both tails unless a side-specific list is given.
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub eps_upper: Option<Vec<f64>>,
    #[serde(default)]
    pub eps_lower: Option<Vec<f64>>,
    pub reps: u64,
    pub seed: u64,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_safety() -> f64 {
    10.0
}

impl ConcentrationConfig {
    fn eps_for(&self, side: Side) -> &[f64] {
        match side {
            Side::Upper => self.eps_upper.as_deref().unwrap_or(&self.eps),
            Side::Lower => self.eps_lower.as_deref().unwrap_or(&self.eps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationPoint {
    pub n: usize,
    pub size: usize,
    pub eps: f64,
    /// `size ε^{3/2}` (upper) or `size^2 ε^3` (lower).
    pub t: f64,
    pub hits: u64,
    pub p_hat: f64,
    /// Points with `size = 1` are reported but left out of the fit.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub intercept: f64,
    /// `ĉ` in `log p̂ ≈ intercept - ĉ t`.
    pub c_hat: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideReport {
    pub side: Side,
    pub points: Vec<ConcentrationPoint>,
    /// `None` when fewer than three nonzero tails (or one distinct `t`) are available.
    pub fit: Option<DecayFit>,
    pub insufficient_data: bool,
    pub envelope_ok: bool,
    /// `p̂` nonincreasing in `t` along the fitted points.
    pub monotone: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub upper: SideReport,
    pub lower: SideReport,
    pub pass: bool,
}

/// Least squares of `y` on `t` with a free intercept: `(intercept, slope)`.
fn least_squares(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = t.len() as f64;
    let (mt, my) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let stt: f64 = t.iter().map(|t| (t - mt) * (t - mt)).sum();
    if stt <= 0.0 {
        return None;
    }
    let sty: f64 = t.iter().zip(y).map(|(t, y)| (t - mt) * (y - my)).sum();
    let slope = sty / stt;
    Some((my - slope * mt, slope))
}

fn side_report(side: Side, points: Vec<ConcentrationPoint>, safety: f64) -> SideReport {
    let usable: Vec<&ConcentrationPoint> = points.iter().filter(|p| !p.degenerate && p.hits > 0).collect();
    let t: Vec<f64> = usable.iter().map(|p| p.t).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.p_hat.ln()).collect();
    let fit = if usable.len() >= 3 {
        least_squares(&t, &y).map(|(intercept, slope)| DecayFit { intercept, c_hat: -slope, points: usable.len() })
    } else {
        None
    };
    let envelope_ok = fit.is_some_and(|f| {
        points.iter().filter(|p| !p.degenerate).all(|p| p.p_hat <= safety * (f.intercept - f.c_hat * p.t).exp())
    });
    let mut ordered: Vec<&ConcentrationPoint> = points.iter().filter(|p| !p.degenerate).collect();
    ordered.sort_by(|a, b| a.t.total_cmp(&b.t));
    let monotone = ordered.windows(2).all(|w| w[1].p_hat <= w[0].p_hat);
    let pass = fit.is_some_and(|f| f.c_hat > 0.0) && envelope_ok;
    SideReport { side, points, insufficient_data: fit.is_none(), fit, envelope_ok, monotone, pass }
}

/// Upper tails `P(ξ >= 2 + ε)` and lower tails `P(ξ <= 2 - ε)` of the normalized first
/// row over a grid, with log-linear decay fits in `size ε^{3/2}` and `size^2 ε^3`.
pub fn concentration_check(cfg: &ConcentrationConfig) -> Result<ConcentrationReport> {
    if cfg.reps == 0 {
        return invalid("reps must be at least 1");
    }
    for side in [Side::Upper, Side::Lower] {
        if cfg.eps_for(side).iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return invalid("eps must lie in (0, 1)");
        }
    }
    info!("concentration check: {}", serde_json::to_string(cfg)?);
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (g, pt) in cfg.grid.iter().enumerate() {
        if pt.n == 0 || pt.size == 0 {
            return invalid("grid points need n >= 1 and size >= 1");
        }
        let dist = cfg.model.distribution(pt.size)?;
        let stats = dist.multiplicity_stats();
        let sampler = LetterSampler::new(&dist);
        let m = dist.m();
        let xi: Vec<f64> = if m <= 64 {
            with_workers(cfg.workers, || first_rows_batch(&sampler, pt.n, stats.p_max, stats.k, cfg.reps, cfg.seed, g as u64))?
        } else {
            with_workers(cfg.workers, || {
                replicate(cfg.reps, cfg.seed, g as u64, |rng| Ok(word_rows(&sampler, m, pt.n, 1, stats.p_max, stats.k, rng)[0]))
            })??
        };
        let degenerate = pt.size == 1;
        let s = pt.size as f64;
        for &eps in cfg.eps_for(Side::Upper) {
            let hits = xi.iter().filter(|&&v| v >= 2.0 + eps).count() as u64;
            upper.push(ConcentrationPoint {
                n: pt.n,
                size: pt.size,
                eps,
                t: s * eps.powf(1.5),
                hits,
                p_hat: hits as f64 / cfg.reps as f64,
                degenerate,
            });
        }
        for &eps in cfg.eps_for(Side::Lower) {
            let hits = xi.iter().filter(|&&v| v <= 2.0 - eps).count() as u64;
            lower.push(ConcentrationPoint {
                n: pt.n,
                size: pt.size,
                eps,
                t: s * s * eps.powi(3),
                hits,
                p_hat: hits as f64 / cfg.reps as f64,
                degenerate,
            });
        }
    }
    let upper = side_report(Side::Upper, upper, cfg.safety_factor);
    let lower = side_report(Side::Lower, lower, cfg.safety_factor);
    let pass = upper.pass && lower.pass;
    Ok(ConcentrationReport { upper, lower, pass })
}
