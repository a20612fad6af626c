//! Alphabet model, random words and letter counts.
//!
//! Letters are 0-based indices; the alphabet order is the index order.

use rand::RngCore;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Probabilities closer than this are treated as tied when computing the
/// multiplicity of the largest probability.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-12;

const SUM_TOLERANCE: f64 = 1e-12;

/// Letter probabilities `p_1, ..., p_m`, ordered by letter index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct AlphabetDistribution {
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDistribution {
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for AlphabetDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        AlphabetDistribution::new(raw.probs)
    }
}

/// Quantities derived from the largest letter probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplicityStats {
    pub p_max: f64,
    /// Largest probability strictly below `p_max`; `None` when all letters tie.
    pub p_2nd: Option<f64>,
    /// Letters attaining `p_max`.
    pub argmax: Vec<usize>,
    /// Multiplicity of `p_max`.
    pub k: usize,
    /// `k * p_max`, in `(0, 1]`.
    pub eta_hat: f64,
}

impl AlphabetDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("alphabet must contain at least one letter");
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return invalid(format!("letter probabilities must be positive, got {p}"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return invalid(format!("letter probabilities sum to {total}, expected 1"));
        }
        Ok(Self { probs })
    }

    /// The uniform law on `m` letters.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return invalid("alphabet size must be at least 1");
        }
        Ok(Self { probs: vec![1.0 / m as f64; m] })
    }

    /// `k` letters of probability `p_max` followed by `tail` letters sharing
    /// the remaining mass equally.
    pub fn with_top_block(k: usize, p_max: f64, tail: usize) -> Result<Self> {
        if k == 0 {
            return invalid("top block must contain at least one letter");
        }
        let rest = 1.0 - k as f64 * p_max;
        if tail == 0 {
            if rest.abs() > SUM_TOLERANCE {
                return invalid("without tail letters k * p_max must equal 1");
            }
            return Self::uniform(k);
        }
        if rest <= 0.0 {
            return invalid(format!("k * p_max = {} leaves no mass for tail letters", k as f64 * p_max));
        }
        let p_tail = rest / tail as f64;
        if p_tail >= p_max {
            return invalid(format!("tail probability {p_tail} is not below p_max {p_max}"));
        }
        let mut probs = vec![p_max; k];
        probs.extend(std::iter::repeat_n(p_tail, tail));
        // absorb rounding so the sum check is exact to 1e-12
        let total: f64 = probs.iter().sum();
        *probs.last_mut().unwrap() += 1.0 - total;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Alphabet size.
    pub fn m(&self) -> usize {
        self.probs.len()
    }

    pub fn is_uniform(&self) -> bool {
        let first = self.probs[0];
        self.probs.iter().all(|p| (p - first).abs() <= DEFAULT_TIE_TOLERANCE)
    }

    pub fn multiplicity_stats(&self) -> MultiplicityStats {
        self.multiplicity_stats_with(DEFAULT_TIE_TOLERANCE)
    }

    pub fn multiplicity_stats_with(&self, tie_tolerance: f64) -> MultiplicityStats {
        let p_max = self.probs.iter().copied().fold(f64::MIN, f64::max);
        let argmax: Vec<usize> = self
            .probs
            .iter()
            .enumerate()
            .filter(|(_, p)| p_max - **p <= tie_tolerance)
            .map(|(j, _)| j)
            .collect();
        let p_2nd = self
            .probs
            .iter()
            .copied()
            .filter(|p| p_max - p > tie_tolerance)
            .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))));
        let k = argmax.len();
        MultiplicityStats { p_max, p_2nd, argmax, k, eta_hat: k as f64 * p_max }
    }
}

/// A word over the alphabet `{0, ..., m-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    letters: Vec<u32>,
    m: usize,
}

impl Word {
    pub fn new(letters: Vec<u32>, m: usize) -> Result<Self> {
        if let Some(&bad) = letters.iter().find(|&&l| l as usize >= m) {
            return invalid(format!("letter {bad} outside alphabet of size {m}"));
        }
        Ok(Self { letters, m })
    }

    /// Parses lowercase ASCII letters, `a` being letter 0.
    pub fn from_ascii(s: &str, m: usize) -> Result<Self> {
        let letters = s
            .bytes()
            .map(|b| {
                if b.is_ascii_lowercase() {
                    Ok((b - b'a') as u32)
                } else {
                    invalid(format!("unexpected character {:?}", b as char))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(letters, m)
    }

    pub fn letters(&self) -> &[u32] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Raw dump: one byte per letter when `m <= 256`, otherwise little-endian u16.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.m <= 256 {
            Ok(self.letters.iter().map(|&l| l as u8).collect())
        } else if self.m <= 1 << 16 {
            Ok(self.letters.iter().flat_map(|&l| (l as u16).to_le_bytes()).collect())
        } else {
            invalid(format!("alphabet of size {} does not fit a u16 dump", self.m))
        }
    }

    pub fn from_bytes(bytes: &[u8], m: usize) -> Result<Self> {
        let letters = if m <= 256 {
            bytes.iter().map(|&b| b as u32).collect()
        } else if m <= 1 << 16 {
            if bytes.len() % 2 != 0 {
                return invalid("u16 word dump has odd length");
            }
            bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as u32).collect()
        } else {
            return invalid(format!("alphabet of size {m} does not fit a u16 dump"));
        };
        Self::new(letters, m)
    }
}

/// Draws iid letters with a fixed law.
///
/// Non-uniform laws use Walker's alias table; the uniform law skips the table
/// and draws the index directly from 32 random bits.
#[derive(Debug, Clone)]
pub enum LetterSampler {
    Uniform { m: u32, reject_below: u32 },
    Alias(WeightedAliasIndex<f64>),
}

impl LetterSampler {
    pub fn new(dist: &AlphabetDistribution) -> Self {
        if dist.is_uniform() {
            let m = dist.m() as u32;
            LetterSampler::Uniform { m, reject_below: m.wrapping_neg() % m }
        } else {
            // weights were validated on construction
            LetterSampler::Alias(WeightedAliasIndex::new(dist.probs.clone()).expect("valid weights"))
        }
    }

    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            LetterSampler::Uniform { m, reject_below } => loop {
                // Lemire's multiply-shift with rejection
                let wide = rng.next_u32() as u64 * *m as u64;
                if (wide as u32) >= *reject_below {
                    return (wide >> 32) as u32;
                }
            },
            LetterSampler::Alias(table) => table.sample(rng) as u32,
        }
    }

    /// Fills `buf` with iid letters. The uniform law takes a pair of letters from
    /// each 64-bit output (low half first) and redraws the pair if either half is
    /// rejected, so the stream differs from repeated [`LetterSampler::sample`] calls.
    pub fn fill<R: RngCore + ?Sized>(&self, rng: &mut R, buf: &mut [u32]) {
        match self {
            LetterSampler::Uniform { m, reject_below } => {
                let (m, reject) = (*m as u64, *reject_below);
                let pair = |rng: &mut R| loop {
                    let r = rng.next_u64();
                    let lo = (r & 0xFFFF_FFFF) * m;
                    let hi = (r >> 32) * m;
                    if (lo as u32) >= reject && (hi as u32) >= reject {
                        return ((lo >> 32) as u32, (hi >> 32) as u32);
                    }
                };
                let mut chunks = buf.chunks_exact_mut(2);
                for c in &mut chunks {
                    let (a, b) = pair(rng);
                    c[0] = a;
                    c[1] = b;
                }
                if let [last] = chunks.into_remainder() {
                    *last = pair(rng).0;
                }
            }
            LetterSampler::Alias(table) => {
                for b in buf.iter_mut() {
                    *b = table.sample(rng) as u32;
                }
            }
        }
    }
}

pub fn sample_word_with<R: RngCore + ?Sized>(dist: &AlphabetDistribution, n: usize, rng: &mut R) -> Word {
    let sampler = LetterSampler::new(dist);
    let letters = (0..n).map(|_| sampler.sample(rng)).collect();
    Word { letters, m: dist.m() }
}

/// A word of `n` iid letters; identical for identical `(dist, n, seed)`.
pub fn sample_word(dist: &AlphabetDistribution, n: usize, seed: u64) -> Word {
    sample_word_with(dist, n, &mut rng::seeded(seed))
}

/// Prefix counts `S_k^j = #{i <= k : X_i = j}` for `0 <= k <= n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    n: usize,
    m: usize,
    data: Vec<u32>,
}

impl CountMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `S_k^j`.
    #[inline]
    pub fn get(&self, k: usize, j: usize) -> u32 {
        self.data[k * self.m + j]
    }

    /// Counts of every letter after `k` positions.
    pub fn row(&self, k: usize) -> &[u32] {
        &self.data[k * self.m..(k + 1) * self.m]
    }

    /// Path `k -> S_k^j` of letter `j`.
    pub fn column(&self, j: usize) -> Vec<u32> {
        (0..=self.n).map(|k| self.get(k, j)).collect()
    }

    /// Centered and scaled count `(S_k^j - k p) / sqrt(p (1 - p))`.
    pub fn centered(&self, k: usize, j: usize, p: f64) -> f64 {
        (self.get(k, j) as f64 - k as f64 * p) / (p * (1.0 - p)).sqrt()
    }
}

pub fn prefix_counts(word: &Word) -> CountMatrix {
    let (n, m) = (word.len(), word.m());
    let mut data = vec![0u32; (n + 1) * m];
    for (i, &l) in word.letters().iter().enumerate() {
        let (prev, next) = data.split_at_mut((i + 1) * m);
        next[..m].copy_from_slice(&prev[i * m..]);
        next[l as usize] += 1;
    }
    CountMatrix { n, m, data }
}
