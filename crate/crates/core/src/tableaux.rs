//! RSK shapes of words and the sup-over-cut-points functionals.
//!
//! Row insertion bumps the leftmost entry strictly greater than the incoming
//! letter, so every row stays weakly increasing and the first row length is the
//! longest weakly increasing subsequence. Only the shape is kept.

use std::collections::HashMap;
use std::ops::{Add, Sub};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::wordmodel::{CountMatrix, Word};

/// Largest word length accepted by [`v_k_oracle`].
pub const ORACLE_MAX_LEN: usize = 12;

/// Alphabets up to this size use the bitmask row representation.
const SMALL_ALPHABET: usize = 64;

/// Row lengths `R_1 >= R_2 >= ...` of an RSK tableau; trailing zero rows are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct YoungShape {
    rows: Vec<usize>,
}

impl YoungShape {
    pub fn new(mut rows: Vec<usize>) -> Result<Self> {
        while rows.last() == Some(&0) {
            rows.pop();
        }
        if rows.windows(2).any(|w| w[0] < w[1]) {
            return invalid(format!("row lengths {rows:?} are not nonincreasing"));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// `R_i` (1-based), zero past the last row.
    pub fn row(&self, i: usize) -> usize {
        assert!(i >= 1, "rows are 1-based");
        self.rows.get(i - 1).copied().unwrap_or(0)
    }

    /// Number of boxes.
    pub fn n(&self) -> usize {
        self.rows.iter().sum()
    }

    /// `V_k = R_1 + ... + R_k` for `k = 1..=len`.
    pub fn prefix_sums(&self, len: usize) -> Vec<usize> {
        (1..=len)
            .scan(0, |acc, i| {
                *acc += self.row(i);
                Some(*acc)
            })
            .collect()
    }
}

/// One weakly increasing row of an insertion tableau.
#[derive(Debug, Clone)]
enum Row {
    /// Letter multiplicities plus a bitmask of letters present (alphabet <= 64).
    Counts { counts: Vec<u32>, mask: u64, len: usize },
    /// Entries in weakly increasing order.
    Sorted(Vec<u32>),
}

impl Row {
    fn empty(m: usize) -> Self {
        if m <= SMALL_ALPHABET {
            Row::Counts { counts: vec![0; m], mask: 0, len: 0 }
        } else {
            Row::Sorted(Vec::new())
        }
    }

    fn len(&self) -> usize {
        match self {
            Row::Counts { len, .. } => *len,
            Row::Sorted(v) => v.len(),
        }
    }

    /// Inserts `x`, returning the bumped entry if one was displaced.
    #[inline]
    fn insert(&mut self, x: u32) -> Option<u32> {
        match self {
            Row::Counts { counts, mask, len } => {
                let above = if x >= 63 { 0 } else { *mask & (!0u64 << (x + 1)) };
                counts[x as usize] += 1;
                *mask |= 1 << x;
                if above == 0 {
                    *len += 1;
                    None
                } else {
                    let y = above.trailing_zeros();
                    counts[y as usize] -= 1;
                    if counts[y as usize] == 0 {
                        *mask &= !(1 << y);
                    }
                    Some(y)
                }
            }
            Row::Sorted(v) => {
                let idx = v.partition_point(|&t| t <= x);
                if idx == v.len() {
                    v.push(x);
                    None
                } else {
                    Some(std::mem::replace(&mut v[idx], x))
                }
            }
        }
    }
}

/// Streaming RSK row insertion.
#[derive(Debug, Clone)]
pub struct RskInserter {
    m: usize,
    rows: Vec<Row>,
}

impl RskInserter {
    pub fn new(m: usize) -> Self {
        Self { m, rows: Vec::new() }
    }

    #[inline]
    pub fn insert(&mut self, letter: u32) {
        let mut x = letter;
        for row in self.rows.iter_mut() {
            match row.insert(x) {
                None => return,
                Some(bumped) => x = bumped,
            }
        }
        let mut row = Row::empty(self.m);
        row.insert(x);
        self.rows.push(row);
    }

    /// Current `R_i`, zero past the last row.
    pub fn row_len(&self, i: usize) -> usize {
        self.rows.get(i - 1).map_or(0, Row::len)
    }

    pub fn shape(&self) -> YoungShape {
        YoungShape { rows: self.rows.iter().map(Row::len).collect() }
    }
}

/// Streaming length of the longest weakly increasing subsequence (the first RSK row).
#[derive(Debug, Clone)]
pub struct FirstRow(Row);

impl FirstRow {
    pub fn new(m: usize) -> Self {
        FirstRow(Row::empty(m))
    }

    #[inline]
    pub fn push(&mut self, letter: u32) {
        self.0.insert(letter);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.len() == 0
    }
}

/// First-row tracker for alphabets of at most 64 letters without per-letter branches.
#[derive(Debug, Clone)]
pub struct SmallFirstRow {
    counts: [u32; 64],
    mask: u64,
    len: usize,
}

impl Default for SmallFirstRow {
    fn default() -> Self {
        Self { counts: [0; 64], mask: 0, len: 0 }
    }
}

impl SmallFirstRow {
    /// Letters must be below 64.
    #[inline]
    pub fn push(&mut self, x: u32) {
        let x = x & 63;
        let above = self.mask & ((!1u64) << x);
        // 64 & 63 = 0 when nothing is bumped; the updates below are then no-ops
        let y = (above.trailing_zeros() & 63) as usize;
        let bumped = (above != 0) as u32;
        self.counts[x as usize] += 1;
        self.mask |= 1u64 << x;
        self.counts[y] -= bumped;
        let emptied = ((self.counts[y] == 0) as u64) & bumped as u64;
        self.mask &= !(emptied << y);
        self.len += 1 - bumped as usize;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

pub fn rsk_shape(word: &Word) -> YoungShape {
    let mut rsk = RskInserter::new(word.m());
    for &l in word.letters() {
        rsk.insert(l);
    }
    rsk.shape()
}

/// Longest weakly increasing subsequence by patience sorting.
pub fn lis_weak(word: &Word) -> usize {
    lis_weak_slice(word.letters())
}

fn lis_weak_slice(letters: &[u32]) -> usize {
    let mut tops: Vec<u32> = Vec::new();
    for &x in letters {
        let idx = tops.partition_point(|&t| t <= x);
        if idx == tops.len() {
            tops.push(x);
        } else {
            tops[idx] = x;
        }
    }
    tops.len()
}

/// `max Σ_r (W^r[i_r] - W^r[i_{r-1}])` over cut points `0 = i_0 <= i_1 <= ... <= i_k = N`,
/// where every path has `N + 1` entries. Runs in `O(k N)`.
pub fn max_over_cuts<T>(paths: &[&[T]]) -> T
where
    T: Copy + PartialOrd + Add<Output = T> + Sub<Output = T>,
{
    assert!(!paths.is_empty(), "at least one path is required");
    let len = paths[0].len();
    assert!(len >= 1 && paths.iter().all(|p| p.len() == len), "paths must share a length");
    let first = paths[0];
    let mut best: Vec<T> = first.iter().map(|&w| w - first[0]).collect();
    for path in &paths[1..] {
        let mut running = best[0] - path[0];
        for i in 0..len {
            let cand = best[i] - path[i];
            if cand > running {
                running = cand;
            }
            best[i] = running + path[i];
        }
    }
    best[len - 1]
}

/// `R_1` as the sup over cut points of the letter-count increments.
pub fn v1_dp(counts: &CountMatrix) -> usize {
    let columns: Vec<Vec<i64>> =
        (0..counts.m()).map(|j| counts.column(j).into_iter().map(i64::from).collect()).collect();
    let refs: Vec<&[i64]> = columns.iter().map(Vec::as_slice).collect();
    max_over_cuts(&refs) as usize
}

/// The cut-point sup applied to centered counts `(S_k^j - k p) / sqrt(p(1-p))`.
pub fn v1_centered(counts: &CountMatrix, p: f64) -> f64 {
    let columns: Vec<Vec<f64>> = (0..counts.m())
        .map(|j| (0..=counts.n()).map(|k| counts.centered(k, j, p)).collect())
        .collect();
    let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    max_over_cuts(&refs)
}

/// Largest total size of `k` disjoint weakly increasing subsequences, by exhaustive
/// search over assignments of positions to subsequences. Refuses words longer
/// than [`ORACLE_MAX_LEN`].
pub fn v_k_oracle(word: &Word, k: usize) -> Result<usize> {
    if word.len() > ORACLE_MAX_LEN {
        return Err(Error::OracleGuard(format!(
            "exhaustive oracle limited to n <= {ORACLE_MAX_LEN}, got {}",
            word.len()
        )));
    }
    if k == 0 {
        return Ok(0);
    }
    // state: sorted last letters of the k subsequences, -1 for an empty one
    let mut states: HashMap<Vec<i32>, usize> = HashMap::from([(vec![-1; k], 0)]);
    for &x in word.letters() {
        let x = x as i32;
        let mut next: HashMap<Vec<i32>, usize> = HashMap::with_capacity(states.len() * 2);
        for (state, &count) in &states {
            let keep = next.entry(state.clone()).or_insert(0);
            *keep = (*keep).max(count);
            for i in 0..k {
                if state[i] > x || (i > 0 && state[i] == state[i - 1]) {
                    continue;
                }
                let mut s = state.clone();
                s[i] = x;
                s.sort_unstable();
                let e = next.entry(s).or_insert(0);
                *e = (*e).max(count + 1);
            }
        }
        states = next;
    }
    Ok(states.into_values().max().unwrap_or(0))
}

/// Outcome of comparing RSK prefix sums with the exhaustive oracle on every word.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSweep {
    pub max_len: usize,
    pub max_m: usize,
    pub words: u64,
    pub comparisons: u64,
    /// Words (as letter lists) where some `k` disagreed, with `(k, rsk, oracle)`.
    pub failures: Vec<(Vec<u32>, usize, usize, usize)>,
}

/// Checks `R_1 + ... + R_k = V_k` for all words of length `<= max_len` over
/// alphabets of size `<= max_m` and every `k <= n`.
pub fn oracle_sweep(max_len: usize, max_m: usize) -> Result<OracleSweep> {
    use rayon::prelude::*;
    if max_len > ORACLE_MAX_LEN {
        return Err(Error::OracleGuard(format!("sweep limited to n <= {ORACLE_MAX_LEN}")));
    }
    let mut jobs: Vec<(usize, usize, u64)> = Vec::new();
    for m in 1..=max_m {
        for n in 0..=max_len {
            let count = (m as u64).checked_pow(n as u32).ok_or_else(|| Error::OracleGuard("too many words".into()))?;
            jobs.extend((0..count).map(|code| (m, n, code)));
        }
    }
    let results: Vec<(u64, Vec<(Vec<u32>, usize, usize, usize)>)> = jobs
        .par_iter()
        .map(|&(m, n, code)| -> Result<_> {
            let mut letters = vec![0u32; n];
            let mut c = code;
            for l in letters.iter_mut().rev() {
                *l = (c % m as u64) as u32;
                c /= m as u64;
            }
            let word = Word::new(letters, m)?;
            let sums = rsk_shape(&word).prefix_sums(n);
            let mut bad = Vec::new();
            for k in 1..=n {
                let oracle = v_k_oracle(&word, k)?;
                if sums[k - 1] != oracle {
                    bad.push((word.letters().to_vec(), k, sums[k - 1], oracle));
                }
            }
            Ok((n as u64, bad))
        })
        .collect::<Result<_>>()?;
    let comparisons = results.iter().map(|r| r.0).sum();
    let failures = results.into_iter().flat_map(|r| r.1).collect();
    Ok(OracleSweep { max_len, max_m, words: jobs.len() as u64, comparisons, failures })
}

/// `R_1` with the cut intervals of letters outside `subset` collapsed: the longest
/// weakly increasing subsequence using only letters of `subset`.
pub fn v1_restricted(word: &Word, subset: &[usize]) -> Result<usize> {
    if subset.is_empty() {
        return invalid("letter subset must be nonempty");
    }
    let mut member = vec![false; word.m()];
    for &j in subset {
        if j >= word.m() {
            return invalid(format!("letter {j} outside alphabet of size {}", word.m()));
        }
        member[j] = true;
    }
    let kept: Vec<u32> = word.letters().iter().copied().filter(|&l| member[l as usize]).collect();
    Ok(lis_weak_slice(&kept))
}

/// Row statistics `(R_i - n/m) / sqrt(n)` for `i = 1..=r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct NormalizedShape {
    pub values: Vec<f64>,
}

pub fn normalize_uniform(shape: &YoungShape, n: usize, m: usize, r: usize) -> Result<NormalizedShape> {
    if r > m {
        return invalid(format!("cannot normalize {r} rows of a shape over {m} letters"));
    }
    let (nf, mean) = (n as f64, n as f64 / m as f64);
    let values = (1..=r).map(|i| (shape.row(i) as f64 - mean) / nf.sqrt()).collect();
    Ok(NormalizedShape { values })
}

/// `(R_1 - n p_max) / sqrt(n k p_max)`.
pub fn normalize_nonuniform(r1: usize, n: usize, p_max: f64, k: usize) -> f64 {
    let nf = n as f64;
    (r1 as f64 - nf * p_max) / (nf * k as f64 * p_max).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wordmodel::{prefix_counts, sample_word, AlphabetDistribution};
    use proptest::prelude::*;

    fn w(s: &str, m: usize) -> Word {
        Word::from_ascii(s, m).unwrap()
    }

    /// Longest weakly increasing subsequence by enumerating all subsets.
    fn lis_brute(letters: &[u32]) -> usize {
        let n = letters.len();
        (0u32..1 << n)
            .filter(|mask| {
                let picked: Vec<u32> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| letters[i]).collect();
                picked.windows(2).all(|p| p[0] <= p[1])
            })
            .map(|mask| mask.count_ones() as usize)
            .max()
            .unwrap_or(0)
    }

    /// max_over_cuts by enumerating every nondecreasing cut tuple.
    fn cuts_brute(paths: &[Vec<i64>]) -> i64 {
        fn rec(paths: &[Vec<i64>], r: usize, start: usize, acc: i64, best: &mut i64) {
            let n = paths[0].len() - 1;
            if r == paths.len() - 1 {
                *best = (*best).max(acc + paths[r][n] - paths[r][start]);
                return;
            }
            for cut in start..=n {
                rec(paths, r + 1, cut, acc + paths[r][cut] - paths[r][start], best);
            }
        }
        let mut best = i64::MIN;
        rec(paths, 0, 0, 0, &mut best);
        best
    }

    #[test]
    fn rsk_shape_examples() {
        assert_eq!(rsk_shape(&w("aaaaaaa", 1)).rows(), &[7]);
        assert_eq!(rsk_shape(&w("dcba", 4)).rows(), &[1, 1, 1, 1]);
        assert_eq!(rsk_shape(&w("bab", 2)).rows(), &[2, 1]);
        assert_eq!(rsk_shape(&w("", 2)).rows(), &[] as &[usize]);
    }

    #[test]
    fn large_alphabet_rows_agree_with_small_path() {
        // same word read as over 3 and over 200 letters exercises both row types
        let small = sample_word(&AlphabetDistribution::uniform(3).unwrap(), 400, 5);
        let large = Word::new(small.letters().to_vec(), 200).unwrap();
        assert_eq!(rsk_shape(&small), rsk_shape(&large));
    }

    #[test]
    fn lis_examples() {
        assert_eq!(lis_weak(&w("aba", 2)), 2);
        assert_eq!(lis_brute(w("aba", 2).letters()), 2);
        assert_eq!(lis_weak(&w("aabbbcd", 4)), 7);
        assert_eq!(lis_weak(&w("", 4)), 0);
    }

    #[test]
    fn v1_dp_examples() {
        assert_eq!(v1_dp(&prefix_counts(&w("aabb", 2))), 4);
        assert_eq!(v1_dp(&prefix_counts(&w("ba", 2))), 1);
        assert_eq!(v1_dp(&prefix_counts(&w("", 2))), 0);
    }

    #[test]
    fn v1_dp_matches_brute_force_on_small_words() {
        for m in 1..=3usize {
            for n in 0..=12usize {
                for seed in 0..20 {
                    let word = sample_word(&AlphabetDistribution::uniform(m).unwrap(), n, seed * 31 + n as u64);
                    let brute = lis_brute(word.letters());
                    assert_eq!(v1_dp(&prefix_counts(&word)), brute);
                    assert_eq!(lis_weak(&word), brute);
                }
            }
        }
    }

    #[test]
    fn small_first_row_matches_patience_sorting() {
        for m in [1usize, 2, 5, 31, 64] {
            for seed in 0..10 {
                let word = sample_word(&AlphabetDistribution::uniform(m).unwrap(), 3000, seed);
                let mut row = SmallFirstRow::default();
                for &l in word.letters() {
                    row.push(l);
                }
                assert_eq!(row.len(), lis_weak(&word), "m = {m}");
            }
        }
    }

    #[test]
    fn max_over_cuts_matches_enumeration() {
        // N = k with unit increments of ±1
        for k in 1..=4usize {
            for bits in 0u32..1 << (k * k) {
                let paths: Vec<Vec<i64>> = (0..k)
                    .map(|r| {
                        let mut acc = 0;
                        std::iter::once(0)
                            .chain((0..k).map(|s| {
                                acc += if bits >> (r * k + s) & 1 == 1 { 1 } else { -1 };
                                acc
                            }))
                            .collect()
                    })
                    .collect();
                let refs: Vec<&[i64]> = paths.iter().map(Vec::as_slice).collect();
                assert_eq!(max_over_cuts(&refs), cuts_brute(&paths));
            }
        }
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(v_k_oracle(&w("bab", 2), 2).unwrap(), 3);
        assert_eq!(v_k_oracle(&w("bab", 2), 1).unwrap(), 2);
        let word = w("cabcbacab", 3);
        assert_eq!(v_k_oracle(&word, 3).unwrap(), 9);
        assert_eq!(v_k_oracle(&word, 5).unwrap(), 9);
        assert_eq!(v_k_oracle(&word, 1).unwrap(), lis_weak(&word));
        let long = w("abcabcabcabca", 3);
        assert!(matches!(v_k_oracle(&long, 1), Err(Error::OracleGuard(_))));
    }

    #[test]
    fn greene_on_random_words_up_to_twelve() {
        for seed in 0..200u64 {
            let m = 1 + (seed % 5) as usize;
            let word = sample_word(&AlphabetDistribution::uniform(m).unwrap(), 12, seed);
            let shape = rsk_shape(&word);
            for (k, v) in shape.prefix_sums(m).into_iter().enumerate() {
                assert_eq!(v_k_oracle(&word, k + 1).unwrap(), v, "word {:?} k {}", word.letters(), k + 1);
            }
        }
    }

    #[test]
    fn restricted_examples() {
        let word = w("cacbcb", 3);
        assert_eq!(v1_restricted(&word, &[0, 1]).unwrap(), 3);
        assert_eq!(v1_restricted(&word, &[0, 1, 2]).unwrap(), lis_weak(&word));
        assert_eq!(v1_restricted(&w("ccc", 3), &[0]).unwrap(), 0);
        assert!(v1_restricted(&word, &[]).is_err());
    }

    #[test]
    fn normalization_examples() {
        let shape = YoungShape::new(vec![120, 100, 90, 90]).unwrap();
        let z = normalize_uniform(&shape, 400, 4, 4).unwrap();
        assert!((z.values[0] - 1.0).abs() < 1e-15);
        assert!(z.values.windows(2).all(|p| p[0] >= p[1]));
        let flat = YoungShape::new(vec![100; 4]).unwrap();
        assert_eq!(normalize_uniform(&flat, 400, 4, 1).unwrap().values[0], 0.0);
        assert!(normalize_uniform(&flat, 400, 4, 5).is_err());

        assert_eq!(normalize_nonuniform(100, 10_000, 0.01, 4), 0.0);
        assert!((normalize_nonuniform(140, 10_000, 0.01, 4) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nonuniform_normalization_reduces_to_uniform() {
        // with k = m and p_max = 1/m the two statistics coincide; the sqrt(1 - 1/m)
        // factor relates them to the centered functional instead
        for seed in 0..20u64 {
            let m = 2 + (seed % 6) as usize;
            let n = 200 + seed as usize * 7;
            let word = sample_word(&AlphabetDistribution::uniform(m).unwrap(), n, seed);
            let shape = rsk_shape(&word);
            let uni = normalize_uniform(&shape, n, m, 1).unwrap().values[0];
            let non = normalize_nonuniform(shape.row(1), n, 1.0 / m as f64, m);
            assert!((uni - non).abs() < 1e-12);

            let p = 1.0 / m as f64;
            let tilde = v1_centered(&prefix_counts(&word), p);
            let via_centered = (1.0 - p).sqrt() * tilde / ((n * m) as f64).sqrt();
            assert!((uni - via_centered).abs() < 1e-10, "{uni} vs {via_centered}");
        }
    }

    proptest! {
        #[test]
        fn shape_invariants(seed in any::<u64>(), n in 0usize..400, m in 1usize..20) {
            let word = sample_word(&AlphabetDistribution::uniform(m).unwrap(), n, seed);
            let shape = rsk_shape(&word);
            prop_assert!(shape.rows().windows(2).all(|p| p[0] >= p[1]));
            prop_assert_eq!(shape.n(), n);
            prop_assert!(shape.rows().len() <= m);
            prop_assert_eq!(shape.row(1), lis_weak(&word));
            let mut first = FirstRow::new(m);
            word.letters().iter().for_each(|&l| first.push(l));
            prop_assert_eq!(first.len(), shape.row(1));
            let v = shape.prefix_sums(m);
            prop_assert!(v.windows(3).all(|t| t[1] - t[0] >= t[2] - t[1]));
        }

        #[test]
        fn restricted_never_exceeds_lis(seed in any::<u64>(), n in 0usize..200, mask in 1u32..64) {
            let word = sample_word(&AlphabetDistribution::uniform(6).unwrap(), n, seed);
            let subset: Vec<usize> = (0..6).filter(|j| mask >> j & 1 == 1).collect();
            prop_assert!(v1_restricted(&word, &subset).unwrap() <= lis_weak(&word));
        }
    }
}
