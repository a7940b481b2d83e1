//! The censored block model: labels, ternary graphs, sampling, likelihoods
//! and closed-form maximum-likelihood estimates.
//!
//! A pair `(i, j)` is revealed with probability `p`; a revealed pair carries
//! `σᵢσⱼ` with probability `1 - ζ` and `-σᵢσⱼ` otherwise. Graphs store only
//! the strict upper triangle, so symmetry and a zero diagonal hold by
//! construction.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::math;
use crate::rng::{domain, IndexedStream};

/// Estimators clamp ζ into `[ZETA_CLAMP, 0.5 - ZETA_CLAMP]`.
pub const ZETA_CLAMP: f64 = 1e-6;

/// Model triple `(n, p, ζ)` with the optional density coefficient `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CbmParams {
    n: usize,
    p: f64,
    zeta: f64,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    a: Option<f64>,
}

impl CbmParams {
    /// `p = 0` is accepted as the degenerate nothing-revealed limit.
    pub fn new(n: usize, p: f64, zeta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::OutOfRange { name: "n", value: n as f64 });
        }
        check_range("p", p, (0.0..=1.0).contains(&p))?;
        check_range("zeta", zeta, zeta > 0.0 && zeta < 0.5)?;
        Ok(CbmParams { n, p, zeta, a: None })
    }

    /// `p = a·ln(n)/n`.
    pub fn with_density(n: usize, a: f64, zeta: f64) -> Result<Self> {
        check_range("a", a, a > 0.0)?;
        if n < 2 {
            return Err(Error::OutOfRange { name: "n", value: n as f64 });
        }
        let p = density_to_p(n, a);
        let mut params = Self::new(n, p, zeta)?;
        params.a = Some(a);
        Ok(params)
    }

    /// Re-checks the invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        Self::new(self.n, self.p, self.zeta)?;
        if let Some(a) = self.a {
            check_range("a", a, a > 0.0)?;
            let expect = density_to_p(self.n, a);
            if (expect - self.p).abs() > 1e-12 * expect.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::OutOfRange { name: "p", value: self.p });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn a(&self) -> Option<f64> {
        self.a
    }
}

pub fn density_to_p(n: usize, a: f64) -> f64 {
    a * math::ln(n as f64) / n as f64
}

/// A ±1 community assignment.
///
/// Ordering is lexicographic with `-1 < +1`; every tie-break in the crate
/// uses it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<i8>", into = "Vec<i8>"))]
pub struct LabelVector(Vec<i8>);

impl LabelVector {
    pub fn new(labels: Vec<i8>) -> Result<Self> {
        if let Some((index, &v)) = labels.iter().enumerate().find(|(_, &v)| v != 1 && v != -1) {
            return Err(Error::InvalidLabel { index, value: i64::from(v) });
        }
        Ok(LabelVector(labels))
    }

    /// Parses strings like `"++--"`.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .enumerate()
            .map(|(index, c)| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::InvalidLabel { index, value: i64::from(u32::from(other)) }),
            })
            .collect::<Result<Vec<i8>>>()
            .map(LabelVector)
    }

    /// First `ceil(n/2)` nodes in community +1, the rest in -1.
    pub fn balanced(n: usize) -> Self {
        let half = n.div_ceil(2);
        LabelVector((0..n).map(|i| if i < half { 1 } else { -1 }).collect())
    }

    pub fn all_positive(n: usize) -> Self {
        LabelVector(alloc::vec![1; n])
    }

    /// The `index`-th canonical labeling of `n` nodes in lexicographic order.
    /// Node 0 is fixed to +1; node 1 is the most significant free bit.
    pub fn from_canonical_index(n: usize, index: u64) -> Self {
        let mut labels = alloc::vec![1i8; n];
        for (k, label) in labels.iter_mut().enumerate().skip(1) {
            let bit = (index >> (n - 1 - k)) & 1;
            *label = if bit == 1 { 1 } else { -1 };
        }
        LabelVector(labels)
    }

    /// Inverse of [`LabelVector::from_canonical_index`] for canonical vectors.
    pub fn canonical_index(&self) -> u64 {
        let c = self.canonical();
        c.0.iter().skip(1).fold(0u64, |acc, &v| (acc << 1) | u64::from(v == 1))
    }

    /// Uniform over the `2^(n-1)` canonical labelings.
    pub fn random_canonical(n: usize, seed: u64) -> Self {
        let mut stream = IndexedStream::new(seed, domain::LABELS);
        let labels = (0..n)
            .map(|i| if i == 0 || stream.word(i as u64) >> 63 == 1 { 1 } else { -1 })
            .collect();
        LabelVector(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    pub fn flipped(&self) -> Self {
        LabelVector(self.0.iter().map(|v| -v).collect())
    }

    /// Global flip so that the first entry is +1.
    pub fn canonical(&self) -> Self {
        if self.is_canonical() {
            self.clone()
        } else {
            self.flipped()
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.0.first().is_none_or(|&v| v == 1)
    }

    /// Copy with the given nodes moved to the other community.
    pub fn with_flipped_nodes(&self, nodes: &[usize]) -> Result<Self> {
        let mut out = self.0.clone();
        for &i in nodes {
            if i >= out.len() {
                return Err(Error::DimensionMismatch { expected: out.len(), found: i + 1 });
            }
            out[i] = -out[i];
        }
        Ok(LabelVector(out))
    }

    /// Equal up to a global flip.
    pub fn same_partition(&self, other: &LabelVector) -> bool {
        self.len() == other.len() && self.canonical() == other.canonical()
    }
}

impl TryFrom<Vec<i8>> for LabelVector {
    type Error = Error;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        LabelVector::new(v)
    }
}

impl From<LabelVector> for Vec<i8> {
    fn from(l: LabelVector) -> Vec<i8> {
        l.0
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|&v| if v == 1 { '+' } else { '-' }).collect();
        f.write_str(&s)
    }
}

/// Symmetric adjacency over {-1, 0, +1} with zero diagonal, stored as the
/// strict upper triangle in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TernaryGraph {
    n: usize,
    upper: Vec<i8>,
}

impl TernaryGraph {
    pub fn empty(n: usize) -> Self {
        TernaryGraph { n, upper: alloc::vec![0; math::pairs(n)] }
    }

    pub fn from_upper(n: usize, upper: Vec<i8>) -> Result<Self> {
        if upper.len() != math::pairs(n) {
            return Err(Error::DimensionMismatch { expected: math::pairs(n), found: upper.len() });
        }
        if let Some(k) = upper.iter().position(|v| !(-1..=1).contains(v)) {
            let (i, j) = pair_at(n, k);
            return Err(Error::InvalidEdge { i, j, value: i64::from(upper[k]) });
        }
        Ok(TernaryGraph { n, upper })
    }

    /// Builds from a full matrix, rejecting asymmetry and self loops.
    pub fn from_dense(rows: &[Vec<i8>]) -> Result<Self> {
        let n = rows.len();
        let mut g = TernaryGraph::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: row.len() });
            }
            if row[i] != 0 {
                return Err(Error::InvalidEdge { i, j: i, value: i64::from(row[i]) });
            }
            for j in i + 1..n {
                if row[j] != rows[j][i] {
                    return Err(Error::InvalidEdge { i, j, value: i64::from(row[j]) });
                }
                g.set(i, j, row[j])?;
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_pairs(&self) -> usize {
        self.upper.len()
    }

    pub fn upper(&self) -> &[i8] {
        &self.upper
    }

    pub(crate) fn upper_mut(&mut self) -> &mut [i8] {
        &mut self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        match i.cmp(&j) {
            core::cmp::Ordering::Equal => 0,
            core::cmp::Ordering::Less => self.upper[pair_index(self.n, i, j)],
            core::cmp::Ordering::Greater => self.upper[pair_index(self.n, j, i)],
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: i8) -> Result<()> {
        if i == j || i >= self.n || j >= self.n || !(-1..=1).contains(&value) {
            return Err(Error::InvalidEdge { i, j, value: i64::from(value) });
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let k = pair_index(self.n, lo, hi);
        self.upper[k] = value;
        Ok(())
    }

    /// All unordered pairs `(i, j, A_ij)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j))).zip(self.upper.iter()).map(|((i, j), &w)| (i, j, w))
    }

    /// Revealed pairs only.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        self.pairs().filter(|&(_, _, w)| w != 0)
    }

    /// `E_t`, the number of revealed pairs.
    pub fn revealed(&self) -> usize {
        self.upper.iter().filter(|&&w| w != 0).count()
    }

    /// `σᵀAσ` (both triangle copies counted).
    pub fn quadratic_form(&self, labels: &LabelVector) -> Result<i64> {
        check_len(self.n, labels)?;
        let s = labels.as_slice();
        Ok(2 * self.pairs().map(|(i, j, w)| i64::from(s[i] * s[j] * w)).sum::<i64>())
    }

    /// Number of unordered pairs whose values differ.
    pub fn distance(&self, other: &TernaryGraph) -> Result<usize> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        Ok(self.upper.iter().zip(&other.upper).filter(|(a, b)| a != b).count())
    }
}

/// Row-major upper-triangle index of `(i, j)` with `i < j`.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Inverse of [`pair_index`].
pub fn pair_at(n: usize, mut k: usize) -> (usize, usize) {
    let mut i = 0;
    while k >= n - 1 - i {
        k -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + k)
}

/// When the change happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ChangePoint {
    /// First post-change time index (1-based).
    At(u64),
    Never,
}

/// An abrupt label change at `nu`, optionally with new `(p, ζ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeScenario {
    pub pre: LabelVector,
    pub post: LabelVector,
    pub nu: ChangePoint,
    pub params_pre: CbmParams,
    pub params_post: CbmParams,
}

impl ChangeScenario {
    /// `post` is globally flipped when that brings `Ham(pre, post)` to at
    /// most `n/2`; the change itself is unaffected since labels only matter
    /// up to a flip.
    pub fn new(
        pre: LabelVector,
        post: LabelVector,
        nu: ChangePoint,
        params_pre: CbmParams,
        params_post: CbmParams,
    ) -> Result<Self> {
        let n = pre.len();
        check_len(n, &post)?;
        if params_pre.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: params_pre.n() });
        }
        if params_post.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: params_post.n() });
        }
        if let ChangePoint::At(0) = nu {
            return Err(Error::OutOfRange { name: "nu", value: 0.0 });
        }
        let post = if 2 * hamming(&pre, &post)? > n { post.flipped() } else { post };
        Ok(ChangeScenario { pre, post, nu, params_pre, params_post })
    }

    pub fn is_post_change(&self, t: u64) -> bool {
        match self.nu {
            ChangePoint::At(nu) => t >= nu,
            ChangePoint::Never => false,
        }
    }

    /// Labels and parameters generating the sample at time `t` (1-based).
    pub fn regime(&self, t: u64) -> (&LabelVector, &CbmParams) {
        if self.is_post_change(t) {
            (&self.post, &self.params_post)
        } else {
            (&self.pre, &self.params_pre)
        }
    }
}

fn check_len(n: usize, labels: &LabelVector) -> Result<()> {
    if labels.len() == n {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: n, found: labels.len() })
    }
}

fn check_same_len(a: &LabelVector, b: &LabelVector) -> Result<()> {
    check_len(a.len(), b)
}

fn check_open_params(p: f64, zeta: f64) -> Result<()> {
    check_range("p", p, (0.0..=1.0).contains(&p))?;
    check_range("zeta", zeta, (0.0..=0.5).contains(&zeta))?;
    if p == 0.0 || p == 1.0 {
        return Err(Error::SingularParameter { name: "p", value: p });
    }
    if zeta == 0.0 || zeta == 0.5 {
        return Err(Error::SingularParameter { name: "zeta", value: zeta });
    }
    Ok(())
}

/// Draws one CBM graph. Pair `k` (upper-triangle order) uses word `k` of the
/// seed's sampling stream.
pub fn sample_cbm(params: &CbmParams, labels: &LabelVector, seed: u64) -> Result<TernaryGraph> {
    let n = params.n();
    check_len(n, labels)?;
    let agree = params.p() * (1.0 - params.zeta());
    let revealed = params.p();
    let s = labels.as_slice();
    let mut stream = IndexedStream::new(seed, domain::SAMPLE);
    let mut g = TernaryGraph::empty(n);
    let mut k = 0usize;
    let upper = g.upper_mut();
    for i in 0..n {
        for j in i + 1..n {
            let u = stream.uniform(k as u64);
            let sign = s[i] * s[j];
            upper[k] = if u < agree {
                sign
            } else if u < revealed {
                -sign
            } else {
                0
            };
            k += 1;
        }
    }
    Ok(g)
}

/// `log Pr(A; σ, p, ζ)`.
pub fn log_likelihood(graph: &TernaryGraph, labels: &LabelVector, p: f64, zeta: f64) -> Result<f64> {
    check_open_params(p, zeta)?;
    let quad = graph.quadratic_form(labels)? as f64;
    let pairs = graph.num_pairs() as f64;
    let revealed = graph.revealed() as f64;
    let edge_term = math::ln(p / (1.0 - p)) + 0.5 * math::ln(zeta * (1.0 - zeta));
    Ok(0.25 * flip_log_odds(zeta) * quad + pairs * math::ln_1p(-p) + revealed * edge_term)
}

/// `log Pr(A; σ_num) - log Pr(A; σ_den)` at shared `(p, ζ)`; `p` cancels but
/// is still range-checked.
pub fn log_likelihood_ratio(
    graph: &TernaryGraph,
    labels_num: &LabelVector,
    labels_den: &LabelVector,
    p: f64,
    zeta: f64,
) -> Result<f64> {
    check_open_params(p, zeta)?;
    let num = graph.quadratic_form(labels_num)?;
    let den = graph.quadratic_form(labels_den)?;
    Ok(0.25 * flip_log_odds(zeta) * (num - den) as f64)
}

/// `ln((1-ζ)/ζ)`.
#[inline]
pub fn flip_log_odds(zeta: f64) -> f64 {
    math::ln((1.0 - zeta) / zeta)
}

/// `KL(CBM(b, p, ζ) ‖ CBM(a, p, ζ))`.
pub fn kl_divergence(labels_a: &LabelVector, labels_b: &LabelVector, p: f64, zeta: f64) -> Result<f64> {
    check_same_len(labels_a, labels_b)?;
    check_range("p", p, p > 0.0 && p <= 1.0)?;
    check_range("zeta", zeta, zeta > 0.0 && zeta < 0.5)?;
    let pairs = math::pairs(labels_a.len()) as i64;
    let c = correlation(labels_a, labels_b)?;
    Ok(0.5 * flip_log_odds(zeta) * p * (1.0 - 2.0 * zeta) * (pairs - c) as f64)
}

/// `C_{a,b} = Σ_{i<j} aᵢaⱼbᵢbⱼ`.
pub fn correlation(labels_a: &LabelVector, labels_b: &LabelVector) -> Result<i64> {
    check_same_len(labels_a, labels_b)?;
    let prod: Vec<i64> =
        labels_a.as_slice().iter().zip(labels_b.as_slice()).map(|(&x, &y)| i64::from(x * y)).collect();
    let mut total = 0i64;
    for i in 0..prod.len() {
        for j in i + 1..prod.len() {
            total += prod[i] * prod[j];
        }
    }
    Ok(total)
}

pub fn hamming(labels_a: &LabelVector, labels_b: &LabelVector) -> Result<usize> {
    check_same_len(labels_a, labels_b)?;
    Ok(labels_a.as_slice().iter().zip(labels_b.as_slice()).filter(|(x, y)| x != y).count())
}

/// Classification error up to a global flip.
pub fn err(labels_est: &LabelVector, labels_true: &LabelVector) -> Result<usize> {
    let d = hamming(labels_est, labels_true)?;
    Ok(d.min(labels_est.len() - d))
}

/// Closed-form MLE of `(p, ζ)` given labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleEstimate {
    pub p_hat: f64,
    pub zeta_hat: f64,
    /// No revealed pairs: `ζ̂` is a placeholder.
    pub degenerate: bool,
}

pub fn clamp_zeta(zeta: f64) -> f64 {
    zeta.clamp(ZETA_CLAMP, 0.5 - ZETA_CLAMP)
}

pub fn mle_params(graph: &TernaryGraph, labels: &LabelVector) -> Result<MleEstimate> {
    mle_params_pooled(core::slice::from_ref(graph), labels)
}

/// MLE pooled over several graphs sharing `(σ, p, ζ)`.
pub fn mle_params_pooled(graphs: &[TernaryGraph], labels: &LabelVector) -> Result<MleEstimate> {
    let first = graphs.first().ok_or(Error::EmptyInput)?;
    let mut revealed = 0usize;
    let mut quad = 0i64;
    for g in graphs {
        if g.n() != first.n() {
            return Err(Error::DimensionMismatch { expected: first.n(), found: g.n() });
        }
        revealed += g.revealed();
        quad += g.quadratic_form(labels)?;
    }
    let total_pairs = (first.num_pairs() * graphs.len()) as f64;
    if revealed == 0 {
        return Ok(MleEstimate { p_hat: 0.0, zeta_hat: 0.25, degenerate: true });
    }
    let p_hat = revealed as f64 / total_pairs;
    let zeta_hat = clamp_zeta(0.5 - quad as f64 / (4.0 * revealed as f64));
    Ok(MleEstimate { p_hat, zeta_hat, degenerate: false })
}

/// Nodes to flip for a post-change labeling at Hamming distance `count`,
/// taken alternately from the two communities of `labels`.
pub fn spread_flip_nodes(labels: &LabelVector, count: usize) -> Vec<usize> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels.get(i) == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels.get(i) == -1).collect();
    let mut out = Vec::with_capacity(count);
    let (mut a, mut b) = (pos.iter(), neg.iter());
    while out.len() < count.min(labels.len()) {
        if let Some(&i) = a.next() {
            out.push(i);
        }
        if out.len() < count {
            if let Some(&j) = b.next() {
                out.push(j);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_graphs(n: usize) -> Vec<TernaryGraph> {
        let m = math::pairs(n);
        let total = 3usize.pow(m as u32);
        (0..total)
            .map(|mut code| {
                let upper = (0..m)
                    .map(|_| {
                        let v = (code % 3) as i8 - 1;
                        code /= 3;
                        v
                    })
                    .collect();
                TernaryGraph::from_upper(n, upper).unwrap()
            })
            .collect()
    }

    #[test]
    fn pair_index_roundtrip() {
        for n in 2..9 {
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    assert_eq!(pair_index(n, i, j), k);
                    assert_eq!(pair_at(n, k), (i, j));
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(CbmParams::new(1, 0.5, 0.1).is_err());
        assert!(CbmParams::new(5, 1.5, 0.1).is_err());
        assert!(CbmParams::new(5, 0.5, 0.5).is_err());
        assert!(CbmParams::new(5, 0.5, 0.0).is_err());
        let p = CbmParams::with_density(50, 5.0, 0.1).unwrap();
        assert!((p.p() - 5.0 * (50f64).ln() / 50.0).abs() < 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn noiseless_sample_matches_labels() {
        let labels = LabelVector::parse("++-+--+").unwrap();
        let params = CbmParams::new(7, 1.0, 1e-12).unwrap();
        let g = sample_cbm(&params, &labels, 3).unwrap();
        for (i, j, w) in g.pairs() {
            assert_eq!(w, labels.get(i) * labels.get(j));
        }
    }

    #[test]
    fn nothing_revealed_when_p_is_zero() {
        let labels = LabelVector::balanced(10);
        let params = CbmParams::new(10, 0.0, 0.1).unwrap();
        assert_eq!(sample_cbm(&params, &labels, 1).unwrap(), TernaryGraph::empty(10));
    }

    #[test]
    fn sampler_cell_frequencies() {
        // Cell probabilities (p(1-ζ), pζ, 1-p) evaluated directly.
        let n = 50;
        let params = CbmParams::with_density(n, 5.0, 0.1).unwrap();
        let p = params.p();
        let expected = [p * 0.9, p * 0.1, 1.0 - p];
        assert!((expected[0] - 0.3521).abs() < 1e-4);
        assert!((expected[1] - 0.0391).abs() < 1e-4);
        assert!((expected[2] - 0.6088).abs() < 1e-4);
        let labels = LabelVector::balanced(n);
        let mut counts = [0usize; 3];
        let mut total = 0usize;
        let mut seed = 0;
        while total < 1_000_000 {
            let g = sample_cbm(&params, &labels, seed).unwrap();
            for (i, j, w) in g.pairs() {
                let s = labels.get(i) * labels.get(j);
                let cell = if w == s {
                    0
                } else if w == -s {
                    1
                } else {
                    2
                };
                counts[cell] += 1;
            }
            total += g.num_pairs();
            seed += 1;
        }
        let mut chi2 = 0.0;
        for c in 0..3 {
            let freq = counts[c] as f64 / total as f64;
            assert!((freq - expected[c]).abs() < 0.003, "cell {c}: {freq}");
            let e = expected[c] * total as f64;
            chi2 += (counts[c] as f64 - e).powi(2) / e;
        }
        // chi-square with 2 dof: p-value > 0.01 iff statistic < 9.2103
        assert!(chi2 < 9.2103, "chi2 = {chi2}");
    }

    #[test]
    fn identical_seed_identical_graph() {
        let labels = LabelVector::balanced(30);
        let params = CbmParams::new(30, 0.4, 0.2).unwrap();
        assert_eq!(sample_cbm(&params, &labels, 11).unwrap(), sample_cbm(&params, &labels, 11).unwrap());
        assert_ne!(sample_cbm(&params, &labels, 11).unwrap(), sample_cbm(&params, &labels, 12).unwrap());
    }

    #[test]
    fn empty_graph_likelihood() {
        let g = TernaryGraph::empty(6);
        let l = LabelVector::balanced(6);
        let v = log_likelihood(&g, &l, 0.3, 0.2).unwrap();
        assert!((v - 15.0 * (0.7f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn likelihood_normalizes_on_three_nodes() {
        let graphs = all_graphs(3);
        assert_eq!(graphs.len(), 27);
        for (p, zeta, lab) in [(0.3, 0.1, "++-"), (0.9, 0.45, "+++"), (0.05, 0.2, "+-+")] {
            let l = LabelVector::parse(lab).unwrap();
            let total: f64 = graphs.iter().map(|g| log_likelihood(g, &l, p, zeta).unwrap().exp()).sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_parameters_rejected() {
        let g = TernaryGraph::empty(3);
        let l = LabelVector::balanced(3);
        for (p, z) in [(0.0, 0.1), (1.0, 0.1), (0.5, 0.0), (0.5, 0.5)] {
            assert!(matches!(log_likelihood(&g, &l, p, z), Err(Error::SingularParameter { .. })));
            assert!(matches!(log_likelihood_ratio(&g, &l, &l, p, z), Err(Error::SingularParameter { .. })));
        }
        assert!(matches!(log_likelihood(&g, &l, 1.5, 0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn ratio_two_nodes() {
        let mut g = TernaryGraph::empty(2);
        g.set(0, 1, 1).unwrap();
        let num = LabelVector::parse("++").unwrap();
        let den = LabelVector::parse("+-").unwrap();
        let r = log_likelihood_ratio(&g, &num, &den, 0.5, 0.1).unwrap();
        // one revealed pair: ln[p(1-ζ)] - ln[pζ]
        assert!((r - 9f64.ln()).abs() < 1e-12);
        let direct = log_likelihood(&g, &num, 0.5, 0.1).unwrap() - log_likelihood(&g, &den, 0.5, 0.1).unwrap();
        assert!((r - direct).abs() < 1e-12);
        assert_eq!(log_likelihood_ratio(&g, &num, &num, 0.5, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn ratio_single_edge_sensitivity_n4() {
        // Exhaustive over all graph pairs differing in one pair.
        for zeta in [0.05, 0.1, 0.25] {
            let c = 2.0 * flip_log_odds(zeta);
            let labelings: Vec<LabelVector> = (0..8).map(|m| LabelVector::from_canonical_index(4, m)).collect();
            for g in all_graphs(4) {
                for k in 0..6 {
                    for v in -1..=1i8 {
                        if g.upper()[k] == v {
                            continue;
                        }
                        let mut h = g.clone();
                        h.upper_mut()[k] = v;
                        for a in &labelings {
                            for b in &labelings {
                                let d = log_likelihood_ratio(&g, a, b, 0.5, zeta).unwrap()
                                    - log_likelihood_ratio(&h, a, b, 0.5, zeta).unwrap();
                                assert!(d.abs() <= c + 1e-12);
                            }
                        }
                    }
                }
            }
        }
    }

    fn brute_kl(a: &LabelVector, b: &LabelVector, p: f64, zeta: f64) -> f64 {
        all_graphs(a.len())
            .iter()
            .map(|g| {
                let lb = log_likelihood(g, b, p, zeta).unwrap();
                let la = log_likelihood(g, a, p, zeta).unwrap();
                lb.exp() * (lb - la)
            })
            .sum()
    }

    #[test]
    fn kl_two_nodes() {
        let a = LabelVector::parse("++").unwrap();
        let b = LabelVector::parse("+-").unwrap();
        let kl = kl_divergence(&a, &b, 0.5, 0.1).unwrap();
        assert!((kl - 0.87889).abs() < 1e-5);
        // three edge values by hand: Pr_b = (pζ, pζ̄, 1-p) for A = (+1, -1, 0)
        let (p, z) = (0.5f64, 0.1f64);
        let brute = p * z * ((p * z) / (p * (1.0 - z))).ln() + p * (1.0 - z) * ((p * (1.0 - z)) / (p * z)).ln();
        assert!((kl - brute).abs() < 1e-12);
        assert_eq!(kl_divergence(&a, &a, 0.5, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn kl_matches_enumeration_on_three_nodes() {
        for ia in 0..4 {
            for ib in 0..8u64 {
                let a = LabelVector::from_canonical_index(3, ia);
                let b = LabelVector::from_canonical_index(3, ib % 4);
                let b = if ib >= 4 { b.flipped() } else { b };
                let kl = kl_divergence(&a, &b, 0.4, 0.15).unwrap();
                assert!((kl - brute_kl(&a, &b, 0.4, 0.15)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn correlation_examples() {
        let a = LabelVector::parse("+++").unwrap();
        let b = LabelVector::parse("++-").unwrap();
        assert_eq!(correlation(&a, &b).unwrap(), -1);
        assert_eq!(correlation(&b, &b).unwrap(), 3);
        assert_eq!(correlation(&b, &b.flipped()).unwrap(), 3);
        assert!(correlation(&a, &LabelVector::balanced(4)).is_err());
    }

    #[test]
    fn hamming_and_err() {
        let est = LabelVector::parse("++--").unwrap();
        let truth = LabelVector::parse("+---").unwrap();
        assert_eq!(hamming(&est, &est).unwrap(), 0);
        assert_eq!(err(&est, &truth).unwrap(), 1);
        assert_eq!(err(&est.flipped(), &truth).unwrap(), 1);
        assert_eq!(err(&truth.flipped(), &truth).unwrap(), 0);
        assert!(hamming(&est, &LabelVector::balanced(3)).is_err());
    }

    #[test]
    fn mle_edge_cases() {
        let l = LabelVector::balanced(6);
        let e = mle_params(&TernaryGraph::empty(6), &l).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.p_hat, 0.0);
        let params = CbmParams::new(6, 1.0, 1e-12).unwrap();
        let g = sample_cbm(&params, &l, 0).unwrap();
        let e = mle_params(&g, &l).unwrap();
        assert!(!e.degenerate);
        assert_eq!(e.p_hat, 1.0);
        assert_eq!(e.zeta_hat, ZETA_CLAMP);
    }

    #[test]
    fn mle_zeta_maximizes_grid_likelihood() {
        // Grid-search oracle over ζ ∈ {0.01, ..., 0.49}.
        let l = LabelVector::parse("++-+--").unwrap();
        let params = CbmParams::new(6, 0.7, 0.2).unwrap();
        for seed in 0..40 {
            let g = sample_cbm(&params, &l, seed).unwrap();
            let mle = mle_params(&g, &l).unwrap();
            if mle.degenerate || mle.p_hat >= 1.0 {
                continue;
            }
            let ll = |z: f64| log_likelihood(&g, &l, mle.p_hat, z).unwrap();
            let best = (1..50).map(|k| k as f64 / 100.0).fold((0.0, f64::NEG_INFINITY), |acc, z| {
                let v = ll(z);
                if v > acc.1 {
                    (z, v)
                } else {
                    acc
                }
            });
            assert!(ll(mle.zeta_hat) >= best.1 - 1e-9, "seed {seed}");
            if mle.zeta_hat > 0.01 && mle.zeta_hat < 0.49 {
                assert!((mle.zeta_hat - best.0).abs() <= 0.01 + 1e-12);
            }
        }
    }

    #[test]
    fn scenario_orients_post() {
        let pre = LabelVector::balanced(6);
        let post = pre.with_flipped_nodes(&[0, 1, 2, 3]).unwrap();
        let params = CbmParams::new(6, 0.5, 0.1).unwrap();
        let sc = ChangeScenario::new(pre.clone(), post, ChangePoint::At(1), params, params).unwrap();
        assert_eq!(hamming(&sc.pre, &sc.post).unwrap(), 2);
        assert!(sc.is_post_change(1));
        let never = ChangeScenario::new(pre.clone(), pre, ChangePoint::Never, params, params).unwrap();
        assert!(!never.is_post_change(1_000));
    }

    #[test]
    fn canonical_index_enumerates_in_order() {
        let all: Vec<LabelVector> = (0..16).map(|m| LabelVector::from_canonical_index(5, m)).collect();
        for w in all.windows(2) {
            assert!(w[0] < w[1]);
        }
        for (m, l) in all.iter().enumerate() {
            assert!(l.is_canonical());
            assert_eq!(l.canonical_index(), m as u64);
        }
    }

    #[test]
    fn spread_flips_both_communities() {
        let l = LabelVector::balanced(10);
        assert_eq!(spread_flip_nodes(&l, 2), vec![0, 5]);
        assert_eq!(spread_flip_nodes(&l, 3), vec![0, 5, 1]);
    }

    fn labels_strategy(n: usize) -> impl Strategy<Value = LabelVector> {
        proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], n).prop_map(|v| LabelVector::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn flip_invariance(a in labels_strategy(7), b in labels_strategy(7), seed in 0u64..1000) {
            let params = CbmParams::new(7, 0.6, 0.2).unwrap();
            let g = sample_cbm(&params, &a, seed).unwrap();
            let ll = log_likelihood(&g, &a, 0.6, 0.2).unwrap();
            prop_assert!((ll - log_likelihood(&g, &a.flipped(), 0.6, 0.2).unwrap()).abs() < 1e-12);
            prop_assert_eq!(correlation(&a, &b).unwrap(), correlation(&a.flipped(), &b).unwrap());
            prop_assert_eq!(err(&a, &b).unwrap(), err(&a, &b.flipped()).unwrap());
            let kl = kl_divergence(&a, &b, 0.6, 0.2).unwrap();
            prop_assert!((kl - kl_divergence(&a.flipped(), &b, 0.6, 0.2).unwrap()).abs() < 1e-12);
            prop_assert!(kl >= 0.0);
            prop_assert_eq!(kl == 0.0, correlation(&a, &b).unwrap() == 21);
        }

        #[test]
        fn ratio_is_likelihood_difference(a in labels_strategy(6), b in labels_strategy(6), seed in 0u64..1000) {
            let params = CbmParams::new(6, 0.5, 0.15).unwrap();
            let g = sample_cbm(&params, &a, seed).unwrap();
            let r = log_likelihood_ratio(&g, &a, &b, 0.5, 0.15).unwrap();
            let d = log_likelihood(&g, &a, 0.5, 0.15).unwrap() - log_likelihood(&g, &b, 0.5, 0.15).unwrap();
            prop_assert!((r - d).abs() < 1e-10);
        }

        #[test]
        fn correlation_bounded(a in labels_strategy(9), b in labels_strategy(9)) {
            let c = correlation(&a, &b).unwrap();
            prop_assert!(c.abs() <= 36);
        }
    }
}
