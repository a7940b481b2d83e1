//! Central edge-DP release of community labels.
//!
//! [`stability_release`] gates the non-private estimate on a noisy distance
//! to instability; [`subsample_stability_release`] replaces that distance by
//! the mode margin of estimates over edge-subsampled copies of the graph.
//! A refused release (BOTTOM) still carries labels, drawn uniformly over the
//! canonical labelings, so downstream code can always proceed.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::ldp::PrivacyBudget;
use crate::math;
use crate::model::{LabelVector, TernaryGraph};
use crate::recovery::Estimator;
use crate::rng::{self, derive_seed, domain, IndexedStream};

/// Largest `n` for [`distance_to_instability`].
pub const EXACT_INSTABILITY_MAX_N: usize = 12;

/// Default number of subsampled graphs allowed before truncation.
pub const DEFAULT_MAX_SUBSAMPLES: usize = 2_000;

/// One draw of `Lap(0, scale)`.
pub fn laplace_sample(scale: f64, seed: u64) -> Result<f64> {
    check_range("scale", scale, scale > 0.0)?;
    Ok(rng::laplace(&mut rng::stream_rng(seed, domain::LAPLACE), scale))
}

/// `⌈ln n⌉`, at least 1.
pub fn default_cap(n: usize) -> usize {
    (math::ceil(math::ln(n.max(2) as f64)) as usize).max(1)
}

/// Distance to instability by exhaustive search over modified graphs.
///
/// A modification sets one unordered pair to one of its two other values.
/// Returns `min(m - 1, cap)` where `m` is the fewest modifications after which
/// `estimate` disagrees (up to a global flip) with its output on `graph`.
/// `estimate` must be deterministic.
pub fn distance_to_instability_with<F>(graph: &TernaryGraph, cap: usize, mut estimate: F) -> Result<usize>
where
    F: FnMut(&TernaryGraph) -> Result<LabelVector>,
{
    let n = graph.n();
    if n > EXACT_INSTABILITY_MAX_N {
        return Err(Error::TooLarge { n, max: EXACT_INSTABILITY_MAX_N });
    }
    let base = estimate(graph)?;
    let pairs = graph.num_pairs();
    let mut work = graph.clone();
    for m in 1..=cap.min(pairs) {
        let mut chosen: Vec<usize> = (0..m).collect();
        loop {
            if flips_any(&mut work, graph, &chosen, 0, &base, &mut estimate)? {
                return Ok(m - 1);
            }
            if !next_combination(&mut chosen, pairs) {
                break;
            }
        }
    }
    Ok(cap)
}

/// Tries every assignment of alternative values to `chosen[depth..]`.
fn flips_any<F>(
    work: &mut TernaryGraph,
    original: &TernaryGraph,
    chosen: &[usize],
    depth: usize,
    base: &LabelVector,
    estimate: &mut F,
) -> Result<bool>
where
    F: FnMut(&TernaryGraph) -> Result<LabelVector>,
{
    if depth == chosen.len() {
        return Ok(!estimate(work)?.same_partition(base));
    }
    let k = chosen[depth];
    let old = original.upper()[k];
    for value in [-1i8, 0, 1] {
        if value == old {
            continue;
        }
        work.upper_mut()[k] = value;
        let hit = flips_any(work, original, chosen, depth + 1, base, estimate)?;
        work.upper_mut()[k] = old;
        if hit {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Advances to the next `k`-subset of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// [`distance_to_instability_with`] for a built-in estimator run at a fixed
/// seed.
pub fn distance_to_instability(graph: &TernaryGraph, estimator: &Estimator, cap: usize) -> Result<usize> {
    distance_to_instability_with(graph, cap, |g| estimator.labels(g, 0))
}

/// Approximate distance to instability for graphs too large to search.
///
/// Only single-node flips of `labels` are considered. Node `i` has margin
/// `mᵢ = Σⱼ σᵢσⱼAᵢⱼ`; flipping it lowers `σᵀAσ` by `4mᵢ` and each pair
/// modification closes at most 8 of that gap, so `⌈mᵢ/2⌉` modifications
/// (at least one) are needed to reach a tie. Not a certified bound.
pub fn local_margin_distance(graph: &TernaryGraph, labels: &LabelVector, cap: usize) -> Result<usize> {
    let n = graph.n();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: labels.len() });
    }
    let s = labels.as_slice();
    let mut margin = alloc::vec![0i64; n];
    for (i, j, w) in graph.edges() {
        let agree = i64::from(w * s[i] * s[j]);
        margin[i] += agree;
        margin[j] += agree;
    }
    let needed = margin.iter().map(|&m| if m <= 0 { 1 } else { ((m + 1) / 2) as usize }).min().unwrap_or(1);
    Ok((needed - 1).min(cap))
}

/// How the distance to instability is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InstabilityMode {
    /// Exhaustive search, `n ≤ 12`.
    Exact,
    /// [`local_margin_distance`].
    LocalMargin,
    /// Exact when feasible, local margin otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct StabilityConfig {
    /// Search radius; `None` means `⌈ln n⌉`.
    pub cap: Option<usize>,
    pub mode: InstabilityMode,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig { cap: None, mode: InstabilityMode::Auto }
    }
}

impl StabilityConfig {
    pub fn cap_for(&self, n: usize) -> usize {
        self.cap.unwrap_or_else(|| default_cap(n))
    }
}

/// Output of a stability-gated release.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StabilityRelease {
    /// The estimate when released, uniform random canonical labels otherwise.
    pub labels: LabelVector,
    /// Exact, approximate or subsampled distance before noise.
    pub distance: f64,
    pub noisy_distance: f64,
    pub released: bool,
}

impl StabilityRelease {
    /// `None` for BOTTOM.
    pub fn output(&self) -> Option<&LabelVector> {
        self.released.then_some(&self.labels)
    }
}

/// `ln(1/δ)/ε`.
pub fn release_threshold(budget: &PrivacyBudget) -> f64 {
    -math::ln(budget.delta) / budget.epsilon
}

fn check_delta(budget: &PrivacyBudget) -> Result<()> {
    check_range("epsilon", budget.epsilon, budget.epsilon > 0.0)?;
    check_range("delta", budget.delta, budget.delta > 0.0 && budget.delta < 1.0)
}

fn gate(labels: LabelVector, distance: f64, budget: &PrivacyBudget, seed: u64) -> StabilityRelease {
    let noise = rng::laplace(&mut rng::stream_rng(derive_seed(seed, 1), domain::LAPLACE), 1.0 / budget.epsilon);
    let noisy_distance = distance + noise;
    let released = noisy_distance > release_threshold(budget);
    let labels = if released { labels } else { LabelVector::random_canonical(labels.len(), derive_seed(seed, 2)) };
    StabilityRelease { labels, distance, noisy_distance, released }
}

/// Perturbation-stability release: `d̃ = d(A) + Lap(1/ε)`, release
/// `σ̂(A)` iff `d̃ > ln(1/δ)/ε`.
pub fn stability_release(
    graph: &TernaryGraph,
    budget: &PrivacyBudget,
    estimator: &Estimator,
    cfg: &StabilityConfig,
    seed: u64,
) -> Result<StabilityRelease> {
    check_delta(budget)?;
    let n = graph.n();
    let cap = cfg.cap_for(n);
    let estimator_seed = derive_seed(seed, 0);
    let labels = estimator.labels(graph, estimator_seed)?;
    let exact = match cfg.mode {
        InstabilityMode::Exact => true,
        InstabilityMode::LocalMargin => false,
        InstabilityMode::Auto => n <= EXACT_INSTABILITY_MAX_N,
    };
    let distance = if exact {
        distance_to_instability_with(graph, cap, |g| estimator.labels(g, estimator_seed))?
    } else {
        local_margin_distance(graph, &labels, cap)?
    };
    Ok(gate(labels, distance as f64, budget, seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SubsampleConfig {
    /// Upper limit on the number of subgraphs. Runs that hit it are not
    /// private at the stated budget.
    pub max_subsamples: Option<usize>,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig { max_subsamples: Some(DEFAULT_MAX_SUBSAMPLES) }
    }
}

/// `(q_s, m)` for a budget: `q_s = ε/(32 ln n)`, `m = ⌈ln(n/δ)/q_s²⌉`.
pub fn subsample_plan(n: usize, budget: &PrivacyBudget) -> Result<(f64, u64)> {
    check_delta(budget)?;
    if n < 3 {
        return Err(Error::OutOfRange { name: "n", value: n as f64 });
    }
    let nf = n as f64;
    let q = budget.epsilon / (32.0 * math::ln(nf));
    if q >= 1.0 {
        return Err(Error::OutOfRange { name: "q_s", value: q });
    }
    let m = math::ceil(math::ln(nf / budget.delta) / (q * q));
    Ok((q, m as u64))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SubsampleRelease {
    pub release: StabilityRelease,
    pub q_s: f64,
    /// `m` prescribed by the budget.
    pub planned: u64,
    /// Subgraphs actually estimated.
    pub used: u64,
    pub truncated: bool,
    /// Largest and second-largest histogram counts.
    pub top_counts: (u64, u64),
}

/// Keeps each pair of `graph` independently with probability `q`.
pub fn subsample_graph(graph: &TernaryGraph, q: f64, seed: u64) -> TernaryGraph {
    let mut out = graph.clone();
    let mut stream = IndexedStream::new(seed, domain::SUBSAMPLE);
    for (k, v) in out.upper_mut().iter_mut().enumerate() {
        if stream.uniform(k as u64) >= q {
            *v = 0;
        }
    }
    out
}

/// Canonical-label histogram; returns the mode (lexicographically smallest
/// on ties) and the two largest counts.
pub fn histogram_mode(estimates: &[LabelVector]) -> Option<(LabelVector, u64, u64)> {
    let mut hist: BTreeMap<LabelVector, u64> = BTreeMap::new();
    for e in estimates {
        *hist.entry(e.canonical()).or_insert(0) += 1;
    }
    let mut mode: Option<(&LabelVector, u64)> = None;
    let mut second = 0;
    for (labels, &count) in &hist {
        match mode {
            Some((_, best)) if count <= best => second = second.max(count),
            Some((_, best)) => {
                second = best;
                mode = Some((labels, count));
            }
            None => mode = Some((labels, count)),
        }
    }
    mode.map(|(l, c)| (l.clone(), c, second))
}

/// Subsampling-stability release. Subgraph `k` is drawn from
/// `derive_seed(seed, k + 16)` and estimated at the same seed.
pub fn subsample_stability_release(
    graph: &TernaryGraph,
    budget: &PrivacyBudget,
    estimator: &Estimator,
    cfg: &SubsampleConfig,
    seed: u64,
) -> Result<SubsampleRelease> {
    let (q, planned) = subsample_plan(graph.n(), budget)?;
    let used = match cfg.max_subsamples {
        Some(limit) if (limit as u64) < planned => {
            log::warn!(
                "subsample count truncated from {planned} to {limit}; release is not ({}, {})-private",
                budget.epsilon,
                budget.delta
            );
            limit.max(1) as u64
        }
        _ => planned,
    };
    let mut estimates = Vec::with_capacity(used as usize);
    for k in 0..used {
        let sub_seed = derive_seed(seed, k + 16);
        estimates.push(estimator.labels(&subsample_graph(graph, q, sub_seed), sub_seed)?);
    }
    let release = subsample_gate(&estimates, q, budget, seed)?;
    Ok(SubsampleRelease {
        top_counts: release.1,
        release: release.0,
        q_s: q,
        planned,
        used,
        truncated: used < planned,
    })
}

/// `d̂ = (count₍₁₎ - count₍₂₎)/(4·m·q_s) - 1` followed by the noisy gate.
pub fn subsample_gate(
    estimates: &[LabelVector],
    q: f64,
    budget: &PrivacyBudget,
    seed: u64,
) -> Result<(StabilityRelease, (u64, u64))> {
    check_delta(budget)?;
    let (mode, c1, c2) = histogram_mode(estimates).ok_or(Error::EmptyInput)?;
    let m = estimates.len() as f64;
    let d_hat = (c1 - c2) as f64 / (4.0 * m * q) - 1.0;
    Ok((gate(mode, d_hat, budget, seed), (c1, c2)))
}
