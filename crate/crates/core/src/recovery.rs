//! Community recovery from one or more ternary graphs.
//!
//! All estimators work on `M = Σₜ Aₜ` and target `max σᵀMσ`:
//!
//! * [`sdp_estimate`] solves the relaxation `max tr(MY), Y ⪰ 0, Yᵢᵢ = 1`
//!   through a rank-r factorization `Y = VVᵀ` with unit-norm rows, using
//!   projected gradient ascent, and rounds with the sign of the top
//!   eigenvector of `VVᵀ`;
//! * [`spectral_estimate`] takes the sign of the leading eigenvector of `M`;
//! * [`ml_exhaustive`] enumerates every canonical labeling (small `n` only).
//!
//! Outputs are canonical (first label +1). Ties between candidate labelings
//! are broken towards the lexicographically smallest one.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::model::{LabelVector, TernaryGraph};
use crate::rng::{self, derive_seed, domain};

/// Largest `n` accepted by [`ml_exhaustive`].
pub const EXHAUSTIVE_MAX_N: usize = 16;

/// Seed used by [`spectral_estimate`], which takes none.
pub const SPECTRAL_SEED: u64 = 0x5eed_5eed;

/// Dense symmetric weight matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    /// `Σₜ Aₜ`.
    pub fn from_graphs(graphs: &[TernaryGraph]) -> Result<Self> {
        let first = graphs.first().ok_or(Error::EmptyInput)?;
        let n = first.n();
        let mut data = vec![0.0; n * n];
        for g in graphs {
            if g.n() != n {
                return Err(Error::DimensionMismatch { expected: n, found: g.n() });
            }
            for (i, j, w) in g.edges() {
                data[i * n + j] += f64::from(w);
                data[j * n + i] += f64::from(w);
            }
        }
        Ok(WeightMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Max absolute row sum (the induced 1- and ∞-norm for symmetric `M`).
    pub fn max_row_abs_sum(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// `σᵀMσ`.
    pub fn quadratic_form(&self, labels: &LabelVector) -> Result<f64> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: labels.len() });
        }
        let s = labels.as_slice();
        Ok((0..self.n)
            .map(|i| f64::from(s[i]) * self.row(i).iter().zip(s).map(|(m, &sj)| m * f64::from(sj)).sum::<f64>())
            .sum())
    }

    /// `out = M · X` for `X` with `cols` columns, both row-major.
    fn mul_dense(&self, x: &[f64], cols: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let dst = &mut out[i * cols..(i + 1) * cols];
            for (j, &m) in self.row(i).iter().enumerate() {
                if m != 0.0 {
                    let src = &x[j * cols..(j + 1) * cols];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += m * s;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StepRule {
    /// Constant step; a step that would lower the objective ends the run.
    Fixed(f64),
    /// Armijo backtracking from an adaptively grown trial step.
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SdpConfig {
    /// Factorization rank; `None` means `⌈√(2n)⌉`.
    pub rank: Option<usize>,
    pub max_iters: usize,
    /// Stop once `‖grad‖_F ≤ grad_tol · (1 + |objective|)`.
    pub grad_tol: f64,
    pub step_rule: StepRule,
    pub restarts: usize,
}

impl Default for SdpConfig {
    fn default() -> Self {
        SdpConfig { rank: None, max_iters: 500, grad_tol: 1e-3, step_rule: StepRule::Backtracking, restarts: 2 }
    }
}

impl SdpConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.rank {
            if r < 2 {
                return Err(Error::OutOfRange { name: "rank", value: r as f64 });
            }
        }
        if self.grad_tol.is_nan() || self.grad_tol <= 0.0 {
            return Err(Error::OutOfRange { name: "grad_tol", value: self.grad_tol });
        }
        if let StepRule::Fixed(step) = self.step_rule {
            if step.is_nan() || step <= 0.0 {
                return Err(Error::OutOfRange { name: "step", value: step });
            }
        }
        if self.restarts == 0 {
            return Err(Error::OutOfRange { name: "restarts", value: 0.0 });
        }
        Ok(())
    }

    pub fn rank_for(&self, n: usize) -> usize {
        self.rank.unwrap_or_else(|| (math::ceil(math::sqrt(2.0 * n as f64)) as usize).max(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SolverStatus {
    Converged,
    MaxIters,
    /// All-zero input; labels are random.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub labels: LabelVector,
    /// `σ̂ᵀMσ̂` at the returned labels.
    pub objective: f64,
    pub solver_status: SolverStatus,
}

/// Which estimator to run; used wherever an algorithm is parameterized by
/// "a recovery operation".
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Estimator {
    Sdp(SdpConfig),
    Spectral,
    Exhaustive,
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Sdp(SdpConfig::default())
    }
}

impl Estimator {
    pub fn estimate(&self, graphs: &[TernaryGraph], seed: u64) -> Result<RecoveryResult> {
        match self {
            Estimator::Sdp(cfg) => sdp_estimate(graphs, cfg, seed),
            Estimator::Spectral => spectral_estimate_seeded(graphs, seed),
            Estimator::Exhaustive => {
                let m = WeightMatrix::from_graphs(graphs)?;
                let labels = ml_exhaustive_matrix(&m)?;
                let objective = m.quadratic_form(&labels)?;
                Ok(RecoveryResult { labels, objective, solver_status: SolverStatus::Converged })
            }
        }
    }

    /// Labels only, for a single graph.
    pub fn labels(&self, graph: &TernaryGraph, seed: u64) -> Result<LabelVector> {
        Ok(self.estimate(core::slice::from_ref(graph), seed)?.labels)
    }
}

/// Raw output of one factorized solve.
#[derive(Debug, Clone)]
pub struct Factorization {
    /// `n × rank`, row-major, unit rows.
    pub v: Vec<f64>,
    pub rank: usize,
    pub objective: f64,
    /// Objective after every accepted step, starting from the initial point.
    pub trace: Vec<f64>,
    pub status: SolverStatus,
}

fn normalize_rows(v: &mut [f64], rank: usize) {
    for row in v.chunks_mut(rank) {
        let norm = math::sqrt(row.iter().map(|x| x * x).sum::<f64>());
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        } else {
            row[0] = 1.0;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected gradient ascent on `tr(M VVᵀ)` over matrices with unit rows.
pub fn solve_factorized(m: &WeightMatrix, cfg: &SdpConfig, seed: u64) -> Result<Factorization> {
    cfg.validate()?;
    let n = m.n();
    let rank = cfg.rank_for(n);
    let mut rng = rng::stream_rng(seed, domain::SOLVER);
    let mut v: Vec<f64> = (0..n * rank).map(|_| rng::standard_normal(&mut rng)).collect();
    normalize_rows(&mut v, rank);

    let mut mv = vec![0.0; n * rank];
    m.mul_dense(&v, rank, &mut mv);
    let mut objective = dot(&v, &mv);
    let mut trace = vec![objective];
    let mut grad = vec![0.0; n * rank];
    let mut trial = vec![0.0; n * rank];
    let mut trial_mv = vec![0.0; n * rank];
    let scale = m.max_row_abs_sum().max(1.0);
    let mut step = match cfg.step_rule {
        StepRule::Fixed(s) => s,
        StepRule::Backtracking => 1.0 / scale,
    };
    let mut status = SolverStatus::MaxIters;

    for _ in 0..cfg.max_iters {
        // Riemannian gradient of f(V) = tr(VᵀMV): 2(MV)ᵢ projected off vᵢ
        let mut grad_sq = 0.0;
        for i in 0..n {
            let vi = &v[i * rank..(i + 1) * rank];
            let gi = &mv[i * rank..(i + 1) * rank];
            let radial = dot(vi, gi);
            for k in 0..rank {
                let g = 2.0 * (gi[k] - radial * vi[k]);
                grad[i * rank + k] = g;
                grad_sq += g * g;
            }
        }
        if math::sqrt(grad_sq) <= cfg.grad_tol * (1.0 + objective.abs()) {
            status = SolverStatus::Converged;
            break;
        }

        let mut accepted = false;
        let max_halvings = if matches!(cfg.step_rule, StepRule::Backtracking) { 40 } else { 1 };
        for _ in 0..max_halvings {
            for ((t, x), g) in trial.iter_mut().zip(&v).zip(&grad) {
                *t = x + step * g;
            }
            normalize_rows(&mut trial, rank);
            m.mul_dense(&trial, rank, &mut trial_mv);
            let candidate = dot(&trial, &trial_mv);
            let sufficient = match cfg.step_rule {
                StepRule::Backtracking => objective + 1e-4 * step * grad_sq,
                StepRule::Fixed(_) => objective,
            };
            if candidate >= sufficient {
                core::mem::swap(&mut v, &mut trial);
                core::mem::swap(&mut mv, &mut trial_mv);
                objective = candidate;
                trace.push(objective);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent direction at numerical resolution.
            status = match cfg.step_rule {
                StepRule::Backtracking => SolverStatus::Converged,
                StepRule::Fixed(_) => SolverStatus::MaxIters,
            };
            break;
        }
        if let StepRule::Backtracking = cfg.step_rule {
            step *= 2.0;
        }
    }
    Ok(Factorization { v, rank, objective, trace, status })
}

/// Sign of the top eigenvector of `VVᵀ`, by power iteration on `V(Vᵀx)`.
pub fn round_factorization(f: &Factorization, seed: u64) -> LabelVector {
    let rank = f.rank;
    let n = f.v.len() / rank;
    let mut rng = rng::stream_rng(derive_seed(seed, 1), domain::SOLVER);
    let mut x: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut rng)).collect();
    let mut y = vec![0.0; rank];
    for _ in 0..1000 {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in f.v.chunks(rank).enumerate() {
            for (yk, vk) in y.iter_mut().zip(row) {
                *yk += vk * x[i];
            }
        }
        let next: Vec<f64> = f.v.chunks(rank).map(|row| dot(row, &y)).collect();
        let norm = math::sqrt(dot(&next, &next));
        if norm == 0.0 {
            break;
        }
        let next: Vec<f64> = next.into_iter().map(|v| v / norm).collect();
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if change < 1e-12 {
            break;
        }
    }
    signs(&x)
}

fn signs(x: &[f64]) -> LabelVector {
    let raw: Vec<i8> = x.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect();
    LabelVector::new(raw).expect("signs are ±1").canonical()
}

fn degenerate(n: usize, seed: u64) -> RecoveryResult {
    RecoveryResult {
        labels: LabelVector::random_canonical(n, seed),
        objective: 0.0,
        solver_status: SolverStatus::Degenerate,
    }
}

/// Keeps the larger objective, then the lexicographically smaller labels.
fn better(candidate: &RecoveryResult, incumbent: &RecoveryResult) -> bool {
    candidate.objective > incumbent.objective
        || (candidate.objective == incumbent.objective && candidate.labels < incumbent.labels)
}

/// Semidefinite-relaxation estimate from the summed graphs.
pub fn sdp_estimate(graphs: &[TernaryGraph], cfg: &SdpConfig, seed: u64) -> Result<RecoveryResult> {
    cfg.validate()?;
    let m = WeightMatrix::from_graphs(graphs)?;
    if m.is_zero() {
        return Ok(degenerate(m.n(), seed));
    }
    let mut best: Option<RecoveryResult> = None;
    for restart in 0..cfg.restarts {
        let restart_seed = derive_seed(seed, restart as u64);
        let f = solve_factorized(&m, cfg, restart_seed)?;
        let labels = round_factorization(&f, restart_seed);
        let objective = m.quadratic_form(&labels)?;
        let candidate = RecoveryResult { labels, objective, solver_status: f.status };
        if best.as_ref().is_none_or(|b| better(&candidate, b)) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Leading-eigenvector estimate of `M = Σₜ Aₜ` with a fixed start vector.
pub fn spectral_estimate(graphs: &[TernaryGraph]) -> Result<RecoveryResult> {
    spectral_estimate_seeded(graphs, SPECTRAL_SEED)
}

/// As [`spectral_estimate`] with the start vector (and degenerate fallback
/// labels) drawn from `seed`.
pub fn spectral_estimate_seeded(graphs: &[TernaryGraph], seed: u64) -> Result<RecoveryResult> {
    let m = WeightMatrix::from_graphs(graphs)?;
    let n = m.n();
    if m.is_zero() {
        return Ok(degenerate(n, seed));
    }
    // M + sI is positive semidefinite and shares eigenvectors with M.
    let shift = m.max_row_abs_sum();
    let mut rng = rng::stream_rng(seed, domain::SOLVER);
    let mut x: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut rng)).collect();
    let norm = math::sqrt(dot(&x, &x));
    x.iter_mut().for_each(|v| *v /= norm);
    let mut next = vec![0.0; n];
    let mut status = SolverStatus::MaxIters;
    for _ in 0..20_000 {
        m.mul_dense(&x, 1, &mut next);
        for (y, xi) in next.iter_mut().zip(&x) {
            *y += shift * xi;
        }
        let norm = math::sqrt(dot(&next, &next));
        next.iter_mut().for_each(|v| *v /= norm);
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        core::mem::swap(&mut x, &mut next);
        if change < 1e-10 {
            status = SolverStatus::Converged;
            break;
        }
    }
    let labels = signs(&x);
    let objective = m.quadratic_form(&labels)?;
    Ok(RecoveryResult { labels, objective, solver_status: status })
}

/// Exact maximum-likelihood labels of one graph.
pub fn ml_exhaustive(graph: &TernaryGraph) -> Result<LabelVector> {
    ml_exhaustive_matrix(&WeightMatrix::from_graphs(core::slice::from_ref(graph))?)
}

/// `argmax σᵀMσ` over canonical labelings, lexicographically smallest on ties.
pub fn ml_exhaustive_matrix(m: &WeightMatrix) -> Result<LabelVector> {
    let n = m.n();
    if n > EXHAUSTIVE_MAX_N {
        return Err(Error::TooLarge { n, max: EXHAUSTIVE_MAX_N });
    }
    if n == 0 {
        return LabelVector::new(Vec::new());
    }
    let count = 1u64 << (n - 1);
    let mut best_index = 0u64;
    let mut best_value = f64::NEG_INFINITY;
    let mut s = vec![0.0f64; n];
    // Increasing index is increasing lexicographic order, so the first
    // maximizer found is the tie-break winner.
    for index in 0..count {
        s[0] = 1.0;
        for (k, sk) in s.iter_mut().enumerate().skip(1) {
            *sk = if (index >> (n - 1 - k)) & 1 == 1 { 1.0 } else { -1.0 };
        }
        let mut value = 0.0;
        for i in 0..n {
            let row = m.row(i);
            let mut acc = 0.0;
            for j in i + 1..n {
                acc += row[j] * s[j];
            }
            value += s[i] * acc;
        }
        if value > best_value {
            best_value = value;
            best_index = index;
        }
    }
    Ok(LabelVector::from_canonical_index(n, best_index))
}
