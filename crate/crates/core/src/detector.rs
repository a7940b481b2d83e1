//! Adaptive CUSUM detectors under local and central edge-DP.
//!
//! Every detector tracks `Sₜ = (Sₜ₋₁)⁺ + ℓₜ`, where `ℓₜ` is the log-likelihood
//! ratio of the new graph under the current post-change estimate `σ̂ₜ₋₁`
//! against `σ^pre`. The estimate is refreshed only after the increment is
//! taken, so `σ̂ₜ₋₁` never sees the sample it scores. Before any sample
//! `σ̂₀ = σ^pre`, which makes the first increment zero.
//!
//! `Sₜ` itself may be negative. [`DetectorState::stat`] holds `(Sₜ)⁺`, the
//! reflected CUSUM level, which crosses any `b > 0` exactly when `Sₜ` does.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::cdp::{stability_release, subsample_stability_release, StabilityConfig, StabilityRelease, SubsampleConfig};
use crate::error::{check_range, Error, Result};
use crate::ldp::{perturb_graph, PrivacyBudget};
use crate::math;
use crate::model::{
    clamp_zeta, flip_log_odds, log_likelihood, log_likelihood_ratio, mle_params, mle_params_pooled, LabelVector,
    TernaryGraph,
};
use crate::recovery::Estimator;
use crate::rng::{self, derive_seed, domain};

/// Bounds applied to a fitted `p̂` before it enters a likelihood.
pub const P_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DetectorMode {
    Ldp,
    Cdp,
    LdpAdaptive,
    CdpAdaptive,
}

impl DetectorMode {
    pub fn is_central(self) -> bool {
        matches!(self, DetectorMode::Cdp | DetectorMode::CdpAdaptive)
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, DetectorMode::LdpAdaptive | DetectorMode::CdpAdaptive)
    }
}

/// Label release used by the central detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CdpMechanism {
    Stability(StabilityConfig),
    Subsample(SubsampleConfig),
}

impl Default for CdpMechanism {
    fn default() -> Self {
        CdpMechanism::Stability(StabilityConfig::default())
    }
}

impl CdpMechanism {
    pub fn release(
        &self,
        graph: &TernaryGraph,
        budget: &PrivacyBudget,
        estimator: &Estimator,
        seed: u64,
    ) -> Result<StabilityRelease> {
        match self {
            CdpMechanism::Stability(cfg) => stability_release(graph, budget, estimator, cfg, seed),
            CdpMechanism::Subsample(cfg) => Ok(subsample_stability_release(graph, budget, estimator, cfg, seed)?.release),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DetectorConfig {
    pub estimator: Estimator,
    /// Number of most recent graphs summed for the estimate (`w`).
    pub window: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { estimator: Estimator::default(), window: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub mode: DetectorMode,
    /// `(Sₜ)⁺`.
    pub stat: f64,
    /// `Sₜ` as given by the recursion; may be negative.
    pub raw_stat: f64,
    /// `S̃ₜ = Sₜ + Lap(4C/ε)` for central modes, `stat` otherwise.
    pub noisy_stat: f64,
    pub last_increment: f64,
    pub t: u64,
    /// `σ̂ₜ` after the latest step, i.e. the estimate the next step uses.
    pub sigma_hat: LabelVector,
    pub buffer: VecDeque<TernaryGraph>,
    pub p_hat: f64,
    pub zeta_hat: f64,
    /// Steps whose parameter fit was degenerate and contributed zero.
    pub degenerate_steps: u64,
    /// Whether the latest central release was accepted.
    pub last_released: Option<bool>,
}

impl DetectorState {
    /// Fresh state with `σ̂₀ = σ^pre` and `(p̂, ζ̂)` at the given values.
    pub fn new(mode: DetectorMode, pre_labels: &LabelVector, p: f64, zeta: f64) -> Self {
        DetectorState {
            mode,
            stat: 0.0,
            raw_stat: 0.0,
            noisy_stat: 0.0,
            last_increment: 0.0,
            t: 0,
            sigma_hat: pre_labels.clone(),
            buffer: VecDeque::new(),
            p_hat: p,
            zeta_hat: zeta,
            degenerate_steps: 0,
            last_released: None,
        }
    }

    fn accumulate(&mut self, increment: f64) {
        self.last_increment = increment;
        self.raw_stat = self.raw_stat.max(0.0) + increment;
        self.stat = self.raw_stat.max(0.0);
        self.noisy_stat = self.stat;
        self.t += 1;
    }

    fn push(&mut self, graph: &TernaryGraph, window: usize) {
        self.buffer.push_back(graph.clone());
        while self.buffer.len() > window.max(1) {
            self.buffer.pop_front();
        }
    }

    fn window_graphs(&self) -> Vec<TernaryGraph> {
        self.buffer.iter().cloned().collect()
    }

    fn check(&self, graph: &TernaryGraph, pre_labels: &LabelVector) -> Result<()> {
        let n = self.sigma_hat.len();
        for found in [graph.n(), pre_labels.len()] {
            if found != n {
                return Err(Error::DimensionMismatch { expected: n, found });
            }
        }
        Ok(())
    }
}

/// Threshold data for the stopping times.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StoppingRule {
    pub b: f64,
    /// Randomized threshold `b̃` for central detectors.
    pub b_tilde: Option<f64>,
    /// Sensitivity `C = 2·ln((1-ζ)/ζ)`, when central.
    pub c: Option<f64>,
    /// `ε > 4C`, the regime where the central ARL bound applies.
    pub arl_guarantee: bool,
}

impl StoppingRule {
    pub fn ldp(b: f64) -> Result<Self> {
        check_range("b", b, b > 0.0)?;
        Ok(StoppingRule { b, b_tilde: None, c: None, arl_guarantee: true })
    }

    /// Draws `b̃ = b + Lap(2C/ε)`.
    pub fn cdp(b: f64, zeta: f64, epsilon: f64, seed: u64) -> Result<Self> {
        let b_tilde = cdp_threshold(b, zeta, epsilon, seed)?;
        let c = sensitivity(zeta)?;
        Ok(StoppingRule { b, b_tilde: Some(b_tilde), c: Some(c), arl_guarantee: epsilon > 4.0 * c })
    }
}

/// `Tₗ`: stop once `Sₜ ≥ b`.
pub fn ldp_stop(state: &DetectorState, rule: &StoppingRule) -> bool {
    state.stat >= rule.b
}

/// `T_C`: stop once `S̃ₜ ≥ b̃`.
pub fn cdp_stop(state: &DetectorState, rule: &StoppingRule) -> bool {
    state.noisy_stat >= rule.b_tilde.unwrap_or(rule.b)
}

/// Dispatches on the state's mode.
pub fn should_stop(state: &DetectorState, rule: &StoppingRule) -> bool {
    if state.mode.is_central() {
        cdp_stop(state, rule)
    } else {
        ldp_stop(state, rule)
    }
}

/// `C = 2·ln((1-ζ)/ζ)`, the largest change of a per-step log-likelihood
/// ratio when one pair of the graph changes.
pub fn sensitivity(zeta: f64) -> Result<f64> {
    check_range("zeta", zeta, zeta > 0.0 && zeta < 0.5)?;
    Ok(2.0 * flip_log_odds(zeta))
}

/// `b̃ = b + Lap(2C/ε)`.
pub fn cdp_threshold(b: f64, zeta: f64, epsilon: f64, seed: u64) -> Result<f64> {
    check_range("b", b, b > 0.0)?;
    check_range("epsilon", epsilon, epsilon > 0.0)?;
    let scale = 2.0 * sensitivity(zeta)? / epsilon;
    Ok(b + rng::laplace(&mut rng::stream_rng(seed, domain::LAPLACE), scale))
}

/// Threshold meeting ARL `γ` for the central detector,
/// `ln γ + ln((1-(2C/ε)²)/(1-(4C/ε)²))`; needs `ε > 4C`.
pub fn cdp_threshold_for_arl(gamma: f64, zeta: f64, epsilon: f64) -> Result<f64> {
    check_range("gamma", gamma, gamma > 1.0)?;
    check_range("epsilon", epsilon, epsilon > 0.0)?;
    let c = sensitivity(zeta)?;
    if epsilon <= 4.0 * c {
        return Err(Error::Infeasible("central ARL bound needs epsilon > 4C"));
    }
    let r2 = (2.0 * c / epsilon) * (2.0 * c / epsilon);
    let r4 = (4.0 * c / epsilon) * (4.0 * c / epsilon);
    Ok(math::ln(gamma) + math::ln((1.0 - r2) / (1.0 - r4)))
}

/// One step of the LDP detector on an already perturbed graph, scored at
/// the perturbed parameters `(p̃, ζ̃)`.
pub fn ldp_step(
    state: &mut DetectorState,
    perturbed: &TernaryGraph,
    pre_labels: &LabelVector,
    p_tilde: f64,
    zeta_tilde: f64,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<()> {
    state.check(perturbed, pre_labels)?;
    let increment = log_likelihood_ratio(perturbed, &state.sigma_hat, pre_labels, p_tilde, zeta_tilde)?;
    state.accumulate(increment);
    state.push(perturbed, cfg.window);
    state.sigma_hat = cfg.estimator.estimate(&state.window_graphs(), derive_seed(seed, 0))?.labels;
    Ok(())
}

/// One step of the CDP detector on a raw graph. The increment uses the
/// released `σ̂ₜ₋₁`; the statistic is published with `Lap(4C/ε)` noise and
/// the next estimate is released from this raw graph.
#[allow(clippy::too_many_arguments)]
pub fn cdp_step(
    state: &mut DetectorState,
    raw: &TernaryGraph,
    pre_labels: &LabelVector,
    p: f64,
    zeta: f64,
    budget: &PrivacyBudget,
    mechanism: &CdpMechanism,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<()> {
    state.check(raw, pre_labels)?;
    let c = sensitivity(zeta)?;
    let increment = log_likelihood_ratio(raw, &state.sigma_hat, pre_labels, p, zeta)?;
    state.accumulate(increment);
    let noise = rng::laplace(&mut rng::stream_rng(derive_seed(seed, 1), domain::LAPLACE), 4.0 * c / budget.epsilon);
    state.noisy_stat = state.raw_stat + noise;
    let release = mechanism.release(raw, budget, &cfg.estimator, derive_seed(seed, 2))?;
    state.last_released = Some(release.released);
    state.sigma_hat = release.labels;
    state.push(raw, 1);
    Ok(())
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(P_CLAMP, 1.0 - P_CLAMP)
}

/// Adaptive LDP step with post-change parameters fitted alongside the labels:
/// `ℓₜ = log Pr(Ãₜ; σ̂ₜ₋₁, p̂, ζ̂) - log Pr(Ãₜ; σ^pre, p_pre, ζ_pre)`.
/// `(p̂, ζ̂)` is the closed-form MLE at `σ̂` on the same window. A degenerate
/// fit (no revealed pairs) freezes the previous fit and the next increment
/// is zero.
pub fn adaptive_step_unknown_params(
    state: &mut DetectorState,
    graph: &TernaryGraph,
    pre_labels: &LabelVector,
    p_pre: f64,
    zeta_pre: f64,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<()> {
    state.check(graph, pre_labels)?;
    let increment = adaptive_increment(state, graph, pre_labels, p_pre, zeta_pre)?;
    state.accumulate(increment);
    state.push(graph, cfg.window);
    let window = state.window_graphs();
    let labels = cfg.estimator.estimate(&window, derive_seed(seed, 0))?.labels;
    refit(state, labels, &window);
    Ok(())
}

fn adaptive_increment(
    state: &mut DetectorState,
    graph: &TernaryGraph,
    pre_labels: &LabelVector,
    p_pre: f64,
    zeta_pre: f64,
) -> Result<f64> {
    if state.p_hat.is_nan() {
        state.degenerate_steps += 1;
        log::warn!("degenerate parameter fit at t = {}; increment set to 0", state.t + 1);
        return Ok(0.0);
    }
    let post = log_likelihood(graph, &state.sigma_hat, clamp_p(state.p_hat), clamp_zeta(state.zeta_hat))?;
    let pre = log_likelihood(graph, pre_labels, p_pre, zeta_pre)?;
    Ok(post - pre)
}

fn refit(state: &mut DetectorState, labels: LabelVector, window: &[TernaryGraph]) {
    match mle_params_pooled(window, &labels) {
        Ok(fit) if !fit.degenerate => {
            state.p_hat = fit.p_hat;
            state.zeta_hat = fit.zeta_hat;
        }
        // marks the next increment as skipped
        _ => state.p_hat = f64::NAN,
    }
    state.sigma_hat = labels;
}

/// Largest change of the per-pair term of the adaptive log-ratio when one
/// pair changes value, over all sign patterns of `σ̂` and `σ^pre` on the
/// pair. Reduces to `C` when both parameter sets coincide.
pub fn adaptive_sensitivity(p_hat: f64, zeta_hat: f64, p_pre: f64, zeta_pre: f64) -> f64 {
    let log_prob = |x: i8, sign: i8, p: f64, z: f64| -> f64 {
        if x == 0 {
            math::ln_1p(-p)
        } else if x == sign {
            math::ln(p) + math::ln_1p(-z)
        } else {
            math::ln(p) + math::ln(z)
        }
    };
    let mut worst: f64 = 0.0;
    for s_hat in [-1i8, 1] {
        for s_pre in [-1i8, 1] {
            let r: Vec<f64> = [-1i8, 0, 1]
                .iter()
                .map(|&x| log_prob(x, s_hat, p_hat, zeta_hat) - log_prob(x, s_pre, p_pre, zeta_pre))
                .collect();
            let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
            worst = worst.max(hi - lo);
        }
    }
    worst
}

/// Central counterpart of [`adaptive_step_unknown_params`]. Labels come from
/// the release mechanism, `(p̂, ζ̂)` are fitted at the released labels and
/// perturbed by `Lap(1/ε)` each, and the statistic noise is `Lap(4C'/ε)`
/// with `C'` from [`adaptive_sensitivity`] at the parameters in use.
#[allow(clippy::too_many_arguments)]
pub fn cdp_adaptive_step(
    state: &mut DetectorState,
    raw: &TernaryGraph,
    pre_labels: &LabelVector,
    p_pre: f64,
    zeta_pre: f64,
    budget: &PrivacyBudget,
    mechanism: &CdpMechanism,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<()> {
    state.check(raw, pre_labels)?;
    let skipped = state.p_hat.is_nan();
    let increment = adaptive_increment(state, raw, pre_labels, p_pre, zeta_pre)?;
    state.accumulate(increment);
    let c = if skipped {
        sensitivity(zeta_pre)?
    } else {
        adaptive_sensitivity(clamp_p(state.p_hat), clamp_zeta(state.zeta_hat), p_pre, zeta_pre)
    };
    let mut noise_rng = rng::stream_rng(derive_seed(seed, 1), domain::LAPLACE);
    state.noisy_stat = state.raw_stat + rng::laplace(&mut noise_rng, 4.0 * c / budget.epsilon);
    let release = mechanism.release(raw, budget, &cfg.estimator, derive_seed(seed, 2))?;
    state.last_released = Some(release.released);
    state.push(raw, 1);
    match mle_params(raw, &release.labels) {
        Ok(fit) if !fit.degenerate => {
            let scale = 1.0 / budget.epsilon;
            state.p_hat = fit.p_hat + rng::laplace(&mut noise_rng, scale);
            state.zeta_hat = clamp_zeta(fit.zeta_hat + rng::laplace(&mut noise_rng, scale));
        }
        _ => state.p_hat = f64::NAN,
    }
    state.sigma_hat = release.labels;
    Ok(())
}

/// Estimated pre-change model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PrechangeEstimate {
    pub labels: LabelVector,
    pub p_hat: f64,
    pub zeta_hat: f64,
    /// No revealed pairs in the historical graph.
    pub degenerate: bool,
    /// False when the central release returned BOTTOM.
    pub released: bool,
}

/// Pre-change estimation under LDP: perturb the historical graph, estimate
/// labels on it and fit `(p̂, ζ̂)` there. The fit therefore targets the
/// perturbed parameters `(p̃, ζ̃)`, which is what the LDP detector scores with.
pub fn estimate_prechange_ldp(
    historical: &TernaryGraph,
    epsilon: f64,
    estimator: &Estimator,
    seed: u64,
) -> Result<PrechangeEstimate> {
    let perturbed = perturb_graph(historical, epsilon, derive_seed(seed, 0))?;
    let labels = estimator.labels(&perturbed, derive_seed(seed, 1))?;
    let fit = mle_params(&perturbed, &labels)?;
    Ok(PrechangeEstimate {
        labels,
        p_hat: fit.p_hat,
        zeta_hat: fit.zeta_hat,
        degenerate: fit.degenerate,
        released: true,
    })
}

/// Pre-change estimation under CDP: labels through [`stability_release`],
/// `(p̂, ζ̂)` fitted on the raw graph at the non-private estimate, then each
/// perturbed by `Lap(1/ε)`. Only `ζ̂` is clamped afterwards.
pub fn estimate_prechange_cdp(
    historical: &TernaryGraph,
    budget: &PrivacyBudget,
    estimator: &Estimator,
    stability: &StabilityConfig,
    seed: u64,
) -> Result<PrechangeEstimate> {
    let release = stability_release(historical, budget, estimator, stability, derive_seed(seed, 0))?;
    // same estimator seed as inside the release, so this is σ̂(A₀)
    let own = estimator.labels(historical, derive_seed(derive_seed(seed, 0), 0))?;
    let fit = mle_params(historical, &own)?;
    let mut noise = rng::stream_rng(derive_seed(seed, 1), domain::LAPLACE);
    let scale = 1.0 / budget.epsilon;
    let p_hat = fit.p_hat + rng::laplace(&mut noise, scale);
    let zeta_hat = clamp_zeta(fit.zeta_hat + rng::laplace(&mut noise, scale));
    Ok(PrechangeEstimate {
        labels: release.labels,
        p_hat,
        zeta_hat,
        degenerate: fit.degenerate,
        released: release.released,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldp::perturbed_params;
    use crate::model::{kl_divergence, sample_cbm, CbmParams};
    use crate::recovery::SdpConfig;

    fn setup(n: usize) -> (LabelVector, LabelVector, CbmParams) {
        let pre = LabelVector::balanced(n);
        let post = pre.with_flipped_nodes(&[0, n - 1]).unwrap();
        (pre, post, CbmParams::new(n, 0.5, 0.1).unwrap())
    }

    #[test]
    fn first_increment_is_zero_and_stat_nonnegative() {
        let (pre, post, params) = setup(20);
        let cfg = DetectorConfig { estimator: Estimator::Spectral, window: 1 };
        let (pt, zt) = perturbed_params(params.p(), params.zeta(), 1.0).unwrap();
        let mut state = DetectorState::new(DetectorMode::Ldp, &pre, pt, zt);
        for t in 0..30u64 {
            let truth = if t % 2 == 0 { &pre } else { &post };
            let g = sample_cbm(&params, truth, t).unwrap();
            let noisy = perturb_graph(&g, 1.0, t + 100).unwrap();
            ldp_step(&mut state, &noisy, &pre, pt, zt, &cfg, t).unwrap();
            if t == 0 {
                assert_eq!(state.last_increment, 0.0);
            }
            assert!(state.stat >= 0.0);
            assert_eq!(state.stat, state.raw_stat.max(0.0));
        }
        assert_eq!(state.t, 30);
    }

    #[test]
    fn stopping_is_inclusive() {
        let pre = LabelVector::balanced(4);
        let mut state = DetectorState::new(DetectorMode::Ldp, &pre, 0.5, 0.1);
        let rule = StoppingRule::ldp(2.0).unwrap();
        assert!(!ldp_stop(&state, &rule));
        state.stat = 2.0;
        assert!(ldp_stop(&state, &rule));
        assert!(StoppingRule::ldp(0.0).is_err());
    }

    #[test]
    fn sensitivity_value() {
        assert!((sensitivity(0.1).unwrap() - 4.39445).abs() < 1e-5);
        assert!((sensitivity(0.1).unwrap() - 2.0 * 9f64.ln()).abs() < 1e-14);
        assert!(sensitivity(0.5).is_err());
        let c = sensitivity(0.2).unwrap();
        assert!((adaptive_sensitivity(0.3, 0.2, 0.3, 0.2) - c).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_bound_exhaustive_n4() {
        // every graph on 4 nodes, every single-pair change, every label pair
        for zeta in [0.05, 0.1, 0.25] {
            let c = sensitivity(zeta).unwrap();
            let mut worst: f64 = 0.0;
            for code in 0..729u32 {
                let upper: Vec<i8> = (0..6).map(|k| (code / 3u32.pow(k) % 3) as i8 - 1).collect();
                let g = TernaryGraph::from_upper(4, upper.clone()).unwrap();
                for k in 0..6 {
                    for v in [-1i8, 0, 1] {
                        if v == upper[k] {
                            continue;
                        }
                        let mut u2 = upper.clone();
                        u2[k] = v;
                        let g2 = TernaryGraph::from_upper(4, u2).unwrap();
                        for a in 0..8 {
                            for b in 0..8 {
                                let la = LabelVector::from_canonical_index(4, a);
                                let lb = LabelVector::from_canonical_index(4, b);
                                let d = log_likelihood_ratio(&g, &la, &lb, 0.5, zeta).unwrap()
                                    - log_likelihood_ratio(&g2, &la, &lb, 0.5, zeta).unwrap();
                                worst = worst.max(d.abs());
                            }
                        }
                    }
                }
            }
            assert!(worst <= c + 1e-12);
            assert!((worst - c).abs() < 1e-12, "bound is attained");
        }
    }

    #[test]
    fn cdp_threshold_mean_and_reproducible() {
        let scale = 2.0 * sensitivity(0.1).unwrap() / 40.0;
        let draws = 100_000;
        let mean = (0..draws).map(|k| cdp_threshold(3.0, 0.1, 40.0, derive_seed(5, k)).unwrap()).sum::<f64>()
            / draws as f64;
        assert!((mean - 3.0).abs() < 0.01 * scale * 2.0);
        assert_eq!(cdp_threshold(3.0, 0.1, 40.0, 9).unwrap(), cdp_threshold(3.0, 0.1, 40.0, 9).unwrap());
    }

    #[test]
    fn cdp_threshold_helper() {
        let c = sensitivity(0.1).unwrap();
        let b = cdp_threshold_for_arl(100.0, 0.1, 40.0).unwrap();
        let r2 = (2.0 * c / 40.0f64).powi(2);
        let r4 = (4.0 * c / 40.0f64).powi(2);
        assert!((b - (100f64.ln() + ((1.0 - r2) / (1.0 - r4)).ln())).abs() < 1e-12);
        assert!(b > 100f64.ln());
        assert!(cdp_threshold_for_arl(100.0, 0.1, 4.0 * c).is_err());
        assert!(!StoppingRule::cdp(3.0, 0.1, 4.0 * c, 1).unwrap().arl_guarantee);
    }

    #[test]
    fn known_post_labels_give_kl_increment() {
        let n = 20;
        let (pre, post, params) = setup(n);
        let (pt, zt) = perturbed_params(params.p(), params.zeta(), 1.5).unwrap();
        let steps = 10_000u64;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for t in 0..steps {
            let g = perturb_graph(&sample_cbm(&params, &post, t).unwrap(), 1.5, t + 1_000_000).unwrap();
            let x = log_likelihood_ratio(&g, &post, &pre, pt, zt).unwrap();
            sum += x;
            sq += x * x;
        }
        let mean = sum / steps as f64;
        let sd = (sq / steps as f64 - mean * mean).sqrt();
        let kl = kl_divergence(&pre, &post, pt, zt).unwrap();
        assert!((mean - kl).abs() < 4.0 * sd / (steps as f64).sqrt(), "{mean} vs {kl}");
    }

    #[test]
    fn no_change_stream_stays_low() {
        let (pre, _, params) = setup(30);
        let (pt, zt) = perturbed_params(params.p(), params.zeta(), 3.0).unwrap();
        let cfg = DetectorConfig { estimator: Estimator::Spectral, window: 1 };
        let mut state = DetectorState::new(DetectorMode::Ldp, &pre, pt, zt);
        let mut positive = 0;
        for t in 0..200u64 {
            let g = perturb_graph(&sample_cbm(&params, &pre, t).unwrap(), 3.0, t + 7_000).unwrap();
            ldp_step(&mut state, &g, &pre, pt, zt, &cfg, t).unwrap();
            if state.last_increment > 0.0 {
                positive += 1;
            }
        }
        assert!(positive < 20, "{positive}");
    }

    #[test]
    fn estimate_ignores_current_sample() {
        // Replacing the scored sample must not change the increment's labels.
        let (pre, post, params) = setup(16);
        let cfg = DetectorConfig { estimator: Estimator::Spectral, window: 2 };
        let mut a = DetectorState::new(DetectorMode::Ldp, &pre, 0.5, 0.1);
        for t in 0..3u64 {
            ldp_step(&mut a, &sample_cbm(&params, &post, t).unwrap(), &pre, 0.5, 0.1, &cfg, t).unwrap();
        }
        let mut b = a.clone();
        let sigma_before = a.sigma_hat.clone();
        ldp_step(&mut a, &sample_cbm(&params, &post, 50).unwrap(), &pre, 0.5, 0.1, &cfg, 3).unwrap();
        ldp_step(&mut b, &sample_cbm(&params, &pre, 51).unwrap(), &pre, 0.5, 0.1, &cfg, 3).unwrap();
        let g = sample_cbm(&params, &post, 50).unwrap();
        let expected = log_likelihood_ratio(&g, &sigma_before, &pre, 0.5, 0.1).unwrap();
        assert_eq!(a.last_increment, expected);
        assert_eq!(a.buffer.len(), 2);
    }

    #[test]
    fn dimension_mismatch() {
        let pre = LabelVector::balanced(6);
        let mut s = DetectorState::new(DetectorMode::Ldp, &pre, 0.5, 0.1);
        let cfg = DetectorConfig::default();
        assert!(ldp_step(&mut s, &TernaryGraph::empty(5), &pre, 0.5, 0.1, &cfg, 0).is_err());
    }

    #[test]
    fn cdp_shadow_matches_ldp_recursion() {
        let (pre, post, params) = setup(10);
        let budget = PrivacyBudget::new(2.0, 0.01).unwrap();
        let cfg = DetectorConfig { estimator: Estimator::Exhaustive, window: 1 };
        let mech = CdpMechanism::Stability(StabilityConfig { cap: Some(1), mode: crate::cdp::InstabilityMode::Exact });
        let mut state = DetectorState::new(DetectorMode::Cdp, &pre, params.p(), params.zeta());
        let mut shadow = 0.0f64;
        let mut prev_sigma = pre.clone();
        for t in 0..8u64 {
            let g = sample_cbm(&params, &post, t).unwrap();
            cdp_step(&mut state, &g, &pre, params.p(), params.zeta(), &budget, &mech, &cfg, t).unwrap();
            shadow = shadow.max(0.0) + log_likelihood_ratio(&g, &prev_sigma, &pre, params.p(), params.zeta()).unwrap();
            assert!((state.raw_stat - shadow).abs() < 1e-9);
            prev_sigma = state.sigma_hat.clone();
            assert!(state.last_released.is_some());
        }
    }

    #[test]
    fn adaptive_matches_fixed_when_params_known() {
        let (pre, post, params) = setup(20);
        let cfg = DetectorConfig { estimator: Estimator::Sdp(SdpConfig::default()), window: 1 };
        let mut fixed = DetectorState::new(DetectorMode::Ldp, &pre, params.p(), params.zeta());
        let mut adaptive = DetectorState::new(DetectorMode::LdpAdaptive, &pre, params.p(), params.zeta());
        for t in 0..20u64 {
            let g = sample_cbm(&params, &post, t).unwrap();
            ldp_step(&mut fixed, &g, &pre, params.p(), params.zeta(), &cfg, t).unwrap();
            adaptive_step_unknown_params(&mut adaptive, &g, &pre, params.p(), params.zeta(), &cfg, t).unwrap();
            assert_eq!(fixed.sigma_hat, adaptive.sigma_hat);
            assert!(adaptive.stat >= 0.0);
        }
        let ratio = adaptive.raw_stat / fixed.raw_stat;
        assert!((0.7..1.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn adaptive_degenerate_fit_skips() {
        let pre = LabelVector::balanced(6);
        let cfg = DetectorConfig { estimator: Estimator::Spectral, window: 1 };
        let mut s = DetectorState::new(DetectorMode::LdpAdaptive, &pre, 0.5, 0.1);
        let empty = TernaryGraph::empty(6);
        adaptive_step_unknown_params(&mut s, &empty, &pre, 0.5, 0.1, &cfg, 0).unwrap();
        assert!(s.p_hat.is_nan());
        adaptive_step_unknown_params(&mut s, &empty, &pre, 0.5, 0.1, &cfg, 1).unwrap();
        assert_eq!(s.degenerate_steps, 1);
        assert_eq!(s.last_increment, 0.0);
    }

    #[test]
    fn prechange_ldp_recovers_dense_graph() {
        let n = 40;
        let truth = LabelVector::balanced(n);
        let g = sample_cbm(&CbmParams::new(n, 1.0, 1e-9).unwrap(), &truth, 1).unwrap();
        let est = estimate_prechange_ldp(&g, 8.0, &Estimator::default(), 3).unwrap();
        assert_eq!(est.labels, truth.canonical());
        let (pt, _) = perturbed_params(1.0, 1e-9, 8.0).unwrap();
        assert!((est.p_hat - pt).abs() < 2.0 / (g.num_pairs() as f64).sqrt());
        assert!(est.zeta_hat >= 1e-6 && est.zeta_hat <= 0.5 - 1e-6);
        // huge ε: exactly the non-private MLE
        let plain = estimate_prechange_ldp(&g, 800.0, &Estimator::default(), 3).unwrap();
        let direct = mle_params(&g, &truth).unwrap();
        assert_eq!((plain.p_hat, plain.zeta_hat), (direct.p_hat, direct.zeta_hat));
    }

    #[test]
    fn prechange_cdp_noise_scale() {
        let n = 6;
        let truth = LabelVector::parse("+++---").unwrap();
        let g = sample_cbm(&CbmParams::new(n, 1.0, 1e-9).unwrap(), &truth, 1).unwrap();
        let budget = PrivacyBudget::new(2.0, 0.2).unwrap();
        let stab = StabilityConfig { cap: Some(2), mode: crate::cdp::InstabilityMode::Exact };
        let trials = 2000u64;
        let mut abs_dev = 0.0;
        let mut released = 0;
        for s in 0..trials {
            let est = estimate_prechange_cdp(&g, &budget, &Estimator::Exhaustive, &stab, s).unwrap();
            abs_dev += (est.p_hat - 1.0).abs();
            if est.released {
                released += 1;
                assert_eq!(est.labels, truth);
            }
        }
        // E|Lap(1/ε)| = 1/ε
        assert!((abs_dev / trials as f64 - 0.5).abs() < 0.05);
        assert!(released > trials / 2);
    }
}
