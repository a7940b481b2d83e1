//! Closed-form thresholds, information numbers and bounds.
//!
//! Everything here is a pure function of its arguments. Calculators whose
//! value is undefined or infinite for some inputs return
//! [`Error::Infeasible`]; [`BoundReport`] turns that into a flagged entry.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::ldp::{ldp_recovery_margin, perturbed_params, signal_strength};
use crate::math;
use crate::model::{density_to_p, flip_log_odds, hamming, LabelVector};

/// KL information numbers before and after perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct InfoNumbers {
    pub i0: f64,
    pub i0_tilde: f64,
}

/// `C(n,2) - C_{pre,post}` through the Hamming distance `d`:
/// `C_{pre,post} = ((n - 2d)² - n)/2`.
pub fn disagreement_weight(pre: &LabelVector, post: &LabelVector) -> Result<f64> {
    let n = pre.len() as f64;
    let d = hamming(pre, post)? as f64;
    let c = ((n - 2.0 * d) * (n - 2.0 * d) - n) / 2.0;
    Ok(n * (n - 1.0) / 2.0 - c)
}

fn info_at(weight: f64, p: f64, zeta: f64) -> f64 {
    0.5 * flip_log_odds(zeta) * p * (1.0 - 2.0 * zeta) * weight
}

/// `I₀ = ½·ln((1-ζ)/ζ)·p(1-2ζ)·[C(n,2) - C_{pre,post}]`, and `Ĩ₀` as the same
/// expression at `(p̃, ζ̃)` (equal to `I₀` without `ε`).
pub fn info_numbers(
    pre: &LabelVector,
    post: &LabelVector,
    p: f64,
    zeta: f64,
    epsilon: Option<f64>,
) -> Result<InfoNumbers> {
    check_range("p", p, p > 0.0 && p <= 1.0)?;
    check_range("zeta", zeta, zeta > 0.0 && zeta < 0.5)?;
    let weight = disagreement_weight(pre, post)?;
    let i0 = info_at(weight, p, zeta);
    let i0_tilde = match epsilon {
        Some(eps) => {
            let (pt, zt) = perturbed_params(p, zeta, eps)?;
            info_at(weight, pt, zt)
        }
        None => i0,
    };
    Ok(InfoNumbers { i0, i0_tilde })
}

/// First-order detection delay `ln γ / I`.
pub fn wadd_prediction(gamma: f64, info: f64) -> Result<f64> {
    check_range("gamma", gamma, gamma > 1.0)?;
    check_range("info", info, info >= 0.0)?;
    if info == 0.0 {
        return Err(Error::Infeasible("zero information: delay is infinite"));
    }
    Ok(math::ln(gamma) / info)
}

/// `E∞[Tₗ] ≥ e^b`.
pub fn arl_lower_ldp(b: f64) -> Result<f64> {
    check_range("b", b, b > 0.0)?;
    Ok(math::exp(b))
}

/// `(1-(4C/ε)²)/(1-(2C/ε)²)` with `C = 2·ln((1-ζ)/ζ)`; defined for `ε > 4C`.
pub fn cdp_arl_factor(zeta: f64, epsilon: f64) -> Result<f64> {
    check_range("zeta", zeta, zeta > 0.0 && zeta < 0.5)?;
    check_range("epsilon", epsilon, epsilon > 0.0)?;
    let c = 2.0 * flip_log_odds(zeta);
    if epsilon <= 4.0 * c {
        return Err(Error::Infeasible("central ARL bound needs epsilon > 4C"));
    }
    let r4 = 4.0 * c / epsilon;
    let r2 = 2.0 * c / epsilon;
    Ok((1.0 - r4 * r4) / (1.0 - r2 * r2))
}

/// `E∞[T_C] ≥ factor·e^b`.
pub fn arl_lower_cdp(b: f64, zeta: f64, epsilon: f64) -> Result<f64> {
    Ok(cdp_arl_factor(zeta, epsilon)? * arl_lower_ldp(b)?)
}

/// `p' = 2p²ζ(ζ-1) - (p-1)² + 1`.
pub fn converse_p_prime(p: f64, zeta: f64) -> f64 {
    2.0 * p * p * zeta * (zeta - 1.0) - (p - 1.0) * (p - 1.0) + 1.0
}

/// Smallest `ε` compatible with exact recovery from one perturbed graph:
/// `½·ln[1 + (2 ln n - ln(8e))/(p'(4n - 32))]` at `p = a·ln(n)/n`.
pub fn converse_epsilon_lower(n: usize, a: f64, zeta: f64) -> Result<f64> {
    check_range("a", a, a > 0.0)?;
    converse_epsilon_lower_at(n, density_to_p(n, a), zeta)
}

/// [`converse_epsilon_lower`] at an explicit edge probability. With `p` held
/// fixed the bound decays like `ln(n)/n`; along `p = a·ln(n)/n` it tends to
/// the constant `½·ln(1 + 1/(4a))`.
pub fn converse_epsilon_lower_at(n: usize, p: f64, zeta: f64) -> Result<f64> {
    if n <= 8 {
        return Err(Error::OutOfRange { name: "n", value: n as f64 });
    }
    check_range("zeta", zeta, zeta > 0.0 && zeta < 0.5)?;
    check_range("p", p, p > 0.0 && p <= 1.0)?;
    let nf = n as f64;
    let pp = converse_p_prime(p, zeta);
    let num = 2.0 * math::ln(nf) - math::ln(8.0 * core::f64::consts::E);
    Ok(0.5 * math::ln_1p(num / (pp * (4.0 * nf - 32.0))))
}

/// Upper bound on the KL divergence after any ε-edge LDP mechanism:
/// `C_ε(e^ε-1)²p²(1-2ζ)²[C(n,2) - C_{pre,post}]`, `C_ε = min(4, e^{2ε})`.
pub fn ldp_kl_upper(pre: &LabelVector, post: &LabelVector, p: f64, zeta: f64, epsilon: f64) -> Result<f64> {
    check_range("p", p, p > 0.0 && p <= 1.0)?;
    check_range("zeta", zeta, zeta > 0.0 && zeta < 0.5)?;
    check_range("epsilon", epsilon, epsilon > 0.0)?;
    let weight = disagreement_weight(pre, post)?;
    let c_eps = if 2.0 * epsilon < math::ln(4.0) { math::exp(2.0 * epsilon) } else { 4.0 };
    let growth = math::exp_m1(epsilon);
    let signal = p * (1.0 - 2.0 * zeta);
    Ok(c_eps * growth * growth * signal * signal * weight)
}

/// `(e^{Rε}-1)/(e^{Rε}+1) = tanh(Rε/2)` with `R = 2^{C(n,2)}`, evaluated in
/// log space; saturates to 1 once `Rε > 40`.
pub fn cdp_test_ratio(n: usize, epsilon: f64) -> Result<f64> {
    check_range("epsilon", epsilon, epsilon > 0.0)?;
    let log_r_eps = math::pairs(n) as f64 * core::f64::consts::LN_2 + math::ln(epsilon);
    if log_r_eps > math::ln(40.0) {
        return Ok(1.0);
    }
    Ok(math::tanh(math::exp(log_r_eps) / 2.0))
}

/// Delay lower bound for detectors built on per-sample `(ε, δ)`-CDP tests:
/// `ln γ / [(1/α₀)·ratio²·(1 + 2δ/(e^ε-1))²·KL]`.
pub fn cdp_delay_lower(gamma: f64, epsilon: f64, delta: f64, n: usize, kl: f64, alpha0: f64) -> Result<f64> {
    check_range("gamma", gamma, gamma > 1.0)?;
    check_range("alpha0", alpha0, alpha0 > 0.0)?;
    check_range("delta", delta, delta >= 0.0)?;
    check_range("kl", kl, kl >= 0.0)?;
    let ratio = cdp_test_ratio(n, epsilon)?;
    let slack = 1.0 + 2.0 * delta / math::exp_m1(epsilon);
    let denom = ratio * ratio * slack * slack * kl / alpha0;
    if denom == 0.0 {
        return Err(Error::Infeasible("zero information: delay bound is infinite"));
    }
    Ok(math::ln(gamma) / denom)
}

/// Terms of the minimum-window bound.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MinWindow {
    /// `c̃₁·e^ε/(e^ε-1)`.
    pub privacy_term: f64,
    /// `c̃₂·ln n`.
    pub statistical_term: f64,
    pub value: f64,
}

/// `(c̃₁, c̃₂) = (1 - 1/n, 4(1 - 1/n)/(1 - 2/n)²)`.
pub fn min_window_constants(n: usize) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::OutOfRange { name: "n", value: n as f64 });
    }
    if n == 2 {
        return Err(Error::Infeasible("c2 denominator vanishes at n = 2"));
    }
    let inv = 1.0 / n as f64;
    let c1 = 1.0 - inv;
    let c2 = 4.0 * (1.0 - inv) / ((1.0 - 2.0 * inv) * (1.0 - 2.0 * inv));
    Ok((c1, c2))
}

/// Graphs needed for exact recovery under ε-edge DP:
/// `max(c̃₁·e^ε/(e^ε-1), c̃₂·ln n)`.
pub fn min_window(n: usize, epsilon: f64) -> Result<MinWindow> {
    check_range("epsilon", epsilon, epsilon > 0.0)?;
    let (c1, c2) = min_window_constants(n)?;
    // e^ε/(e^ε-1) = 1/(1-e^{-ε})
    let privacy_term = c1 / -math::exp_m1(-epsilon);
    let statistical_term = c2 * math::ln(n as f64);
    Ok(MinWindow { privacy_term, statistical_term, value: privacy_term.max(statistical_term) })
}

/// `ε` at which the two terms of [`min_window`] are equal,
/// `-ln(1 - c̃₁/(c̃₂ ln n))`.
pub fn min_window_crossover(n: usize) -> Result<f64> {
    let (c1, c2) = min_window_constants(n)?;
    let k = c1 / (c2 * math::ln(n as f64));
    if k >= 1.0 {
        return Err(Error::Infeasible("privacy term dominates for every epsilon"));
    }
    Ok(-math::ln_1p(-k))
}

/// Named scalar with its inputs; `flagged` marks infinite or undefined values.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub flagged: bool,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub note: Option<String>,
    pub inputs: BTreeMap<String, f64>,
}

impl BoundReport {
    pub fn new(name: &str, value: f64, inputs: &[(&str, f64)]) -> Self {
        BoundReport {
            name: name.to_string(),
            value,
            flagged: !value.is_finite(),
            note: None,
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// Wraps a calculator result; infeasible values become flagged entries.
    pub fn from_result(name: &str, value: Result<f64>, inputs: &[(&str, f64)]) -> Result<Self> {
        match value {
            Ok(v) => Ok(Self::new(name, v, inputs)),
            Err(Error::Infeasible(why)) => {
                let mut r = Self::new(name, f64::INFINITY, inputs);
                r.note = Some(why.to_string());
                Ok(r)
            }
            Err(e) => Err(e),
        }
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.to_string());
        self
    }
}

/// Margins of the three exact-recovery conditions at `p = a·ln(n)/n`; each
/// `*_margin` entry is positive when its condition holds.
///
/// * perturbation stability: `a(√(1-ζ)-√ζ)² - 1`, with side condition
///   `a > 3/ε`;
/// * subsampling stability: `a(√(1-ζ)-√ζ)² - max(32 ln n/ε, 1)`;
/// * graph perturbation (LDP): see [`ldp_recovery_margin`].
pub fn recovery_thresholds(a: f64, zeta: f64, epsilon: f64, n: usize) -> Result<Vec<BoundReport>> {
    check_range("a", a, a > 0.0)?;
    check_range("zeta", zeta, zeta > 0.0 && zeta < 0.5)?;
    check_range("epsilon", epsilon, epsilon > 0.0)?;
    let inputs = [("a", a), ("zeta", zeta), ("epsilon", epsilon), ("n", n as f64)];
    let strength = a * signal_strength(zeta);
    let subsample_rhs = (32.0 * math::ln(n as f64) / epsilon).max(1.0);
    let ldp = ldp_recovery_margin(a, zeta, epsilon, n)?;
    Ok(alloc::vec![
        BoundReport::new("signal_strength", strength, &inputs),
        BoundReport::new("stability_margin", strength - 1.0, &inputs),
        BoundReport::new("stability_side_margin", a - 3.0 / epsilon, &inputs),
        BoundReport::new("subsample_rhs", subsample_rhs, &inputs),
        BoundReport::new("subsample_margin", strength - subsample_rhs, &inputs),
        BoundReport::new("ldp_rhs", ldp.rhs, &inputs),
        BoundReport::new("ldp_margin", ldp.margin, &inputs),
        BoundReport::new("ldp_precondition_margin", a - ldp.precondition_bound, &inputs),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{kl_divergence, spread_flip_nodes};

    fn case(n: usize, ham: usize) -> (LabelVector, LabelVector) {
        let pre = LabelVector::balanced(n);
        let post = pre.with_flipped_nodes(&spread_flip_nodes(&pre, ham)).unwrap();
        (pre, post)
    }

    #[test]
    fn info_numbers_basic() {
        let (pre, post) = case(50, 2);
        let same = info_numbers(&pre, &pre, 0.3, 0.1, Some(1.0)).unwrap();
        assert_eq!((same.i0, same.i0_tilde), (0.0, 0.0));
        let p = density_to_p(50, 5.0);
        let info = info_numbers(&pre, &post, p, 0.1, None).unwrap();
        assert_eq!(info.i0, info.i0_tilde);
        let kl = kl_divergence(&pre, &post, p, 0.1).unwrap();
        assert!((info.i0 - kl).abs() < 1e-10);
        let far = info_numbers(&pre, &post, p, 0.1, Some(60.0)).unwrap();
        assert!((far.i0_tilde - far.i0).abs() / far.i0 < 1e-12);
    }

    #[test]
    fn perturbed_info_ordering_and_monotonicity() {
        let (pre, post) = case(30, 3);
        for k in 0..10 {
            let p = 0.05 + 0.09 * k as f64;
            for zeta in [0.02, 0.1, 0.2, 0.3, 0.45] {
                let mut prev = 0.0;
                for e in 1..=20 {
                    let eps = 0.25 * e as f64;
                    let info = info_numbers(&pre, &post, p, zeta, Some(eps)).unwrap();
                    assert!(info.i0_tilde <= info.i0 && info.i0_tilde >= 0.0);
                    assert!(info.i0_tilde > prev);
                    prev = info.i0_tilde;
                    assert!(ldp_kl_upper(&pre, &post, p, zeta, eps).unwrap() >= info.i0_tilde);
                }
            }
        }
    }

    #[test]
    fn small_epsilon_kl_ratio_bounded() {
        let (pre, post) = case(20, 2);
        for eps in [1e-4, 1e-3, 0.01, 0.1, 0.3, 0.5] {
            for p in [0.1, 0.5, 1.0] {
                let info = info_numbers(&pre, &post, p, 0.1, Some(eps)).unwrap();
                let ratio = ldp_kl_upper(&pre, &post, p, 0.1, eps).unwrap() / info.i0_tilde;
                assert!(ratio > 1.0 && ratio < 200.0, "{eps} {p} {ratio}");
            }
        }
        assert_eq!(ldp_kl_upper(&pre, &pre, 0.5, 0.1, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn wadd_values() {
        assert!((wadd_prediction(core::f64::consts::E, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((wadd_prediction(1e3, 5.0).unwrap() - 1.38155).abs() < 1e-5);
        assert_eq!(wadd_prediction(1e3, 0.0), Err(Error::Infeasible("zero information: delay is infinite")));
        assert!(wadd_prediction(1.0, 1.0).is_err());
    }

    #[test]
    fn arl_values() {
        assert!((arl_lower_ldp(100f64.ln()).unwrap() - 100.0).abs() < 1e-9);
        let c = 2.0 * 9f64.ln();
        let expected = (1.0 - (4.0 * c / 40.0f64).powi(2)) / (1.0 - (2.0 * c / 40.0f64).powi(2));
        let factor = cdp_arl_factor(0.1, 40.0).unwrap();
        assert!((factor - expected).abs() < 1e-14);
        assert!((factor - 0.847819).abs() < 1e-6);
        assert!((arl_lower_cdp(3.0, 0.1, 40.0).unwrap() - factor * 3f64.exp()).abs() < 1e-12);
        assert!(matches!(arl_lower_cdp(3.0, 0.1, 4.0 * c), Err(Error::Infeasible(_))));
    }

    #[test]
    fn converse_positive_and_scaling() {
        for n in [9usize, 20, 100, 1000] {
            for a in [1.0, 3.0, 5.0] {
                for zeta in [0.01, 0.1, 0.3, 0.49] {
                    if density_to_p(n, a) <= 1.0 {
                        assert!(converse_epsilon_lower(n, a, zeta).unwrap() > 0.0);
                    }
                }
            }
        }
        // fixed p: the bound is Θ(ln n / n)
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for k in 2..=6 {
            let n = 10usize.pow(k);
            let nf = n as f64;
            let r = converse_epsilon_lower_at(n, 0.3, 0.1).unwrap() / (nf.ln() / nf);
            assert!(converse_epsilon_lower_at(n, 0.3, 0.1).unwrap() <= 1.0);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        assert!(lo > 0.3 && hi < 0.5, "{lo} {hi}");
        // p = a ln n / n: tends to ½ ln(1 + 1/(4a))
        let limit = 0.5 * (1.0 + 1.0 / 20.0f64).ln();
        let far = converse_epsilon_lower(1_000_000_000, 5.0, 0.1).unwrap();
        assert!((far - limit).abs() < 0.1 * limit, "{far}");
        assert!(converse_epsilon_lower(8, 5.0, 0.1).is_err());
    }

    #[test]
    fn converse_golden() {
        let v = converse_epsilon_lower(100, 5.0, 0.1).unwrap();
        assert!((v - 0.020_505_803_462).abs() < 1e-10, "{v}");
    }

    #[test]
    fn cdp_ratio_and_delay() {
        assert!((cdp_test_ratio(3, 0.01).unwrap() - 0.039979).abs() < 1e-6);
        let e8 = 0.08f64.exp();
        assert!((cdp_test_ratio(3, 0.01).unwrap() - (e8 - 1.0) / (e8 + 1.0)).abs() < 1e-15);
        assert_eq!(cdp_test_ratio(50, 0.5).unwrap(), 1.0);
        let d = cdp_delay_lower(1e3, 1.0, 0.0, 50, 2.0, 0.1).unwrap();
        assert!((d - 1e3f64.ln() * 0.1 / 2.0).abs() < 1e-12);
        let with_delta = cdp_delay_lower(1e3, 1.0, 0.01, 50, 2.0, 0.1).unwrap();
        let slack = 1.0 + 0.02 / (1f64.exp() - 1.0);
        assert!((with_delta - 1e3f64.ln() * 0.1 / (slack * slack * 2.0)).abs() < 1e-12);
        assert!(cdp_delay_lower(1e3, 1.0, 0.0, 50, 2.0, 0.0).is_err());
    }

    #[test]
    fn min_window_limits_and_crossover() {
        let big = min_window(100, 50.0).unwrap();
        assert!((big.privacy_term - 0.99).abs() < 1e-12);
        assert_eq!(big.value, big.statistical_term);
        assert!(min_window(100, 1e-6).unwrap().privacy_term > 1e5);
        assert!(matches!(min_window(2, 1.0), Err(Error::Infeasible(_))));
        let eps = min_window_crossover(100).unwrap();
        // bisection on the difference of the two terms
        let (mut lo, mut hi) = (1e-6, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let w = min_window(100, mid).unwrap();
            if w.privacy_term > w.statistical_term {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((eps - lo).abs() < 1e-9);
        assert!((eps - 0.053_540).abs() < 1e-5, "{eps}");
    }

    #[test]
    fn recovery_threshold_reports() {
        let r = recovery_thresholds(5.0, 0.1, 1.5, 50).unwrap();
        let get = |name: &str| r.iter().find(|b| b.name == name).unwrap().value;
        assert!((get("signal_strength") - 2.0).abs() < 1e-12);
        assert!(get("stability_margin") > 0.0);
        let at100 = recovery_thresholds(5.0, 0.1, 100f64.ln(), 100).unwrap();
        let sub = at100.iter().find(|b| b.name == "subsample_rhs").unwrap().value;
        assert!((sub - 32.0).abs() < 1e-12);
        let near_half = recovery_thresholds(50.0, 0.4999999, 2.0, 100).unwrap();
        for b in near_half.iter().filter(|b| b.name.ends_with("margin") && !b.name.contains("side")) {
            if b.name != "ldp_precondition_margin" {
                assert!(b.value < 0.0, "{}", b.name);
            }
        }
    }

    #[test]
    fn report_flags_infeasible() {
        let r = BoundReport::from_result("wadd", wadd_prediction(10.0, 0.0), &[("gamma", 10.0)]).unwrap();
        assert!(r.flagged && r.note.is_some());
        assert!(BoundReport::from_result("x", Err(Error::EmptyInput), &[]).is_err());
    }
}
