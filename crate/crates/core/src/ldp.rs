//! Ternary randomized response under ε-edge local differential privacy.
//!
//! Each pair value is kept with probability `e^ε/(e^ε+2)` and moved to each
//! of the two other symbols with probability `1/(e^ε+2)`. A perturbed
//! `CBM(σ, p, ζ)` sample is again a CBM with the same labels and parameters
//! given by [`perturbed_params`].

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::math;
use crate::model::TernaryGraph;
use crate::rng::{domain, IndexedStream};

/// Above this ε the mechanism is the identity to double precision.
pub const IDENTITY_EPSILON: f64 = 700.0;

/// `(ε, δ)` budget shared by every mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        check_range("epsilon", epsilon, epsilon > 0.0)?;
        check_range("delta", delta, (0.0..1.0).contains(&delta))?;
        Ok(PrivacyBudget { epsilon, delta })
    }

    /// Pure ε-DP.
    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }
}

/// Keep/switch probabilities of the ternary randomized response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrProbabilities {
    pub keep: f64,
    pub switch: f64,
}

impl RrProbabilities {
    pub fn new(epsilon: f64) -> Result<Self> {
        check_range("epsilon", epsilon, epsilon > 0.0)?;
        // written in e^-ε so that large ε cannot overflow
        let tail = math::exp(-epsilon);
        let switch = tail / (1.0 + 2.0 * tail);
        let keep = 1.0 / (1.0 + 2.0 * tail);
        Ok(RrProbabilities { keep, switch })
    }

    /// `Q(y | x)`.
    pub fn transition(&self, x: i8, y: i8) -> f64 {
        if x == y {
            self.keep
        } else {
            self.switch
        }
    }
}

/// The two symbols other than `x`, in increasing order.
#[inline]
fn others(x: i8) -> (i8, i8) {
    match x {
        -1 => (0, 1),
        0 => (-1, 1),
        _ => (-1, 0),
    }
}

/// Applies randomized response to every pair. Pair `k` reads word `k` of the
/// seed's perturbation stream, so the output does not depend on traversal
/// order.
pub fn perturb_graph(graph: &TernaryGraph, epsilon: f64, seed: u64) -> Result<TernaryGraph> {
    let probs = RrProbabilities::new(epsilon)?;
    let mut out = graph.clone();
    if epsilon > IDENTITY_EPSILON {
        return Ok(out);
    }
    let mut stream = IndexedStream::new(seed, domain::PERTURB);
    for (k, v) in out.upper_mut().iter_mut().enumerate() {
        let u = stream.uniform(k as u64);
        if u >= probs.keep {
            let (lo, hi) = others(*v);
            *v = if u < probs.keep + probs.switch { lo } else { hi };
        }
    }
    Ok(out)
}

/// `(p̃, ζ̃)` of the perturbed model.
pub fn perturbed_params(p: f64, zeta: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_range("p", p, p > 0.0 && p <= 1.0)?;
    check_range("zeta", zeta, zeta > 0.0 && zeta < 0.5)?;
    let c2 = RrProbabilities::new(epsilon)?.switch;
    let signal = 1.0 - 3.0 * c2;
    let p_tilde = 2.0 * c2 + p * signal;
    let zeta_tilde = (c2 + p * zeta * signal) / p_tilde;
    Ok((p_tilde, zeta_tilde))
}

/// Evaluation of the LDP exact-recovery condition for `p = a·ln(n)/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdpMargin {
    /// `a(√(1-ζ) - √ζ)² - rhs`; positive means the condition holds.
    pub margin: f64,
    /// `(√n/(√n-1))·((e^ε+1)/(e^ε-1))`.
    pub rhs: f64,
    /// `2(n^{3/2} - n)/((n-1)·ln n)`, the lower bound `a` must exceed.
    pub precondition_bound: f64,
    pub precondition_ok: bool,
    /// `ε / ln n`; the guarantee is stated for ε growing like `ln n`.
    pub log_n_scale: f64,
}

/// `(√(1-ζ) - √ζ)²`.
pub fn signal_strength(zeta: f64) -> f64 {
    let d = math::sqrt(1.0 - zeta) - math::sqrt(zeta);
    d * d
}

pub fn ldp_recovery_margin(a: f64, zeta: f64, epsilon: f64, n: usize) -> Result<LdpMargin> {
    if n < 2 {
        return Err(Error::OutOfRange { name: "n", value: n as f64 });
    }
    check_range("a", a, a > 0.0)?;
    check_range("zeta", zeta, zeta > 0.0 && zeta < 0.5)?;
    check_range("epsilon", epsilon, epsilon > 0.0)?;
    let nf = n as f64;
    let root = math::sqrt(nf);
    // (e^ε+1)/(e^ε-1) = coth(ε/2)
    let rhs = root / (root - 1.0) / math::tanh(epsilon / 2.0);
    let precondition_bound = 2.0 * (nf * root - nf) / ((nf - 1.0) * math::ln(nf));
    Ok(LdpMargin {
        margin: a * signal_strength(zeta) - rhs,
        rhs,
        precondition_bound,
        precondition_ok: a > precondition_bound,
        log_n_scale: epsilon / math::ln(nf),
    })
}

/// Smallest `a` with a positive LDP margin.
pub fn ldp_boundary_density(zeta: f64, epsilon: f64, n: usize) -> Result<f64> {
    let m = ldp_recovery_margin(1.0, zeta, epsilon, n)?;
    Ok(m.rhs / signal_strength(zeta))
}
