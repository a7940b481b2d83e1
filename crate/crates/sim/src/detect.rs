//! Detector descriptors and the stepping interface the harness drives.

use cbmdetect_core::detector::{
    adaptive_step_unknown_params, cdp_adaptive_step, cdp_step, ldp_step, should_stop, CdpMechanism, DetectorConfig,
    DetectorMode, DetectorState, StoppingRule,
};
use cbmdetect_core::ldp::{perturb_graph, perturbed_params};
use cbmdetect_core::rng::derive_seed;
use cbmdetect_core::{CbmParams, LabelVector, PrivacyBudget, TernaryGraph};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Ldp,
    Cdp,
    LdpAdaptive,
    CdpAdaptive,
    /// Ignores its input and stops at `stop_at` (or never).
    Stub,
}

impl DetectorKind {
    pub fn mode(self) -> Option<DetectorMode> {
        match self {
            DetectorKind::Ldp => Some(DetectorMode::Ldp),
            DetectorKind::Cdp => Some(DetectorMode::Cdp),
            DetectorKind::LdpAdaptive => Some(DetectorMode::LdpAdaptive),
            DetectorKind::CdpAdaptive => Some(DetectorMode::CdpAdaptive),
            DetectorKind::Stub => None,
        }
    }
}

/// Detector descriptor as read from an experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub mode: DetectorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Defaults to `1/n` for the central modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Threshold `b`; alternatively give `gamma` and `b = ln γ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub config: DetectorConfig,
    #[serde(default)]
    pub mechanism: CdpMechanism,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at: Option<u64>,
}

impl DetectorSpec {
    pub fn new(mode: DetectorKind) -> Self {
        DetectorSpec {
            mode,
            epsilon: None,
            delta: None,
            b: None,
            gamma: None,
            config: DetectorConfig::default(),
            mechanism: CdpMechanism::default(),
            stop_at: None,
        }
    }

    pub fn stub(stop_at: Option<u64>) -> Self {
        DetectorSpec { stop_at, ..Self::new(DetectorKind::Stub) }
    }

    pub fn threshold(&self) -> Result<Option<f64>> {
        match (self.b, self.gamma) {
            (Some(_), Some(_)) => Err(SimError::config("give either b or gamma, not both")),
            (Some(b), None) if b > 0.0 && b.is_finite() => Ok(Some(b)),
            (Some(b), None) => Err(SimError::config(format!("b = {b} must be positive"))),
            (None, Some(g)) if g > 1.0 && g.is_finite() => Ok(Some(g.ln())),
            (None, Some(g)) => Err(SimError::config(format!("gamma = {g} must exceed 1"))),
            (None, None) => Ok(None),
        }
    }

    fn required_threshold(&self) -> Result<f64> {
        self.threshold()?
            .ok_or_else(|| SimError::config(format!("{:?} detector needs b or gamma", self.mode)))
    }

    fn epsilon(&self) -> Result<f64> {
        match self.epsilon {
            Some(e) if e > 0.0 => Ok(e),
            Some(e) => Err(SimError::config(format!("epsilon = {e} must be positive"))),
            None => Err(SimError::config(format!("{:?} detector needs epsilon", self.mode))),
        }
    }

    pub fn budget(&self, n: usize) -> Result<PrivacyBudget> {
        let delta = self.delta.unwrap_or(1.0 / n as f64);
        Ok(PrivacyBudget::new(self.epsilon()?, delta)?)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.mode == DetectorKind::Stub {
            self.threshold()?;
            return Ok(());
        }
        self.required_threshold()?;
        self.budget(n)?;
        if self.config.window == 0 {
            return Err(SimError::config("window must be at least 1"));
        }
        Ok(())
    }

    /// Builds a detector that knows the pre-change model `(σ^pre, p, ζ)`.
    /// `seed` only draws the central threshold noise.
    pub fn build(&self, pre: &LabelVector, params: &CbmParams, seed: u64) -> Result<Box<dyn Detector>> {
        self.validate(pre.len())?;
        let Some(mode) = self.mode.mode() else {
            return Ok(Box::new(StubDetector { stop_at: self.stop_at, t: 0 }));
        };
        let b = self.required_threshold()?;
        let budget = self.budget(pre.len())?;
        let (p, zeta) = if mode.is_central() {
            (params.p(), params.zeta())
        } else {
            perturbed_params(params.p(), params.zeta(), budget.epsilon)?
        };
        let rule = if mode.is_central() {
            StoppingRule::cdp(b, params.zeta(), budget.epsilon, seed)?
        } else {
            StoppingRule::ldp(b)?
        };
        Ok(Box::new(CusumDetector {
            state: DetectorState::new(mode, pre, p, zeta),
            rule,
            pre: pre.clone(),
            p,
            zeta,
            budget,
            mechanism: self.mechanism,
            cfg: self.config,
        }))
    }
}

/// What a detector reports after one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub stat: f64,
    pub noisy_stat: f64,
    pub stopped: bool,
    /// Current label estimate, if the detector keeps one.
    pub estimate: Option<LabelVector>,
}

pub trait Detector {
    /// Feeds the raw graph of the next time index. All randomness the step
    /// needs is drawn from `seed`.
    fn observe(&mut self, raw: &TernaryGraph, seed: u64) -> Result<Observation>;
}

/// The four CUSUM variants. LDP modes perturb the raw graph themselves and
/// score at `(p̃, ζ̃)`; central modes score the raw graph at `(p, ζ)`.
pub struct CusumDetector {
    state: DetectorState,
    rule: StoppingRule,
    pre: LabelVector,
    p: f64,
    zeta: f64,
    budget: PrivacyBudget,
    mechanism: CdpMechanism,
    cfg: DetectorConfig,
}

impl CusumDetector {
    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn rule(&self) -> &StoppingRule {
        &self.rule
    }
}

impl Detector for CusumDetector {
    fn observe(&mut self, raw: &TernaryGraph, seed: u64) -> Result<Observation> {
        let step_seed = derive_seed(seed, 1);
        let eps = self.budget.epsilon;
        let s = &mut self.state;
        match s.mode {
            DetectorMode::Ldp => {
                let perturbed = perturb_graph(raw, eps, derive_seed(seed, 0))?;
                ldp_step(s, &perturbed, &self.pre, self.p, self.zeta, &self.cfg, step_seed)?;
            }
            DetectorMode::LdpAdaptive => {
                let perturbed = perturb_graph(raw, eps, derive_seed(seed, 0))?;
                adaptive_step_unknown_params(s, &perturbed, &self.pre, self.p, self.zeta, &self.cfg, step_seed)?;
            }
            DetectorMode::Cdp => {
                cdp_step(s, raw, &self.pre, self.p, self.zeta, &self.budget, &self.mechanism, &self.cfg, step_seed)?;
            }
            DetectorMode::CdpAdaptive => {
                let (p, z) = (self.p, self.zeta);
                cdp_adaptive_step(s, raw, &self.pre, p, z, &self.budget, &self.mechanism, &self.cfg, step_seed)?;
            }
        }
        Ok(Observation {
            stat: s.stat,
            noisy_stat: s.noisy_stat,
            stopped: should_stop(s, &self.rule),
            estimate: Some(s.sigma_hat.clone()),
        })
    }
}

pub struct StubDetector {
    stop_at: Option<u64>,
    t: u64,
}

impl Detector for StubDetector {
    fn observe(&mut self, _raw: &TernaryGraph, _seed: u64) -> Result<Observation> {
        self.t += 1;
        let stopped = self.stop_at.is_some_and(|s| self.t >= s);
        Ok(Observation { stat: 0.0, noisy_stat: 0.0, stopped, estimate: None })
    }
}
