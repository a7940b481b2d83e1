//! Monte Carlo experiments: delay and run-length trials, recovery phase
//! grids and estimator comparisons.
//!
//! Trial `k` of an experiment with seed `s` draws everything from
//! `derive_seed(s, k)`, and results are collected in trial order, so reports
//! do not depend on the number of worker threads.

use cbmdetect_core::ldp::{ldp_recovery_margin, perturb_graph};
use cbmdetect_core::model::{err, sample_cbm, spread_flip_nodes};
use cbmdetect_core::recovery::{sdp_estimate, spectral_estimate};
use cbmdetect_core::rng::derive_seed;
use cbmdetect_core::theory::{arl_lower_cdp, arl_lower_ldp};
use cbmdetect_core::{CbmParams, ChangePoint, ChangeScenario, Estimator, LabelVector, SdpConfig, TernaryGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{DetectorKind, DetectorSpec};
use crate::error::{Result, SimError};
use crate::io::GraphStream;

pub const DEFAULT_TRIALS: usize = 200;

/// Truncation used when none is configured: `⌈50·e^b⌉`.
pub fn default_truncation(b: f64) -> u64 {
    (50.0 * b.exp()).ceil() as u64
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_parallelism() -> usize {
    1
}

fn default_nu() -> ChangePoint {
    ChangePoint::At(1)
}

/// Scenario as written in an experiment file. Exactly one of `p` and `a`
/// sets the density. The post-change labels are either explicit or `pre`
/// with `hamming` nodes flipped, spread over both communities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    pub zeta: f64,
    /// `+`/`-` string; balanced when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamming: Option<usize>,
    #[serde(default = "default_nu")]
    pub nu: ChangePoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_zeta: Option<f64>,
}

impl ScenarioSpec {
    pub fn new(n: usize, a: f64, zeta: f64, hamming: usize) -> Self {
        ScenarioSpec {
            n,
            p: None,
            a: Some(a),
            zeta,
            pre_labels: None,
            post_labels: None,
            hamming: Some(hamming),
            nu: ChangePoint::At(1),
            post_p: None,
            post_zeta: None,
        }
    }

    pub fn params(&self) -> Result<CbmParams> {
        match (self.p, self.a) {
            (Some(p), None) => Ok(CbmParams::new(self.n, p, self.zeta)?),
            (None, Some(a)) => Ok(CbmParams::with_density(self.n, a, self.zeta)?),
            _ => Err(SimError::config("scenario needs exactly one of p and a")),
        }
    }

    pub fn build(&self) -> Result<ChangeScenario> {
        let params_pre = self.params()?;
        let pre = match &self.pre_labels {
            Some(s) => LabelVector::parse(s)?,
            None => LabelVector::balanced(self.n),
        };
        let post = match (&self.post_labels, self.hamming) {
            (Some(s), None) => LabelVector::parse(s)?,
            (None, Some(h)) if 2 * h <= self.n => pre.with_flipped_nodes(&spread_flip_nodes(&pre, h))?,
            (None, Some(h)) => return Err(SimError::config(format!("hamming = {h} exceeds n/2"))),
            (None, None) => pre.clone(),
            (Some(_), Some(_)) => return Err(SimError::config("give either post_labels or hamming, not both")),
        };
        let params_post = CbmParams::new(
            self.n,
            self.post_p.unwrap_or(params_pre.p()),
            self.post_zeta.unwrap_or(params_pre.zeta()),
        )?;
        Ok(ChangeScenario::new(pre, post, self.nu, params_pre, params_post)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub detector: DetectorSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Maximum steps per run; `⌈50·e^b⌉` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioSpec, detector: DetectorSpec, seed: u64) -> Self {
        ExperimentConfig { scenario, detector, trials: DEFAULT_TRIALS, truncation: None, seed, parallelism: 1 }
    }

    pub fn effective_truncation(&self) -> Result<u64> {
        match (self.truncation, self.detector.threshold()?) {
            (Some(0), _) => Err(SimError::config("truncation must be at least 1")),
            (Some(t), _) => Ok(t),
            (None, Some(b)) => Ok(default_truncation(b)),
            (None, None) => Err(SimError::config("truncation needed when the detector has no threshold")),
        }
    }

    fn validate(&self) -> Result<(ChangeScenario, u64)> {
        if self.trials == 0 {
            return Err(SimError::config("trials must be at least 1"));
        }
        let scenario = self.scenario.build()?;
        self.detector.validate(self.scenario.n)?;
        Ok((scenario, self.effective_truncation()?))
    }
}

/// Runs `f` on a pool with `parallelism` workers (0 means rayon's default).
pub fn with_pool<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| SimError::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Delay,
    Arl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u64,
    pub stop_time: Option<u64>,
    /// Stopping time, or the truncation for censored runs.
    pub run_length: u64,
    /// `T - ν + 1`; absent in run-length mode and for false alarms.
    pub delay: Option<u64>,
    pub censored: bool,
    /// Stopped before the change.
    pub false_alarm: bool,
    /// `err(σ̂, σ)/n` at the last step, against the labels generating it.
    pub final_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub kind: RunKind,
    pub trials: usize,
    pub truncation: u64,
    pub mean_delay: Option<f64>,
    /// Normal-approximation 95% interval for the mean delay.
    pub delay_ci: Option<(f64, f64)>,
    /// Mean of `min(T, truncation)`.
    pub arl_estimate: Option<f64>,
    pub arl_std_error: Option<f64>,
    /// Guaranteed run-length lower bound for the configured detector, when
    /// one exists.
    pub arl_lower_bound: Option<f64>,
    pub censored_fraction: f64,
    /// Set when censoring makes `arl_estimate` a lower-biased truncated mean.
    pub arl_truncated: bool,
    pub false_alarms: usize,
    /// Mean `err(σ̂ₜ, σ)/n` over the runs still active at step `t`.
    pub recovery_error_series: Vec<f64>,
    pub rows: Vec<TrialRow>,
}

impl SimReport {
    pub fn summary(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        match self.kind {
            RunKind::Delay => {
                let ci = self.delay_ci.map_or_else(|| "n/a".to_string(), |(lo, hi)| format!("[{lo:.4}, {hi:.4}]"));
                format!(
                    "delay: trials={} mean_delay={} ci95={} censored={:.4} false_alarms={}",
                    self.trials,
                    fmt(self.mean_delay),
                    ci,
                    self.censored_fraction,
                    self.false_alarms
                )
            }
            RunKind::Arl => format!(
                "arl: trials={} arl={}{} se={} lower_bound={} censored={:.4}",
                self.trials,
                fmt(self.arl_estimate),
                if self.arl_truncated { " (truncated, biased low)" } else { "" },
                fmt(self.arl_std_error),
                fmt(self.arl_lower_bound),
                self.censored_fraction
            ),
        }
    }

    /// False when the run-length estimate sits more than two standard errors
    /// below the guaranteed bound.
    pub fn arl_check_passes(&self) -> bool {
        match (self.arl_estimate, self.arl_std_error, self.arl_lower_bound) {
            (Some(est), Some(se), Some(bound)) => est + 2.0 * se >= bound,
            _ => true,
        }
    }
}

/// Mean, sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

/// One row of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: u64,
    pub stat: f64,
    pub noisy_stat: f64,
    pub stopped: bool,
    pub hamming_est_vs_post: Option<usize>,
}

struct TrialTrace {
    stop_time: Option<u64>,
    run_length: u64,
    errors: Vec<f64>,
    trajectory: Vec<TrajectoryRow>,
}

fn trial_seed(seed: u64, trial: u64) -> u64 {
    derive_seed(seed, trial)
}

fn run_trial(
    cfg: &ExperimentConfig,
    scenario: &ChangeScenario,
    truncation: u64,
    trial: u64,
    keep_trajectory: bool,
) -> Result<TrialTrace> {
    let seed = trial_seed(cfg.seed, trial);
    let (sample_root, step_root) = (derive_seed(seed, 0), derive_seed(seed, 1));
    let mut detector = cfg.detector.build(&scenario.pre, &scenario.params_pre, derive_seed(seed, 2))?;
    let n = scenario.pre.len() as f64;
    let mut trace = TrialTrace { stop_time: None, run_length: truncation, errors: Vec::new(), trajectory: Vec::new() };
    for t in 1..=truncation {
        let (labels, params) = scenario.regime(t);
        let raw = sample_cbm(params, labels, derive_seed(sample_root, t))?;
        let obs = detector.observe(&raw, derive_seed(step_root, t))?;
        if let Some(est) = &obs.estimate {
            trace.errors.push(err(est, labels)? as f64 / n);
        }
        if keep_trajectory {
            trace.trajectory.push(TrajectoryRow {
                t,
                stat: obs.stat,
                noisy_stat: obs.noisy_stat,
                stopped: obs.stopped,
                hamming_est_vs_post: obs.estimate.as_ref().map(|e| err(e, &scenario.post)).transpose()?,
            });
        }
        if obs.stopped {
            trace.stop_time = Some(t);
            trace.run_length = t;
            break;
        }
    }
    Ok(trace)
}

fn run_all(cfg: &ExperimentConfig, scenario: &ChangeScenario, truncation: u64) -> Result<Vec<TrialTrace>> {
    with_pool(cfg.parallelism, || {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|k| run_trial(cfg, scenario, truncation, k, false))
            .collect::<Result<Vec<_>>>()
    })?
}

fn error_series(traces: &[TrialTrace]) -> Vec<f64> {
    let len = traces.iter().map(|t| t.errors.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = traces.iter().filter_map(|t| t.errors.get(i).copied()).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect()
}

fn rows(traces: &[TrialTrace], nu: Option<u64>) -> Vec<TrialRow> {
    traces
        .iter()
        .enumerate()
        .map(|(k, tr)| {
            let false_alarm = matches!((nu, tr.stop_time), (Some(nu), Some(t)) if t < nu);
            let delay = match nu {
                Some(nu) if !false_alarm => Some(tr.run_length + 1 - nu),
                _ => None,
            };
            TrialRow {
                trial: k as u64,
                stop_time: tr.stop_time,
                run_length: tr.run_length,
                delay,
                censored: tr.stop_time.is_none(),
                false_alarm,
                final_error: tr.errors.last().copied(),
            }
        })
        .collect()
}

/// Detection delay with the change at `ν`. Censored runs count at the
/// truncation; runs that stop before `ν` are reported as false alarms and
/// left out of the mean.
pub fn run_delay_trials(cfg: &ExperimentConfig) -> Result<SimReport> {
    let (scenario, truncation) = cfg.validate()?;
    let ChangePoint::At(nu) = scenario.nu else {
        return Err(SimError::config("delay trials need a change point"));
    };
    if truncation < nu {
        return Err(SimError::config("truncation ends before the change"));
    }
    let traces = run_all(cfg, &scenario, truncation)?;
    let rows = rows(&traces, Some(nu));
    let delays: Vec<f64> = rows.iter().filter_map(|r| r.delay.map(|d| d as f64)).collect();
    let (mean_delay, delay_ci) = if delays.is_empty() {
        (None, None)
    } else {
        let (mean, sd) = mean_sd(&delays);
        let half = 1.96 * sd / (delays.len() as f64).sqrt();
        (Some(mean), Some((mean - half, mean + half)))
    };
    let censored = rows.iter().filter(|r| r.censored).count();
    Ok(SimReport {
        kind: RunKind::Delay,
        trials: cfg.trials,
        truncation,
        mean_delay,
        delay_ci,
        arl_estimate: None,
        arl_std_error: None,
        arl_lower_bound: None,
        censored_fraction: censored as f64 / cfg.trials as f64,
        arl_truncated: false,
        false_alarms: rows.iter().filter(|r| r.false_alarm).count(),
        recovery_error_series: error_series(&traces),
        rows,
    })
}

fn arl_bound(cfg: &ExperimentConfig) -> Result<Option<f64>> {
    let Some(b) = cfg.detector.threshold()? else {
        return Ok(None);
    };
    Ok(match cfg.detector.mode {
        DetectorKind::Ldp | DetectorKind::LdpAdaptive => Some(arl_lower_ldp(b)?),
        DetectorKind::Cdp | DetectorKind::CdpAdaptive => {
            let eps = cfg.detector.budget(cfg.scenario.n)?.epsilon;
            arl_lower_cdp(b, cfg.scenario.zeta, eps).ok()
        }
        DetectorKind::Stub => None,
    })
}

/// Run length without a change, as the truncated mean of `min(T, truncation)`.
pub fn run_arl_trials(cfg: &ExperimentConfig) -> Result<SimReport> {
    let (scenario, truncation) = cfg.validate()?;
    if scenario.nu != ChangePoint::Never {
        return Err(SimError::config("run-length trials need nu = never"));
    }
    let traces = run_all(cfg, &scenario, truncation)?;
    let rows = rows(&traces, None);
    let lengths: Vec<f64> = rows.iter().map(|r| r.run_length as f64).collect();
    let (mean, sd) = mean_sd(&lengths);
    let censored = rows.iter().filter(|r| r.censored).count();
    Ok(SimReport {
        kind: RunKind::Arl,
        trials: cfg.trials,
        truncation,
        mean_delay: None,
        delay_ci: None,
        arl_estimate: Some(mean),
        arl_std_error: Some(sd / (lengths.len() as f64).sqrt()),
        arl_lower_bound: arl_bound(cfg)?,
        censored_fraction: censored as f64 / cfg.trials as f64,
        arl_truncated: censored > 0,
        false_alarms: 0,
        recovery_error_series: error_series(&traces),
        rows,
    })
}

/// Step-by-step record of one simulated trial, identical to trial `trial`
/// of the corresponding delay or run-length experiment.
pub fn run_trajectory(cfg: &ExperimentConfig, trial: u64) -> Result<Vec<TrajectoryRow>> {
    let (scenario, truncation) = cfg.validate()?;
    Ok(run_trial(cfg, &scenario, truncation, trial, true)?.trajectory)
}

/// Runs a detector over an ingested stream, in time order, against a known
/// pre-change model. The `hamming_est_vs_post` column is empty.
pub fn detect_stream(
    spec: &DetectorSpec,
    pre: &LabelVector,
    params: &CbmParams,
    stream: &GraphStream,
    seed: u64,
) -> Result<Vec<TrajectoryRow>> {
    if stream.n != pre.len() {
        return Err(cbmdetect_core::Error::DimensionMismatch { expected: pre.len(), found: stream.n }.into());
    }
    let mut detector = spec.build(pre, params, derive_seed(seed, 2))?;
    let mut out = Vec::with_capacity(stream.len());
    for (t, graph) in &stream.steps {
        let obs = detector.observe(graph, derive_seed(derive_seed(seed, 1), *t))?;
        out.push(TrajectoryRow {
            t: *t,
            stat: obs.stat,
            noisy_stat: obs.noisy_stat,
            stopped: obs.stopped,
            hamming_est_vs_post: None,
        });
        if obs.stopped {
            break;
        }
    }
    Ok(out)
}

/// Empirical exact-recovery rates over an `(a, ζ)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub n: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub a_values: Vec<f64>,
    pub zeta_values: Vec<f64>,
    /// `success[i][j]` at `(a_values[i], zeta_values[j])`.
    pub success: Vec<Vec<f64>>,
    /// Smallest `a` meeting the LDP recovery condition, per `ζ`.
    pub boundary: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub a: f64,
    pub zeta: f64,
    pub success: f64,
    pub boundary_a: f64,
}

impl PhaseGrid {
    pub fn cells(&self) -> Vec<PhaseCell> {
        let mut out = Vec::new();
        for (i, &a) in self.a_values.iter().enumerate() {
            for (j, &zeta) in self.zeta_values.iter().enumerate() {
                out.push(PhaseCell { a, zeta, success: self.success[i][j], boundary_a: self.boundary[j] });
            }
        }
        out
    }
}

/// Root in `a` of the LDP recovery margin, by bisection to `tol` (relative
/// once the root exceeds 1).
pub fn boundary_bisection(zeta: f64, epsilon: f64, n: usize, tol: f64) -> Result<f64> {
    let margin = |a: f64| ldp_recovery_margin(a, zeta, epsilon, n).map(|m| m.margin);
    let (mut lo, mut hi) = (0.0, 1.0);
    while margin(hi)? <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(SimError::config("recovery margin never turns positive"));
        }
    }
    for _ in 0..200 {
        if hi - lo <= tol * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if margin(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn exact_recovery_rate(params: &CbmParams, epsilon: f64, trials: usize, estimator: &Estimator, seed: u64) -> Result<f64> {
    let n = params.n();
    let hits = (0..trials as u64)
        .into_par_iter()
        .map(|k| {
            let s = derive_seed(seed, k);
            let truth = LabelVector::random_canonical(n, derive_seed(s, 0));
            let raw = sample_cbm(params, &truth, derive_seed(s, 1))?;
            let perturbed = perturb_graph(&raw, epsilon, derive_seed(s, 2))?;
            let est = estimator.labels(&perturbed, derive_seed(s, 3))?;
            Ok(usize::from(err(&est, &truth)? == 0))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / trials as f64)
}

/// Labels are drawn uniformly per trial, the graph is perturbed at `ε` and
/// recovery counts as exact when it matches up to a global flip.
pub fn phase_grid(
    a_values: &[f64],
    zeta_values: &[f64],
    epsilon: f64,
    n: usize,
    trials: usize,
    estimator: &Estimator,
    seed: u64,
) -> Result<PhaseGrid> {
    if a_values.is_empty() || zeta_values.is_empty() {
        return Err(SimError::config("phase grid needs nonempty a and zeta values"));
    }
    if trials == 0 {
        return Err(SimError::config("trials must be at least 1"));
    }
    let mut success = Vec::with_capacity(a_values.len());
    for (i, &a) in a_values.iter().enumerate() {
        let mut row = Vec::with_capacity(zeta_values.len());
        for (j, &zeta) in zeta_values.iter().enumerate() {
            let params = CbmParams::with_density(n, a, zeta)?;
            let cell_seed = derive_seed(derive_seed(seed, i as u64), j as u64);
            row.push(exact_recovery_rate(&params, epsilon, trials, estimator, cell_seed)?);
        }
        success.push(row);
    }
    let boundary = zeta_values
        .iter()
        .map(|&z| boundary_bisection(z, epsilon, n, 1e-9))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseGrid { n, epsilon, trials, a_values: a_values.to_vec(), zeta_values: zeta_values.to_vec(), success, boundary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    N,
    Epsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub sweep: Sweep,
    pub n: usize,
    pub epsilon: f64,
    pub mean_err_sdp: f64,
    pub mean_err_spectral: f64,
}

/// SDP against spectral recovery on perturbed graphs: a sweep over `n` at
/// `epsilon`, then a sweep over `sweep_epsilons` at `sweep_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPlan {
    pub n_values: Vec<usize>,
    pub p: f64,
    pub zeta: f64,
    pub epsilon: f64,
    pub reps: usize,
    pub sweep_n: usize,
    pub sweep_epsilons: Vec<f64>,
    pub sdp: SdpConfig,
    pub seed: u64,
}

impl ComparisonPlan {
    /// ε sweep `0.6, 0.7, …, 1.5` at the largest `n`.
    pub fn new(n_values: &[usize], p: f64, zeta: f64, epsilon: f64, reps: usize) -> Self {
        ComparisonPlan {
            n_values: n_values.to_vec(),
            p,
            zeta,
            epsilon,
            reps,
            sweep_n: n_values.iter().copied().max().unwrap_or(0),
            sweep_epsilons: (6..=15).map(|k| k as f64 / 10.0).collect(),
            sdp: SdpConfig::default(),
            seed: 0,
        }
    }
}

fn compare_at(plan: &ComparisonPlan, n: usize, epsilon: f64, seed: u64, sweep: Sweep) -> Result<ComparisonRow> {
    let params = CbmParams::new(n, plan.p, plan.zeta)?;
    let errs = (0..plan.reps as u64)
        .into_par_iter()
        .map(|k| {
            let s = derive_seed(seed, k);
            let truth = LabelVector::random_canonical(n, derive_seed(s, 0));
            let raw = sample_cbm(&params, &truth, derive_seed(s, 1))?;
            let g: [TernaryGraph; 1] = [perturb_graph(&raw, epsilon, derive_seed(s, 2))?];
            let sdp = sdp_estimate(&g, &plan.sdp, derive_seed(s, 3))?.labels;
            let spectral = spectral_estimate(&g)?.labels;
            Ok((err(&sdp, &truth)? as f64 / n as f64, err(&spectral, &truth)? as f64 / n as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let reps = plan.reps as f64;
    Ok(ComparisonRow {
        sweep,
        n,
        epsilon,
        mean_err_sdp: errs.iter().map(|e| e.0).sum::<f64>() / reps,
        mean_err_spectral: errs.iter().map(|e| e.1).sum::<f64>() / reps,
    })
}

pub fn recovery_comparison(plan: &ComparisonPlan) -> Result<Vec<ComparisonRow>> {
    if plan.reps == 0 {
        return Err(SimError::config("reps must be at least 1"));
    }
    let mut out = Vec::new();
    for (i, &n) in plan.n_values.iter().enumerate() {
        out.push(compare_at(plan, n, plan.epsilon, derive_seed(derive_seed(plan.seed, 0), i as u64), Sweep::N)?);
    }
    for (i, &eps) in plan.sweep_epsilons.iter().enumerate() {
        let seed = derive_seed(derive_seed(plan.seed, 1), i as u64);
        out.push(compare_at(plan, plan.sweep_n, eps, seed, Sweep::Epsilon)?);
    }
    Ok(out)
}
