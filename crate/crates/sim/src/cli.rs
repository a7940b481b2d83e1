//! `cbmdetect` command line.

use std::path::{Path, PathBuf};

use cbmdetect_core::cdp::{subsample_plan, subsample_stability_release, stability_release, InstabilityMode};
use cbmdetect_core::cdp::{StabilityConfig, SubsampleConfig};
use cbmdetect_core::detector::{cdp_threshold_for_arl, sensitivity};
use cbmdetect_core::ldp::{ldp_boundary_density, ldp_recovery_margin, perturb_graph, perturbed_params};
use cbmdetect_core::model::{log_likelihood, mle_params, sample_cbm, spread_flip_nodes};
use cbmdetect_core::theory::{
    arl_lower_cdp, arl_lower_ldp, cdp_delay_lower, cdp_test_ratio, converse_epsilon_lower, converse_epsilon_lower_at,
    info_numbers, ldp_kl_upper, min_window, min_window_crossover, recovery_thresholds, wadd_prediction, BoundReport,
};
use cbmdetect_core::{CbmParams, ChangePoint, Estimator, LabelVector, PrivacyBudget, SdpConfig};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::detect::DetectorKind;
use crate::error::{Result, SimError};
use crate::harness::{
    detect_stream, phase_grid, recovery_comparison, run_arl_trials, run_delay_trials, run_trajectory, with_pool,
    ComparisonPlan, ExperimentConfig,
};
use crate::io;

/// Operation each verb exposes.
pub const VERB_MAP: &[(&str, &[&str])] = &[
    ("generate", &["sample_cbm", "log_likelihood"]),
    ("perturb", &["perturb_graph", "perturbed_params"]),
    (
        "recover",
        &["sdp_estimate", "spectral_estimate", "ml_exhaustive", "mle_params", "stability_release", "subsample_stability_release"],
    ),
    ("detect", &["ldp_step", "cdp_step", "adaptive_step_unknown_params", "cdp_adaptive_step", "detect_stream"]),
    ("simulate", &["run_delay_trials", "run_arl_trials", "phase_grid", "recovery_comparison"]),
    (
        "threshold",
        &[
            "ldp_recovery_margin",
            "recovery_thresholds",
            "subsample_plan",
            "converse_epsilon_lower",
            "info_numbers",
            "ldp_kl_upper",
            "wadd_prediction",
            "arl_lower_ldp",
            "arl_lower_cdp",
            "sensitivity",
            "cdp_threshold_for_arl",
            "cdp_delay_lower",
            "min_window",
        ],
    ),
    ("ingest", &["ingest_stream", "write_stream"]),
];

#[derive(Debug, Parser)]
#[command(name = "cbmdetect", version, about = "Private community recovery and change detection in censored block models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a graph from CBM(σ, p, ζ)
    Generate(GenerateArgs),
    /// Apply ternary randomized response to a graph
    Perturb(PerturbArgs),
    /// Estimate community labels, optionally through a private release
    Recover(RecoverArgs),
    /// Run a change detector and write its trajectory
    Detect(DetectArgs),
    /// Monte Carlo experiments
    Simulate(SimulateArgs),
    /// Evaluate closed-form thresholds and bounds
    Threshold(ThresholdArgs),
    /// Validate a stream file and optionally re-emit it
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Number of nodes n
    #[arg(long)]
    pub n: usize,
    /// Edge reveal probability p
    #[arg(long, conflicts_with = "a")]
    pub p: Option<f64>,
    /// Density coefficient a, with p = a·ln(n)/n
    #[arg(long)]
    pub a: Option<f64>,
    /// Flip probability ζ of a revealed edge
    #[arg(long)]
    pub zeta: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<CbmParams> {
        match (self.p, self.a) {
            (Some(p), None) => Ok(CbmParams::new(self.n, p, self.zeta)?),
            (None, Some(a)) => Ok(CbmParams::with_density(self.n, a, self.zeta)?),
            _ => Err(SimError::config("give one of --p and --a")),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Labels σ as a +/- string; balanced when absent
    #[arg(long)]
    pub labels: Option<String>,
    /// Seed
    #[arg(long)]
    pub seed: u64,
    /// Graph CSV; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Graph CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Privacy level ε
    #[arg(long)]
    pub eps: f64,
    /// Edge reveal probability p of the source model, to report p̃
    #[arg(long, requires = "zeta")]
    pub p: Option<f64>,
    /// Flip probability ζ of the source model, to report ζ̃
    #[arg(long, requires = "p")]
    pub zeta: Option<f64>,
    /// Seed
    #[arg(long)]
    pub seed: u64,
    /// Graph CSV; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Sdp,
    Spectral,
    Exhaustive,
}

impl EstimatorArg {
    fn estimator(self) -> Estimator {
        match self {
            EstimatorArg::Sdp => Estimator::Sdp(SdpConfig::default()),
            EstimatorArg::Spectral => Estimator::Spectral,
            EstimatorArg::Exhaustive => Estimator::Exhaustive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReleaseArg {
    None,
    /// Laplace-gated distance to instability
    Stability,
    /// Subsampling-based stability
    Subsample,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Graph CSV; repeat to sum a window of w graphs
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    /// Label estimator
    #[arg(long, value_enum, default_value = "sdp")]
    pub estimator: EstimatorArg,
    /// Private release mechanism
    #[arg(long, value_enum, default_value = "none")]
    pub release: ReleaseArg,
    /// Privacy level ε of the release
    #[arg(long)]
    pub eps: Option<f64>,
    /// Failure probability δ of the release; 1/n when absent
    #[arg(long)]
    pub delta: Option<f64>,
    /// Cap on the distance to instability; ⌈ln n⌉ when absent
    #[arg(long)]
    pub cap: Option<usize>,
    /// Seed
    #[arg(long)]
    pub seed: u64,
    /// JSON result
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ldp,
    Cdp,
    LdpAdaptive,
    CdpAdaptive,
}

impl ModeArg {
    fn kind(self) -> DetectorKind {
        match self {
            ModeArg::Ldp => DetectorKind::Ldp,
            ModeArg::Cdp => DetectorKind::Cdp,
            ModeArg::LdpAdaptive => DetectorKind::LdpAdaptive,
            ModeArg::CdpAdaptive => DetectorKind::CdpAdaptive,
        }
    }
}

#[derive(Debug, Args)]
pub struct DetectorOverrides {
    /// Detector mode; overrides the config
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Privacy level ε
    #[arg(long)]
    pub eps: Option<f64>,
    /// Failure probability δ of the central release
    #[arg(long)]
    pub delta: Option<f64>,
    /// Threshold b
    #[arg(long, conflicts_with = "gamma")]
    pub b: Option<f64>,
    /// Target run length γ, with b = ln γ
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Window w of graphs summed for the estimate
    #[arg(long)]
    pub w: Option<usize>,
}

impl DetectorOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let d = &mut cfg.detector;
        if let Some(m) = self.mode {
            d.mode = m.kind();
        }
        if self.eps.is_some() {
            d.epsilon = self.eps;
        }
        if self.delta.is_some() {
            d.delta = self.delta;
        }
        if self.b.is_some() {
            d.b = self.b;
            d.gamma = None;
        }
        if self.gamma.is_some() {
            d.gamma = self.gamma;
            d.b = None;
        }
        if let Some(w) = self.w {
            d.config.window = w;
        }
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Experiment JSON with scenario and detector
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub detector: DetectorOverrides,
    /// Stream CSV to run on instead of simulated data; the scenario's
    /// pre-change model is used as the known model
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Which simulated trial to record
    #[arg(long, default_value_t = 0)]
    pub trial: u64,
    /// Seed
    #[arg(long)]
    pub seed: u64,
    /// Trajectory CSV; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    /// Detection delay with the scenario's change point
    Delay,
    /// Run length without a change
    Arl,
    /// Exact-recovery rates over an (a, ζ) grid
    Phase,
    /// SDP against spectral recovery error
    Compare,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment kind
    #[arg(long, value_enum)]
    pub kind: SimKind,
    /// Experiment JSON (delay and arl)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorOverrides,
    /// Trials per experiment or grid cell
    #[arg(long)]
    pub trials: Option<usize>,
    /// Maximum steps per run
    #[arg(long)]
    pub truncation: Option<u64>,
    /// Worker threads; 0 for one per core
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Number of nodes n (phase)
    #[arg(long)]
    pub n: Option<usize>,
    /// Edge reveal probability p (compare)
    #[arg(long)]
    pub p: Option<f64>,
    /// Flip probability ζ (compare)
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Density coefficients a (phase)
    #[arg(long, value_delimiter = ',')]
    pub a_values: Vec<f64>,
    /// Flip probabilities ζ (phase)
    #[arg(long, value_delimiter = ',')]
    pub zeta_values: Vec<f64>,
    /// Node counts (compare)
    #[arg(long, value_delimiter = ',')]
    pub n_values: Vec<usize>,
    /// Label estimator (phase)
    #[arg(long, value_enum, default_value = "sdp")]
    pub estimator: EstimatorArg,
    /// Seed
    #[arg(long)]
    pub seed: u64,
    /// JSON report (delay, arl) or CSV table (phase, compare)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-trial CSV (delay, arl)
    #[arg(long)]
    pub rows: Option<PathBuf>,
}

/// Which bound to evaluate. Numeric aliases follow the order of this list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Bound {
    /// LDP exact-recovery condition (needs n, ζ, ε; a optional)
    #[value(alias = "1")]
    LdpRecovery,
    /// Perturbation-stability recovery condition (n, a, ζ, ε)
    #[value(alias = "2")]
    Stability,
    /// Subsampling recovery condition and plan (n, a, ζ, ε; δ optional)
    #[value(alias = "3")]
    Subsample,
    /// Lower bound on ε for exact recovery (n, ζ, a or p)
    #[value(alias = "4")]
    Converse,
    /// Information numbers and first-order delays (n, p or a, ζ, hamming; ε, γ optional)
    #[value(alias = "5")]
    Info,
    /// Run-length lower bounds (b or γ; ζ and ε for the central bound)
    #[value(alias = "6")]
    Arl,
    /// Sensitivity C and the central threshold for a target γ (ζ; ε, γ optional)
    #[value(alias = "7")]
    Sensitivity,
    /// Delay lower bound for detectors built on private tests (n, p or a, ζ, hamming, ε, δ, γ)
    #[value(alias = "8")]
    CdpDelay,
    /// Minimum number of graphs for private exact recovery (n; ε optional)
    #[value(alias = "9")]
    MinWindow,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Bound to evaluate
    #[arg(long, value_enum)]
    pub thm: Bound,
    /// Number of nodes n
    #[arg(long)]
    pub n: Option<usize>,
    /// Edge reveal probability p
    #[arg(long, conflicts_with = "a")]
    pub p: Option<f64>,
    /// Density coefficient a, with p = a·ln(n)/n
    #[arg(long)]
    pub a: Option<f64>,
    /// Flip probability ζ
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Privacy level ε
    #[arg(long, conflicts_with = "eps_log_n")]
    pub eps: Option<f64>,
    /// Use ε = ln n
    #[arg(long)]
    pub eps_log_n: bool,
    /// Failure probability δ
    #[arg(long)]
    pub delta: Option<f64>,
    /// Threshold b
    #[arg(long, conflicts_with = "gamma")]
    pub b: Option<f64>,
    /// Target run length γ
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Hamming distance between pre- and post-change labels
    #[arg(long)]
    pub hamming: Option<usize>,
    /// Per-sample test level α₀
    #[arg(long, default_value_t = 1.0)]
    pub alpha0: f64,
    /// JSON list of the computed values
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Stream CSV with rows t,i,j,w
    #[arg(long)]
    pub input: PathBuf,
    /// Re-emit the normalized stream here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Result of a verb: the summary line and whether a statistical check failed.
struct Outcome {
    summary: String,
    check_failed: bool,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome { summary, check_failed: false }
    }
}

/// Parses `args` (including the program name) and runs the verb. Returns
/// the process exit code: 0 ok, 1 statistical check failed, 2 usage or
/// configuration error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            i32::from(outcome.check_failed)
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", Cli::command().render_usage());
            2
        }
    }
}

fn dispatch(command: &Command) -> Result<Outcome> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Perturb(a) => perturb(a),
        Command::Recover(a) => recover(a),
        Command::Detect(a) => detect(a),
        Command::Simulate(a) => simulate(a),
        Command::Threshold(a) => threshold(a),
        Command::Ingest(a) => ingest(a),
    }
}

fn write_graph_out(out: Option<&Path>, graph: &cbmdetect_core::TernaryGraph) -> Result<()> {
    match out {
        Some(path) => io::write_graph_file(path, graph),
        None => io::write_graph(std::io::stdout().lock(), graph),
    }
}

fn generate(args: &GenerateArgs) -> Result<Outcome> {
    let params = args.model.params()?;
    let labels = match &args.labels {
        Some(s) => LabelVector::parse(s)?,
        None => LabelVector::balanced(params.n()),
    };
    let graph = sample_cbm(&params, &labels, args.seed)?;
    write_graph_out(args.out.as_deref(), &graph)?;
    let mut summary = format!(
        "generated n={} p={} zeta={} labels={} revealed={}",
        params.n(),
        params.p(),
        params.zeta(),
        labels,
        graph.revealed()
    );
    // Degenerate models (p = 1, p = 0) have no finite likelihood.
    if let Ok(ll) = log_likelihood(&graph, &labels, params.p(), params.zeta()) {
        summary.push_str(&format!(" log_likelihood={ll:.6}"));
    }
    Ok(Outcome::ok(summary))
}

fn perturb(args: &PerturbArgs) -> Result<Outcome> {
    let graph = io::read_graph_file(&args.input)?;
    let out = perturb_graph(&graph, args.eps, args.seed)?;
    write_graph_out(args.out.as_deref(), &out)?;
    let changed = graph.distance(&out)?;
    let mut summary = format!("perturbed n={} eps={} changed_pairs={changed}", graph.n(), args.eps);
    if let (Some(p), Some(zeta)) = (args.p, args.zeta) {
        let (pt, zt) = perturbed_params(p, zeta, args.eps)?;
        summary.push_str(&format!(" p_tilde={pt:.6} zeta_tilde={zt:.6}"));
    }
    Ok(Outcome::ok(summary))
}

#[derive(Serialize)]
struct RecoverOutput {
    labels: String,
    objective: Option<f64>,
    solver_status: Option<cbmdetect_core::recovery::SolverStatus>,
    p_hat: f64,
    zeta_hat: f64,
    released: Option<bool>,
    distance: Option<f64>,
    noisy_distance: Option<f64>,
}

fn recover(args: &RecoverArgs) -> Result<Outcome> {
    let graphs = args.input.iter().map(|p| io::read_graph_file(p)).collect::<Result<Vec<_>>>()?;
    let estimator = args.estimator.estimator();
    let n = graphs[0].n();
    let budget = || -> Result<PrivacyBudget> {
        let eps = args.eps.ok_or_else(|| SimError::config("private release needs --eps"))?;
        Ok(PrivacyBudget::new(eps, args.delta.unwrap_or(1.0 / n as f64))?)
    };
    let stability = StabilityConfig { cap: args.cap, mode: InstabilityMode::Auto };
    let out = match args.release {
        ReleaseArg::None => {
            let r = estimator.estimate(&graphs, args.seed)?;
            let fit = cbmdetect_core::model::mle_params_pooled(&graphs, &r.labels)?;
            RecoverOutput {
                labels: r.labels.to_string(),
                objective: Some(r.objective),
                solver_status: Some(r.solver_status),
                p_hat: fit.p_hat,
                zeta_hat: fit.zeta_hat,
                released: None,
                distance: None,
                noisy_distance: None,
            }
        }
        ReleaseArg::Stability | ReleaseArg::Subsample => {
            if graphs.len() != 1 {
                return Err(SimError::config("private releases take a single --input"));
            }
            let g = &graphs[0];
            let budget = budget()?;
            let release = if args.release == ReleaseArg::Stability {
                stability_release(g, &budget, &estimator, &stability, args.seed)?
            } else {
                subsample_stability_release(g, &budget, &estimator, &SubsampleConfig::default(), args.seed)?.release
            };
            let fit = mle_params(g, &release.labels)?;
            RecoverOutput {
                labels: release.labels.to_string(),
                objective: None,
                solver_status: None,
                p_hat: fit.p_hat,
                zeta_hat: fit.zeta_hat,
                released: Some(release.released),
                distance: Some(release.distance),
                noisy_distance: Some(release.noisy_distance),
            }
        }
    };
    if let Some(path) = &args.out {
        io::write_json(path, &out)?;
    }
    let mut summary = format!("labels={} p_hat={:.6} zeta_hat={:.6}", out.labels, out.p_hat, out.zeta_hat);
    if let Some(released) = out.released {
        summary.push_str(&format!(" released={released} distance={}", out.distance.unwrap_or(f64::NAN)));
    }
    Ok(Outcome::ok(summary))
}

fn load_experiment(path: &Path, overrides: &DetectorOverrides, seed: u64) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = io::read_json(path)?;
    overrides.apply(&mut cfg);
    cfg.seed = seed;
    Ok(cfg)
}

fn detect(args: &DetectArgs) -> Result<Outcome> {
    let cfg = load_experiment(&args.config, &args.detector, args.seed)?;
    let rows = match &args.input {
        Some(path) => {
            let stream = io::ingest_stream_file(path)?;
            let scenario = cfg.scenario.build()?;
            detect_stream(&cfg.detector, &scenario.pre, &scenario.params_pre, &stream, args.seed)?
        }
        None => run_trajectory(&cfg, args.trial)?,
    };
    match &args.out {
        Some(path) => io::write_csv_file(path, &rows)?,
        None => io::write_csv(std::io::stdout().lock(), &rows)?,
    }
    let summary = match rows.last() {
        Some(r) if r.stopped => format!("detect: stopped at t={} stat={:.6}", r.t, r.stat),
        Some(r) => format!("detect: no stop through t={} stat={:.6}", r.t, r.stat),
        None => "detect: empty stream".to_string(),
    };
    Ok(Outcome::ok(summary))
}

fn simulate(args: &SimulateArgs) -> Result<Outcome> {
    match args.kind {
        SimKind::Delay | SimKind::Arl => {
            let path = args.config.as_deref().ok_or_else(|| SimError::config("--kind delay/arl needs --config"))?;
            let mut cfg = load_experiment(path, &args.detector, args.seed)?;
            if let Some(t) = args.trials {
                cfg.trials = t;
            }
            if args.truncation.is_some() {
                cfg.truncation = args.truncation;
            }
            if let Some(p) = args.parallelism {
                cfg.parallelism = p;
            }
            let report = if args.kind == SimKind::Delay {
                run_delay_trials(&cfg)?
            } else {
                if cfg.scenario.nu != ChangePoint::Never {
                    log::info!("run-length simulation ignores the configured change point");
                    cfg.scenario.nu = ChangePoint::Never;
                }
                run_arl_trials(&cfg)?
            };
            if let Some(path) = &args.out {
                io::write_json(path, &report)?;
            }
            if let Some(path) = &args.rows {
                io::write_csv_file(path, &report.rows)?;
            }
            Ok(Outcome { summary: report.summary(), check_failed: !report.arl_check_passes() })
        }
        SimKind::Phase => {
            let n = args.n.ok_or_else(|| SimError::config("--kind phase needs --n"))?;
            let eps = args.detector.eps.ok_or_else(|| SimError::config("--kind phase needs --eps"))?;
            let trials = args.trials.unwrap_or(50);
            let estimator = args.estimator.estimator();
            let grid = with_pool(args.parallelism.unwrap_or(1), || {
                phase_grid(&args.a_values, &args.zeta_values, eps, n, trials, &estimator, args.seed)
            })??;
            write_table(args.out.as_deref(), &grid.cells())?;
            let best = grid.success.iter().flatten().cloned().fold(0.0, f64::max);
            Ok(Outcome::ok(format!(
                "phase: {}x{} grid, n={n}, eps={eps}, trials={trials}, max success={best:.3}",
                grid.a_values.len(),
                grid.zeta_values.len()
            )))
        }
        SimKind::Compare => {
            let (p, zeta) = match (args.p, args.zeta) {
                (Some(p), Some(z)) => (p, z),
                _ => return Err(SimError::config("--kind compare needs --p and --zeta")),
            };
            let eps = args.detector.eps.ok_or_else(|| SimError::config("--kind compare needs --eps"))?;
            if args.n_values.is_empty() {
                return Err(SimError::config("--kind compare needs --n-values"));
            }
            let mut plan = ComparisonPlan::new(&args.n_values, p, zeta, eps, args.trials.unwrap_or(50));
            plan.seed = args.seed;
            let table = with_pool(args.parallelism.unwrap_or(1), || recovery_comparison(&plan))??;
            write_table(args.out.as_deref(), &table)?;
            let worst = table.iter().map(|r| (r.mean_err_sdp - r.mean_err_spectral).abs()).fold(0.0, f64::max);
            Ok(Outcome::ok(format!("compare: {} rows, max |sdp - spectral| = {worst:.4}", table.len())))
        }
    }
}

fn write_table<T: Serialize>(out: Option<&Path>, rows: &[T]) -> Result<()> {
    match out {
        Some(path) => io::write_csv_file(path, rows),
        None => io::write_csv(std::io::stdout().lock(), rows),
    }
}

fn need<T: Copy>(value: Option<T>, flag: &str, bound: Bound) -> Result<T> {
    value.ok_or_else(|| SimError::config(format!("{bound:?} needs --{flag}")))
}

fn threshold(args: &ThresholdArgs) -> Result<Outcome> {
    let bound = args.thm;
    let n = || need(args.n, "n", bound);
    let zeta = || need(args.zeta, "zeta", bound);
    let eps = || -> Result<f64> {
        if args.eps_log_n {
            Ok((n()? as f64).ln())
        } else {
            need(args.eps, "eps", bound)
        }
    };
    let p = || -> Result<f64> {
        match (args.p, args.a) {
            (Some(p), _) => Ok(p),
            (None, Some(a)) => Ok(cbmdetect_core::model::density_to_p(n()?, a)),
            _ => Err(SimError::config(format!("{bound:?} needs --p or --a"))),
        }
    };
    let b = || -> Result<f64> {
        match (args.b, args.gamma) {
            (Some(b), _) => Ok(b),
            (None, Some(g)) => Ok(g.ln()),
            _ => Err(SimError::config(format!("{bound:?} needs --b or --gamma"))),
        }
    };
    let labels = || -> Result<(LabelVector, LabelVector)> {
        let pre = LabelVector::balanced(n()?);
        let h = need(args.hamming, "hamming", bound)?;
        if 2 * h > pre.len() {
            return Err(SimError::config("--hamming exceeds n/2"));
        }
        let post = pre.with_flipped_nodes(&spread_flip_nodes(&pre, h))?;
        Ok((pre, post))
    };
    let mut reports: Vec<BoundReport> = Vec::new();
    match bound {
        Bound::LdpRecovery => {
            let (n, zeta, eps) = (n()?, zeta()?, eps()?);
            let inputs = [("n", n as f64), ("zeta", zeta), ("epsilon", eps)];
            let m = ldp_recovery_margin(args.a.unwrap_or(1.0), zeta, eps, n)?;
            reports.push(BoundReport::new("ldp_rhs", m.rhs, &inputs));
            reports.push(BoundReport::new("ldp_boundary_a", ldp_boundary_density(zeta, eps, n)?, &inputs));
            reports.push(BoundReport::new("ldp_precondition_a", m.precondition_bound, &inputs));
            if let Some(a) = args.a {
                let mut with_a = inputs.to_vec();
                with_a.push(("a", a));
                reports.push(BoundReport::new("ldp_margin", m.margin, &with_a));
            }
        }
        Bound::Stability | Bound::Subsample => {
            let (n, zeta, eps) = (n()?, zeta()?, eps()?);
            let a = need(args.a, "a", bound)?;
            let keep: &[&str] = if bound == Bound::Stability {
                &["signal_strength", "stability_margin", "stability_side_margin"]
            } else {
                &["signal_strength", "subsample_rhs", "subsample_margin"]
            };
            reports.extend(recovery_thresholds(a, zeta, eps, n)?.into_iter().filter(|r| keep.contains(&r.name.as_str())));
            if bound == Bound::Subsample {
                if let Some(delta) = args.delta {
                    let (q, m) = subsample_plan(n, &PrivacyBudget::new(eps, delta)?)?;
                    let inputs = [("n", n as f64), ("epsilon", eps), ("delta", delta)];
                    reports.push(BoundReport::new("subsample_q", q, &inputs));
                    reports.push(BoundReport::new("subsample_m", m as f64, &inputs));
                }
            }
        }
        Bound::Converse => {
            let (n, zeta) = (n()?, zeta()?);
            let value = match (args.a, args.p) {
                (Some(a), _) => converse_epsilon_lower(n, a, zeta)?,
                (None, Some(p)) => converse_epsilon_lower_at(n, p, zeta)?,
                _ => return Err(SimError::config("Converse needs --a or --p")),
            };
            reports.push(BoundReport::new("epsilon_lower", value, &[("n", n as f64), ("zeta", zeta), ("p", p()?)]));
        }
        Bound::Info => {
            let (p, zeta) = (p()?, zeta()?);
            let (pre, post) = labels()?;
            let info = info_numbers(&pre, &post, p, zeta, args.eps.or(args.eps_log_n.then(|| (pre.len() as f64).ln())))?;
            let inputs = [("n", pre.len() as f64), ("p", p), ("zeta", zeta), ("hamming", args.hamming.unwrap_or(0) as f64)];
            reports.push(BoundReport::new("i0", info.i0, &inputs));
            reports.push(BoundReport::new("i0_tilde", info.i0_tilde, &inputs));
            if let Ok(eps) = eps() {
                reports.push(BoundReport::new("ldp_kl_upper", ldp_kl_upper(&pre, &post, p, zeta, eps)?, &inputs));
            }
            if let Some(g) = args.gamma {
                reports.push(BoundReport::from_result("delay_raw", wadd_prediction(g, info.i0), &inputs)?);
                reports.push(BoundReport::from_result("delay_ldp", wadd_prediction(g, info.i0_tilde), &inputs)?);
            }
        }
        Bound::Arl => {
            let b = b()?;
            reports.push(BoundReport::new("arl_lower_ldp", arl_lower_ldp(b)?, &[("b", b)]));
            if let (Some(zeta), Ok(eps)) = (args.zeta, eps()) {
                let inputs = [("b", b), ("zeta", zeta), ("epsilon", eps)];
                reports.push(BoundReport::from_result("arl_lower_cdp", arl_lower_cdp(b, zeta, eps), &inputs)?);
            }
        }
        Bound::Sensitivity => {
            let zeta = zeta()?;
            reports.push(BoundReport::new("sensitivity", sensitivity(zeta)?, &[("zeta", zeta)]));
            if let (Some(g), Ok(eps)) = (args.gamma, eps()) {
                let inputs = [("gamma", g), ("zeta", zeta), ("epsilon", eps)];
                reports.push(BoundReport::from_result("cdp_threshold", cdp_threshold_for_arl(g, zeta, eps), &inputs)?);
            }
        }
        Bound::CdpDelay => {
            let (p, zeta, eps, n) = (p()?, zeta()?, eps()?, n()?);
            let delta = need(args.delta, "delta", bound)?;
            let gamma = need(args.gamma, "gamma", bound)?;
            let (pre, post) = labels()?;
            let kl = info_numbers(&pre, &post, p, zeta, None)?.i0;
            let inputs = [("n", n as f64), ("epsilon", eps), ("delta", delta), ("gamma", gamma), ("kl", kl)];
            reports.push(BoundReport::new("test_ratio", cdp_test_ratio(n, eps)?, &inputs));
            let value = cdp_delay_lower(gamma, eps, delta, n, kl, args.alpha0);
            reports.push(BoundReport::from_result("cdp_delay_lower", value, &inputs)?);
        }
        Bound::MinWindow => {
            let n = n()?;
            if let Ok(eps) = eps() {
                let w = min_window(n, eps)?;
                let inputs = [("n", n as f64), ("epsilon", eps)];
                reports.push(BoundReport::new("privacy_term", w.privacy_term, &inputs));
                reports.push(BoundReport::new("statistical_term", w.statistical_term, &inputs));
                reports.push(BoundReport::new("min_window", w.value, &inputs));
            }
            reports.push(BoundReport::from_result("crossover_epsilon", min_window_crossover(n), &[("n", n as f64)])?);
        }
    }
    if let Some(path) = &args.out {
        io::write_json(path, &reports)?;
    }
    let parts: Vec<String> = reports
        .iter()
        .map(|r| {
            if r.flagged {
                format!("{}=inf ({})", r.name, r.note.as_deref().unwrap_or("undefined"))
            } else {
                format!("{}={:.6}", r.name, r.value)
            }
        })
        .collect();
    Ok(Outcome::ok(parts.join(" ")))
}

fn ingest(args: &IngestArgs) -> Result<Outcome> {
    let stream = io::ingest_stream_file(&args.input)?;
    if let Some(path) = &args.out {
        io::write_stream_file(path, stream.n, &stream.steps)?;
    }
    let revealed: usize = stream.graphs().map(|g| g.revealed()).sum();
    let span = match (stream.steps.first(), stream.steps.last()) {
        (Some((a, _)), Some((b, _))) => format!(" t={a}..{b}"),
        _ => String::new(),
    };
    Ok(Outcome::ok(format!("ingested n={} steps={}{span} revealed={revealed}", stream.n, stream.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verb_map_matches_subcommands() {
        let cmd = Cli::command();
        let verbs: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
        let mapped: Vec<&str> = VERB_MAP.iter().map(|(v, _)| *v).collect();
        assert_eq!(verbs, mapped);
        for (_, ops) in VERB_MAP {
            assert!(!ops.is_empty());
        }
    }

    #[test]
    fn every_flag_is_documented() {
        let cmd = Cli::command();
        for sub in cmd.get_subcommands() {
            for arg in sub.get_arguments() {
                if arg.get_id() == "help" {
                    continue;
                }
                let doc = arg.get_help().map(|h| h.to_string()).unwrap_or_default();
                assert!(!doc.is_empty(), "{} --{} lacks help", sub.get_name(), arg.get_id());
            }
        }
        cmd.debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["cbmdetect", "threshold", "--thm", "1", "--n", "100", "--zeta", "0.1", "--eps-log-n"]), 0);
        assert_eq!(run(["cbmdetect", "threshold", "--thm", "1", "--n", "100"]), 2);
        assert_eq!(run(["cbmdetect", "frobnicate"]), 2);
        assert_eq!(run(["cbmdetect", "generate", "--n", "4", "--p", "0.5", "--zeta", "0.1"]), 2);
        assert_eq!(run(["cbmdetect", "threshold", "--thm", "1", "--bogus"]), 2);
    }
}
