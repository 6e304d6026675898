//! Experiment runners: weak/strong convergence sweeps, the resonant-step
//! demonstration, catalog validation, and generic epsilon sweeps.
//!
//! Runners resolve a named catalog problem, delegate the statistics to
//! [`crate::montecarlo`], and render machine-readable output (CSV for error
//! tables, JSON for path dumps and diagnostics). Given the same configuration
//! and seed, rendered output is byte-identical regardless of the thread
//! count.

use crate::catalog;
use crate::error::{OscSdeError, Result};
use crate::montecarlo::{
    epsilon_sweep, estimate_order, compensated_sum, ErrorTable, EstimatorKind, Reference,
    SweepConfig, TestFunction,
};
use crate::problem::{validate_problem, OscillatoryProblem};
use crate::rng::RngStream;
use crate::schemes::{
    recombine, simulate_path, step_euler_maruyama, MicroMacroState, Scheme, TimeGrid,
};
use crate::state::StateVector;
use crate::toolkit::{
    antiderivative_hessian_fallback, antiderivative_jacobian_fallback, QuadratureRule,
};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

/// The experiment families exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    WeakConv,
    StrongConv,
    Resonance,
    Validate,
    Sweep,
}

impl ExperimentKind {
    pub fn id(&self) -> &'static str {
        match self {
            ExperimentKind::WeakConv => "weak-conv",
            ExperimentKind::StrongConv => "strong-conv",
            ExperimentKind::Resonance => "resonance",
            ExperimentKind::Validate => "validate",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ExperimentKind {
    type Err = OscSdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak-conv" => Ok(ExperimentKind::WeakConv),
            "strong-conv" => Ok(ExperimentKind::StrongConv),
            "resonance" => Ok(ExperimentKind::Resonance),
            "validate" => Ok(ExperimentKind::Validate),
            "sweep" => Ok(ExperimentKind::Sweep),
            other => Err(OscSdeError::InvalidConfig(format!(
                "unknown experiment '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = OscSdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(OscSdeError::InvalidConfig(format!(
                "unknown output format '{other}' (expected csv or json)"
            ))),
        }
    }
}

/// Fully resolved experiment configuration. Defaults reproduce the reference
/// grids of each experiment family; see [`ExperimentConfig::defaults_for`].
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub problem: String,
    pub schemes: Vec<Scheme>,
    pub h_values: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub samples: usize,
    pub final_time: f64,
    pub seed: u64,
    pub phi: TestFunction,
    pub reference: Reference,
    pub estimator: EstimatorKind,
    pub format: OutputFormat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Built-in defaults per experiment family.
    ///
    /// Weak convergence: Hénon-Heiles with multiplicative noise, T = 1,
    /// M = 10^4, h = 2^-1..2^-5, eps = 2^-4..2^-10, phi = X1.
    /// Strong convergence: the 0.5X-noise variant, M = 10^2, h = 2^-4..2^-8.
    /// Resonance: logistic problem, eps = 0.1, step 0.99 * 2 pi eps, T = 10,
    /// 20 seeds. Sweep: E|Y(T)| of the micro-macro defect over eps at
    /// h = 2^-8, M = 10^3.
    pub fn defaults_for(kind: ExperimentKind) -> Self {
        let eps_grid: Vec<f64> = (1..=4).map(|i| 2f64.powi(-2 * (i + 1))).collect();
        match kind {
            ExperimentKind::WeakConv => ExperimentConfig {
                experiment: kind,
                problem: "henon-heiles-mult-weak".into(),
                schemes: vec![Scheme::MicroMacro, Scheme::Integral],
                h_values: (1..=5).map(|i| 2f64.powi(-i)).collect(),
                epsilons: eps_grid,
                samples: 10_000,
                final_time: 1.0,
                seed: 42,
                phi: TestFunction::Component(0),
                reference: Reference::FineIntegral { refinement: 64 },
                estimator: EstimatorKind::Weak,
                format: OutputFormat::Csv,
                out: None,
                threads: None,
            },
            ExperimentKind::StrongConv => ExperimentConfig {
                experiment: kind,
                problem: "henon-heiles-mult-strong".into(),
                schemes: vec![Scheme::MicroMacro, Scheme::Integral],
                h_values: (4..=8).map(|i| 2f64.powi(-i)).collect(),
                epsilons: eps_grid,
                samples: 100,
                final_time: 1.0,
                seed: 42,
                phi: TestFunction::Component(0),
                reference: Reference::FineIntegral { refinement: 64 },
                estimator: EstimatorKind::Strong,
                format: OutputFormat::Csv,
                out: None,
                threads: None,
            },
            ExperimentKind::Resonance => ExperimentConfig {
                experiment: kind,
                problem: "logistic".into(),
                schemes: vec![Scheme::EulerMaruyama, Scheme::MicroMacro],
                h_values: vec![],
                epsilons: vec![0.1],
                samples: 20,
                final_time: 10.0,
                seed: 42,
                phi: TestFunction::Component(0),
                reference: Reference::FineIntegral { refinement: 1024 },
                estimator: EstimatorKind::Strong,
                format: OutputFormat::Json,
                out: None,
                threads: None,
            },
            ExperimentKind::Validate => ExperimentConfig {
                experiment: kind,
                problem: String::new(),
                schemes: vec![],
                h_values: vec![],
                epsilons: vec![],
                samples: 0,
                final_time: 1.0,
                seed: 42,
                phi: TestFunction::Component(0),
                reference: Reference::ExactSolution,
                estimator: EstimatorKind::Weak,
                format: OutputFormat::Json,
                out: None,
                threads: None,
            },
            ExperimentKind::Sweep => ExperimentConfig {
                experiment: kind,
                problem: "henon-heiles-add-weak".into(),
                schemes: vec![Scheme::MicroMacro],
                h_values: vec![2f64.powi(-8)],
                epsilons: eps_grid,
                samples: 1_000,
                final_time: 1.0,
                seed: 42,
                phi: TestFunction::Component(0),
                reference: Reference::FineIntegral { refinement: 64 },
                estimator: EstimatorKind::MicroVariable,
                format: OutputFormat::Csv,
                out: None,
                threads: None,
            },
        }
    }

    /// Stable `key=value` pairs of every resolved setting, for provenance.
    pub fn provenance(&self) -> Vec<(&'static str, String)> {
        let join = |xs: &[f64]| {
            xs.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            ("experiment", self.experiment.to_string()),
            ("problem", self.problem.clone()),
            (
                "scheme",
                self.schemes
                    .iter()
                    .map(|s| s.id().to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("eps", join(&self.epsilons)),
            ("h", join(&self.h_values)),
            ("samples", self.samples.to_string()),
            ("final-time", self.final_time.to_string()),
            ("seed", self.seed.to_string()),
            ("phi", self.phi.id()),
            (
                "reference",
                match self.reference {
                    Reference::ExactSolution => "exact".to_string(),
                    Reference::FineIntegral { refinement } => format!("fine:{refinement}"),
                },
            ),
            (
                "estimator",
                match self.estimator {
                    EstimatorKind::Weak => "weak",
                    EstimatorKind::Strong => "strong",
                    EstimatorKind::MicroVariable => "micro-variable",
                }
                .to_string(),
            ),
            (
                "format",
                match self.format {
                    OutputFormat::Csv => "csv",
                    OutputFormat::Json => "json",
                }
                .to_string(),
            ),
            (
                "out",
                self.out
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "-".into()),
            ),
            (
                "threads",
                self.threads
                    .map(|t| t.to_string())
                    .unwrap_or_else(|| "auto".into()),
            ),
        ]
    }
}

/// Runs `f` inside a rayon pool capped at `threads` workers (when given).
/// Results never depend on the worker count.
pub fn with_thread_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(k) if k > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("failed to build thread pool")
            .install(f),
        _ => f(),
    }
}

fn resolve_problem(cfg: &ExperimentConfig) -> Result<(catalog::CatalogEntry, StateVector)> {
    let entry = catalog::by_name(&cfg.problem)?;
    let x0 = entry.spec.initial_state.clone();
    if let TestFunction::Component(i) = cfg.phi {
        if i >= entry.spec.dimension {
            return Err(OscSdeError::InvalidConfig(format!(
                "phi component {} out of range for dimension {}",
                i + 1,
                entry.spec.dimension
            )));
        }
    }
    Ok((entry, x0))
}

fn run_error_table(cfg: &ExperimentConfig, estimator: EstimatorKind) -> Result<ErrorTable> {
    let (entry, x0) = resolve_problem(cfg)?;
    let sweep = SweepConfig {
        experiment: cfg.experiment.to_string(),
        estimator,
        schemes: cfg.schemes.clone(),
        phi: cfg.phi,
        x0,
        final_time: cfg.final_time,
        h_values: cfg.h_values.clone(),
        epsilons: cfg.epsilons.clone(),
        sample_count: cfg.samples,
        reference: cfg.reference,
        seed: cfg.seed,
    };
    with_thread_pool(cfg.threads, || epsilon_sweep(&entry.problem, &sweep))
}

/// Weak-convergence experiment: error table plus per-(scheme, eps) order fits.
pub fn run_weak_conv(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    run_error_table(cfg, EstimatorKind::Weak)
}

/// Strong-convergence experiment.
pub fn run_strong_conv(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    run_error_table(cfg, EstimatorKind::Strong)
}

/// Generic epsilon sweep with the configured estimator.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    run_error_table(cfg, cfg.estimator)
}

/// A dumped trajectory: `x[n]` is the state at `t[n]`.
#[derive(Debug, Clone, Serialize)]
pub struct PathDump {
    pub t: Vec<f64>,
    pub x: Vec<StateVector>,
    pub scheme: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceSeedResult {
    pub seed_index: usize,
    /// Endpoint error of direct Euler-Maruyama; `None` when the path blew up.
    pub em_error: Option<f64>,
    pub micro_macro_error: f64,
}

/// Output of the resonant-step demonstration.
#[derive(Debug, Clone, Serialize)]
pub struct ResonanceOutput {
    pub config: ExperimentConfig,
    pub problem: String,
    pub epsilon: f64,
    /// The resonant step actually used.
    pub dt: f64,
    /// Horizon rounded to a whole number of resonant steps.
    pub final_time: f64,
    pub step_count: usize,
    pub seeds: usize,
    /// Median endpoint errors across seeds (EM blow-ups count as infinite,
    /// which serializes as null).
    pub median_em_error: f64,
    pub median_micro_macro_error: f64,
    pub em_diverged_seeds: usize,
    pub per_seed: Vec<ResonanceSeedResult>,
    /// Trajectories of the first seed: fine reference, EM, micro-macro.
    pub paths: Vec<PathDump>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in medians"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Euler-Maruyama path that survives blow-up: returns the partial trajectory
/// and whether it diverged.
fn em_path_with_divergence(
    problem: &OscillatoryProblem,
    x0: &StateVector,
    grid: &TimeGrid,
    increments: &[f64],
) -> (Vec<StateVector>, bool) {
    let h = grid.step();
    let mut path = vec![x0.clone()];
    let mut x = x0.clone();
    for (n, &dw) in increments.iter().enumerate() {
        match step_euler_maruyama(problem, &x, grid.time(n), h, dw) {
            Ok(next) => {
                x = next;
                path.push(x.clone());
            }
            Err(_) => return (path, true),
        }
    }
    (path, false)
}

/// Demonstrates the failure of direct Euler-Maruyama at a resonant step size
/// while the micro-macro scheme tracks the reference, all three driven by one
/// shared Brownian path per seed.
pub fn run_resonance(cfg: &ExperimentConfig) -> Result<ResonanceOutput> {
    let entry = catalog::by_name(&cfg.problem)?;
    let epsilon = *cfg.epsilons.first().ok_or_else(|| {
        OscSdeError::InvalidConfig("resonance needs exactly one epsilon".into())
    })?;
    let problem = entry.problem.with_epsilon(epsilon)?;
    let x0 = entry.spec.initial_state.clone();

    // Default step sits just off the oscillation period in physical time.
    let dt = match cfg.h_values.first() {
        Some(&h) => h,
        None => 0.99 * problem.period() * epsilon,
    };
    if dt <= 0.0 || dt > cfg.final_time {
        return Err(OscSdeError::InvalidConfig(format!(
            "resonant step {dt} incompatible with final time {}",
            cfg.final_time
        )));
    }
    let steps = (cfg.final_time / dt).round().max(1.0) as usize;
    let final_time = steps as f64 * dt;
    let grid = TimeGrid::from_zero(final_time, steps)?;

    let refinement = match cfg.reference {
        Reference::FineIntegral { refinement } => refinement,
        Reference::ExactSolution => {
            return Err(OscSdeError::InvalidConfig(
                "resonance uses a fine integral-scheme reference".into(),
            ))
        }
    };
    let fine_steps = steps * refinement;
    let fine_grid = TimeGrid::from_zero(final_time, fine_steps)?;
    let fine_step = final_time / fine_steps as f64;

    if cfg.samples == 0 {
        return Err(OscSdeError::InvalidConfig("resonance needs >= 1 seed".into()));
    }

    struct SeedOutcome {
        em_error: Option<f64>,
        mm_error: f64,
        paths: Option<(Vec<StateVector>, Vec<StateVector>, bool, Vec<StateVector>)>,
    }

    let outcomes: Vec<Result<SeedOutcome>> = with_thread_pool(cfg.threads, || {
        (0..cfg.samples)
            .into_par_iter()
            .map(|s| {
                let mut stream = RngStream::for_sample(cfg.seed, 0, s);
                let brownian = crate::montecarlo::BrownianGrid::sample(
                    &mut stream,
                    fine_step,
                    fine_steps,
                );
                let reference_path = simulate_path(
                    &problem,
                    Scheme::Integral,
                    &x0,
                    &fine_grid,
                    brownian.fine_increments(),
                )?;
                let reference_end = reference_path.last().unwrap().clone();
                let coarse = brownian.coarsen(refinement)?;

                let (em_path, em_diverged) =
                    em_path_with_divergence(&problem, &x0, &grid, &coarse);
                let em_error = if em_diverged {
                    None
                } else {
                    Some(em_path.last().unwrap().sub(&reference_end).norm())
                };

                let mm_path = simulate_path(&problem, Scheme::MicroMacro, &x0, &grid, &coarse)?;
                let mm_error = mm_path.last().unwrap().sub(&reference_end).norm();

                Ok(SeedOutcome {
                    em_error,
                    mm_error,
                    paths: (s == 0).then_some((reference_path, em_path, em_diverged, mm_path)),
                })
            })
            .collect()
    });

    let mut per_seed = Vec::with_capacity(cfg.samples);
    let mut first_paths = None;
    for (s, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome.map_err(|e| OscSdeError::PathFailure {
            path_index: s,
            source: Box::new(e),
        })?;
        per_seed.push(ResonanceSeedResult {
            seed_index: s,
            em_error: outcome.em_error,
            micro_macro_error: outcome.mm_error,
        });
        if s == 0 {
            first_paths = outcome.paths;
        }
    }

    let mut em_errors: Vec<f64> = per_seed
        .iter()
        .map(|r| r.em_error.unwrap_or(f64::INFINITY))
        .collect();
    let mut mm_errors: Vec<f64> = per_seed.iter().map(|r| r.micro_macro_error).collect();
    let em_diverged_seeds = per_seed.iter().filter(|r| r.em_error.is_none()).count();

    let (reference_path, em_path, em_diverged, mm_path) =
        first_paths.expect("first seed outcome present");
    let mut paths = vec![
        PathDump {
            t: fine_grid.times(),
            x: reference_path,
            scheme: "integral-reference".into(),
            seed: cfg.seed,
        },
        PathDump {
            t: grid.times()[..em_path.len()].to_vec(),
            x: em_path,
            scheme: "em".into(),
            seed: cfg.seed,
        },
        PathDump {
            t: grid.times(),
            x: mm_path,
            scheme: "micro-macro".into(),
            seed: cfg.seed,
        },
    ];
    if em_diverged {
        paths[1].scheme = "em-diverged".into();
    }

    Ok(ResonanceOutput {
        config: cfg.clone(),
        problem: entry.spec.name.clone(),
        epsilon,
        dt,
        final_time,
        step_count: steps,
        seeds: cfg.samples,
        median_em_error: median(&mut em_errors),
        median_micro_macro_error: median(&mut mm_errors),
        em_diverged_seeds,
        per_seed,
        paths,
    })
}

/// One validation check: a measured violation against its acceptance bound.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub measured: f64,
    pub requirement: String,
    pub pass: bool,
}

impl ValidationCheck {
    fn upper_bound(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        ValidationCheck {
            name: name.into(),
            measured,
            requirement: format!("<= {bound:e}"),
            pass: measured <= bound,
        }
    }

    fn in_band(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        ValidationCheck {
            name: name.into(),
            measured,
            requirement: format!("in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&measured),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub config: ExperimentConfig,
    pub checks: Vec<ValidationCheck>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {:<55} measured {:>12.3e}  required {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.requirement
            ));
        }
        out.push_str(&format!(
            "{}: {}/{} checks passed\n",
            if self.passed { "OK" } else { "FAILED" },
            self.checks.iter().filter(|c| c.pass).count(),
            self.checks.len()
        ));
        out
    }
}

fn validation_probes(dim: usize) -> Vec<StateVector> {
    match dim {
        1 => vec![
            StateVector::scalar(2.0),
            StateVector::scalar(1.0),
            StateVector::scalar(0.3),
            StateVector::scalar(-0.5),
        ],
        4 => vec![
            StateVector::constant(4, 0.7),
            StateVector::constant(4, 1.0),
            StateVector::constant(4, 0.12),
            StateVector::new(vec![-0.5, 0.8, 1.2, -0.3]),
            StateVector::new(vec![0.4, -1.1, 0.9, 1.3]),
        ],
        d => vec![StateVector::constant(d, 0.7), StateVector::constant(d, -0.4)],
    }
}

/// Runs the full invariant suite: catalog diagnostics, toolkit consistency,
/// estimator self-tests on the oracle problems, and scheme equivalence in the
/// trivial limit.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let mut checks = Vec::new();

    let names: Vec<&str> = if cfg.problem.is_empty() {
        catalog::PROBLEM_NAMES.to_vec()
    } else {
        vec![cfg.problem.as_str()]
    };

    for name in &names {
        let entry = catalog::by_name(name)?;
        let p = &entry.problem;
        let probes = validation_probes(p.dimension());
        let diag = validate_problem(p, &probes)?;
        checks.push(ValidationCheck::upper_bound(
            format!("{name}/drift-periodicity"),
            diag.periodicity_violation,
            1e-12,
        ));
        checks.push(ValidationCheck::upper_bound(
            format!("{name}/antiderivative-at-zero"),
            diag.antiderivative_at_zero,
            1e-12,
        ));
        checks.push(ValidationCheck::upper_bound(
            format!("{name}/antiderivative-closure"),
            diag.antiderivative_at_period,
            1e-8,
        ));
        if let Some(v) = diag.averaged_drift_mismatch {
            checks.push(ValidationCheck::upper_bound(
                format!("{name}/averaged-drift-consistency"),
                v,
                1e-9,
            ));
        }
        if let Some(v) = diag.antiderivative_mismatch {
            checks.push(ValidationCheck::upper_bound(
                format!("{name}/antiderivative-consistency"),
                v,
                1e-9,
            ));
        }

        if p.has_analytic_jacobian() {
            let rule = QuadratureRule::default();
            let mut jac_diff: f64 = 0.0;
            let mut hess_diff: f64 = 0.0;
            for x in probes.iter().take(3) {
                for k in 0..3 {
                    let theta = p.period() * (k as f64 + 0.21) / 3.0;
                    let jac = p.antiderivative_jacobian(theta, x)?;
                    let fd = antiderivative_jacobian_fallback(p, theta, x, rule)?;
                    jac_diff = jac_diff.max(jac.max_abs_diff(&fd));
                    if p.has_analytic_hessian() {
                        let hess = p.antiderivative_hessian(theta, x)?;
                        let fd = antiderivative_hessian_fallback(p, theta, x, rule)?;
                        hess_diff = hess_diff.max(hess.max_abs_diff(&fd));
                    }
                }
            }
            checks.push(ValidationCheck::upper_bound(
                format!("{name}/jacobian-consistency"),
                jac_diff,
                1e-6,
            ));
            if p.has_analytic_hessian() {
                checks.push(ValidationCheck::upper_bound(
                    format!("{name}/hessian-consistency"),
                    hess_diff,
                    1e-5,
                ));
            }
        }
    }

    if cfg.problem.is_empty() {
        checks.extend(run_estimator_self_tests(cfg)?);
    }

    let passed = checks.iter().all(|c| c.pass);
    Ok(ValidationReport {
        config: cfg.clone(),
        checks,
        passed,
    })
}

fn run_estimator_self_tests(cfg: &ExperimentConfig) -> Result<Vec<ValidationCheck>> {
    let mut checks = Vec::new();
    let gbm = catalog::geometric_brownian(1.0, 0.5, 1.0);
    let x0 = StateVector::scalar(1.0);

    // Moment oracle: the exact-solution sampler must reproduce E X(T) = e.
    let t = 1.0;
    let m = 20_000;
    let samples: Vec<f64> = with_thread_pool(cfg.threads, || {
        (0..m)
            .into_par_iter()
            .map(|i| {
                let mut stream = RngStream::for_sample(cfg.seed, 7, i);
                let w_t = t.sqrt() * stream.next_gaussian();
                gbm.exact_endpoint(&x0, t, w_t).unwrap()[0]
            })
            .collect()
    });
    let mean = compensated_sum(&samples) / m as f64;
    let moment_error = (mean - 1.0f64.exp()).abs();
    checks.push(ValidationCheck::upper_bound(
        "gbm/exact-sampler-moment",
        moment_error,
        // ~4 standard errors of the sampler at M = 20000.
        0.05,
    ));

    let weak = with_thread_pool(cfg.threads, || {
        epsilon_sweep(
            &gbm,
            &SweepConfig {
                experiment: "validate".into(),
                estimator: EstimatorKind::Weak,
                schemes: vec![Scheme::EulerMaruyama],
                phi: TestFunction::Component(0),
                x0: x0.clone(),
                final_time: 1.0,
                h_values: (2..=6).map(|i| 2f64.powi(-i)).collect(),
                epsilons: vec![1.0],
                sample_count: 4_000,
                reference: Reference::ExactSolution,
                seed: cfg.seed,
            },
        )
    })?;
    let weak_slope = weak.rows[0].order_fit.unwrap_or(f64::NAN);
    checks.push(ValidationCheck::in_band("gbm/weak-order", weak_slope, 0.8, 1.2));

    let strong = with_thread_pool(cfg.threads, || {
        epsilon_sweep(
            &gbm,
            &SweepConfig {
                experiment: "validate".into(),
                estimator: EstimatorKind::Strong,
                schemes: vec![Scheme::EulerMaruyama],
                phi: TestFunction::Component(0),
                x0: x0.clone(),
                final_time: 1.0,
                h_values: (4..=8).map(|i| 2f64.powi(-i)).collect(),
                epsilons: vec![1.0],
                sample_count: 1_000,
                reference: Reference::ExactSolution,
                seed: cfg.seed,
            },
        )
    })?;
    let strong_slope = strong.rows[0].order_fit.unwrap_or(f64::NAN);
    checks.push(ValidationCheck::in_band(
        "gbm/strong-order",
        strong_slope,
        0.4,
        0.6,
    ));

    // Trivial limit: all three schemes coincide pathwise on a
    // theta-independent problem.
    let steps = 64;
    let grid = TimeGrid::from_zero(1.0, steps)?;
    let h = grid.step();
    let incs: Vec<f64> = RngStream::new(cfg.seed, 3)
        .gaussian_increments(steps)
        .iter()
        .map(|xi| h.sqrt() * xi)
        .collect();
    let mut max_diff: f64 = 0.0;
    let em = simulate_path(&gbm, Scheme::EulerMaruyama, &x0, &grid, &incs)?;
    let integral = simulate_path(&gbm, Scheme::Integral, &x0, &grid, &incs)?;
    let mm = simulate_path(&gbm, Scheme::MicroMacro, &x0, &grid, &incs)?;
    for n in 0..=steps {
        max_diff = max_diff
            .max(em[n].sub(&integral[n]).max_abs())
            .max(em[n].sub(&mm[n]).max_abs());
    }
    checks.push(ValidationCheck::upper_bound(
        "trivial-limit/scheme-equivalence",
        max_diff,
        1e-12 * steps as f64,
    ));

    // Integral-scheme exactness on the pure oscillation.
    let mut exactness: f64 = 0.0;
    for eps in [1.0, 2f64.powi(-4), 2f64.powi(-8)] {
        let p = catalog::pure_oscillation(eps);
        for steps in [1usize, 7, 64] {
            let grid = TimeGrid::from_zero(1.0, steps)?;
            let end = crate::schemes::simulate_endpoint(
                &p,
                Scheme::Integral,
                &StateVector::scalar(0.0),
                &grid,
                &vec![0.0; steps],
            )?;
            let exact = p.exact_endpoint(&StateVector::scalar(0.0), 1.0, 0.0).unwrap();
            exactness = exactness.max((end[0] - exact[0]).abs());
        }
    }
    checks.push(ValidationCheck::upper_bound(
        "pure-osc/integral-exactness",
        exactness,
        1e-10,
    ));

    // The micro variable stays O(eps): log-log slope against eps.
    let mm_problem = catalog::by_name("henon-heiles-add-weak")?;
    let table = with_thread_pool(cfg.threads, || {
        epsilon_sweep(
            &mm_problem.problem,
            &SweepConfig {
                experiment: "validate".into(),
                estimator: EstimatorKind::MicroVariable,
                schemes: vec![Scheme::MicroMacro],
                phi: TestFunction::Component(0),
                x0: StateVector::constant(4, 0.7),
                final_time: 1.0,
                h_values: vec![2f64.powi(-6)],
                epsilons: (1..=4).map(|i| 2f64.powi(-2 * (i + 1))).collect(),
                sample_count: 200,
                reference: Reference::ExactSolution,
                seed: cfg.seed,
            },
        )
    })?;
    let slope = table.rows[0].order_fit.unwrap_or(f64::NAN);
    checks.push(ValidationCheck::in_band(
        "micro-variable/epsilon-slope",
        slope,
        0.8,
        1.2,
    ));

    Ok(checks)
}

/// Any experiment's output.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum ExperimentOutput {
    Table {
        config: ExperimentConfig,
        rows_kind: EstimatorKind,
        table: ErrorTable,
    },
    Resonance(Box<ResonanceOutput>),
    Validation(ValidationReport),
}

/// Dispatches to the runner for the configured experiment kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.experiment {
        ExperimentKind::WeakConv => Ok(ExperimentOutput::Table {
            config: cfg.clone(),
            rows_kind: EstimatorKind::Weak,
            table: run_weak_conv(cfg)?,
        }),
        ExperimentKind::StrongConv => Ok(ExperimentOutput::Table {
            config: cfg.clone(),
            rows_kind: EstimatorKind::Strong,
            table: run_strong_conv(cfg)?,
        }),
        ExperimentKind::Sweep => Ok(ExperimentOutput::Table {
            config: cfg.clone(),
            rows_kind: cfg.estimator,
            table: run_sweep(cfg)?,
        }),
        ExperimentKind::Resonance => Ok(ExperimentOutput::Resonance(Box::new(run_resonance(cfg)?))),
        ExperimentKind::Validate => Ok(ExperimentOutput::Validation(run_validate(cfg)?)),
    }
}

/// Renders an experiment output in the configured format. Error tables
/// support CSV and JSON; path dumps and diagnostics are JSON only.
pub fn render_output(cfg: &ExperimentConfig, output: &ExperimentOutput) -> Result<String> {
    match (output, cfg.format) {
        (ExperimentOutput::Table { table, .. }, OutputFormat::Csv) => Ok(table.to_csv()),
        (_, OutputFormat::Json) => {
            let mut s = serde_json::to_string(output)
                .map_err(|e| OscSdeError::InvalidInput(format!("serialization failed: {e}")))?;
            s.push('\n');
            Ok(s)
        }
        (ExperimentOutput::Resonance(_), OutputFormat::Csv) => Err(OscSdeError::InvalidConfig(
            "resonance emits JSON path dumps; use --format json".into(),
        )),
        (ExperimentOutput::Validation(_), OutputFormat::Csv) => Err(OscSdeError::InvalidConfig(
            "validate emits a JSON diagnostic report; use --format json".into(),
        )),
    }
}
