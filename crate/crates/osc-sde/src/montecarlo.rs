//! Monte Carlo error estimation against coupled references.
//!
//! The estimators here all follow the same common-random-number design: each
//! sample owns one fine Brownian path; the reference (a fine-step integral
//! scheme or an exact solution) and every coarse scheme under test are driven
//! by restrictions of that same path, obtained by exact block sums of the
//! fine increments. Differences of expectations are then estimated from the
//! per-sample differences, which suppresses most of the Monte Carlo variance.
//!
//! All reductions are index-ordered and compensated, so results are identical
//! no matter how many threads evaluate the samples.

use crate::error::{OscSdeError, Result};
use crate::problem::OscillatoryProblem;
use crate::rng::RngStream;
use crate::schemes::{simulate_endpoint, simulate_micro_macro_state, Scheme, TimeGrid};
use crate::state::StateVector;
use rayon::prelude::*;
use serde::Serialize;

/// Neumaier-compensated sum; deterministic for a fixed element order.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for &x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            compensation += (sum - t) + x;
        } else {
            compensation += (x - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

fn mean_and_sample_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = compensated_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let squares: Vec<f64> = values.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = compensated_sum(&squares) / (n - 1) as f64;
    (mean, var.max(0.0).sqrt())
}

/// A fine-resolution Brownian path stored as its increments.
#[derive(Debug, Clone)]
pub struct BrownianGrid {
    fine_step: f64,
    fine_increments: Vec<f64>,
}

impl BrownianGrid {
    /// Draws `step_count` increments `sqrt(fine_step) * xi` from the stream.
    pub fn sample(stream: &mut RngStream, fine_step: f64, step_count: usize) -> Self {
        let sqrt_h = fine_step.sqrt();
        let fine_increments = (0..step_count)
            .map(|_| sqrt_h * stream.next_gaussian())
            .collect();
        BrownianGrid {
            fine_step,
            fine_increments,
        }
    }

    pub fn from_increments(fine_step: f64, fine_increments: Vec<f64>) -> Self {
        BrownianGrid {
            fine_step,
            fine_increments,
        }
    }

    pub fn fine_step(&self) -> f64 {
        self.fine_step
    }

    pub fn fine_increments(&self) -> &[f64] {
        &self.fine_increments
    }

    pub fn step_count(&self) -> usize {
        self.fine_increments.len()
    }

    /// `W(T)`: compensated sum of all fine increments.
    pub fn total(&self) -> f64 {
        compensated_sum(&self.fine_increments)
    }

    /// Restricts the path to a grid coarser by `ratio`: coarse increment `j`
    /// is the exact (compensated) sum of its block of fine increments, so the
    /// coarse path is the same Brownian motion observed less often.
    pub fn coarsen(&self, ratio: usize) -> Result<Vec<f64>> {
        if ratio == 0 || !ratio.is_power_of_two() {
            return Err(OscSdeError::InvalidInput(format!(
                "coarsening ratio must be a power of two, got {ratio}"
            )));
        }
        if self.fine_increments.len() % ratio != 0 {
            return Err(OscSdeError::InvalidInput(format!(
                "coarsening ratio {ratio} does not divide {} fine steps",
                self.fine_increments.len()
            )));
        }
        Ok(self
            .fine_increments
            .chunks(ratio)
            .map(compensated_sum)
            .collect())
    }
}

/// A Monte Carlo estimate with a 95% confidence half-width.
///
/// For weak estimates the half-width is `1.96 * sd / sqrt(M)` of the
/// per-sample values. For strong (root-mean-square) estimates the confidence
/// interval is computed on the mean-square error and propagated through the
/// square root.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorEstimate {
    pub value: f64,
    pub half_width: f64,
    pub sample_count: usize,
}

impl ErrorEstimate {
    /// False when the confidence interval is wider than the estimate itself.
    pub fn is_significant(&self) -> bool {
        self.half_width < self.value
    }
}

/// Test function for weak errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestFunction {
    /// `phi(X) = X_i` (zero-based component index).
    Component(usize),
    /// `phi(X) = sum_i X_i`.
    Sum,
}

impl TestFunction {
    pub fn eval(&self, x: &StateVector) -> f64 {
        match *self {
            TestFunction::Component(i) => x[i],
            TestFunction::Sum => compensated_sum(x.as_slice()),
        }
    }

    pub fn id(&self) -> String {
        match *self {
            TestFunction::Component(i) => format!("x{}", i + 1),
            TestFunction::Sum => "sum".to_string(),
        }
    }
}

/// Reference solution the schemes are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// The problem's exact endpoint sampler (oracle problems only).
    ExactSolution,
    /// Integral scheme on a grid finer than the finest tested step by this
    /// power-of-two factor.
    FineIntegral { refinement: usize },
}

/// What the sweep measures per `(scheme, epsilon, h)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// `|E phi(X_T^scheme) - E phi(X_T^ref)|` with common random numbers.
    Weak,
    /// `sqrt(E |X_T^scheme - X_T^ref|^2)` on the shared Brownian path.
    Strong,
    /// `E |Y(T)|` of the micro-macro defect variable (no reference).
    MicroVariable,
}

/// Least-squares order fit of `log(error)` against `log(h)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute log-space residual; a fit-quality flag.
    pub max_residual: f64,
}

/// Fits `error ~ C * h^slope` by least squares in log-log space.
pub fn estimate_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(OscSdeError::InvalidInput(format!(
            "order fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for &(h, e) in points {
        if h <= 0.0 {
            return Err(OscSdeError::InvalidInput(format!("nonpositive step {h}")));
        }
        if e <= 0.0 {
            return Err(OscSdeError::InvalidInput(format!(
                "nonpositive error {e}: exact scheme or estimator failure"
            )));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let x_mean = compensated_sum(&xs) / n;
    let y_mean = compensated_sum(&ys) / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(OscSdeError::InvalidInput(
            "order fit needs at least two distinct step sizes".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).abs())
        .fold(0.0, f64::max);
    Ok(OrderFit {
        slope,
        intercept,
        max_residual,
    })
}

/// One row of an error table; mirrors the CSV schema.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRow {
    pub experiment: String,
    pub problem: String,
    pub scheme: String,
    pub epsilon: f64,
    pub h: f64,
    #[serde(rename = "M")]
    pub samples: usize,
    pub error: f64,
    pub ci_half_width: f64,
    pub order_fit: Option<f64>,
    pub residual: Option<f64>,
    pub seed: u64,
}

/// Error estimates over a `(scheme, epsilon, h)` grid, with per-group order
/// fits attached to every row of the group.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub const CSV_HEADER: &'static str =
        "experiment,problem,scheme,epsilon,h,M,error,ci_half_width,order_fit,residual,seed";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let order = r.order_fit.map(|v| v.to_string()).unwrap_or_default();
            let residual = r.residual.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.experiment,
                r.problem,
                r.scheme,
                r.epsilon,
                r.h,
                r.samples,
                r.error,
                r.ci_half_width,
                order,
                residual,
                r.seed
            ));
        }
        out
    }

    /// Rows for one scheme at one epsilon, in table order.
    pub fn rows_for(&self, scheme: &str, epsilon: f64) -> Vec<&ErrorRow> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.epsilon == epsilon)
            .collect()
    }

    pub fn epsilons(&self) -> Vec<f64> {
        let mut eps: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !eps.contains(&r.epsilon) {
                eps.push(r.epsilon);
            }
        }
        eps
    }
}

/// Configuration of an epsilon sweep (the general estimator engine).
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Label written into the `experiment` column.
    pub experiment: String,
    pub estimator: EstimatorKind,
    pub schemes: Vec<Scheme>,
    pub phi: TestFunction,
    pub x0: StateVector,
    pub final_time: f64,
    pub h_values: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub sample_count: usize,
    pub reference: Reference,
    pub seed: u64,
}

fn steps_for(h: f64, final_time: f64) -> Result<usize> {
    if h <= 0.0 || !h.is_finite() {
        return Err(OscSdeError::InvalidConfig(format!("step {h} must be positive")));
    }
    let n = (final_time / h).round();
    if n < 1.0 {
        return Err(OscSdeError::InvalidConfig(format!(
            "step {h} exceeds the final time {final_time}"
        )));
    }
    if ((n * h - final_time) / final_time).abs() > 1e-9 {
        return Err(OscSdeError::InvalidConfig(format!(
            "step {h} does not divide the final time {final_time}"
        )));
    }
    Ok(n as usize)
}

struct CellLayout {
    /// Steps per tested h, in config order.
    steps: Vec<usize>,
    /// Fine steps shared by every cell of one epsilon block.
    fine_steps: usize,
    /// Coarsening ratio per tested h.
    ratios: Vec<usize>,
}

fn plan_cells(cfg: &SweepConfig) -> Result<CellLayout> {
    if cfg.h_values.is_empty() {
        return Err(OscSdeError::InvalidConfig("empty step list".into()));
    }
    if cfg.epsilons.is_empty() {
        return Err(OscSdeError::InvalidConfig("empty epsilon list".into()));
    }
    for &eps in &cfg.epsilons {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(OscSdeError::InvalidConfig(format!(
                "epsilon {eps} outside (0, 1]"
            )));
        }
    }
    if cfg.sample_count == 0 {
        return Err(OscSdeError::InvalidConfig("sample count must be >= 1".into()));
    }
    if cfg.schemes.is_empty() {
        return Err(OscSdeError::InvalidConfig("empty scheme list".into()));
    }
    if cfg.estimator == EstimatorKind::MicroVariable
        && cfg.schemes.iter().any(|s| *s != Scheme::MicroMacro)
    {
        return Err(OscSdeError::InvalidConfig(
            "the micro-variable estimator applies to the micro-macro scheme only".into(),
        ));
    }

    let steps: Vec<usize> = cfg
        .h_values
        .iter()
        .map(|&h| steps_for(h, cfg.final_time))
        .collect::<Result<_>>()?;
    let max_steps = *steps.iter().max().unwrap();

    let refinement = match (cfg.estimator, cfg.reference) {
        (EstimatorKind::MicroVariable, _) | (_, Reference::ExactSolution) => 1,
        (_, Reference::FineIntegral { refinement }) => {
            if !refinement.is_power_of_two() {
                return Err(OscSdeError::InvalidConfig(format!(
                    "reference refinement {refinement} must be a power of two"
                )));
            }
            refinement
        }
    };
    let fine_steps = max_steps * refinement;

    let ratios: Vec<usize> = steps
        .iter()
        .map(|&n| {
            let ratio = fine_steps / n;
            if ratio * n != fine_steps || !ratio.is_power_of_two() {
                Err(OscSdeError::InvalidConfig(format!(
                    "grids are not nested: {fine_steps} fine steps vs {n} coarse steps"
                )))
            } else {
                Ok(ratio)
            }
        })
        .collect::<Result<_>>()?;

    Ok(CellLayout {
        steps,
        fine_steps,
        ratios,
    })
}

/// Per-sample contributions, one per (scheme, h) cell in row-major
/// `scheme * h` order.
fn run_sample(
    problem: &OscillatoryProblem,
    cfg: &SweepConfig,
    layout: &CellLayout,
    eps_index: usize,
    sample_index: usize,
) -> Result<Vec<f64>> {
    let mut stream = RngStream::for_sample(cfg.seed, eps_index, sample_index);
    let fine_step = cfg.final_time / layout.fine_steps as f64;
    let brownian = BrownianGrid::sample(&mut stream, fine_step, layout.fine_steps);

    let reference_endpoint = match cfg.estimator {
        EstimatorKind::MicroVariable => None,
        _ => Some(match cfg.reference {
            Reference::ExactSolution => problem
                .exact_endpoint(&cfg.x0, cfg.final_time, brownian.total())
                .ok_or_else(|| {
                    OscSdeError::InvalidConfig(format!(
                        "problem '{}' has no exact solution to use as reference",
                        problem.name()
                    ))
                })?,
            Reference::FineIntegral { .. } => {
                let fine_grid = TimeGrid::from_zero(cfg.final_time, layout.fine_steps)?;
                simulate_endpoint(
                    problem,
                    Scheme::Integral,
                    &cfg.x0,
                    &fine_grid,
                    brownian.fine_increments(),
                )?
            }
        }),
    };

    let mut out = Vec::with_capacity(cfg.schemes.len() * layout.steps.len());
    for &scheme in &cfg.schemes {
        for (h_idx, &n) in layout.steps.iter().enumerate() {
            let coarse = brownian.coarsen(layout.ratios[h_idx])?;
            let grid = TimeGrid::from_zero(cfg.final_time, n)?;
            let value = match cfg.estimator {
                EstimatorKind::Weak => {
                    let end = simulate_endpoint(problem, scheme, &cfg.x0, &grid, &coarse)?;
                    cfg.phi.eval(&end) - cfg.phi.eval(reference_endpoint.as_ref().unwrap())
                }
                EstimatorKind::Strong => {
                    let end = simulate_endpoint(problem, scheme, &cfg.x0, &grid, &coarse)?;
                    let diff = end.sub(reference_endpoint.as_ref().unwrap());
                    diff.iter().map(|d| d * d).sum()
                }
                EstimatorKind::MicroVariable => {
                    let state = simulate_micro_macro_state(problem, &cfg.x0, &grid, &coarse)?;
                    state.micro_part.norm()
                }
            };
            out.push(value);
        }
    }
    Ok(out)
}

/// Estimates for every (scheme, h) cell at one epsilon.
fn run_epsilon_block(
    problem: &OscillatoryProblem,
    cfg: &SweepConfig,
    layout: &CellLayout,
    eps_index: usize,
) -> Result<Vec<ErrorEstimate>> {
    let m = cfg.sample_count;
    let sample_results: Vec<Result<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|i| run_sample(problem, cfg, layout, eps_index, i))
        .collect();

    // Deterministic error selection: lowest failing sample index wins.
    let mut samples = Vec::with_capacity(m);
    for (i, r) in sample_results.into_iter().enumerate() {
        match r {
            Ok(v) => samples.push(v),
            Err(e) => {
                return Err(OscSdeError::PathFailure {
                    path_index: i,
                    source: Box::new(e),
                })
            }
        }
    }

    let cell_count = cfg.schemes.len() * layout.steps.len();
    let mut estimates = Vec::with_capacity(cell_count);
    let mut column = vec![0.0; m];
    for cell in 0..cell_count {
        for (i, s) in samples.iter().enumerate() {
            column[i] = s[cell];
        }
        let (mean, sd) = mean_and_sample_sd(&column);
        let ci = 1.96 * sd / (m as f64).sqrt();
        let estimate = match cfg.estimator {
            EstimatorKind::Weak => ErrorEstimate {
                value: mean.abs(),
                half_width: ci,
                sample_count: m,
            },
            EstimatorKind::Strong => {
                let value = mean.max(0.0).sqrt();
                let half_width = if value > 0.0 { ci / (2.0 * value) } else { 0.0 };
                ErrorEstimate {
                    value,
                    half_width,
                    sample_count: m,
                }
            }
            EstimatorKind::MicroVariable => ErrorEstimate {
                value: mean,
                half_width: ci,
                sample_count: m,
            },
        };
        estimates.push(estimate);
    }
    Ok(estimates)
}

/// Order fit over `(x, estimate)` pairs, preferring statistically significant
/// points when at least three of them exist.
fn fit_group(points: &[(f64, ErrorEstimate)]) -> Option<OrderFit> {
    let significant: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| e.is_significant() && e.value > 0.0)
        .map(|(x, e)| (*x, e.value))
        .collect();
    let all_positive: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| e.value > 0.0)
        .map(|(x, e)| (*x, e.value))
        .collect();
    let chosen = if significant.len() >= 3 {
        significant
    } else {
        all_positive
    };
    estimate_order(&chosen).ok()
}

/// Runs the configured estimator over every `(epsilon, h)` pair.
///
/// Each epsilon gets its own family of random streams; within an epsilon all
/// step sizes and schemes share Brownian paths sample by sample. Order fits
/// are attached per `(scheme, epsilon)` group (log error vs log h) for weak
/// and strong estimators, and per scheme across epsilons (log E|Y| vs log
/// epsilon) for the micro-variable estimator.
pub fn epsilon_sweep(
    problem_template: &OscillatoryProblem,
    cfg: &SweepConfig,
) -> Result<ErrorTable> {
    let layout = plan_cells(cfg)?;
    let h_len = cfg.h_values.len();

    // estimates[eps_idx][cell]
    let mut blocks: Vec<Vec<ErrorEstimate>> = Vec::with_capacity(cfg.epsilons.len());
    for (eps_index, &eps) in cfg.epsilons.iter().enumerate() {
        let problem = problem_template.with_epsilon(eps)?;
        blocks.push(run_epsilon_block(&problem, cfg, &layout, eps_index)?);
    }

    let mut rows = Vec::new();
    for (eps_index, &eps) in cfg.epsilons.iter().enumerate() {
        for (s_idx, scheme) in cfg.schemes.iter().enumerate() {
            let group: Vec<(f64, ErrorEstimate)> = (0..h_len)
                .map(|h_idx| (cfg.h_values[h_idx], blocks[eps_index][s_idx * h_len + h_idx]))
                .collect();
            let fit = match cfg.estimator {
                EstimatorKind::MicroVariable => None,
                _ => fit_group(&group),
            };
            for (h_idx, (h, est)) in group.into_iter().enumerate() {
                let _ = h_idx;
                rows.push(ErrorRow {
                    experiment: cfg.experiment.clone(),
                    problem: problem_template.name().to_string(),
                    scheme: scheme.id().to_string(),
                    epsilon: eps,
                    h,
                    samples: est.sample_count,
                    error: est.value,
                    ci_half_width: est.half_width,
                    order_fit: fit.map(|f| f.slope),
                    residual: fit.map(|f| f.max_residual),
                    seed: cfg.seed,
                });
            }
        }
    }

    // Micro-variable sweeps fit against epsilon at fixed h.
    if cfg.estimator == EstimatorKind::MicroVariable {
        for s_idx in 0..cfg.schemes.len() {
            for h_idx in 0..h_len {
                let group: Vec<(f64, ErrorEstimate)> = cfg
                    .epsilons
                    .iter()
                    .enumerate()
                    .map(|(e_idx, &eps)| (eps, blocks[e_idx][s_idx * h_len + h_idx]))
                    .collect();
                let fit = fit_group(&group);
                for row in rows.iter_mut().filter(|r| {
                    r.scheme == cfg.schemes[s_idx].id() && r.h == cfg.h_values[h_idx]
                }) {
                    row.order_fit = fit.map(|f| f.slope);
                    row.residual = fit.map(|f| f.max_residual);
                }
            }
        }
    }

    Ok(ErrorTable { rows })
}

fn single_cell_config(
    experiment: &str,
    estimator: EstimatorKind,
    scheme: Scheme,
    phi: TestFunction,
    x0: &StateVector,
    grid: &TimeGrid,
    epsilon: f64,
    sample_count: usize,
    reference: Reference,
    seed: u64,
) -> Result<SweepConfig> {
    if grid.t0() != 0.0 {
        return Err(OscSdeError::InvalidInput(
            "error estimators assume grids starting at t = 0".into(),
        ));
    }
    Ok(SweepConfig {
        experiment: experiment.to_string(),
        estimator,
        schemes: vec![scheme],
        phi,
        x0: x0.clone(),
        final_time: grid.final_time(),
        h_values: vec![grid.step()],
        epsilons: vec![epsilon],
        sample_count,
        reference,
        seed,
    })
}

fn single_estimate(table: ErrorTable) -> ErrorEstimate {
    let row = &table.rows[0];
    ErrorEstimate {
        value: row.error,
        half_width: row.ci_half_width,
        sample_count: row.samples,
    }
}

/// Weak error `|E phi(X_T^scheme) - E phi(X_T^ref)|` at the grid's endpoint,
/// using common random numbers between scheme and reference.
pub fn weak_error(
    problem: &OscillatoryProblem,
    scheme: Scheme,
    phi: TestFunction,
    x0: &StateVector,
    grid: &TimeGrid,
    sample_count: usize,
    reference: Reference,
    seed: u64,
) -> Result<ErrorEstimate> {
    let cfg = single_cell_config(
        "weak-error",
        EstimatorKind::Weak,
        scheme,
        phi,
        x0,
        grid,
        problem.epsilon(),
        sample_count,
        reference,
        seed,
    )?;
    Ok(single_estimate(epsilon_sweep(problem, &cfg)?))
}

/// Strong (root-mean-square) endpoint error on the shared Brownian path.
pub fn strong_error(
    problem: &OscillatoryProblem,
    scheme: Scheme,
    x0: &StateVector,
    grid: &TimeGrid,
    sample_count: usize,
    reference: Reference,
    seed: u64,
) -> Result<ErrorEstimate> {
    let cfg = single_cell_config(
        "strong-error",
        EstimatorKind::Strong,
        scheme,
        TestFunction::Component(0),
        x0,
        grid,
        problem.epsilon(),
        sample_count,
        reference,
        seed,
    )?;
    Ok(single_estimate(epsilon_sweep(problem, &cfg)?))
}

/// Monte Carlo mean of `|Y(T)|`, the micro-macro defect variable.
pub fn micro_variable_mean(
    problem: &OscillatoryProblem,
    x0: &StateVector,
    grid: &TimeGrid,
    sample_count: usize,
    seed: u64,
) -> Result<ErrorEstimate> {
    let cfg = single_cell_config(
        "micro-variable",
        EstimatorKind::MicroVariable,
        Scheme::MicroMacro,
        TestFunction::Component(0),
        x0,
        grid,
        problem.epsilon(),
        sample_count,
        Reference::ExactSolution,
        seed,
    )?;
    Ok(single_estimate(epsilon_sweep(problem, &cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn coarsen_sums_blocks() {
        let g = BrownianGrid::from_increments(0.25, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.coarsen(2).unwrap(), vec![3.0, 7.0]);
        assert_eq!(g.coarsen(1).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.coarsen(4).unwrap(), vec![10.0]);
    }

    #[test]
    fn coarsen_rejects_bad_ratios() {
        let g = BrownianGrid::from_increments(0.25, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(g.coarsen(3).is_err());
        assert!(g.coarsen(8).is_err());
        assert!(g.coarsen(0).is_err());
    }

    #[test]
    fn coarsening_preserves_totals_exactly() {
        let mut stream = RngStream::new(77, 0);
        for trial in 0..1000 {
            let grid = BrownianGrid::sample(&mut stream, 1.0 / 64.0, 64);
            let total_fine = grid.total();
            for ratio in [2usize, 8, 64] {
                let coarse = grid.coarsen(ratio).unwrap();
                let total_coarse = compensated_sum(&coarse);
                assert_eq!(
                    total_fine, total_coarse,
                    "trial {trial} ratio {ratio}: totals differ"
                );
            }
        }
    }

    #[test]
    fn order_fit_recovers_exact_power_laws() {
        let hs = [0.5, 0.25, 0.125, 0.0625];
        let quadratic: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 3.0 * h * h)).collect();
        let fit = estimate_order(&quadratic).unwrap();
        assert!((fit.slope - 2.0).abs() <= 1e-12);
        assert!(fit.max_residual <= 1e-12);

        let linear: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 0.7 * h)).collect();
        let fit = estimate_order(&linear).unwrap();
        assert!((fit.slope - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn order_fit_rejects_nonpositive_errors() {
        let pts = [(0.5, 0.1), (0.25, 0.0), (0.125, 0.01)];
        assert!(estimate_order(&pts).is_err());
        assert!(estimate_order(&[(0.5, 0.1), (0.25, 0.05)]).is_err());
    }

    #[test]
    fn weak_error_on_deterministic_problem_is_the_global_error() {
        // sigma = 0, M = 1: the weak error equals the deterministic error.
        let p = catalog::pure_oscillation(0.25);
        let grid = TimeGrid::from_zero(1.0, 4).unwrap();
        let x0 = StateVector::scalar(0.0);
        let em = weak_error(
            &p,
            Scheme::EulerMaruyama,
            TestFunction::Component(0),
            &x0,
            &grid,
            1,
            Reference::ExactSolution,
            9,
        )
        .unwrap();
        // Direct deterministic endpoint difference.
        let end = simulate_endpoint(&p, Scheme::EulerMaruyama, &x0, &grid, &[0.0; 4]).unwrap();
        let exact = p.exact_endpoint(&x0, 1.0, 0.0).unwrap();
        assert!((em.value - (end[0] - exact[0]).abs()).abs() <= 1e-15);
        assert_eq!(em.half_width, 0.0);
    }

    #[test]
    fn integral_scheme_is_exact_on_pure_oscillation() {
        let p = catalog::pure_oscillation(0.0625);
        let grid = TimeGrid::from_zero(1.0, 8).unwrap();
        let est = weak_error(
            &p,
            Scheme::Integral,
            TestFunction::Component(0),
            &StateVector::scalar(0.0),
            &grid,
            1,
            Reference::ExactSolution,
            3,
        )
        .unwrap();
        assert!(est.value <= 1e-12, "integral scheme should be exact: {est:?}");
    }

    #[test]
    fn strong_error_vanishes_when_scheme_equals_reference() {
        let p = catalog::geometric_brownian(1.0, 0.5, 1.0);
        let grid = TimeGrid::from_zero(1.0, 16).unwrap();
        let est = strong_error(
            &p,
            Scheme::Integral,
            &StateVector::scalar(1.0),
            &grid,
            20,
            Reference::FineIntegral { refinement: 1 },
            11,
        )
        .unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.half_width, 0.0);
    }

    #[test]
    fn strong_error_on_deterministic_problem_is_independent_of_samples() {
        let p = catalog::pure_oscillation(0.25);
        let grid = TimeGrid::from_zero(1.0, 4).unwrap();
        let x0 = StateVector::scalar(0.0);
        let few = strong_error(&p, Scheme::EulerMaruyama, &x0, &grid, 2, Reference::ExactSolution, 5)
            .unwrap();
        let many =
            strong_error(&p, Scheme::EulerMaruyama, &x0, &grid, 64, Reference::ExactSolution, 5)
                .unwrap();
        assert!((few.value - many.value).abs() <= 1e-14);
    }

    #[test]
    fn gbm_weak_order_one_against_exact_solution() {
        let p = catalog::geometric_brownian(1.0, 0.5, 1.0);
        let x0 = StateVector::scalar(1.0);
        let hs = [0.25, 0.125, 0.0625, 0.03125, 0.015625];
        let cfg = SweepConfig {
            experiment: "gbm-weak-selftest".into(),
            estimator: EstimatorKind::Weak,
            schemes: vec![Scheme::EulerMaruyama],
            phi: TestFunction::Component(0),
            x0,
            final_time: 1.0,
            h_values: hs.to_vec(),
            epsilons: vec![1.0],
            sample_count: 4000,
            reference: Reference::ExactSolution,
            seed: 29,
        };
        let table = epsilon_sweep(&p, &cfg).unwrap();
        let slope = table.rows[0].order_fit.expect("fit exists");
        assert!(
            (0.8..=1.2).contains(&slope),
            "EM weak order on GBM should be ~1, got {slope}"
        );
    }

    #[test]
    fn gbm_strong_order_half_against_exact_solution() {
        let p = catalog::geometric_brownian(1.0, 0.5, 1.0);
        let x0 = StateVector::scalar(1.0);
        let hs: Vec<f64> = (4..=8).map(|i| 2f64.powi(-i)).collect();
        let cfg = SweepConfig {
            experiment: "gbm-strong-selftest".into(),
            estimator: EstimatorKind::Strong,
            schemes: vec![Scheme::EulerMaruyama],
            phi: TestFunction::Component(0),
            x0,
            final_time: 1.0,
            h_values: hs,
            epsilons: vec![1.0],
            sample_count: 1000,
            reference: Reference::ExactSolution,
            seed: 31,
        };
        let table = epsilon_sweep(&p, &cfg).unwrap();
        let slope = table.rows[0].order_fit.expect("fit exists");
        assert!(
            (0.4..=0.6).contains(&slope),
            "EM strong order on GBM should be ~1/2, got {slope}"
        );
    }

    #[test]
    fn sweep_single_cell_matches_direct_estimator() {
        let p = catalog::geometric_brownian(1.0, 0.5, 1.0);
        let grid = TimeGrid::from_zero(1.0, 8).unwrap();
        let x0 = StateVector::scalar(1.0);
        let direct = weak_error(
            &p,
            Scheme::EulerMaruyama,
            TestFunction::Component(0),
            &x0,
            &grid,
            50,
            Reference::ExactSolution,
            17,
        )
        .unwrap();
        let cfg = SweepConfig {
            experiment: "weak-error".into(),
            estimator: EstimatorKind::Weak,
            schemes: vec![Scheme::EulerMaruyama],
            phi: TestFunction::Component(0),
            x0,
            final_time: 1.0,
            h_values: vec![grid.step()],
            epsilons: vec![1.0],
            sample_count: 50,
            reference: Reference::ExactSolution,
            seed: 17,
        };
        let table = epsilon_sweep(&p, &cfg).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].error, direct.value);
        assert_eq!(table.rows[0].ci_half_width, direct.half_width);
    }

    #[test]
    fn epsilon_is_inert_on_gbm() {
        // GBM ignores theta, so every epsilon row must be identical.
        let p = catalog::geometric_brownian(1.0, 0.5, 1.0);
        let cfg = SweepConfig {
            experiment: "weak-error".into(),
            estimator: EstimatorKind::Weak,
            schemes: vec![Scheme::EulerMaruyama],
            phi: TestFunction::Component(0),
            x0: StateVector::scalar(1.0),
            final_time: 1.0,
            h_values: vec![0.125, 0.0625],
            epsilons: vec![1.0, 0.25, 0.0625],
            sample_count: 40,
            reference: Reference::ExactSolution,
            seed: 23,
        };
        let table = epsilon_sweep(&p, &cfg).unwrap();
        let base: Vec<f64> = table
            .rows_for("em", 1.0)
            .iter()
            .map(|r| r.error)
            .collect();
        for &eps in &[0.25, 0.0625] {
            let other: Vec<f64> = table
                .rows_for("em", eps)
                .iter()
                .map(|r| r.error)
                .collect();
            assert_eq!(base, other, "epsilon {eps} rows differ");
        }
    }

    #[test]
    fn micro_variable_mean_is_zero_for_theta_free_problems() {
        let p = catalog::geometric_brownian(1.0, 0.5, 1.0);
        let grid = TimeGrid::from_zero(1.0, 32).unwrap();
        let est = micro_variable_mean(&p, &StateVector::scalar(1.0), &grid, 16, 41).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn sweep_results_are_reproducible() {
        let p = catalog::henon_heiles(0.25, catalog::HenonHeilesNoise::partial_multiplicative(0.2));
        let cfg = SweepConfig {
            experiment: "weak-error".into(),
            estimator: EstimatorKind::Weak,
            schemes: vec![Scheme::MicroMacro, Scheme::Integral],
            phi: TestFunction::Component(0),
            x0: StateVector::constant(4, 0.7),
            final_time: 1.0,
            h_values: vec![0.5, 0.25],
            epsilons: vec![0.25, 0.0625],
            sample_count: 30,
            reference: Reference::FineIntegral { refinement: 16 },
            seed: 99,
        };
        let a = epsilon_sweep(&p, &cfg).unwrap().to_csv();
        let b = epsilon_sweep(&p, &cfg).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn blow_up_reports_the_failing_path() {
        let p = crate::problem::OscillatoryProblem::builder("explosive", 1)
            .epsilon(1.0)
            .period(1.0)
            .drift(|_, x| StateVector::scalar(x[0] * x[0] * x[0]))
            .diffusion(|_| StateVector::scalar(0.0))
            .build()
            .unwrap();
        let grid = TimeGrid::from_zero(4.0, 4).unwrap();
        let err = strong_error(
            &p,
            Scheme::EulerMaruyama,
            &StateVector::scalar(20.0),
            &grid,
            4,
            Reference::FineIntegral { refinement: 2 },
            1,
        )
        .unwrap_err();
        match err {
            OscSdeError::PathFailure { source, .. } => assert!(source.is_blow_up()),
            other => panic!("expected path failure, got {other}"),
        }
    }
}
