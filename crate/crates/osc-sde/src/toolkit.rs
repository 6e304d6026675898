//! Numerical fallbacks for the oscillatory quantities: the averaged drift,
//! the mean-free antiderivative `F_theta`, its space derivatives, and the
//! change of variable `Phi_theta`.
//!
//! The averaged drift uses the periodic trapezoid rule, which is spectrally
//! accurate for smooth periodic integrands. Partial-period integrals for
//! `F_theta` use the same trapezoid ladder with Richardson extrapolation
//! (the rule's power-of-two node count is what makes the ladder exact to
//! halvings). Derivatives come from central finite differences of `F_theta`.

use crate::error::{OscSdeError, Result};
use crate::problem::OscillatoryProblem;
use crate::state::{SquareMatrix, StateVector, Tensor3};

/// Nodes-per-period for the periodic trapezoid rule.
///
/// The node count must be a power of two (>= 8) so that refinement halvings
/// and Richardson extrapolation line up exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureRule {
    node_count: usize,
    kind: QuadratureKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    TrapezoidPeriodic,
}

impl QuadratureRule {
    pub const DEFAULT_NODE_COUNT: usize = 1024;

    pub fn new(node_count: usize) -> Result<Self> {
        if node_count < 8 || !node_count.is_power_of_two() {
            return Err(OscSdeError::InvalidInput(format!(
                "quadrature node count must be a power of two >= 8, got {node_count}"
            )));
        }
        Ok(QuadratureRule {
            node_count,
            kind: QuadratureKind::TrapezoidPeriodic,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::new(Self::DEFAULT_NODE_COUNT).unwrap()
    }
}

fn ensure_finite(value: StateVector, what: &str) -> Result<StateVector> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(OscSdeError::Numerical(format!(
            "{what} produced a non-finite value"
        )))
    }
}

/// `(1/P) * integral of f_theta(x) over one period` by the periodic
/// trapezoid rule (equal weights at equispaced nodes).
pub fn averaged_drift_fallback(
    problem: &OscillatoryProblem,
    x: &StateVector,
    rule: QuadratureRule,
) -> Result<StateVector> {
    problem.check_dimension(x)?;
    let n = rule.node_count();
    let period = problem.period();
    let mut acc = StateVector::zeros(problem.dimension());
    for i in 0..n {
        let theta = period * i as f64 / n as f64;
        acc = acc.add(&problem.drift(theta, x));
    }
    ensure_finite(acc.scale(1.0 / n as f64), "averaged drift quadrature")
}

/// `F_theta(x)`: the integral from 0 to `theta` of the mean-free drift.
///
/// Whole periods contribute exactly zero, so only `theta mod P` is
/// integrated, via trapezoid sums refined up to the rule's node count with
/// Richardson extrapolation.
pub fn antiderivative_fallback(
    problem: &OscillatoryProblem,
    theta: f64,
    x: &StateVector,
    rule: QuadratureRule,
) -> Result<StateVector> {
    problem.check_dimension(x)?;
    if !theta.is_finite() {
        return Err(OscSdeError::InvalidInput(format!(
            "theta must be finite, got {theta}"
        )));
    }
    let period = problem.period();
    let upper = theta.rem_euclid(period);
    if upper == 0.0 {
        return Ok(StateVector::zeros(problem.dimension()));
    }
    let avg = problem.averaged_drift(x)?;
    let mean_free = |tau: f64| problem.drift(tau, x).sub(&avg);
    let integral = romberg(&mean_free, upper, rule.node_count());
    ensure_finite(integral, "antiderivative quadrature")
}

/// Romberg integration of a vector-valued integrand on `[0, upper]`,
/// refining a trapezoid ladder to at most `max_panels` panels.
fn romberg(
    integrand: &dyn Fn(f64) -> StateVector,
    upper: f64,
    max_panels: usize,
) -> StateVector {
    let max_level = max_panels.trailing_zeros() as usize;
    let mut rows: Vec<Vec<StateVector>> = Vec::with_capacity(max_level + 1);

    let endpoints = integrand(0.0).add(&integrand(upper));
    let mut trapezoid = endpoints.scale(upper / 2.0);
    rows.push(vec![trapezoid.clone()]);

    for level in 1..=max_level {
        let panels = 1usize << level;
        let h = upper / panels as f64;
        // New midpoints of the previous level.
        let mut mid_sum = StateVector::zeros(trapezoid.dim());
        let mut i = 1;
        while i < panels {
            mid_sum = mid_sum.add(&integrand(i as f64 * h));
            i += 2;
        }
        trapezoid = trapezoid.scale(0.5).add(&mid_sum.scale(h));

        let prev = &rows[level - 1];
        let mut row = Vec::with_capacity(level + 1);
        row.push(trapezoid.clone());
        let mut factor = 1.0;
        for j in 1..=level {
            factor *= 4.0;
            let extrapolated = row[j - 1]
                .scale(factor / (factor - 1.0))
                .add_scaled(&prev[j - 1], -1.0 / (factor - 1.0));
            row.push(extrapolated);
        }

        let best = row.last().unwrap().clone();
        let prev_best = prev.last().unwrap();
        let change = best.sub(prev_best).max_abs();
        rows.push(row);
        if level >= 4 && change <= 1e-14 * (1.0 + best.max_abs()) {
            return best;
        }
    }
    rows.last().unwrap().last().unwrap().clone()
}

/// The change of variable `Phi_theta(x) = x + eps * F_theta(x)`.
pub fn phi(problem: &OscillatoryProblem, theta: f64, x: &StateVector) -> Result<StateVector> {
    let f = problem.antiderivative(theta, x)?;
    Ok(x.add_scaled(&f, problem.epsilon()))
}

// Finite-difference steps balancing truncation against round-off for first
// and second derivatives.
fn first_derivative_step(xj: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + xj.abs())
}

fn second_derivative_step(xj: f64) -> f64 {
    f64::EPSILON.powf(0.25) * (1.0 + xj.abs())
}

fn antiderivative_dispatch(
    problem: &OscillatoryProblem,
    theta: f64,
    x: &StateVector,
    rule: QuadratureRule,
) -> Result<StateVector> {
    if problem.has_analytic_antiderivative() {
        problem.antiderivative(theta, x)
    } else {
        antiderivative_fallback(problem, theta, x, rule)
    }
}

fn shifted(x: &StateVector, j: usize, delta: f64) -> StateVector {
    let mut v = x.as_slice().to_vec();
    v[j] += delta;
    StateVector::new(v)
}

/// `F'_theta(x)` by central differences, column by column.
pub fn antiderivative_jacobian_fallback(
    problem: &OscillatoryProblem,
    theta: f64,
    x: &StateVector,
    rule: QuadratureRule,
) -> Result<SquareMatrix> {
    problem.check_dimension(x)?;
    let d = problem.dimension();
    let mut jac = SquareMatrix::zeros(d);
    for j in 0..d {
        let delta = first_derivative_step(x[j]);
        let plus = antiderivative_dispatch(problem, theta, &shifted(x, j, delta), rule)?;
        let minus = antiderivative_dispatch(problem, theta, &shifted(x, j, -delta), rule)?;
        for i in 0..d {
            jac.set(i, j, (plus[i] - minus[i]) / (2.0 * delta));
        }
    }
    Ok(jac)
}

/// `F''_theta(x)` by second-order central differences: three-point formulas
/// on the diagonal, four-point cross formulas off it.
pub fn antiderivative_hessian_fallback(
    problem: &OscillatoryProblem,
    theta: f64,
    x: &StateVector,
    rule: QuadratureRule,
) -> Result<Tensor3> {
    problem.check_dimension(x)?;
    let d = problem.dimension();
    let mut hess = Tensor3::zeros(d);
    let center = antiderivative_dispatch(problem, theta, x, rule)?;

    for j in 0..d {
        let dj = second_derivative_step(x[j]);
        let plus = antiderivative_dispatch(problem, theta, &shifted(x, j, dj), rule)?;
        let minus = antiderivative_dispatch(problem, theta, &shifted(x, j, -dj), rule)?;
        for i in 0..d {
            hess.set(i, j, j, (plus[i] - 2.0 * center[i] + minus[i]) / (dj * dj));
        }
        for k in (j + 1)..d {
            let dk = second_derivative_step(x[k]);
            let pp = antiderivative_dispatch(problem, theta, &shifted(&shifted(x, j, dj), k, dk), rule)?;
            let pm = antiderivative_dispatch(problem, theta, &shifted(&shifted(x, j, dj), k, -dk), rule)?;
            let mp = antiderivative_dispatch(problem, theta, &shifted(&shifted(x, j, -dj), k, dk), rule)?;
            let mm = antiderivative_dispatch(problem, theta, &shifted(&shifted(x, j, -dj), k, -dk), rule)?;
            for i in 0..d {
                let value = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * dj * dk);
                hess.set_symmetric(i, j, k, value);
            }
        }
    }
    Ok(hess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pure_sine() -> OscillatoryProblem {
        // f_theta(x) = sin(2 pi theta), period 1, scalar.
        OscillatoryProblem::builder("sine", 1)
            .epsilon(0.1)
            .period(1.0)
            .drift(|theta, _| StateVector::scalar((2.0 * PI * theta).sin()))
            .diffusion(|_| StateVector::scalar(0.0))
            .build()
            .unwrap()
    }

    fn linear_sine() -> OscillatoryProblem {
        // f_theta(x) = x * sin(2 pi theta): F_theta(x) = x (1 - cos 2 pi theta) / (2 pi).
        OscillatoryProblem::builder("linear-sine", 1)
            .epsilon(0.1)
            .period(1.0)
            .drift(|theta, x| StateVector::scalar(x[0] * (2.0 * PI * theta).sin()))
            .diffusion(|_| StateVector::scalar(0.0))
            .build()
            .unwrap()
    }

    fn theta_free() -> OscillatoryProblem {
        OscillatoryProblem::builder("autonomous", 2)
            .epsilon(0.3)
            .period(1.0)
            .drift(|_, x| x.clone())
            .diffusion(|_| StateVector::zeros(2))
            .build()
            .unwrap()
    }

    #[test]
    fn rule_rejects_bad_node_counts() {
        assert!(QuadratureRule::new(7).is_err());
        assert!(QuadratureRule::new(24).is_err());
        assert!(QuadratureRule::new(4).is_err());
        assert!(QuadratureRule::new(8).is_ok());
    }

    #[test]
    fn average_of_theta_free_drift_is_the_drift() {
        let p = theta_free();
        let x = StateVector::new(vec![1.25, -0.5]);
        let avg = averaged_drift_fallback(&p, &x, QuadratureRule::default()).unwrap();
        assert!(avg.sub(&x).max_abs() <= 1e-14);
    }

    #[test]
    fn average_of_zero_mean_sinusoid_vanishes() {
        let p = pure_sine();
        let avg = averaged_drift_fallback(&p, &StateVector::scalar(3.0), QuadratureRule::default())
            .unwrap();
        assert!(avg.max_abs() <= 1e-14, "avg = {avg:?}");
    }

    #[test]
    fn antiderivative_matches_closed_form() {
        let p = pure_sine();
        let x = StateVector::scalar(0.0);
        let rule = QuadratureRule::default();
        // F(0.25) = (1 - cos(pi/2)) / (2 pi) = 1 / (2 pi)
        let f = antiderivative_fallback(&p, 0.25, &x, rule).unwrap();
        assert!(
            (f[0] - 1.0 / (2.0 * PI)).abs() <= 1e-12,
            "F(0.25) = {}",
            f[0]
        );
        // generic theta
        let theta = 0.37;
        let exact = (1.0 - (2.0 * PI * theta).cos()) / (2.0 * PI);
        let f = antiderivative_fallback(&p, theta, &x, rule).unwrap();
        assert!((f[0] - exact).abs() <= 1e-12);
    }

    #[test]
    fn antiderivative_vanishes_at_zero_and_full_period() {
        let p = pure_sine();
        let x = StateVector::scalar(1.0);
        let rule = QuadratureRule::default();
        assert_eq!(antiderivative_fallback(&p, 0.0, &x, rule).unwrap()[0], 0.0);
        let at_period = antiderivative_fallback(&p, 1.0, &x, rule).unwrap();
        assert!(at_period.max_abs() <= 1e-8);
    }

    #[test]
    fn phi_is_identity_for_theta_free_drift() {
        let p = theta_free();
        let x = StateVector::new(vec![0.2, 0.9]);
        for theta in [0.0, 0.4, 11.0] {
            let y = phi(&p, theta, &x).unwrap();
            assert!(y.sub(&x).max_abs() <= 1e-10, "theta = {theta}");
        }
    }

    #[test]
    fn phi_matches_closed_form_on_sine_problem() {
        let p = pure_sine();
        let x = StateVector::scalar(0.0);
        let y = phi(&p, 0.25, &x).unwrap();
        assert!((y[0] - 0.1 / (2.0 * PI)).abs() <= 1e-12, "phi = {}", y[0]);
        assert_eq!(phi(&p, 0.0, &x).unwrap()[0], 0.0);
    }

    #[test]
    fn jacobian_fallback_matches_analytic_derivative() {
        let p = linear_sine();
        let rule = QuadratureRule::default();
        // d F / d x at theta = 0.25 is (1 - cos(pi/2)) / (2 pi) = 1 / (2 pi).
        let jac =
            antiderivative_jacobian_fallback(&p, 0.25, &StateVector::scalar(0.7), rule).unwrap();
        assert!(
            (jac.get(0, 0) - 1.0 / (2.0 * PI)).abs() <= 1e-8,
            "J = {}",
            jac.get(0, 0)
        );
    }

    #[test]
    fn jacobian_fallback_is_zero_for_theta_free_drift() {
        let p = theta_free();
        let jac = antiderivative_jacobian_fallback(
            &p,
            0.6,
            &StateVector::new(vec![0.3, -0.4]),
            QuadratureRule::default(),
        )
        .unwrap();
        assert!(jac.max_abs() <= 1e-9, "J = {jac:?}");
    }

    #[test]
    fn hessian_fallback_is_zero_for_affine_drift() {
        // Drift affine in x with oscillatory coefficients: F is affine, F'' = 0.
        let p = OscillatoryProblem::builder("affine", 2)
            .epsilon(0.2)
            .period(1.0)
            .drift(|theta, x| {
                let c = (2.0 * PI * theta).cos();
                StateVector::new(vec![c * x[1] + c, -c * x[0]])
            })
            .diffusion(|_| StateVector::zeros(2))
            .build()
            .unwrap();
        let hess = antiderivative_hessian_fallback(
            &p,
            0.3,
            &StateVector::new(vec![0.5, 0.25]),
            QuadratureRule::default(),
        )
        .unwrap();
        assert!(hess.max_abs_diff(&Tensor3::zeros(2)) <= 1e-6);
    }

    #[test]
    fn fallback_errors_on_non_finite_drift() {
        let p = OscillatoryProblem::builder("nan-drift", 1)
            .epsilon(0.5)
            .period(1.0)
            .drift(|_, _| StateVector::scalar(f64::NAN))
            .diffusion(|_| StateVector::scalar(0.0))
            .build()
            .unwrap();
        let err = averaged_drift_fallback(&p, &StateVector::scalar(1.0), QuadratureRule::default());
        assert!(matches!(err, Err(OscSdeError::Numerical(_))));
    }
}
