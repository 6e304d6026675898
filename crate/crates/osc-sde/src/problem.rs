//! The oscillatory SDE problem interface.
//!
//! A problem bundles the drift `f_theta(x)` (periodic in `theta`), the
//! diffusion `sigma(x)`, the oscillation parameter `epsilon`, and the derived
//! oscillatory quantities: the averaged drift, the mean-free drift
//! antiderivative `F_theta`, and its first two space derivatives. Analytic
//! closed forms may be supplied for any derived quantity; whatever is missing
//! falls back to periodic quadrature and finite differences from the toolkit.

use crate::error::{OscSdeError, Result};
use crate::state::{SquareMatrix, StateVector, Tensor3};
use crate::toolkit::{self, QuadratureRule};
use std::fmt;
use std::sync::Arc;

pub type VectorFn = dyn Fn(&StateVector) -> StateVector + Send + Sync;
pub type ThetaVectorFn = dyn Fn(f64, &StateVector) -> StateVector + Send + Sync;
pub type ThetaMatrixFn = dyn Fn(f64, &StateVector) -> SquareMatrix + Send + Sync;
pub type ThetaTensorFn = dyn Fn(f64, &StateVector) -> Tensor3 + Send + Sync;
/// Exact endpoint sampler `(x0, t, w_t, epsilon) -> X(t)`, available for
/// oracle problems with a closed-form solution driven by `W(t)` alone.
pub type ExactEndpointFn = dyn Fn(&StateVector, f64, f64, f64) -> StateVector + Send + Sync;

/// An Itô SDE `dX = f_{t/eps}(X) dt + sigma(X) dW` with `f` periodic in its
/// first argument.
///
/// Values are immutable after construction; cloning is cheap (the function
/// fields are shared).
#[derive(Clone)]
pub struct OscillatoryProblem {
    name: String,
    dimension: usize,
    epsilon: f64,
    period: f64,
    drift: Arc<ThetaVectorFn>,
    drift_theta_derivative: Option<Arc<ThetaVectorFn>>,
    diffusion: Arc<VectorFn>,
    averaged_drift: Option<Arc<VectorFn>>,
    antiderivative: Option<Arc<ThetaVectorFn>>,
    antiderivative_jacobian: Option<Arc<ThetaMatrixFn>>,
    antiderivative_hessian: Option<Arc<ThetaTensorFn>>,
    exact_endpoint: Option<Arc<ExactEndpointFn>>,
    quadrature: QuadratureRule,
}

impl fmt::Debug for OscillatoryProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OscillatoryProblem")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("epsilon", &self.epsilon)
            .field("period", &self.period)
            .field("analytic_averaged_drift", &self.averaged_drift.is_some())
            .field("analytic_antiderivative", &self.antiderivative.is_some())
            .finish()
    }
}

impl OscillatoryProblem {
    pub fn builder(name: impl Into<String>, dimension: usize) -> OscillatoryProblemBuilder {
        OscillatoryProblemBuilder::new(name, dimension)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn quadrature(&self) -> QuadratureRule {
        self.quadrature
    }

    /// Same problem with a different oscillation parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(OscSdeError::InvalidInput(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        let mut p = self.clone();
        p.epsilon = epsilon;
        Ok(p)
    }

    pub fn check_dimension(&self, x: &StateVector) -> Result<()> {
        if x.dim() != self.dimension {
            return Err(OscSdeError::DimensionMismatch {
                expected: self.dimension,
                actual: x.dim(),
            });
        }
        Ok(())
    }

    pub fn drift(&self, theta: f64, x: &StateVector) -> StateVector {
        (self.drift)(theta, x)
    }

    pub fn diffusion(&self, x: &StateVector) -> StateVector {
        (self.diffusion)(x)
    }

    /// `d f_theta / d theta`, when supplied. Used only by diagnostics.
    pub fn drift_theta_derivative(&self, theta: f64, x: &StateVector) -> Option<StateVector> {
        self.drift_theta_derivative.as_ref().map(|f| f(theta, x))
    }

    /// The averaged drift `(1/P) * integral of f_theta over one period`;
    /// analytic when supplied, periodic-trapezoid quadrature otherwise.
    pub fn averaged_drift(&self, x: &StateVector) -> Result<StateVector> {
        match &self.averaged_drift {
            Some(f) => Ok(f(x)),
            None => toolkit::averaged_drift_fallback(self, x, self.quadrature),
        }
    }

    /// `F_theta(x)`, the integral of the mean-free drift from 0 to `theta`;
    /// analytic when supplied, quadrature otherwise.
    pub fn antiderivative(&self, theta: f64, x: &StateVector) -> Result<StateVector> {
        match &self.antiderivative {
            Some(f) => Ok(f(theta, x)),
            None => toolkit::antiderivative_fallback(self, theta, x, self.quadrature),
        }
    }

    /// Space Jacobian `F'_theta(x)`; analytic or central finite differences.
    pub fn antiderivative_jacobian(&self, theta: f64, x: &StateVector) -> Result<SquareMatrix> {
        match &self.antiderivative_jacobian {
            Some(f) => Ok(f(theta, x)),
            None => toolkit::antiderivative_jacobian_fallback(self, theta, x, self.quadrature),
        }
    }

    /// Space Hessian `F''_theta(x)`; analytic or central finite differences.
    pub fn antiderivative_hessian(&self, theta: f64, x: &StateVector) -> Result<Tensor3> {
        match &self.antiderivative_hessian {
            Some(f) => Ok(f(theta, x)),
            None => toolkit::antiderivative_hessian_fallback(self, theta, x, self.quadrature),
        }
    }

    /// The near-identity change of variable `Phi_theta(x) = x + eps * F_theta(x)`.
    pub fn phi(&self, theta: f64, x: &StateVector) -> Result<StateVector> {
        toolkit::phi(self, theta, x)
    }

    pub fn has_analytic_averaged_drift(&self) -> bool {
        self.averaged_drift.is_some()
    }

    pub fn has_analytic_antiderivative(&self) -> bool {
        self.antiderivative.is_some()
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.antiderivative_jacobian.is_some()
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.antiderivative_hessian.is_some()
    }

    pub fn has_exact_endpoint(&self) -> bool {
        self.exact_endpoint.is_some()
    }

    /// Exact solution at time `t` given `W(t) = w_t`, for oracle problems.
    pub fn exact_endpoint(&self, x0: &StateVector, t: f64, w_t: f64) -> Option<StateVector> {
        self.exact_endpoint
            .as_ref()
            .map(|f| f(x0, t, w_t, self.epsilon))
    }
}

/// Builder for [`OscillatoryProblem`]; only drift and diffusion are required.
pub struct OscillatoryProblemBuilder {
    name: String,
    dimension: usize,
    epsilon: f64,
    period: f64,
    drift: Option<Arc<ThetaVectorFn>>,
    drift_theta_derivative: Option<Arc<ThetaVectorFn>>,
    diffusion: Option<Arc<VectorFn>>,
    averaged_drift: Option<Arc<VectorFn>>,
    antiderivative: Option<Arc<ThetaVectorFn>>,
    antiderivative_jacobian: Option<Arc<ThetaMatrixFn>>,
    antiderivative_hessian: Option<Arc<ThetaTensorFn>>,
    exact_endpoint: Option<Arc<ExactEndpointFn>>,
    quadrature: QuadratureRule,
}

impl OscillatoryProblemBuilder {
    pub fn new(name: impl Into<String>, dimension: usize) -> Self {
        OscillatoryProblemBuilder {
            name: name.into(),
            dimension,
            epsilon: 1.0,
            period: 1.0,
            drift: None,
            drift_theta_derivative: None,
            diffusion: None,
            averaged_drift: None,
            antiderivative: None,
            antiderivative_jacobian: None,
            antiderivative_hessian: None,
            exact_endpoint: None,
            quadrature: QuadratureRule::default(),
        }
    }

    pub fn epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    pub fn drift(mut self, f: impl Fn(f64, &StateVector) -> StateVector + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn drift_theta_derivative(
        mut self,
        f: impl Fn(f64, &StateVector) -> StateVector + Send + Sync + 'static,
    ) -> Self {
        self.drift_theta_derivative = Some(Arc::new(f));
        self
    }

    pub fn diffusion(mut self, f: impl Fn(&StateVector) -> StateVector + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Arc::new(f));
        self
    }

    pub fn averaged_drift(mut self, f: impl Fn(&StateVector) -> StateVector + Send + Sync + 'static) -> Self {
        self.averaged_drift = Some(Arc::new(f));
        self
    }

    pub fn antiderivative(
        mut self,
        f: impl Fn(f64, &StateVector) -> StateVector + Send + Sync + 'static,
    ) -> Self {
        self.antiderivative = Some(Arc::new(f));
        self
    }

    pub fn antiderivative_jacobian(
        mut self,
        f: impl Fn(f64, &StateVector) -> SquareMatrix + Send + Sync + 'static,
    ) -> Self {
        self.antiderivative_jacobian = Some(Arc::new(f));
        self
    }

    pub fn antiderivative_hessian(
        mut self,
        f: impl Fn(f64, &StateVector) -> Tensor3 + Send + Sync + 'static,
    ) -> Self {
        self.antiderivative_hessian = Some(Arc::new(f));
        self
    }

    pub fn exact_endpoint(
        mut self,
        f: impl Fn(&StateVector, f64, f64, f64) -> StateVector + Send + Sync + 'static,
    ) -> Self {
        self.exact_endpoint = Some(Arc::new(f));
        self
    }

    pub fn quadrature(mut self, rule: QuadratureRule) -> Self {
        self.quadrature = rule;
        self
    }

    pub fn build(self) -> Result<OscillatoryProblem> {
        if self.dimension == 0 {
            return Err(OscSdeError::InvalidInput("dimension must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(OscSdeError::InvalidInput(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(OscSdeError::InvalidInput(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        let drift = self
            .drift
            .ok_or_else(|| OscSdeError::InvalidInput("drift is required".into()))?;
        let diffusion = self
            .diffusion
            .ok_or_else(|| OscSdeError::InvalidInput("diffusion is required".into()))?;
        Ok(OscillatoryProblem {
            name: self.name,
            dimension: self.dimension,
            epsilon: self.epsilon,
            period: self.period,
            drift,
            drift_theta_derivative: self.drift_theta_derivative,
            diffusion,
            averaged_drift: self.averaged_drift,
            antiderivative: self.antiderivative,
            antiderivative_jacobian: self.antiderivative_jacobian,
            antiderivative_hessian: self.antiderivative_hessian,
            exact_endpoint: self.exact_endpoint,
            quadrature: self.quadrature,
        })
    }
}

/// Measured violations of the problem's structural invariants at a set of
/// probe points. All values are max-norm violations; `None` means the check
/// did not apply (no analytic counterpart supplied).
#[derive(Debug, Clone, serde::Serialize)]
pub struct ProblemDiagnostics {
    pub problem: String,
    pub probe_count: usize,
    /// max over probes and a theta grid of |f_{theta+P}(x) - f_theta(x)|.
    pub periodicity_violation: f64,
    /// max over probes of |F_0(x)|.
    pub antiderivative_at_zero: f64,
    /// max over probes of |F_P(x)| (F is periodic because its integrand is
    /// mean-free).
    pub antiderivative_at_period: f64,
    /// max over probes of |analytic <f> - quadrature <f>|.
    pub averaged_drift_mismatch: Option<f64>,
    /// max over probes and thetas of |analytic F - quadrature F|.
    pub antiderivative_mismatch: Option<f64>,
}

impl ProblemDiagnostics {
    /// Largest violation across all applicable checks.
    pub fn max_violation(&self) -> f64 {
        let mut m = self
            .periodicity_violation
            .max(self.antiderivative_at_zero)
            .max(self.antiderivative_at_period);
        if let Some(v) = self.averaged_drift_mismatch {
            m = m.max(v);
        }
        if let Some(v) = self.antiderivative_mismatch {
            m = m.max(v);
        }
        m
    }
}

/// Number of theta samples used by the periodicity and consistency checks.
const VALIDATION_THETA_SAMPLES: usize = 17;

/// Checks the testable consequences of the problem's structural assumptions
/// at the given probe points: drift periodicity, `F_0 = 0`, `F_P = 0`, and
/// agreement of analytic averaged drift / antiderivative with the quadrature
/// fallback.
pub fn validate_problem(
    problem: &OscillatoryProblem,
    probe_points: &[StateVector],
) -> Result<ProblemDiagnostics> {
    if probe_points.is_empty() {
        return Err(OscSdeError::InvalidInput(
            "validate_problem needs at least one probe point".into(),
        ));
    }
    for x in probe_points {
        problem.check_dimension(x)?;
    }

    let period = problem.period();
    let rule = problem.quadrature();
    let thetas: Vec<f64> = (0..VALIDATION_THETA_SAMPLES)
        .map(|i| period * (i as f64 + 0.31) / VALIDATION_THETA_SAMPLES as f64)
        .collect();

    let mut periodicity: f64 = 0.0;
    let mut at_zero: f64 = 0.0;
    let mut at_period: f64 = 0.0;
    let mut avg_mismatch: Option<f64> = problem.has_analytic_averaged_drift().then_some(0.0);
    let mut anti_mismatch: Option<f64> = problem.has_analytic_antiderivative().then_some(0.0);

    for x in probe_points {
        for &theta in &thetas {
            let diff = problem
                .drift(theta + period, x)
                .sub(&problem.drift(theta, x))
                .max_abs();
            periodicity = periodicity.max(diff);
        }

        at_zero = at_zero.max(problem.antiderivative(0.0, x)?.max_abs());
        at_period = at_period.max(problem.antiderivative(period, x)?.max_abs());

        if let Some(m) = avg_mismatch.as_mut() {
            let analytic = problem.averaged_drift(x)?;
            let quad = toolkit::averaged_drift_fallback(problem, x, rule)?;
            *m = m.max(analytic.sub(&quad).max_abs());
        }
        if let Some(m) = anti_mismatch.as_mut() {
            for &theta in &thetas {
                let analytic = problem.antiderivative(theta, x)?;
                let quad = toolkit::antiderivative_fallback(problem, theta, x, rule)?;
                *m = m.max(analytic.sub(&quad).max_abs());
            }
        }
    }

    Ok(ProblemDiagnostics {
        problem: problem.name().to_string(),
        probe_count: probe_points.len(),
        periodicity_violation: periodicity,
        antiderivative_at_zero: at_zero,
        antiderivative_at_period: at_period,
        averaged_drift_mismatch: avg_mismatch,
        antiderivative_mismatch: anti_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn theta_free_problem() -> OscillatoryProblem {
        OscillatoryProblem::builder("autonomous", 2)
            .epsilon(0.5)
            .period(1.0)
            .drift(|_, x| x.clone())
            .diffusion(|_| StateVector::zeros(2))
            .build()
            .unwrap()
    }

    #[test]
    fn builder_rejects_missing_drift() {
        let err = OscillatoryProblem::builder("broken", 1)
            .diffusion(|_| StateVector::scalar(0.0))
            .build();
        assert!(err.is_err());
    }

    #[test]
    fn builder_rejects_bad_epsilon() {
        assert!(OscillatoryProblem::builder("bad", 1)
            .epsilon(0.0)
            .drift(|_, x| x.clone())
            .diffusion(|_| StateVector::scalar(0.0))
            .build()
            .is_err());
        assert!(OscillatoryProblem::builder("bad", 1)
            .epsilon(1.5)
            .drift(|_, x| x.clone())
            .diffusion(|_| StateVector::scalar(0.0))
            .build()
            .is_err());
    }

    #[test]
    fn validate_rejects_dimension_mismatch() {
        let p = theta_free_problem();
        let err = validate_problem(&p, &[StateVector::scalar(1.0)]);
        assert!(matches!(err, Err(OscSdeError::DimensionMismatch { .. })));
    }

    #[test]
    fn theta_free_problem_has_zero_violations() {
        let p = theta_free_problem();
        let probes = vec![StateVector::new(vec![0.4, -1.3])];
        let d = validate_problem(&p, &probes).unwrap();
        assert_eq!(d.periodicity_violation, 0.0);
        // F is identically zero for a theta-independent drift.
        assert!(d.antiderivative_at_zero <= 1e-12, "{d:?}");
        assert!(d.antiderivative_at_period <= 1e-10, "{d:?}");
        let x = StateVector::new(vec![0.4, -1.3]);
        assert!(p.antiderivative(0.37, &x).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn henon_heiles_validates_cleanly() {
        let p = catalog::henon_heiles(2.0_f64.powi(-4), catalog::HenonHeilesNoise::partial_multiplicative(0.2));
        let probes = vec![StateVector::constant(4, 0.7)];
        let d = validate_problem(&p, &probes).unwrap();
        assert!(d.max_violation() <= 1e-10, "violations too large: {d:?}");
    }

    #[test]
    fn wrong_period_is_detected() {
        // Same Henon-Heiles drift but declared with half its true period.
        let good = catalog::henon_heiles(0.25, catalog::HenonHeilesNoise::additive(0.2));
        let bad = OscillatoryProblem::builder("henon-heiles-wrong-period", 4)
            .epsilon(0.25)
            .period(std::f64::consts::PI)
            .drift(move |theta, x| good.drift(theta, x))
            .diffusion(|_| StateVector::zeros(4))
            .build()
            .unwrap();
        let probes = vec![StateVector::constant(4, 0.7)];
        let d = validate_problem(&bad, &probes).unwrap();
        assert!(
            d.periodicity_violation > 0.1,
            "declared-period violation should be visible, got {}",
            d.periodicity_violation
        );
    }
}
