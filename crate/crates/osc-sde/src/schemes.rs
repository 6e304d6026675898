//! Time-stepping schemes: direct Euler-Maruyama, the integral scheme, and
//! the micro-macro scheme.
//!
//! All three consume the same Brownian increments `dW_n`, so pathwise
//! comparisons are meaningful. The micro-macro scheme evolves the pair
//! `(macro, micro)` and is recombined into the physical state through
//! `Phi_{t/eps}` only when output is requested.

use crate::error::{OscSdeError, Result};
use crate::problem::OscillatoryProblem;
use crate::state::StateVector;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

/// Any state component beyond this magnitude is treated as a blow-up rather
/// than waiting for overflow to infinity.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Uniform grid `t_n = t0 + n h`, `h = (T - t0) / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    t0: f64,
    final_time: f64,
    step_count: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, final_time: f64, step_count: usize) -> Result<Self> {
        if !t0.is_finite() || !final_time.is_finite() {
            return Err(OscSdeError::InvalidInput("time bounds must be finite".into()));
        }
        if step_count == 0 {
            if final_time != t0 {
                return Err(OscSdeError::InvalidInput(
                    "a zero-step grid requires final_time == t0".into(),
                ));
            }
        } else if final_time <= t0 {
            return Err(OscSdeError::InvalidInput(format!(
                "final time {final_time} must exceed t0 {t0}"
            )));
        }
        Ok(TimeGrid {
            t0,
            final_time,
            step_count,
        })
    }

    /// Grid on `[0, final_time]`.
    pub fn from_zero(final_time: f64, step_count: usize) -> Result<Self> {
        TimeGrid::new(0.0, final_time, step_count)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn step(&self) -> f64 {
        if self.step_count == 0 {
            0.0
        } else {
            (self.final_time - self.t0) / self.step_count as f64
        }
    }

    pub fn time(&self, n: usize) -> f64 {
        debug_assert!(n <= self.step_count);
        self.t0 + n as f64 * self.step()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.step_count).map(|n| self.time(n)).collect()
    }
}

/// The three time-stepping schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Scheme {
    /// Direct Euler-Maruyama on the oscillatory equation.
    EulerMaruyama,
    /// Averaged drift plus the exact oscillatory increment of `F`.
    Integral,
    /// Euler-Maruyama on the micro-macro system, recombined for output.
    MicroMacro,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::EulerMaruyama, Scheme::Integral, Scheme::MicroMacro];

    pub fn id(&self) -> &'static str {
        match self {
            Scheme::EulerMaruyama => "em",
            Scheme::Integral => "integral",
            Scheme::MicroMacro => "micro-macro",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scheme {
    type Err = OscSdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" | "euler-maruyama" => Ok(Scheme::EulerMaruyama),
            "integral" => Ok(Scheme::Integral),
            "micro-macro" | "mm" => Ok(Scheme::MicroMacro),
            other => Err(OscSdeError::InvalidConfig(format!(
                "unknown scheme '{other}' (expected em, integral, or micro-macro)"
            ))),
        }
    }
}

/// State of the micro-macro scheme: the averaged (macro) variable and the
/// oscillation defect (micro) variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroMacroState {
    pub macro_part: StateVector,
    pub micro_part: StateVector,
}

impl MicroMacroState {
    /// Initial decomposition: macro starts at the initial condition, micro at
    /// zero.
    pub fn initial(x0: &StateVector) -> Self {
        MicroMacroState {
            macro_part: x0.clone(),
            micro_part: StateVector::zeros(x0.dim()),
        }
    }
}

fn check_state(x: &StateVector, time: f64, step: usize) -> Result<()> {
    for (component, &value) in x.iter().enumerate() {
        if !value.is_finite() || value.abs() > BLOW_UP_THRESHOLD {
            return Err(OscSdeError::NumericalBlowUp {
                time,
                step,
                component,
                value,
            });
        }
    }
    Ok(())
}

/// One explicit Euler-Maruyama step: `x + h f_{t_n/eps}(x) + sigma(x) dW`.
pub fn step_euler_maruyama(
    problem: &OscillatoryProblem,
    x: &StateVector,
    t_n: f64,
    h: f64,
    dw: f64,
) -> Result<StateVector> {
    problem.check_dimension(x)?;
    let theta = t_n / problem.epsilon();
    let next = x
        .add_scaled(&problem.drift(theta, x), h)
        .add_scaled(&problem.diffusion(x), dw);
    check_state(&next, t_n + h, 0).map_err(|e| at_step(e, 0))?;
    Ok(next)
}

/// One step of the integral scheme:
/// `x + h <f>(x) + eps (F_{t_{n+1}/eps}(x) - F_{t_n/eps}(x)) + sigma(x) dW`.
pub fn step_integral(
    problem: &OscillatoryProblem,
    x: &StateVector,
    t_n: f64,
    h: f64,
    dw: f64,
) -> Result<StateVector> {
    problem.check_dimension(x)?;
    let eps = problem.epsilon();
    let f_now = problem.antiderivative(t_n / eps, x)?;
    let f_next = problem.antiderivative((t_n + h) / eps, x)?;
    let next = x
        .add_scaled(&problem.averaged_drift(x)?, h)
        .add_scaled(&f_next.sub(&f_now), eps)
        .add_scaled(&problem.diffusion(x), dw);
    check_state(&next, t_n + h, 0).map_err(|e| at_step(e, 0))?;
    Ok(next)
}

/// One Euler-Maruyama step of the micro-macro system. `xi` is a standard
/// normal draw; the Brownian increment is `sqrt(h) * xi`. Every coefficient
/// is evaluated at the old state and at `theta_n = t_n / eps`.
pub fn step_micro_macro(
    problem: &OscillatoryProblem,
    state: &MicroMacroState,
    t_n: f64,
    h: f64,
    xi: f64,
) -> Result<MicroMacroState> {
    problem.check_dimension(&state.macro_part)?;
    problem.check_dimension(&state.micro_part)?;
    let eps = problem.epsilon();
    let theta = t_n / eps;
    let sqrt_h = h.sqrt();
    let macro_old = &state.macro_part;
    let micro_old = &state.micro_part;

    let avg = problem.averaged_drift(macro_old)?;
    let sigma = problem.diffusion(macro_old);

    // Macro update: Euler-Maruyama on the averaged equation.
    let macro_next = macro_old
        .add_scaled(&avg, h)
        .add_scaled(&sigma, sqrt_h * xi);

    // Micro update: the defect equation, all coefficients frozen at theta_n.
    let recombined = problem.phi(theta, macro_old)?.add(micro_old);
    let drift_gap = problem
        .drift(theta, &recombined)
        .sub(&problem.drift(theta, macro_old));
    let jacobian = problem.antiderivative_jacobian(theta, macro_old)?;
    let hessian = problem.antiderivative_hessian(theta, macro_old)?;
    let averaging_correction = jacobian
        .apply(&avg)
        .add_scaled(&hessian.bilinear(&sigma, &sigma), 0.5);
    let noise_gap = problem
        .diffusion(&recombined)
        .sub(&sigma)
        .add_scaled(&jacobian.apply(&sigma), -eps);

    let micro_next = micro_old
        .add_scaled(&drift_gap, h)
        .add_scaled(&averaging_correction, -eps * h)
        .add_scaled(&noise_gap, sqrt_h * xi);

    check_state(&macro_next, t_n + h, 0).map_err(|e| at_step(e, 0))?;
    check_state(&micro_next, t_n + h, 0).map_err(|e| at_step(e, 0))?;
    Ok(MicroMacroState {
        macro_part: macro_next,
        micro_part: micro_next,
    })
}

/// Physical state of the micro-macro pair at time `t_n`:
/// `Phi_{t_n/eps}(macro) + micro`.
pub fn recombine(
    problem: &OscillatoryProblem,
    state: &MicroMacroState,
    t_n: f64,
) -> Result<StateVector> {
    let theta = t_n / problem.epsilon();
    Ok(problem.phi(theta, &state.macro_part)?.add(&state.micro_part))
}

fn at_step(err: OscSdeError, step: usize) -> OscSdeError {
    match err {
        OscSdeError::NumericalBlowUp {
            time,
            component,
            value,
            ..
        } => OscSdeError::NumericalBlowUp {
            time,
            step,
            component,
            value,
        },
        other => other,
    }
}

/// Runs `scheme` over the whole grid, driven by the Brownian increments
/// `dW_n` (one per step). Returns all `N + 1` states including the initial
/// condition; micro-macro output is recombined at every node.
pub fn simulate_path(
    problem: &OscillatoryProblem,
    scheme: Scheme,
    x0: &StateVector,
    grid: &TimeGrid,
    increments: &[f64],
) -> Result<Vec<StateVector>> {
    problem.check_dimension(x0)?;
    if increments.len() != grid.step_count() {
        return Err(OscSdeError::InvalidInput(format!(
            "expected {} increments, got {}",
            grid.step_count(),
            increments.len()
        )));
    }
    let h = grid.step();
    let mut path = Vec::with_capacity(grid.step_count() + 1);

    match scheme {
        Scheme::EulerMaruyama | Scheme::Integral => {
            let mut x = x0.clone();
            path.push(x.clone());
            for (n, &dw) in increments.iter().enumerate() {
                let t_n = grid.time(n);
                x = match scheme {
                    Scheme::EulerMaruyama => step_euler_maruyama(problem, &x, t_n, h, dw),
                    _ => step_integral(problem, &x, t_n, h, dw),
                }
                .map_err(|e| at_step(e, n))?;
                path.push(x.clone());
            }
        }
        Scheme::MicroMacro => {
            let sqrt_h = h.sqrt();
            let mut state = MicroMacroState::initial(x0);
            path.push(recombine(problem, &state, grid.t0())?);
            for (n, &dw) in increments.iter().enumerate() {
                let t_n = grid.time(n);
                let xi = dw / sqrt_h;
                state = step_micro_macro(problem, &state, t_n, h, xi).map_err(|e| at_step(e, n))?;
                path.push(recombine(problem, &state, grid.time(n + 1))?);
            }
        }
    }
    Ok(path)
}

/// Like [`simulate_path`] but keeps only the terminal state.
pub fn simulate_endpoint(
    problem: &OscillatoryProblem,
    scheme: Scheme,
    x0: &StateVector,
    grid: &TimeGrid,
    increments: &[f64],
) -> Result<StateVector> {
    match scheme {
        Scheme::MicroMacro => {
            let state = simulate_micro_macro_state(problem, x0, grid, increments)?;
            recombine(problem, &state, grid.final_time())
        }
        _ => {
            problem.check_dimension(x0)?;
            if increments.len() != grid.step_count() {
                return Err(OscSdeError::InvalidInput(format!(
                    "expected {} increments, got {}",
                    grid.step_count(),
                    increments.len()
                )));
            }
            let h = grid.step();
            let mut x = x0.clone();
            for (n, &dw) in increments.iter().enumerate() {
                let t_n = grid.time(n);
                x = match scheme {
                    Scheme::EulerMaruyama => step_euler_maruyama(problem, &x, t_n, h, dw),
                    _ => step_integral(problem, &x, t_n, h, dw),
                }
                .map_err(|e| at_step(e, n))?;
            }
            Ok(x)
        }
    }
}

/// Evolves the micro-macro pair over the grid without recombining, for
/// direct access to the terminal micro variable.
pub fn simulate_micro_macro_state(
    problem: &OscillatoryProblem,
    x0: &StateVector,
    grid: &TimeGrid,
    increments: &[f64],
) -> Result<MicroMacroState> {
    problem.check_dimension(x0)?;
    if increments.len() != grid.step_count() {
        return Err(OscSdeError::InvalidInput(format!(
            "expected {} increments, got {}",
            grid.step_count(),
            increments.len()
        )));
    }
    let h = grid.step();
    let sqrt_h = h.sqrt();
    let mut state = MicroMacroState::initial(x0);
    for (n, &dw) in increments.iter().enumerate() {
        let xi = dw / sqrt_h;
        state =
            step_micro_macro(problem, &state, grid.time(n), h, xi).map_err(|e| at_step(e, n))?;
    }
    Ok(state)
}
