//! Uniformly accurate solvers for Itô SDEs with periodic oscillatory drift
//!
//! This crate solves equations of the form
//!
//! ```text
//! dX(t) = f_{t/eps}(X(t)) dt + sigma(X(t)) dW(t),   X(0) = X0,
//! ```
//!
//! where the drift `f_theta(x)` is periodic in `theta` and the oscillation
//! parameter `eps` may take any value in `(0, 1]`. Direct Euler-Maruyama
//! needs steps of size `O(eps)` here; the two schemes provided — an integral
//! scheme built on the averaged drift, and Euler-Maruyama applied to a
//! micro-macro decomposition — converge with weak order 1 and strong order
//! 1/2 with constants independent of `eps`.
//!
//! The crate is organized around a few small modules:
//!
//! - [`problem`]: the [`problem::OscillatoryProblem`] interface (drift,
//!   diffusion, averaged drift, the antiderivative `F_theta` and its space
//!   derivatives, with quadrature/finite-difference fallbacks).
//! - [`toolkit`]: the periodic quadrature and finite-difference fallbacks.
//! - [`schemes`]: the three time steppers and path simulation.
//! - [`catalog`]: built-in problems (stochastic Hénon-Heiles, a forced
//!   logistic SDE, and exactly solvable oracles).
//! - [`montecarlo`]: Brownian grids with exact coarsening, weak/strong error
//!   estimators under common random numbers, and order fitting.
//! - [`experiments`]: reproducible experiment runners behind the `osc-sde`
//!   binary.
//!
//! The `examples/` directory has one runnable example per capability; start
//! with `cargo run --example weak_convergence`.

pub mod catalog;
pub mod error;
pub mod experiments;
pub mod montecarlo;
pub mod problem;
pub mod rng;
pub mod schemes;
pub mod state;
pub mod toolkit;

pub use catalog::{CatalogEntry, HenonHeilesNoise, NoiseKind, ProblemSpec};
pub use error::{OscSdeError, Result};
pub use montecarlo::{
    epsilon_sweep, estimate_order, micro_variable_mean, strong_error, weak_error, BrownianGrid,
    ErrorEstimate, ErrorRow, ErrorTable, EstimatorKind, OrderFit, Reference, SweepConfig,
    TestFunction,
};
pub use problem::{validate_problem, OscillatoryProblem, ProblemDiagnostics};
pub use rng::RngStream;
pub use schemes::{
    recombine, simulate_endpoint, simulate_path, step_euler_maruyama, step_integral,
    step_micro_macro, MicroMacroState, Scheme, TimeGrid,
};
pub use state::{SquareMatrix, StateVector, Tensor3};
pub use toolkit::QuadratureRule;
