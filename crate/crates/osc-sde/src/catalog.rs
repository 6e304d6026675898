//! The built-in problem catalog: the stochastic Hénon-Heiles model in its
//! four noise variants, the forced logistic SDE, and two oracle problems
//! with closed-form solutions (geometric Brownian motion and a pure
//! oscillation).
//!
//! Catalog problems ship with hand-derived closed forms for the averaged
//! drift, the antiderivative `F_theta`, and its space derivatives; the
//! quadrature fallbacks remain available as cross-checks.

use crate::error::{OscSdeError, Result};
use crate::problem::OscillatoryProblem;
use crate::state::{SquareMatrix, StateVector, Tensor3};
use serde::Serialize;
use std::f64::consts::{PI, TAU};

/// How the diffusion depends on the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Multiplicative,
    Additive,
    None,
}

/// Descriptor of a catalog entry: the name used on the command line plus the
/// scalar metadata needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemSpec {
    pub name: String,
    pub dimension: usize,
    pub epsilon: f64,
    pub period: f64,
    pub initial_state: StateVector,
    pub noise_kind: NoiseKind,
    pub parameters: Vec<(String, f64)>,
}

/// A named catalog problem together with its descriptor.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub spec: ProblemSpec,
    pub problem: OscillatoryProblem,
}

/// Diffusion shape for the Hénon-Heiles model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HenonHeilesNoise {
    /// `scale * (0, 0, X1, X2)` — the weak-test multiplicative noise.
    PartialMultiplicative { scale: f64 },
    /// `scale * X` — the strong-test multiplicative noise.
    FullMultiplicative { scale: f64 },
    /// `(0, 0, scale, scale)` — additive noise.
    Additive { scale: f64 },
}

impl HenonHeilesNoise {
    pub fn partial_multiplicative(scale: f64) -> Self {
        HenonHeilesNoise::PartialMultiplicative { scale }
    }

    pub fn full_multiplicative(scale: f64) -> Self {
        HenonHeilesNoise::FullMultiplicative { scale }
    }

    pub fn additive(scale: f64) -> Self {
        HenonHeilesNoise::Additive { scale }
    }

    fn kind(&self) -> NoiseKind {
        match self {
            HenonHeilesNoise::Additive { .. } => NoiseKind::Additive,
            _ => NoiseKind::Multiplicative,
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            HenonHeilesNoise::PartialMultiplicative { scale }
            | HenonHeilesNoise::FullMultiplicative { scale }
            | HenonHeilesNoise::Additive { scale } => scale,
        }
    }
}

fn hh_drift(theta: f64, x: &StateVector) -> StateVector {
    let (s, c) = theta.sin_cos();
    let a = x[0] * c + x[2] * s;
    StateVector::new(vec![
        2.0 * s * a * x[1],
        x[3],
        -2.0 * c * a * x[1],
        -2.0 * a * a + x[1] * x[1] - x[1],
    ])
}

fn hh_drift_theta_derivative(theta: f64, x: &StateVector) -> StateVector {
    let (s, c) = theta.sin_cos();
    let a = x[0] * c + x[2] * s;
    let a_dot = -x[0] * s + x[2] * c;
    StateVector::new(vec![
        2.0 * x[1] * (c * a + s * a_dot),
        0.0,
        2.0 * x[1] * (s * a - c * a_dot),
        -4.0 * a * a_dot,
    ])
}

fn hh_averaged(x: &StateVector) -> StateVector {
    StateVector::new(vec![
        x[1] * x[2],
        x[3],
        -x[0] * x[1],
        -(x[0] * x[0] + x[2] * x[2]) + x[1] * x[1] - x[1],
    ])
}

/// Double-angle weights shared by `F`, `F'`, and `F''`:
/// `u = (1 - cos 2theta)/2`, `v = (sin 2theta)/2`.
fn hh_uv(theta: f64) -> (f64, f64) {
    let (s2, c2) = (2.0 * theta).sin_cos();
    ((1.0 - c2) / 2.0, s2 / 2.0)
}

fn hh_antiderivative(theta: f64, x: &StateVector) -> StateVector {
    let (u, v) = hh_uv(theta);
    StateVector::new(vec![
        x[0] * x[1] * u - x[1] * x[2] * v,
        0.0,
        -x[0] * x[1] * v - x[1] * x[2] * u,
        (x[2] * x[2] - x[0] * x[0]) * v - 2.0 * x[0] * x[2] * u,
    ])
}

fn hh_antiderivative_jacobian(theta: f64, x: &StateVector) -> SquareMatrix {
    let (u, v) = hh_uv(theta);
    SquareMatrix::from_rows(vec![
        vec![x[1] * u, x[0] * u - x[2] * v, -x[1] * v, 0.0],
        vec![0.0, 0.0, 0.0, 0.0],
        vec![-x[1] * v, -x[0] * v - x[2] * u, -x[1] * u, 0.0],
        vec![-2.0 * (x[0] * v + x[2] * u), 0.0, 2.0 * (x[2] * v - x[0] * u), 0.0],
    ])
}

fn hh_antiderivative_hessian(theta: f64, _x: &StateVector) -> Tensor3 {
    let (u, v) = hh_uv(theta);
    let mut t = Tensor3::zeros(4);
    t.set_symmetric(0, 0, 1, u);
    t.set_symmetric(0, 1, 2, -v);
    t.set_symmetric(2, 0, 1, -v);
    t.set_symmetric(2, 1, 2, -u);
    t.set(3, 0, 0, -2.0 * v);
    t.set(3, 2, 2, 2.0 * v);
    t.set_symmetric(3, 0, 2, -2.0 * u);
    t
}

/// The filtered stochastic Hénon-Heiles model (d = 4, period 2π).
pub fn henon_heiles(epsilon: f64, noise: HenonHeilesNoise) -> OscillatoryProblem {
    let diffusion = move |x: &StateVector| match noise {
        HenonHeilesNoise::PartialMultiplicative { scale } => {
            StateVector::new(vec![0.0, 0.0, scale * x[0], scale * x[1]])
        }
        HenonHeilesNoise::FullMultiplicative { scale } => x.scale(scale),
        HenonHeilesNoise::Additive { scale } => StateVector::new(vec![0.0, 0.0, scale, scale]),
    };
    OscillatoryProblem::builder("henon-heiles", 4)
        .epsilon(epsilon)
        .period(TAU)
        .drift(hh_drift)
        .drift_theta_derivative(hh_drift_theta_derivative)
        .diffusion(diffusion)
        .averaged_drift(hh_averaged)
        .antiderivative(hh_antiderivative)
        .antiderivative_jacobian(hh_antiderivative_jacobian)
        .antiderivative_hessian(hh_antiderivative_hessian)
        .build()
        .expect("henon-heiles catalog entry is well-formed")
}

/// The forced logistic SDE `dX = (X(1-X) + sin(t/eps)) dt + 0.2 X dW`,
/// `X(0) = 2`.
pub fn logistic(epsilon: f64) -> OscillatoryProblem {
    logistic_with_noise(epsilon, 0.2)
}

/// Logistic problem with an adjustable diffusion scale (`0` gives the purely
/// deterministic resonance demo).
pub fn logistic_with_noise(epsilon: f64, noise_scale: f64) -> OscillatoryProblem {
    OscillatoryProblem::builder("logistic", 1)
        .epsilon(epsilon)
        .period(TAU)
        .drift(|theta, x| StateVector::scalar(x[0] * (1.0 - x[0]) + theta.sin()))
        .drift_theta_derivative(|theta, _| StateVector::scalar(theta.cos()))
        .diffusion(move |x| StateVector::scalar(noise_scale * x[0]))
        .averaged_drift(|x| StateVector::scalar(x[0] * (1.0 - x[0])))
        .antiderivative(|theta, _| StateVector::scalar(1.0 - theta.cos()))
        .antiderivative_jacobian(|_, _| SquareMatrix::zeros(1))
        .antiderivative_hessian(|_, _| Tensor3::zeros(1))
        .build()
        .expect("logistic catalog entry is well-formed")
}

/// Geometric Brownian motion `dX = lambda X dt + mu X dW` — a
/// theta-independent oracle with the exact solution
/// `X(t) = x0 exp((lambda - mu^2/2) t + mu W(t))`.
pub fn geometric_brownian(lambda: f64, mu: f64, x0: f64) -> OscillatoryProblem {
    OscillatoryProblem::builder("gbm", 1)
        .epsilon(1.0)
        .period(1.0)
        .drift(move |_, x| StateVector::scalar(lambda * x[0]))
        .drift_theta_derivative(|_, _| StateVector::scalar(0.0))
        .diffusion(move |x| StateVector::scalar(mu * x[0]))
        .averaged_drift(move |x| StateVector::scalar(lambda * x[0]))
        .antiderivative(|_, _| StateVector::scalar(0.0))
        .antiderivative_jacobian(|_, _| SquareMatrix::zeros(1))
        .antiderivative_hessian(|_, _| Tensor3::zeros(1))
        .exact_endpoint(move |start, t, w_t, _| {
            let base = if start.dim() == 1 { start[0] } else { x0 };
            StateVector::scalar(base * ((lambda - mu * mu / 2.0) * t + mu * w_t).exp())
        })
        .build()
        .expect("gbm catalog entry is well-formed")
}

/// Scalar drift `sin(2 pi theta)` with period 1 and no noise. Every scheme
/// quantity has a closed form; the exact solution is
/// `x0 + eps (1 - cos(2 pi t / eps)) / (2 pi)`.
///
/// Direct Euler-Maruyama with `h = eps` samples the sine stroboscopically
/// (always at the same phase) and integrates a constant instead of an
/// oscillation — the textbook failure the uniformly accurate schemes avoid.
pub fn pure_oscillation(epsilon: f64) -> OscillatoryProblem {
    OscillatoryProblem::builder("pure-osc", 1)
        .epsilon(epsilon)
        .period(1.0)
        .drift(|theta, _| StateVector::scalar((TAU * theta).sin()))
        .drift_theta_derivative(|theta, _| StateVector::scalar(TAU * (TAU * theta).cos()))
        .diffusion(|_| StateVector::scalar(0.0))
        .averaged_drift(|_| StateVector::scalar(0.0))
        .antiderivative(|theta, _| StateVector::scalar((1.0 - (TAU * theta).cos()) / TAU))
        .antiderivative_jacobian(|_, _| SquareMatrix::zeros(1))
        .antiderivative_hessian(|_, _| Tensor3::zeros(1))
        .exact_endpoint(|start, t, _, eps| {
            StateVector::scalar(start[0] + eps * (1.0 - (TAU * t / eps).cos()) / TAU)
        })
        .build()
        .expect("pure-osc catalog entry is well-formed")
}

/// Names accepted by [`by_name`] and the command line.
pub const PROBLEM_NAMES: [&str; 7] = [
    "henon-heiles-mult-weak",
    "henon-heiles-add-weak",
    "henon-heiles-mult-strong",
    "henon-heiles-add-strong",
    "logistic",
    "gbm",
    "pure-osc",
];

/// Looks up a catalog problem by its command-line name, at that entry's
/// default epsilon.
pub fn by_name(name: &str) -> Result<CatalogEntry> {
    let eps_default = 2f64.powi(-4);
    let entry = match name {
        "henon-heiles-mult-weak" => CatalogEntry {
            spec: ProblemSpec {
                name: name.to_string(),
                dimension: 4,
                epsilon: eps_default,
                period: TAU,
                initial_state: StateVector::constant(4, 0.7),
                noise_kind: NoiseKind::Multiplicative,
                parameters: vec![("noise_scale".into(), 0.2)],
            },
            problem: henon_heiles(eps_default, HenonHeilesNoise::partial_multiplicative(0.2)),
        },
        "henon-heiles-add-weak" => CatalogEntry {
            spec: ProblemSpec {
                name: name.to_string(),
                dimension: 4,
                epsilon: eps_default,
                period: TAU,
                initial_state: StateVector::constant(4, 0.7),
                noise_kind: NoiseKind::Additive,
                parameters: vec![("noise_scale".into(), 0.2)],
            },
            problem: henon_heiles(eps_default, HenonHeilesNoise::additive(0.2)),
        },
        "henon-heiles-mult-strong" => CatalogEntry {
            spec: ProblemSpec {
                name: name.to_string(),
                dimension: 4,
                epsilon: eps_default,
                period: TAU,
                initial_state: StateVector::constant(4, 0.12),
                noise_kind: NoiseKind::Multiplicative,
                parameters: vec![("noise_scale".into(), 0.5)],
            },
            problem: henon_heiles(eps_default, HenonHeilesNoise::full_multiplicative(0.5)),
        },
        "henon-heiles-add-strong" => CatalogEntry {
            spec: ProblemSpec {
                name: name.to_string(),
                dimension: 4,
                epsilon: eps_default,
                period: TAU,
                initial_state: StateVector::constant(4, 0.12),
                noise_kind: NoiseKind::Additive,
                parameters: vec![("noise_scale".into(), 0.5)],
            },
            problem: henon_heiles(eps_default, HenonHeilesNoise::additive(0.5)),
        },
        "logistic" => CatalogEntry {
            spec: ProblemSpec {
                name: name.to_string(),
                dimension: 1,
                epsilon: 0.1,
                period: TAU,
                initial_state: StateVector::scalar(2.0),
                noise_kind: NoiseKind::Multiplicative,
                parameters: vec![("noise_scale".into(), 0.2)],
            },
            problem: logistic(0.1),
        },
        "gbm" => CatalogEntry {
            spec: ProblemSpec {
                name: name.to_string(),
                dimension: 1,
                epsilon: 1.0,
                period: 1.0,
                initial_state: StateVector::scalar(1.0),
                noise_kind: NoiseKind::Multiplicative,
                parameters: vec![("lambda".into(), 1.0), ("mu".into(), 0.5), ("x0".into(), 1.0)],
            },
            problem: geometric_brownian(1.0, 0.5, 1.0),
        },
        "pure-osc" => CatalogEntry {
            spec: ProblemSpec {
                name: name.to_string(),
                dimension: 1,
                epsilon: eps_default,
                period: 1.0,
                initial_state: StateVector::scalar(0.0),
                noise_kind: NoiseKind::None,
                parameters: vec![],
            },
            problem: pure_oscillation(eps_default),
        },
        other => {
            return Err(OscSdeError::InvalidConfig(format!(
                "unknown problem '{other}' (known: {})",
                PROBLEM_NAMES.join(", ")
            )))
        }
    };
    Ok(entry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolkit::{
        antiderivative_fallback, antiderivative_hessian_fallback,
        antiderivative_jacobian_fallback, averaged_drift_fallback, QuadratureRule,
    };
    use rand::Rng;

    #[test]
    fn henon_heiles_drift_at_theta_zero() {
        let p = henon_heiles(0.25, HenonHeilesNoise::partial_multiplicative(0.2));
        let x = StateVector::constant(4, 1.0);
        let f = p.drift(0.0, &x);
        assert_eq!(f.as_slice(), &[0.0, 1.0, -2.0, -2.0]);
    }

    #[test]
    fn henon_heiles_averaged_drift_matches_quadrature() {
        let p = henon_heiles(0.25, HenonHeilesNoise::partial_multiplicative(0.2));
        let x = StateVector::constant(4, 1.0);
        let avg = p.averaged_drift(&x).unwrap();
        for (got, want) in avg.iter().zip([1.0, 1.0, -1.0, -2.0]) {
            assert!((got - want).abs() <= 1e-14, "avg = {avg:?}");
        }
        let quad = averaged_drift_fallback(&p, &x, QuadratureRule::new(4096).unwrap()).unwrap();
        assert!(avg.sub(&quad).max_abs() <= 1e-12);
    }

    #[test]
    fn henon_heiles_antiderivative_closes_over_a_period() {
        let p = henon_heiles(0.25, HenonHeilesNoise::additive(0.2));
        let x = StateVector::new(vec![0.7, -0.3, 1.1, 0.4]);
        assert_eq!(p.antiderivative(0.0, &x).unwrap().max_abs(), 0.0);
        assert!(p.antiderivative(TAU, &x).unwrap().max_abs() <= 1e-14);
    }

    #[test]
    fn henon_heiles_antiderivative_frozen_value() {
        // F at theta = pi/2, x = (1,1,1,1), cross-checked against Simpson
        // quadrature of the printed drift.
        let p = henon_heiles(0.25, HenonHeilesNoise::additive(0.2));
        let f = p
            .antiderivative(PI / 2.0, &StateVector::constant(4, 1.0))
            .unwrap();
        for (got, want) in f.iter().zip([1.0, 0.0, -1.0, -2.0]) {
            assert!((got - want).abs() <= 1e-14, "F = {f:?}");
        }
    }

    #[test]
    fn henon_heiles_hessian_contraction_frozen_value() {
        let p = henon_heiles(0.25, HenonHeilesNoise::additive(0.2));
        let x = StateVector::constant(4, 0.7);
        let w = StateVector::new(vec![0.3, -0.2, 0.5, 0.1]);
        let got = p
            .antiderivative_hessian(PI / 3.0, &x)
            .unwrap()
            .bilinear(&w, &w);
        let want = [
            -0.0033974596215561037,
            0.0,
            0.2019615242270663,
            -0.3114359353944897,
        ];
        for i in 0..4 {
            assert!((got[i] - want[i]).abs() <= 1e-14, "component {i}: {}", got[i]);
        }
    }

    #[test]
    fn henon_heiles_drift_matches_independent_transcription() {
        // Second, independently typed evaluation of the printed drift
        // components, checked at 1000 random (theta, X) pairs.
        fn drift_retyped(theta: f64, x: &[f64]) -> [f64; 4] {
            let mix = x[0] * theta.cos() + x[2] * theta.sin();
            [
                2.0 * theta.sin() * mix * x[1],
                x[3],
                -(2.0 * theta.cos() * mix * x[1]),
                x[1].powi(2) - x[1] - 2.0 * mix.powi(2),
            ]
        }
        let p = henon_heiles(0.25, HenonHeilesNoise::additive(0.2));
        let mut rng = cr150_rng();
        for _ in 0..1000 {
            let theta = rng.random_range(-10.0..10.0);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let expected = drift_retyped(theta, &x);
            let got = p.drift(theta, &StateVector::new(x));
            for i in 0..4 {
                assert!(
                    (got[i] - expected[i]).abs() <= 1e-12 * (1.0 + expected[i].abs()),
                    "component {i} mismatch at theta={theta}"
                );
            }
        }
    }

    fn cr150_rng() -> impl Rng {
        use rand::SeedableRng;
        rand_chacha::ChaCha12Rng::seed_from_u64(150)
    }

    #[test]
    fn catalog_analytic_forms_agree_with_fallbacks_at_random_probes() {
        let rule = QuadratureRule::default();
        let mut rng = cr150_rng();
        for name in PROBLEM_NAMES {
            let entry = by_name(name).unwrap();
            let p = &entry.problem;
            let d = p.dimension();
            for probe in 0..100 {
                let x = StateVector::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect());
                let theta = rng.random_range(0.0..p.period());

                let avg = p.averaged_drift(&x).unwrap();
                let avg_quad = averaged_drift_fallback(p, &x, rule).unwrap();
                assert!(
                    avg.sub(&avg_quad).max_abs() <= 1e-9,
                    "{name} probe {probe}: averaged drift mismatch"
                );

                let f = p.antiderivative(theta, &x).unwrap();
                let f_quad = antiderivative_fallback(p, theta, &x, rule).unwrap();
                assert!(
                    f.sub(&f_quad).max_abs() <= 1e-9,
                    "{name} probe {probe}: antiderivative mismatch"
                );

                // Derivative fallbacks are finite-difference limited.
                if probe < 10 {
                    let jac = p.antiderivative_jacobian(theta, &x).unwrap();
                    let jac_fd = antiderivative_jacobian_fallback(p, theta, &x, rule).unwrap();
                    assert!(
                        jac.max_abs_diff(&jac_fd) <= 1e-6,
                        "{name} probe {probe}: jacobian mismatch {}",
                        jac.max_abs_diff(&jac_fd)
                    );

                    let hess = p.antiderivative_hessian(theta, &x).unwrap();
                    let hess_fd = antiderivative_hessian_fallback(p, theta, &x, rule).unwrap();
                    assert!(
                        hess.max_abs_diff(&hess_fd) <= 1e-5,
                        "{name} probe {probe}: hessian mismatch {}",
                        hess.max_abs_diff(&hess_fd)
                    );
                }
            }
        }
    }

    #[test]
    fn henon_heiles_jacobian_matches_fd_at_quarter_period() {
        let p = henon_heiles(0.25, HenonHeilesNoise::additive(0.2));
        let x = StateVector::constant(4, 1.0);
        let jac = p.antiderivative_jacobian(PI / 2.0, &x).unwrap();
        let fd = antiderivative_jacobian_fallback(&p, PI / 2.0, &x, QuadratureRule::default())
            .unwrap();
        assert!(jac.max_abs_diff(&fd) <= 1e-6);
        // Spot values from the closed form: u = 1, v = 0.
        assert_eq!(jac.get(0, 0), 1.0);
        assert_eq!(jac.get(3, 0), -2.0);
        assert_eq!(jac.get(3, 2), -2.0);
    }

    #[test]
    fn logistic_values() {
        let p = logistic(0.1);
        let x = StateVector::scalar(2.0);
        assert!((p.drift(PI / 2.0, &x)[0] - (-1.0)).abs() <= 1e-15);
        assert!((p.averaged_drift(&x).unwrap()[0] - (-2.0)).abs() <= 1e-15);
        assert!((p.antiderivative(PI, &x).unwrap()[0] - 2.0).abs() <= 1e-15);
        assert_eq!(p.diffusion(&x)[0], 0.4);
    }

    #[test]
    fn gbm_exact_endpoint() {
        let p = geometric_brownian(1.0, 0.0, 1.0);
        // mu = 0: deterministic exponential.
        let x = p.exact_endpoint(&StateVector::scalar(1.0), 1.0, 0.33).unwrap();
        assert!((x[0] - 1.0f64.exp()).abs() <= 1e-15);

        let p = geometric_brownian(1.0, 0.5, 1.0);
        let x = p.exact_endpoint(&StateVector::scalar(1.0), 2.0, -0.4).unwrap();
        assert!((x[0] - ((1.0 - 0.125) * 2.0 - 0.2f64).exp()).abs() <= 1e-15);
    }

    #[test]
    fn pure_oscillation_exact_endpoint_and_scheme_exactness() {
        let eps = 0.125;
        let p = pure_oscillation(eps);
        let exact = p.exact_endpoint(&StateVector::scalar(0.0), 1.0, 0.0).unwrap();
        let want = eps * (1.0 - (TAU / eps).cos()) / TAU;
        assert!((exact[0] - want).abs() <= 1e-16);

        // The integral scheme reproduces the exact solution in one step.
        let grid = crate::schemes::TimeGrid::from_zero(1.0, 1).unwrap();
        let end = crate::schemes::simulate_endpoint(
            &p,
            crate::schemes::Scheme::Integral,
            &StateVector::scalar(0.0),
            &grid,
            &[0.0],
        )
        .unwrap();
        assert!((end[0] - want).abs() <= 1e-14);
    }

    #[test]
    fn by_name_covers_all_advertised_problems() {
        for name in PROBLEM_NAMES {
            let entry = by_name(name).unwrap();
            assert_eq!(entry.spec.name, name);
            assert_eq!(entry.spec.dimension, entry.problem.dimension());
        }
        assert!(by_name("no-such-problem").is_err());
    }
}
