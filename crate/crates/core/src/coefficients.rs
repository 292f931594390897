//! Nonlinear coefficients `f`, `g`, `h` and the Lipschitz / contraction
//! checks they are required to pass.
//!
//! The noise coefficient is a scalar factor `h_tilde` expanded onto the noise
//! channels, `h_j(x) = sqrt(lambda_j) h_tilde(x) e_j(x)`. Its effective
//! Lipschitz constants are those of `h_tilde` times `sqrt(sum_j lambda_j
//! ||e_j||_inf^2)`, stored here as `noise_weight`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Coefficient evaluated at `(t, x, y, z)` with `y = u(x)` and `z = u'(x)`.
pub type CoefficientFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LipschitzConstants {
    /// Constant of `f` in both arguments and of `g`, `h` in `y`.
    pub c: f64,
    /// Constant of `g` in `z`.
    pub alpha: f64,
    /// Constant of `h` in `z`.
    pub beta: f64,
}

#[derive(Clone)]
pub struct CoefficientSet {
    name: String,
    f: CoefficientFn,
    g: CoefficientFn,
    h_tilde: CoefficientFn,
    constants: LipschitzConstants,
    noise_weight: f64,
    state_free: bool,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("constants", &self.constants)
            .field("noise_weight", &self.noise_weight)
            .finish_non_exhaustive()
    }
}

fn zero_fn() -> CoefficientFn {
    Arc::new(|_, _, _, _| 0.0)
}

impl CoefficientSet {
    pub fn new(
        name: impl Into<String>,
        f: CoefficientFn,
        g: CoefficientFn,
        h_tilde: CoefficientFn,
        constants: LipschitzConstants,
    ) -> Result<Self> {
        let LipschitzConstants { c, alpha, beta } = constants;
        if !(c >= 0.0 && alpha >= 0.0 && beta >= 0.0) {
            return Err(invalid(format!(
                "Lipschitz constants must be non-negative, got C = {c}, alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(Self {
            name: name.into(),
            f,
            g,
            h_tilde,
            constants,
            noise_weight: 1.0,
            state_free: false,
        })
    }

    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            f: zero_fn(),
            g: zero_fn(),
            h_tilde: zero_fn(),
            constants: LipschitzConstants::default(),
            noise_weight: 1.0,
            state_free: true,
        }
    }

    /// Marks the set as independent of `(y, z)`, which lets the Picard
    /// driver skip re-evaluation along the previous iterate.
    pub fn declare_state_free(mut self) -> Self {
        self.state_free = true;
        self
    }

    pub fn is_state_free(&self) -> bool {
        self.state_free
    }

    pub fn with_noise_weight(mut self, weighted_trace: f64) -> Self {
        self.noise_weight = weighted_trace.max(0.0).sqrt();
        self
    }

    /// Returns the set with `f` replaced by `f + shift`.
    pub fn with_source_shift(mut self, shift: f64) -> Self {
        if shift != 0.0 {
            let f = self.f.clone();
            self.f = Arc::new(move |t, x, y, z| f(t, x, y, z) + shift);
            self.name = format!("{}{:+}", self.name, shift);
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn constants(&self) -> LipschitzConstants {
        self.constants
    }

    /// `sqrt(sum_j lambda_j ||e_j||_inf^2)`.
    pub fn noise_weight(&self) -> f64 {
        self.noise_weight
    }

    #[inline]
    pub fn f(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        (self.f)(t, x, y, z)
    }

    #[inline]
    pub fn g(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        (self.g)(t, x, y, z)
    }

    #[inline]
    pub fn h_tilde(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        (self.h_tilde)(t, x, y, z)
    }

    pub fn f0(&self, t: f64, x: f64) -> f64 {
        self.f(t, x, 0.0, 0.0)
    }

    pub fn g0(&self, t: f64, x: f64) -> f64 {
        self.g(t, x, 0.0, 0.0)
    }

    pub fn h0(&self, t: f64, x: f64) -> f64 {
        self.h_tilde(t, x, 0.0, 0.0)
    }
}

/// Built-in coefficient sets with declared constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `f = g = h = 0`.
    Zero,
    /// Affine in `y`, free of `z`: `f = -y/2`, `g = cos(pi x)/10`,
    /// `h_tilde ~ 0.2 + 0.3 y`. Order preserving under the scheme.
    Linear,
    /// Bounded `tanh` nonlinearities, `C = 0.4`, `alpha = 0.2`, `beta = 0.3`.
    Saturating,
    /// Sine nonlinearities with `C = 0.1`, `alpha = 0.1`, `beta = 0.2`.
    Nonlinear,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Zero, Preset::Linear, Preset::Saturating, Preset::Nonlinear];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Zero => "zero",
            Preset::Linear => "linear",
            Preset::Saturating => "saturating",
            Preset::Nonlinear => "nonlinear",
        }
    }

    /// Builds the preset for a noise model with the given weighted trace
    /// `sum_j lambda_j ||e_j||_inf^2` (pass 0 for deterministic runs).
    ///
    /// `h_tilde` is divided by the square root of the weighted trace so that
    /// the declared `C` and `beta` bound the channel-expanded `h`.
    pub fn build(&self, weighted_trace: f64) -> CoefficientSet {
        let w = if weighted_trace > 0.0 { weighted_trace.sqrt() } else { 1.0 };
        let pi = std::f64::consts::PI;
        let set = match self {
            Preset::Zero => CoefficientSet::zero(),
            Preset::Linear => CoefficientSet::new(
                "linear",
                Arc::new(|_, _, y, _| -0.5 * y),
                Arc::new(move |_, x, _, _| 0.1 * (pi * x).cos()),
                Arc::new(move |_, _, y, _| (0.2 + 0.3 * y) / w),
                LipschitzConstants {
                    c: 0.5,
                    alpha: 0.0,
                    beta: 0.0,
                },
            )
            .expect("valid constants"),
            Preset::Saturating => CoefficientSet::new(
                "saturating",
                Arc::new(move |_, x, y, z| 0.4 * y.tanh() + 0.2 * z.tanh() + (pi * x).sin()),
                Arc::new(|_, _, y, z| 0.1 * y.tanh() + 0.2 * z.tanh()),
                Arc::new(move |_, _, y, z| (0.2 * y.tanh() + 0.3 * z.tanh()) / w),
                LipschitzConstants {
                    c: 0.4,
                    alpha: 0.2,
                    beta: 0.3,
                },
            )
            .expect("valid constants"),
            Preset::Nonlinear => CoefficientSet::new(
                "nonlinear",
                Arc::new(move |_, x, y, z| 0.1 * y.sin() + 0.1 * z.sin() + 0.5 * (pi * x).sin()),
                Arc::new(|_, _, y, z| 0.1 * y.sin() + 0.1 * z.sin()),
                Arc::new(move |_, _, y, z| (0.1 * y.sin() + 0.2 * z.sin()) / w),
                LipschitzConstants {
                    c: 0.1,
                    alpha: 0.1,
                    beta: 0.2,
                },
            )
            .expect("valid constants"),
        };
        set.with_noise_weight(weighted_trace)
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown coefficient preset `{s}`")))
    }
}

/// Outcome of the strict test `2 alpha + beta^2 < 2 lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contraction {
    pub holds: bool,
    /// `2 lambda - 2 alpha - beta^2`.
    pub margin: f64,
}

pub fn check_contraction(alpha: f64, beta: f64, lambda: f64) -> Contraction {
    let margin = 2.0 * lambda - 2.0 * alpha - beta * beta;
    Contraction {
        holds: 2.0 * alpha + beta * beta < 2.0 * lambda,
        margin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub contraction: Contraction,
    pub empirical_c: f64,
    pub empirical_alpha: f64,
    pub empirical_beta: f64,
    /// Empirical constants within the declared ones (up to `1e-9`).
    pub lipschitz_ok: bool,
    /// Every evaluation, including `f0`, `g0`, `h0`, was finite.
    pub integrability_ok: bool,
}

/// Estimates the Lipschitz constants from partial difference quotients.
///
/// Each sample draws `(t, x)` in `[0, 1] x (0, 1)`, a base point `(y, z)` in
/// `[-4, 4]^2`, and a log-uniform step in `[1e-4, 1]`. The `y`-quotients of
/// `f`, `g`, `h` and the `z`-quotient of `f` bound `C`; the `z`-quotients of
/// `g` and `h` bound `alpha` and `beta`.
pub fn empirical_lipschitz<R: Rng + ?Sized>(
    coeffs: &CoefficientSet,
    lambda: f64,
    sample_count: usize,
    rng: &mut R,
) -> Result<AssumptionReport> {
    if sample_count < 2 {
        return Err(invalid("empirical Lipschitz estimate needs at least two samples"));
    }
    let w = coeffs.noise_weight();
    let mut finite = true;
    let (mut c, mut alpha, mut beta) = (0.0f64, 0.0f64, 0.0f64);
    let quotient = |a: f64, b: f64, step: f64, finite: &mut bool| {
        if !(a.is_finite() && b.is_finite()) {
            *finite = false;
            return 0.0;
        }
        (a - b).abs() / step.abs()
    };
    for _ in 0..sample_count {
        let t: f64 = rng.random();
        let x: f64 = rng.random_range(1e-9..1.0);
        let y: f64 = rng.random_range(-4.0..4.0);
        let z: f64 = rng.random_range(-4.0..4.0);
        let mut step = || {
            let s = 10f64.powf(rng.random_range(-4.0..0.0));
            if rng.random::<bool>() {
                s
            } else {
                -s
            }
        };
        let (dy, dz) = (step(), step());
        let f = |y, z| coeffs.f(t, x, y, z);
        let g = |y, z| coeffs.g(t, x, y, z);
        let h = |y, z| coeffs.h_tilde(t, x, y, z);
        c = c
            .max(quotient(f(y + dy, z), f(y, z), dy, &mut finite))
            .max(quotient(f(y, z + dz), f(y, z), dz, &mut finite))
            .max(quotient(g(y + dy, z), g(y, z), dy, &mut finite))
            .max(w * quotient(h(y + dy, z), h(y, z), dy, &mut finite));
        alpha = alpha.max(quotient(g(y, z + dz), g(y, z), dz, &mut finite));
        beta = beta.max(w * quotient(h(y, z + dz), h(y, z), dz, &mut finite));
        finite &= coeffs.f0(t, x).is_finite() && coeffs.g0(t, x).is_finite() && coeffs.h0(t, x).is_finite();
    }
    let declared = coeffs.constants();
    const SLACK: f64 = 1e-9;
    Ok(AssumptionReport {
        contraction: check_contraction(declared.alpha, declared.beta, lambda),
        empirical_c: c,
        empirical_alpha: alpha,
        empirical_beta: beta,
        lipschitz_ok: c <= declared.c + SLACK
            && alpha <= declared.alpha + SLACK
            && beta <= declared.beta + SLACK,
        integrability_ok: finite,
    })
}
