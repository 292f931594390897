//! Penalized time stepping for one path.
//!
//! Each step is a Lie splitting of
//! `du = (-A u + f + div g) dt + sum_j h_j dB^j + n (u - S)^- dt`:
//!
//! 1. explicit sources and noise evaluated at the start-of-step state,
//! 2. implicit diffusion `(I + dt A)^{-1}`,
//! 3. the exact flow of `u' = n (S - u)^+` over `dt` with the obstacle
//!    frozen at `t + dt`: `u <- S + (u - S) exp(-n dt)` where `u < S`.
//!
//! Every substep is order preserving for state-affine, gradient-free
//! coefficients, which is what the comparison checks rely on.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::coefficients::CoefficientSet;
use crate::error::{invalid, Error, Result};
use crate::mesh::{EllipticOperator, Field, Mesh1D};
use crate::noise::{NoiseIncrement, NoiseModel, NoiseStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_penalty: f64,
    pub seed: u64,
    pub path_id: u64,
}

impl SolverConfig {
    pub fn new(dt: f64, horizon: f64, n_penalty: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        let ratio = horizon / dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(invalid(format!(
                "horizon {horizon} is not an integer multiple of dt {dt}"
            )));
        }
        if !(n_penalty >= 0.0) || n_penalty.is_infinite() {
            return Err(invalid(format!("penalty must be finite and >= 0, got {n_penalty}")));
        }
        Ok(Self {
            dt,
            horizon,
            n_penalty,
            seed: 0,
            path_id: 0,
        })
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_path(self, path_id: u64) -> Self {
        Self { path_id, ..self }
    }

    pub fn with_penalty(self, n_penalty: f64) -> Self {
        Self { n_penalty, ..self }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Same horizon at half the step.
    pub fn refined(self) -> Self {
        Self {
            dt: 0.5 * self.dt,
            ..self
        }
    }
}

pub type ObstacleFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Lower barrier `S(t, x)`; `Inactive` never constrains the solution.
#[derive(Clone)]
pub enum Obstacle {
    Inactive,
    Function(ObstacleFn),
}

impl std::fmt::Debug for Obstacle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Obstacle::Inactive => f.write_str("Obstacle::Inactive"),
            Obstacle::Function(_) => f.write_str("Obstacle::Function(..)"),
        }
    }
}

impl Obstacle {
    pub fn new(s: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Obstacle::Function(Arc::new(s))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c)
    }

    /// `S(x) = amplitude * sin(pi x)`.
    pub fn sine(amplitude: f64) -> Self {
        Self::new(move |_, x| amplitude * (std::f64::consts::PI * x).sin())
    }

    pub fn is_active(&self) -> bool {
        matches!(self, Obstacle::Function(_))
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        match self {
            Obstacle::Inactive => f64::NEG_INFINITY,
            Obstacle::Function(s) => s(t, x),
        }
    }

    pub fn sample(&self, mesh: &Mesh1D, t: f64) -> Option<Field> {
        match self {
            Obstacle::Inactive => None,
            Obstacle::Function(s) => Some(mesh.sample(|x| s(t, x))),
        }
    }
}

/// Data of one reflected SPDE: operator, coefficients, barrier, noise and
/// initial condition. `noise = None` gives the deterministic equation.
#[derive(Debug, Clone)]
pub struct Problem {
    pub op: EllipticOperator,
    pub coeffs: CoefficientSet,
    pub obstacle: Obstacle,
    pub noise: Option<NoiseModel>,
    pub xi: Field,
}

impl Problem {
    pub fn new(
        op: EllipticOperator,
        coeffs: CoefficientSet,
        obstacle: Obstacle,
        noise: Option<NoiseModel>,
        xi: Field,
    ) -> Result<Self> {
        let n = op.dim();
        if xi.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: xi.len(),
            });
        }
        if !xi.is_finite() {
            return Err(invalid("initial condition must be finite"));
        }
        if let Some(noise) = &noise {
            if noise.eigenfunctions()[0].len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: noise.eigenfunctions()[0].len(),
                });
            }
        }
        Ok(Self {
            op,
            coeffs,
            obstacle,
            noise,
            xi,
        })
    }

    pub fn mesh(&self) -> &Mesh1D {
        self.op.mesh()
    }

    /// Checks `S(0, x_i) <= xi_i` at every node.
    pub fn check_compatible(&self) -> Result<()> {
        if let Some(s0) = self.obstacle.sample(self.mesh(), 0.0) {
            for (node, (&s, &x)) in s0.iter().zip(self.xi.iter()).enumerate() {
                if s > x {
                    return Err(Error::IncompatibleObstacle {
                        node,
                        obstacle: s,
                        initial: x,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn with_obstacle(self, obstacle: Obstacle) -> Self {
        Self { obstacle, ..self }
    }

    pub fn with_coeffs(self, coeffs: CoefficientSet) -> Self {
        Self { coeffs, ..self }
    }

    pub fn with_initial(self, xi: Field) -> Self {
        Self { xi, ..self }
    }

    pub fn without_noise(self) -> Self {
        Self { noise: None, ..self }
    }
}

/// Node fields `u_0 .. u_K` and the per-step penalty increments.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    pub penalty_increments: Vec<Field>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.penalty_increments.len()
    }

    pub fn final_field(&self) -> &Field {
        self.fields.last().expect("trajectory holds the initial field")
    }

    /// State after implicit diffusion and before the penalty substep of step `k`.
    pub fn pre_penalty(&self, k: usize) -> Field {
        Field(
            self.fields[k + 1]
                .iter()
                .zip(self.penalty_increments[k].iter())
                .map(|(u, p)| u - p)
                .collect(),
        )
    }

    /// Largest `|u - v|` over all steps and nodes.
    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        self.fields
            .iter()
            .zip(&other.fields)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Nodal masses `penalty_increment * h` per step.
///
/// `masses[k]` is the mass deposited by step `k`, i.e. on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionMeasure {
    pub masses: Vec<Field>,
    pub total_mass: f64,
}

impl ReflectionMeasure {
    pub fn from_increments(increments: &[Field], h: f64) -> Self {
        let masses: Vec<Field> = increments
            .iter()
            .map(|inc| Field(inc.iter().map(|p| p * h).collect()))
            .collect();
        let total_mass = masses.iter().flat_map(|m| m.iter()).sum();
        Self { masses, total_mass }
    }

    /// Mass of the space-time block `steps x nodes`.
    pub fn block_mass(&self, steps: Range<usize>, nodes: Range<usize>) -> f64 {
        self.masses[steps]
            .iter()
            .map(|m| m[nodes.clone()].iter().sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRun {
    pub trajectory: Trajectory,
    pub measure: ReflectionMeasure,
}

/// Coefficients evaluated on one state: nodal `f`, edge `g`, nodal `h_tilde`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerms {
    pub f: Field,
    pub g: Vec<f64>,
    pub h_tilde: Field,
}

/// Evaluates `f(t, x_i, u_i, (grad u)_i)`, `g` on the edges and `h_tilde` on
/// the nodes. Nodal gradients average the two adjacent edge differences; edge
/// values average the two endpoint values.
pub fn source_terms(problem: &Problem, t: f64, state: &[f64]) -> SourceTerms {
    let mesh = problem.mesh();
    let coeffs = &problem.coeffs;
    let grad = mesh.gradient(state);
    let nodal_grad = mesh.nodal_gradient(&grad);
    let edge_u = mesh.edge_values(state);
    let f = mesh
        .nodes()
        .iter()
        .zip(state)
        .zip(&nodal_grad)
        .map(|((&x, &y), &z)| coeffs.f(t, x, y, z))
        .collect();
    let g = mesh
        .midpoints()
        .zip(&edge_u)
        .zip(&grad)
        .map(|((x, &y), &z)| coeffs.g(t, x, y, z))
        .collect();
    let h_tilde = if problem.noise.is_some() {
        mesh.nodes()
            .iter()
            .zip(state)
            .zip(&nodal_grad)
            .map(|((&x, &y), &z)| coeffs.h_tilde(t, x, y, z))
            .collect()
    } else {
        vec![0.0; state.len()]
    };
    SourceTerms {
        f: Field(f),
        g,
        h_tilde: Field(h_tilde),
    }
}

fn ensure_finite(u: &[f64], stage: &'static str, step: usize) -> Result<()> {
    match u.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::NonFinite { stage, step, node }),
        None => Ok(()),
    }
}

/// Result of one step: the new state and the (non-negative) penalty push.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub u: Field,
    pub penalty_increment: Field,
}

/// The exact penalty flow over `dt`; returns the increment, updates `u` in place.
pub fn penalty_substep(u: &mut [f64], obstacle: &[f64], n_penalty: f64, dt: f64) -> Field {
    let mut inc = vec![0.0; u.len()];
    if n_penalty == 0.0 {
        return Field(inc);
    }
    let decay = (-n_penalty * dt).exp();
    for ((v, &s), p) in u.iter_mut().zip(obstacle).zip(inc.iter_mut()) {
        if *v < s {
            let pushed = (s + (*v - s) * decay).max(*v);
            *p = pushed - *v;
            *v = pushed;
        }
    }
    Field(inc)
}

/// Advances `u` from `t` to `t + dt`.
///
/// Coefficients are evaluated on `coeff_state`, which is `u` itself for the
/// plain scheme and the previous iterate for frozen-coefficient (Picard) runs.
pub fn step(
    problem: &Problem,
    cfg: &SolverConfig,
    u: &[f64],
    coeff_state: &[f64],
    t: f64,
    inc: Option<&NoiseIncrement>,
    step_index: usize,
) -> Result<StepOutput> {
    let dt = cfg.dt;
    let mesh = problem.mesh();
    let src = source_terms(problem, t, coeff_state);
    let div_g = mesh.divergence(&src.g)?;
    let mut explicit: Vec<f64> = u
        .iter()
        .zip(src.f.iter())
        .zip(div_g.iter())
        .map(|((&u, &f), &dg)| u + dt * (f + dg))
        .collect();
    if let (Some(noise), Some(inc)) = (&problem.noise, inc) {
        if (inc.dt - dt).abs() > 1e-12 * dt.max(1.0) {
            return Err(invalid(format!("noise increment dt {} != solver dt {dt}", inc.dt)));
        }
        if inc.db.len() != noise.channels() {
            return Err(Error::LengthMismatch {
                expected: noise.channels(),
                actual: inc.db.len(),
            });
        }
        let w = noise.noise_field(inc);
        for ((e, h), w) in explicit.iter_mut().zip(src.h_tilde.iter()).zip(w.iter()) {
            *e += h * w;
        }
    }
    ensure_finite(&explicit, "explicit sources", step_index)?;
    let mut diffused = problem.op.solve_shifted(dt, &explicit)?;
    ensure_finite(&diffused, "implicit diffusion", step_index)?;
    let penalty_increment = match problem.obstacle.sample(mesh, t + dt) {
        Some(s) => penalty_substep(&mut diffused, &s, cfg.n_penalty, dt),
        None => Field::zeros(u.len()),
    };
    ensure_finite(&diffused, "penalty", step_index)?;
    Ok(StepOutput {
        u: diffused,
        penalty_increment,
    })
}

/// Where a path takes its noise from and, optionally, the trajectory its
/// coefficients are frozen along.
#[derive(Debug, Clone, Copy)]
pub struct PathDriver<'a> {
    pub stream: Option<NoiseStream>,
    pub frozen: Option<&'a Trajectory>,
}

impl<'a> PathDriver<'a> {
    /// Noise addressed by `(cfg.seed, cfg.path_id)` at resolution `cfg.dt`.
    pub fn for_config(problem: &Problem, cfg: &SolverConfig) -> Self {
        Self {
            stream: problem
                .noise
                .as_ref()
                .map(|n| NoiseStream::new(n.channels(), cfg.seed, cfg.path_id, cfg.dt)),
            frozen: None,
        }
    }

    pub fn frozen_along(self, frozen: &'a Trajectory) -> Self {
        Self {
            frozen: Some(frozen),
            ..self
        }
    }

    pub fn coeff_state<'b>(&'b self, k: usize, current: &'b [f64]) -> &'b [f64] {
        match self.frozen {
            Some(traj) => &traj.fields[k.min(traj.fields.len() - 1)],
            None => current,
        }
    }
}

pub fn simulate_path(problem: &Problem, cfg: &SolverConfig) -> Result<PathRun> {
    simulate_with(problem, cfg, &PathDriver::for_config(problem, cfg))
}

pub fn simulate_with(problem: &Problem, cfg: &SolverConfig, driver: &PathDriver<'_>) -> Result<PathRun> {
    problem.check_compatible()?;
    if let Some(stream) = &driver.stream {
        if (stream.dt() - cfg.dt).abs() > 1e-12 * cfg.dt.max(1.0) {
            return Err(invalid(format!(
                "noise stream resolution {} != solver dt {}",
                stream.dt(),
                cfg.dt
            )));
        }
    }
    let steps = cfg.steps();
    let mut times = Vec::with_capacity(steps + 1);
    let mut fields = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps);
    times.push(0.0);
    fields.push(problem.xi.clone());
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let inc = driver.stream.as_ref().map(|s| s.increment(k));
        let current = &fields[k];
        let out = step(problem, cfg, current, driver.coeff_state(k, current), t, inc.as_ref(), k)?;
        times.push((k + 1) as f64 * cfg.dt);
        fields.push(out.u);
        increments.push(out.penalty_increment);
    }
    let measure = ReflectionMeasure::from_increments(&increments, problem.mesh().h());
    Ok(PathRun {
        trajectory: Trajectory {
            dt: cfg.dt,
            times,
            fields,
            penalty_increments: increments,
        },
        measure,
    })
}

/// Runs independent paths `paths` in parallel on the noise of `cfg.seed`.
pub fn simulate_paths(problem: &Problem, cfg: &SolverConfig, paths: Range<u64>) -> Result<Vec<PathRun>> {
    paths
        .into_par_iter()
        .map(|p| simulate_path(problem, &cfg.with_path(p)))
        .collect()
}

/// Penalized heat equation `v' = -A v + n (v - S)^-`, no sources or noise.
pub fn deterministic_penalized(
    cfg: &SolverConfig,
    op: &EllipticOperator,
    obstacle: &Obstacle,
    u0: &Field,
) -> Result<Trajectory> {
    let problem = Problem::new(op.clone(), CoefficientSet::zero(), obstacle.clone(), None, u0.clone())?;
    Ok(simulate_path(&problem, cfg)?.trajectory)
}
