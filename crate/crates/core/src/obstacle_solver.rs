//! Penalty schedules, Skorokhod pairing, and the Picard iteration for
//! state-dependent coefficients.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::check_contraction;
use crate::error::{invalid, Error, Result};
use crate::mesh::{Field, Mesh1D};
use crate::stepper::{simulate_with, Obstacle, PathDriver, Problem, ReflectionMeasure, SolverConfig, Trajectory};

/// Strictly increasing positive penalty parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PenaltySchedule(Vec<f64>);

impl PenaltySchedule {
    pub fn new(n_values: Vec<f64>) -> Result<Self> {
        if n_values.is_empty() {
            return Err(invalid("penalty schedule is empty"));
        }
        if n_values.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(invalid("penalty parameters must be positive and finite"));
        }
        if n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("penalty schedule must be strictly increasing"));
        }
        Ok(Self(n_values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn finest(&self) -> f64 {
        *self.0.last().expect("schedule is never empty")
    }
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self(vec![1e1, 1e2, 1e3, 1e4])
    }
}

impl TryFrom<Vec<f64>> for PenaltySchedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PenaltySchedule> for Vec<f64> {
    fn from(s: PenaltySchedule) -> Self {
        s.0
    }
}

/// Per-penalty diagnostics of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyDiagnostic {
    pub n: f64,
    /// `sum_k ||(u_k** - S_{k+1})^-||^2 dt`, measured on the state the
    /// penalty acts on (after diffusion, before the penalty substep).
    pub violation_sq: f64,
    /// Same sum measured on the trajectory itself (after the penalty substep).
    pub residual_violation_sq: f64,
    pub skorokhod: f64,
    /// `max_k ||u_k||^2`.
    pub sup_energy: f64,
    /// `sum_k E(u_k) dt`, left endpoints.
    pub dirichlet_energy: f64,
    /// `n * violation_sq`.
    pub penalty_energy: f64,
    pub total_mass: f64,
    /// `max (u^{n_prev} - u^n)^+` against the previous schedule entry (0 for the first).
    pub monotonicity_gap: f64,
}

impl PenaltyDiagnostic {
    pub fn violation_norm(&self) -> f64 {
        self.violation_sq.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub per_n: Vec<PenaltyDiagnostic>,
    /// Some `u^{n_1} > u^{n_2} + 1e-6` with `n_1 < n_2` was observed.
    pub monotonicity_fault: bool,
    /// Violation norms are non-increasing along the schedule (up to `1e-10`).
    pub violation_monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSolution {
    pub u: Trajectory,
    pub nu: ReflectionMeasure,
    pub diagnostics: Diagnostics,
}

/// `sum_{k,i} (u_{k+1,i} - S(t_{k+1}, x_i)) * masses[k][i]`.
///
/// The mass of step `k` is produced by the penalty at `t_{k+1}`, so it is
/// paired with the state and barrier there.
pub fn skorokhod_pairing(u: &Trajectory, obstacle: &Obstacle, nu: &ReflectionMeasure, mesh: &Mesh1D) -> f64 {
    let mut acc = 0.0;
    for (k, masses) in nu.masses.iter().enumerate() {
        let t = u.times[k + 1];
        for ((&m, &v), &x) in masses.iter().zip(u.fields[k + 1].iter()).zip(mesh.nodes()) {
            if m != 0.0 {
                acc += (v - obstacle.value(t, x)) * m;
            }
        }
    }
    acc
}

fn violation_sq(u: &[f64], s: &[f64], mesh: &Mesh1D) -> f64 {
    mesh.h()
        * u.iter()
            .zip(s)
            .map(|(v, s)| (s - v).max(0.0).powi(2))
            .sum::<f64>()
}

fn diagnose(problem: &Problem, n: f64, u: &Trajectory, nu: &ReflectionMeasure) -> PenaltyDiagnostic {
    let mesh = problem.mesh();
    let dt = u.dt;
    let (mut pre, mut post) = (0.0, 0.0);
    for k in 0..u.steps() {
        if let Some(s) = problem.obstacle.sample(mesh, u.times[k + 1]) {
            pre += violation_sq(&u.pre_penalty(k), &s, mesh) * dt;
            post += violation_sq(&u.fields[k + 1], &s, mesh) * dt;
        }
    }
    let sup_energy = u.fields.iter().map(|f| mesh.norm_sq(f)).fold(0.0, f64::max);
    let dirichlet_energy = u.fields[..u.steps()].iter().map(|f| problem.op.energy(f)).sum::<f64>() * dt;
    PenaltyDiagnostic {
        n,
        violation_sq: pre,
        residual_violation_sq: post,
        skorokhod: skorokhod_pairing(u, &problem.obstacle, nu, mesh),
        sup_energy,
        dirichlet_energy,
        penalty_energy: n * pre,
        total_mass: nu.total_mass,
        monotonicity_gap: 0.0,
    }
}

/// Runs the penalized scheme for every `n` of the schedule on one noise
/// path and returns the finest pair with per-`n` diagnostics.
pub fn solve_linear_obstacle(
    schedule: &PenaltySchedule,
    problem: &Problem,
    cfg: &SolverConfig,
    driver: &PathDriver<'_>,
) -> Result<ObstacleSolution> {
    let mut per_n = Vec::with_capacity(schedule.values().len());
    let mut previous: Option<Trajectory> = None;
    let mut last = None;
    for &n in schedule.values() {
        let run = simulate_with(problem, &cfg.with_penalty(n), driver)?;
        let mut diag = diagnose(problem, n, &run.trajectory, &run.measure);
        if let Some(prev) = &previous {
            diag.monotonicity_gap = prev
                .fields
                .iter()
                .zip(&run.trajectory.fields)
                .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x - y))
                .fold(0.0, f64::max);
        }
        per_n.push(diag);
        previous = Some(run.trajectory.clone());
        last = Some(run);
    }
    let run = last.expect("schedule is never empty");
    let monotonicity_fault = per_n.iter().any(|d| d.monotonicity_gap > 1e-6);
    let violation_monotone = per_n.windows(2).all(|w| w[1].violation_sq <= w[0].violation_sq + 1e-10);
    Ok(ObstacleSolution {
        u: run.trajectory,
        nu: run.measure,
        diagnostics: Diagnostics {
            per_n,
            monotonicity_fault,
            violation_monotone,
        },
    })
}

/// Constants of the weighted norm `||.||_{gamma, delta}` and the resulting
/// contraction factor of the Picard map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardWeights {
    pub epsilon: f64,
    pub gamma: f64,
    pub delta: f64,
    /// `(C eps + alpha + beta^2 (1 + eps)) / (2 lambda - alpha)`.
    pub rho: f64,
    /// `delta` came out as 0 and was clamped to `1e-12`.
    pub degenerate: bool,
}

pub const DEGENERATE_DELTA: f64 = 1e-12;

/// Picks `eps` by halving from 1 until `C eps + alpha + beta^2 (1 + eps) <
/// 2 lambda - alpha`, halves once more, then solves for `gamma` and `delta`.
pub fn choose_gamma_delta(c: f64, alpha: f64, beta: f64, lambda: f64) -> Result<PicardWeights> {
    if !(c >= 0.0 && alpha >= 0.0 && beta >= 0.0 && lambda > 0.0) {
        return Err(invalid("Picard constants must be non-negative with lambda > 0"));
    }
    if !check_contraction(alpha, beta, lambda).holds {
        return Err(Error::Contraction {
            lhs: 2.0 * alpha + beta * beta,
            rhs: 2.0 * lambda,
        });
    }
    let numerator = |eps: f64| c * eps + alpha + beta * beta * (1.0 + eps);
    let denominator = 2.0 * lambda - alpha;
    let mut epsilon = 1.0;
    while numerator(epsilon) >= denominator {
        epsilon *= 0.5;
    }
    epsilon *= 0.5;
    let num = numerator(epsilon);
    let rho = num / denominator;
    let raw_delta = if num > 0.0 {
        c * (1.0 + epsilon + 2.0 / epsilon) / num
    } else {
        0.0
    };
    let gamma = 1.0 / epsilon + denominator * raw_delta;
    let degenerate = raw_delta <= 0.0;
    Ok(PicardWeights {
        epsilon,
        gamma,
        delta: if degenerate { DEGENERATE_DELTA } else { raw_delta },
        rho,
        degenerate,
    })
}

fn weighted_sum<'a>(
    fields: impl Iterator<Item = (f64, Field)> + 'a,
    dt: f64,
    gamma: f64,
    delta: f64,
    mesh: &Mesh1D,
) -> f64 {
    fields
        .map(|(t, u)| (-gamma * t).exp() * (delta * mesh.norm_sq(&u) + mesh.norm_sq(&mesh.gradient(&u))))
        .sum::<f64>()
        * dt
}

/// Left-endpoint quadrature of `int_0^T e^{-gamma s} (delta ||u_s||^2 +
/// ||grad u_s||^2) ds` for one path.
pub fn weighted_norm(traj: &Trajectory, gamma: f64, delta: f64, mesh: &Mesh1D) -> f64 {
    let k = traj.steps();
    weighted_sum(
        traj.times[..k].iter().copied().zip(traj.fields[..k].iter().cloned()),
        traj.dt,
        gamma,
        delta,
        mesh,
    )
}

/// [`weighted_norm`] of `a - b`.
pub fn weighted_distance(a: &Trajectory, b: &Trajectory, gamma: f64, delta: f64, mesh: &Mesh1D) -> f64 {
    let k = a.steps().min(b.steps());
    let diffs = (0..k).map(|i| {
        let d: Vec<f64> = a.fields[i].iter().zip(b.fields[i].iter()).map(|(x, y)| x - y).collect();
        (a.times[i], Field(d))
    });
    weighted_sum(diffs, a.dt, gamma, delta, mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardStep {
    pub iteration: usize,
    /// Path mean of `||u^{m+1} - u^m||_{gamma, delta}`.
    pub difference: f64,
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub weights: PicardWeights,
    /// Final obstacle solution per path.
    pub solutions: Vec<ObstacleSolution>,
    pub history: Vec<PicardStep>,
    pub converged: bool,
    /// Number of linear obstacle solves performed per path.
    pub iterations: usize,
}

impl PicardOutcome {
    /// `Delta_{m+1} / Delta_m` for consecutive recorded differences.
    pub fn ratios(&self) -> Vec<f64> {
        self.history
            .windows(2)
            .map(|w| w[1].difference / w[0].difference)
            .collect()
    }
}

fn constant_trajectory(xi: &Field, cfg: &SolverConfig) -> Trajectory {
    let steps = cfg.steps();
    Trajectory {
        dt: cfg.dt,
        times: (0..=steps).map(|k| k as f64 * cfg.dt).collect(),
        fields: vec![xi.clone(); steps + 1],
        penalty_increments: vec![Field::zeros(xi.len()); steps],
    }
}

/// Picard iteration `u^{m+1} = R(xi, f(u^m), g(u^m), h(u^m), S)` started at
/// `u^0 = xi`, with the same noise path per path id across iterates.
///
/// Stops when the path mean of the weighted difference drops to `tol` or
/// after `max_iter` solves.
pub fn picard_solve(
    schedule: &PenaltySchedule,
    problem: &Problem,
    cfg: &SolverConfig,
    paths: Range<u64>,
    tol: f64,
    max_iter: usize,
) -> Result<PicardOutcome> {
    if !(tol > 0.0) {
        return Err(invalid("Picard tolerance must be positive"));
    }
    if paths.is_empty() {
        return Err(invalid("Picard iteration needs at least one path"));
    }
    let k = problem.coeffs.constants();
    let weights = choose_gamma_delta(k.c, k.alpha, k.beta, problem.op.lambda())?;
    let mesh = problem.mesh();
    let path_ids: Vec<u64> = paths.collect();
    let mut iterates: Vec<Trajectory> = path_ids.iter().map(|_| constant_trajectory(&problem.xi, cfg)).collect();
    let mut solutions = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let next: Vec<ObstacleSolution> = path_ids
            .par_iter()
            .zip(iterates.par_iter())
            .map(|(&p, prev)| {
                let path_cfg = cfg.with_path(p);
                let driver = PathDriver::for_config(problem, &path_cfg).frozen_along(prev);
                solve_linear_obstacle(schedule, problem, &path_cfg, &driver)
            })
            .collect::<Result<_>>()?;
        let difference = next
            .iter()
            .zip(&iterates)
            .map(|(s, prev)| weighted_distance(&s.u, prev, weights.gamma, weights.delta, mesh))
            .sum::<f64>()
            / path_ids.len() as f64;
        history.push(PicardStep {
            iteration: iterations,
            difference,
        });
        iterates = next.iter().map(|s| s.u.clone()).collect();
        solutions = next;
        iterations += 1;
        if difference <= tol {
            converged = true;
            break;
        }
    }
    Ok(PicardOutcome {
        weights,
        solutions,
        history,
        converged,
        iterations,
    })
}
