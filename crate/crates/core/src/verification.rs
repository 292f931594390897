//! Independent reference solutions and property checks: projected implicit
//! Euler, the discrete `||u||^2` energy identity, a-priori penalty bounds and
//! pathwise comparison of solutions and reflection measures.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{EllipticOperator, Field};
use crate::obstacle_solver::PenaltyDiagnostic;
use crate::stepper::{
    simulate_path, source_terms, Obstacle, PathDriver, PathRun, Problem, ReflectionMeasure, SolverConfig,
    Trajectory,
};

/// Implicit Euler heat step followed by projection `u <- max(u, S(t + dt))`.
///
/// `penalty_increments` records the projection push.
pub fn projected_reference(
    cfg: &SolverConfig,
    op: &EllipticOperator,
    obstacle: &Obstacle,
    u0: &Field,
) -> Result<Trajectory> {
    let steps = cfg.steps();
    let mesh = op.mesh();
    let mut fields = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps);
    fields.push(u0.clone());
    for k in 0..steps {
        let t_next = (k + 1) as f64 * cfg.dt;
        let mut u = op.solve_shifted(cfg.dt, &fields[k])?;
        let mut push = Field::zeros(u.len());
        if let Some(s) = obstacle.sample(mesh, t_next) {
            for ((v, p), s) in u.iter_mut().zip(push.iter_mut()).zip(s.iter()) {
                if *v < *s {
                    *p = s - *v;
                    *v = *s;
                }
            }
        }
        fields.push(u);
        increments.push(push);
    }
    Ok(Trajectory {
        dt: cfg.dt,
        times: (0..=steps).map(|k| k as f64 * cfg.dt).collect(),
        fields,
        penalty_increments: increments,
    })
}

/// Terms of the discrete identity
/// `||u_T||^2 + 2 int E(u) = ||xi||^2 + 2 int (u, f) - 2 int (grad u, g)
///  + int |||h|||^2 + 2 sum_j int (u, h_j) dB^j + 2 int int u dnu`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyReport {
    pub final_energy: f64,
    pub dissipation: f64,
    pub initial_energy: f64,
    pub f_pairing: f64,
    /// Already carries the minus sign: `-2 sum_k (grad u_k, g_k) dt`.
    pub g_pairing: f64,
    pub quadratic_variation: f64,
    pub stochastic_integral: f64,
    pub measure_pairing: f64,
    pub residual: f64,
}

impl EnergyReport {
    pub fn lhs(&self) -> f64 {
        self.final_energy + self.dissipation
    }

    pub fn rhs(&self) -> f64 {
        self.initial_energy
            + self.f_pairing
            + self.g_pairing
            + self.quadratic_variation
            + self.stochastic_integral
            + self.measure_pairing
    }

    pub fn is_finite(&self) -> bool {
        [
            self.final_energy,
            self.dissipation,
            self.initial_energy,
            self.f_pairing,
            self.g_pairing,
            self.quadratic_variation,
            self.stochastic_integral,
            self.measure_pairing,
            self.residual,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Evaluates the energy identity on a completed path.
///
/// Coefficients, noise increments and the frozen state (if any) are taken
/// from `driver`, i.e. exactly those the solver used. Every integrand,
/// including the reflection term, sits at the Ito point `u_k`.
pub fn energy_identity(problem: &Problem, run: &PathRun, driver: &PathDriver<'_>) -> EnergyReport {
    let mesh = problem.mesh();
    let traj = &run.trajectory;
    let dt = traj.dt;
    let cov_diag: Option<Vec<f64>> = problem
        .noise
        .as_ref()
        .map(|n| (0..mesh.n_interior()).map(|i| n.kernel(i, i)).collect());
    let mut rep = EnergyReport {
        final_energy: mesh.norm_sq(traj.final_field()),
        initial_energy: mesh.norm_sq(&traj.fields[0]),
        ..Default::default()
    };
    for k in 0..traj.steps() {
        let t = traj.times[k];
        let u = &traj.fields[k];
        let src = source_terms(problem, t, driver.coeff_state(k, u));
        rep.dissipation += 2.0 * problem.op.energy(u) * dt;
        rep.f_pairing += 2.0 * mesh.inner(u, &src.f) * dt;
        rep.g_pairing -= 2.0 * mesh.inner(&mesh.gradient(u), &src.g) * dt;
        if let (Some(noise), Some(stream), Some(cov)) = (&problem.noise, &driver.stream, &cov_diag) {
            let w = noise.noise_field(&stream.increment(k));
            rep.quadratic_variation += mesh.h()
                * src
                    .h_tilde
                    .iter()
                    .zip(cov)
                    .map(|(h, c)| h * h * c)
                    .sum::<f64>()
                * dt;
            rep.stochastic_integral += 2.0
                * mesh.h()
                * u.iter()
                    .zip(src.h_tilde.iter())
                    .zip(w.iter())
                    .map(|((u, h), w)| u * h * w)
                    .sum::<f64>();
        }
        let masses = &run.measure.masses[k];
        rep.measure_pairing += 2.0
            * traj.fields[k]
                .iter()
                .zip(masses.iter())
                .map(|(u, m)| u * m)
                .sum::<f64>();
    }
    rep.residual = rep.lhs() - rep.rhs();
    rep
}

/// Pathwise order of two coupled problems and, for shared barriers, of their
/// reflection measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `max (u - u')^+` over paths, steps and nodes.
    pub max_violation: f64,
    /// `min_phi int phi d(nu - nu')` over the test-function dictionary and paths.
    pub measure_gap: Option<f64>,
    /// `min (total_mass(nu) - total_mass(nu'))` over paths.
    pub total_mass_gap: Option<f64>,
    pub paths: usize,
}

const HYPOTHESIS_Y: [f64; 5] = [-2.0, -0.5, 0.0, 0.7, 2.0];
const HYPOTHESIS_Z: [f64; 5] = [-3.0, -1.0, 0.0, 1.0, 3.0];

fn sample_times(cfg: &SolverConfig) -> Vec<(usize, f64)> {
    let steps = cfg.steps();
    let stride = (steps / 16).max(1);
    (0..=steps)
        .step_by(stride)
        .chain(std::iter::once(steps))
        .map(|k| (k, k as f64 * cfg.dt))
        .collect()
}

fn same_structure(a: &Problem, b: &Problem) -> Result<()> {
    if a.op != b.op {
        return Err(Error::InvalidInput("compared problems use different operators".into()));
    }
    if a.noise != b.noise {
        return Err(Error::InvalidInput("compared problems use different noise models".into()));
    }
    Ok(())
}

/// Checks `xi <= xi'`, `f <= f'`, `g = g'`, `h = h'` on the grid and a sample
/// of `(y, z)` values, plus `S <= S'` (or `S = S'` when `same_obstacle`).
pub fn check_hypotheses(lower: &Problem, upper: &Problem, cfg: &SolverConfig, same_obstacle: bool) -> Result<()> {
    same_structure(lower, upper)?;
    let fail = |hypothesis, step, node| Error::Hypothesis { hypothesis, step, node };
    for (node, (a, b)) in lower.xi.iter().zip(upper.xi.iter()).enumerate() {
        if a > b {
            return Err(fail("xi <= xi'", 0, node));
        }
    }
    let mesh = lower.mesh();
    let (c, d) = (&lower.coeffs, &upper.coeffs);
    for (k, t) in sample_times(cfg) {
        for (node, &x) in mesh.nodes().iter().enumerate() {
            for &y in &HYPOTHESIS_Y {
                for &z in &HYPOTHESIS_Z {
                    if c.f(t, x, y, z) > d.f(t, x, y, z) {
                        return Err(fail("f <= f'", k, node));
                    }
                    if c.g(t, x, y, z) != d.g(t, x, y, z) {
                        return Err(fail("g = g'", k, node));
                    }
                    if c.h_tilde(t, x, y, z) != d.h_tilde(t, x, y, z) {
                        return Err(fail("h = h'", k, node));
                    }
                }
            }
        }
    }
    for k in 0..=cfg.steps() {
        let t = k as f64 * cfg.dt;
        for (node, &x) in mesh.nodes().iter().enumerate() {
            let (s, s2) = (lower.obstacle.value(t, x), upper.obstacle.value(t, x));
            if same_obstacle && s.to_bits() != s2.to_bits() {
                return Err(fail("S = S'", k, node));
            }
            if s > s2 {
                return Err(fail("S <= S'", k, node));
            }
        }
    }
    Ok(())
}

fn run_pairs(lower: &Problem, upper: &Problem, cfg: &SolverConfig, paths: Range<u64>) -> Result<Vec<(PathRun, PathRun)>> {
    paths
        .into_par_iter()
        .map(|p| {
            let c = cfg.with_path(p);
            Ok((simulate_path(lower, &c)?, simulate_path(upper, &c)?))
        })
        .collect()
}

fn order_violation(lower: &Trajectory, upper: &Trajectory) -> f64 {
    lower
        .fields
        .iter()
        .zip(&upper.fields)
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x - y))
        .fold(0.0, f64::max)
}

/// Dyadic space-time blocks at levels 0, 1, 2 (21 indicator functions),
/// as `(step range, node range)`.
pub fn dyadic_dictionary(steps: usize, nodes: usize) -> Vec<(Range<usize>, Range<usize>)> {
    let mut out = Vec::new();
    for level in 0..3u32 {
        let parts = 1usize << level;
        let split = |len: usize, i: usize| (i * len / parts)..((i + 1) * len / parts);
        for a in 0..parts {
            for b in 0..parts {
                out.push((split(steps, a), split(nodes, b)));
            }
        }
    }
    out
}

/// `min_phi int phi d(nu - nu')` over [`dyadic_dictionary`].
pub fn measure_gap(nu: &ReflectionMeasure, nu_prime: &ReflectionMeasure) -> f64 {
    let steps = nu.masses.len();
    let nodes = nu.masses.first().map_or(0, |m| m.len());
    dyadic_dictionary(steps, nodes)
        .into_iter()
        .map(|(s, n)| nu.block_mass(s.clone(), n.clone()) - nu_prime.block_mass(s, n))
        .fold(f64::INFINITY, f64::min)
}

/// Runs `lower` and `upper` on identical noise for every path and reports
/// the largest `(u - u')^+`.
pub fn compare_solutions(lower: &Problem, upper: &Problem, cfg: &SolverConfig, paths: Range<u64>) -> Result<ComparisonReport> {
    check_hypotheses(lower, upper, cfg, false)?;
    let count = (paths.end.saturating_sub(paths.start)) as usize;
    let pairs = run_pairs(lower, upper, cfg, paths)?;
    let max_violation = pairs
        .iter()
        .map(|(a, b)| order_violation(&a.trajectory, &b.trajectory))
        .fold(0.0, f64::max);
    Ok(ComparisonReport {
        max_violation,
        measure_gap: None,
        total_mass_gap: None,
        paths: count,
    })
}

/// As [`compare_solutions`] with a shared barrier; also reports the
/// measure gaps, which should be `>= 0` (`nu >= nu'`).
pub fn compare_measures(lower: &Problem, upper: &Problem, cfg: &SolverConfig, paths: Range<u64>) -> Result<ComparisonReport> {
    check_hypotheses(lower, upper, cfg, true)?;
    let count = (paths.end.saturating_sub(paths.start)) as usize;
    let pairs = run_pairs(lower, upper, cfg, paths)?;
    let mut rep = ComparisonReport {
        max_violation: 0.0,
        measure_gap: Some(f64::INFINITY),
        total_mass_gap: Some(f64::INFINITY),
        paths: count,
    };
    for (a, b) in &pairs {
        rep.max_violation = rep.max_violation.max(order_violation(&a.trajectory, &b.trajectory));
        rep.measure_gap = rep.measure_gap.map(|g| g.min(measure_gap(&a.measure, &b.measure)));
        rep.total_mass_gap = rep
            .total_mass_gap
            .map(|g| g.min(a.measure.total_mass - b.measure.total_mass));
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriRow {
    pub n: f64,
    pub sup_energy: f64,
    pub dirichlet_energy: f64,
    pub penalty_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriTable {
    pub rows: Vec<AprioriRow>,
    /// Some column grew by more than a factor 2 from the first to the last `n`.
    pub growth_flag: bool,
}

impl AprioriTable {
    /// `max / min` of a column over the schedule (1 for an all-zero column).
    pub fn spread(&self, column: impl Fn(&AprioriRow) -> f64) -> f64 {
        let values: Vec<f64> = self.rows.iter().map(column).collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            1.0
        } else {
            max / min
        }
    }
}

/// Path means of the a-priori quantities per penalty parameter.
///
/// `per_path[p]` holds the schedule diagnostics of path `p`.
pub fn apriori_bounds(per_path: &[Vec<PenaltyDiagnostic>]) -> AprioriTable {
    let paths = per_path.len().max(1) as f64;
    let len = per_path.first().map_or(0, Vec::len);
    let rows: Vec<AprioriRow> = (0..len)
        .map(|i| {
            let mean = |f: fn(&PenaltyDiagnostic) -> f64| per_path.iter().map(|d| f(&d[i])).sum::<f64>() / paths;
            AprioriRow {
                n: per_path[0][i].n,
                sup_energy: mean(|d| d.sup_energy),
                dirichlet_energy: mean(|d| d.dirichlet_energy),
                penalty_energy: mean(|d| d.penalty_energy),
            }
        })
        .collect();
    let grows = |f: fn(&AprioriRow) -> f64| match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => f(b) > 2.0 * f(a),
        _ => false,
    };
    let growth_flag = grows(|r| r.sup_energy) || grows(|r| r.dirichlet_energy) || grows(|r| r.penalty_energy);
    AprioriTable { rows, growth_flag }
}
