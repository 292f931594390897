//! The four workflows. Each returns its files and a summary; writing and the
//! manifest are handled by [`crate::execute`].

use std::ops::Range;

use penspde::{
    apriori_bounds, compare_measures, compare_solutions, energy_identity, picard_solve, projected_reference,
    simulate_paths, simulate_with, solve_linear_obstacle, EnergyReport, Error, NoiseStream, PathDriver, PathRun,
    PenaltyDiagnostic, Problem, SolverConfig, Trajectory,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, InitialConfig, NoiseConfig, SolverKind};
use crate::output::{num, Outputs, Table};
use crate::CliError;

/// Largest tolerated order violation in `compare`.
pub const ORDER_TOL: f64 = 1e-8;

pub struct CommandOutput {
    pub outputs: Outputs,
    pub summary: serde_json::Value,
    /// Set when a checked property failed (exit code 1).
    pub violation: Option<String>,
}

fn path_range(cfg: &ExperimentConfig) -> Range<u64> {
    0..cfg.run.paths as u64
}

fn solver(cfg: &ExperimentConfig) -> Result<SolverConfig, CliError> {
    cfg.solver_config().map_err(|e| CliError::Invalid(e.to_string()))
}

fn core_err(e: Error) -> CliError {
    match e {
        Error::Hypothesis { .. } | Error::InvalidInput(_) | Error::IncompatibleObstacle { .. } | Error::Contraction { .. } => {
            CliError::Invalid(e.to_string())
        }
        other => CliError::Numerical(other.to_string()),
    }
}

/// Least-squares slope of `log y` against `log x`; `None` unless every `y > 0`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn slope_text(s: Option<f64>) -> String {
    s.map_or_else(|| "undefined".to_string(), num)
}

fn trajectory_rows(table: &mut Table, path: u64, traj: &Trajectory, masses: &[penspde::Field], nodes: &[f64]) {
    let mut cumulative = vec![0.0; nodes.len()];
    for (k, (t, u)) in traj.times.iter().zip(&traj.fields).enumerate() {
        if k > 0 {
            for (c, m) in cumulative.iter_mut().zip(masses[k - 1].iter()) {
                *c += m;
            }
        }
        for (i, (x, v)) in nodes.iter().zip(u.iter()).enumerate() {
            table.row([path.to_string(), num(*t), i.to_string(), num(*x), num(*v), num(cumulative[i])]);
        }
    }
}

/// Sources and noise vanish, so the projected scheme is an exact oracle.
fn is_pure_obstacle(cfg: &ExperimentConfig) -> bool {
    cfg.noise == NoiseConfig::None
        && cfg.coefficients.preset == penspde::Preset::Zero
        && cfg.coefficients.source_shift == 0.0
}

pub fn simulate(cfg: &ExperimentConfig, plots: bool) -> Result<CommandOutput, CliError> {
    let problem = cfg.problem()?;
    let scfg = solver(cfg)?;
    let mesh = problem.mesh().clone();
    let (runs, picard): (Vec<PathRun>, Option<serde_json::Value>) = match cfg.penalty.solver {
        SolverKind::Penalized => (simulate_paths(&problem, &scfg, path_range(cfg)).map_err(core_err)?, None),
        SolverKind::Picard => {
            let out = picard_solve(
                &cfg.penalty.schedule,
                &problem,
                &scfg,
                path_range(cfg),
                cfg.penalty.picard_tol,
                cfg.penalty.picard_max_iter,
            )
            .map_err(core_err)?;
            let info = json!({
                "converged": out.converged,
                "iterations": out.iterations,
                "differences": out.history.iter().map(|h| h.difference).collect::<Vec<_>>(),
                "ratios": out.ratios(),
                "rho": out.weights.rho,
            });
            let runs = out
                .solutions
                .into_iter()
                .map(|s| PathRun {
                    trajectory: s.u,
                    measure: s.nu,
                })
                .collect();
            (runs, Some(info))
        }
    };
    let mut traj_table = Table::new(&["path", "time", "node", "x", "u", "cumulative_mass"]);
    let mut measure_table = Table::new(&["path", "step", "time", "node", "x", "mass"]);
    for (p, run) in runs.iter().enumerate() {
        trajectory_rows(&mut traj_table, p as u64, &run.trajectory, &run.measure.masses, mesh.nodes());
        for (k, masses) in run.measure.masses.iter().enumerate() {
            for (i, m) in masses.iter().enumerate() {
                if *m != 0.0 {
                    let t = run.trajectory.times[k + 1];
                    measure_table.row([p.to_string(), k.to_string(), num(t), i.to_string(), num(mesh.nodes()[i]), num(*m)]);
                }
            }
        }
    }
    let total_mass: Vec<f64> = runs.iter().map(|r| r.measure.total_mass).collect();
    let oracle_gap = if is_pure_obstacle(cfg) {
        let reference = projected_reference(&scfg, &problem.op, &problem.obstacle, &problem.xi).map_err(core_err)?;
        Some(runs[0].trajectory.final_field().iter().zip(reference.final_field().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    } else {
        None
    };
    let summary = json!({
        "penalty": scfg.n_penalty,
        "solver": cfg.penalty.solver,
        "total_mass": total_mass,
        "final_oracle_gap": oracle_gap,
        "picard": picard,
    });
    let mut outputs = Outputs::default();
    outputs.add_table("trajectory.csv", traj_table, plots.then_some(("x", "u")));
    outputs.add_table("measure.csv", measure_table, plots.then_some(("time", "mass")));
    outputs.add_json("summary.json", &summary);
    Ok(CommandOutput {
        outputs,
        summary,
        violation: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeRow {
    #[serde(flatten)]
    pub mean: PenaltyDiagnostic,
    pub violation_norm: f64,
}

pub fn converge_rows(per_path: &[Vec<PenaltyDiagnostic>]) -> Vec<ConvergeRow> {
    let paths = per_path.len() as f64;
    (0..per_path[0].len())
        .map(|i| {
            let mean = |f: fn(&PenaltyDiagnostic) -> f64| per_path.iter().map(|d| f(&d[i])).sum::<f64>() / paths;
            let d = PenaltyDiagnostic {
                n: per_path[0][i].n,
                violation_sq: mean(|d| d.violation_sq),
                residual_violation_sq: mean(|d| d.residual_violation_sq),
                skorokhod: mean(|d| d.skorokhod),
                sup_energy: mean(|d| d.sup_energy),
                dirichlet_energy: mean(|d| d.dirichlet_energy),
                penalty_energy: mean(|d| d.penalty_energy),
                total_mass: mean(|d| d.total_mass),
                monotonicity_gap: per_path.iter().map(|d| d[i].monotonicity_gap).fold(0.0, f64::max),
            };
            ConvergeRow {
                violation_norm: d.violation_sq.sqrt(),
                mean: d,
            }
        })
        .collect()
}

pub fn converge(cfg: &ExperimentConfig, plots: bool) -> Result<CommandOutput, CliError> {
    if cfg.penalty.schedule.values().len() < 2 {
        return Err(CliError::Invalid("`penalty.schedule`: converge needs at least two values".into()));
    }
    let problem = cfg.problem()?;
    let scfg = solver(cfg)?;
    let per_path: Vec<Vec<PenaltyDiagnostic>> = path_range(cfg)
        .into_par_iter()
        .map(|p| {
            let c = scfg.with_path(p);
            solve_linear_obstacle(&cfg.penalty.schedule, &problem, &c, &PathDriver::for_config(&problem, &c))
                .map(|s| s.diagnostics.per_n)
        })
        .collect::<penspde::Result<_>>()
        .map_err(core_err)?;
    let rows = converge_rows(&per_path);
    let ns: Vec<f64> = rows.iter().map(|r| r.mean.n).collect();
    let slope_sq = loglog_slope(&ns, &rows.iter().map(|r| r.mean.violation_sq).collect::<Vec<_>>());
    let slope_norm = loglog_slope(&ns, &rows.iter().map(|r| r.violation_norm).collect::<Vec<_>>());
    let apriori = apriori_bounds(&per_path);
    let skorokhod_decreasing = rows.windows(2).all(|w| w[1].mean.skorokhod.abs() < w[0].mean.skorokhod.abs());
    let max_gap = rows.iter().map(|r| r.mean.monotonicity_gap).fold(0.0, f64::max);

    let mut table = Table::new(&[
        "n",
        "violation_norm",
        "violation_sq",
        "residual_violation_sq",
        "skorokhod",
        "sup_energy",
        "dirichlet_energy",
        "penalty_energy",
        "total_mass",
        "monotonicity_gap",
    ]);
    for r in &rows {
        let d = &r.mean;
        table.row([
            num(d.n),
            num(r.violation_norm),
            num(d.violation_sq),
            num(d.residual_violation_sq),
            num(d.skorokhod),
            num(d.sup_energy),
            num(d.dirichlet_energy),
            num(d.penalty_energy),
            num(d.total_mass),
            num(d.monotonicity_gap),
        ]);
    }
    table.comment(format!("slope_violation_sq = {}", slope_text(slope_sq)));
    table.comment(format!("slope_violation_norm = {}", slope_text(slope_norm)));
    let summary = json!({
        "slope_violation_sq": slope_sq,
        "slope_violation_norm": slope_norm,
        "skorokhod_decreasing": skorokhod_decreasing,
        "apriori_growth_flag": apriori.growth_flag,
        "penalty_energy_spread": apriori.spread(|r| r.penalty_energy),
        "max_monotonicity_gap": max_gap,
    });
    let mut outputs = Outputs::default();
    outputs.add_table("converge.csv", table, plots.then_some(("n", "violation_norm")));
    outputs.add_json("converge.json", &json!({ "rows": rows, "apriori": apriori, "summary": summary }));
    Ok(CommandOutput {
        outputs,
        violation: (max_gap > 1e-6).then(|| format!("solution decreased in n by {max_gap:e}")),
        summary,
    })
}

fn shared_setting(a: &ExperimentConfig, b: &ExperimentConfig) -> Result<(), CliError> {
    let same = a.n == b.n && a.dt == b.dt && a.horizon == b.horizon && a.noise == b.noise && a.run.seed == b.run.seed;
    if !same {
        return Err(CliError::Invalid(
            "compared configs must share `n`, `dt`, `horizon`, `noise` and `run.seed`".into(),
        ));
    }
    Ok(())
}

pub fn compare(lower: &ExperimentConfig, upper: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    shared_setting(lower, upper)?;
    let (p, q) = (lower.problem()?, upper.problem()?);
    let scfg = solver(lower)?;
    let scfg_upper = solver(upper)?;
    if scfg.n_penalty != scfg_upper.n_penalty {
        return Err(CliError::Invalid("compared configs must use the same finest penalty".into()));
    }
    let shared_obstacle = lower.obstacle == upper.obstacle;
    let report = if shared_obstacle {
        compare_measures(&p, &q, &scfg, path_range(lower))
    } else {
        compare_solutions(&p, &q, &scfg, path_range(lower))
    }
    .map_err(core_err)?;
    let mut problems = Vec::new();
    if report.max_violation > ORDER_TOL {
        problems.push(format!("max (u - u')^+ = {:e}", report.max_violation));
    }
    if let Some(g) = report.measure_gap.filter(|g| *g < -ORDER_TOL) {
        problems.push(format!("measure gap {g:e}"));
    }
    let summary = serde_json::to_value(&report).expect("report serializes");
    let mut outputs = Outputs::default();
    outputs.add_json("compare.json", &json!({ "report": report, "tolerance": ORDER_TOL, "upper_config": upper }));
    Ok(CommandOutput {
        outputs,
        summary,
        violation: (!problems.is_empty()).then(|| problems.join("; ")),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PathEnergy {
    pub path: u64,
    pub coarse: EnergyReport,
    pub fine: EnergyReport,
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = v.fold((0.0, 0usize), |(s, c), x| (s + x * x, c + 1));
    (sum / count.max(1) as f64).sqrt()
}

fn energies(problem: &Problem, scfg: &SolverConfig, path: u64) -> penspde::Result<PathEnergy> {
    let fine_cfg = scfg.with_path(path).refined();
    let fine_stream = problem
        .noise
        .as_ref()
        .map(|n| NoiseStream::new(n.channels(), scfg.seed, path, fine_cfg.dt));
    let fine_driver = PathDriver {
        stream: fine_stream,
        frozen: None,
    };
    let coarse_driver = PathDriver {
        stream: fine_stream.map(|s| s.coarsened(2)),
        frozen: None,
    };
    let coarse_cfg = scfg.with_path(path);
    let coarse = simulate_with(problem, &coarse_cfg, &coarse_driver)?;
    let fine = simulate_with(problem, &fine_cfg, &fine_driver)?;
    Ok(PathEnergy {
        path,
        coarse: energy_identity(problem, &coarse, &coarse_driver),
        fine: energy_identity(problem, &fine, &fine_driver),
    })
}

pub fn verify(cfg: &ExperimentConfig, plots: bool) -> Result<CommandOutput, CliError> {
    let problem = cfg.problem()?;
    let scfg = solver(cfg)?;
    let per_path: Vec<PathEnergy> = path_range(cfg)
        .into_par_iter()
        .map(|p| energies(&problem, &scfg, p))
        .collect::<penspde::Result<_>>()
        .map_err(core_err)?;
    let rms_dt = rms(per_path.iter().map(|e| e.coarse.residual));
    let rms_half = rms(per_path.iter().map(|e| e.fine.residual));
    let ratio = (rms_dt > 0.0).then(|| rms_half / rms_dt);
    let finite = per_path.iter().all(|e| e.coarse.is_finite() && e.fine.is_finite());
    let mut table = Table::new(&["path", "residual_dt", "residual_half_dt"]);
    for e in &per_path {
        table.row([e.path.to_string(), num(e.coarse.residual), num(e.fine.residual)]);
    }
    let summary = json!({
        "dt": scfg.dt,
        "rms_residual_dt": rms_dt,
        "rms_residual_half_dt": rms_half,
        "ratio": ratio,
        "zero_initial": matches!(cfg.initial, InitialConfig::Zero),
    });
    let violation = if !finite {
        Some("non-finite energy term".to_string())
    } else if rms_dt > 0.0 && rms_half >= rms_dt {
        Some(format!("residual did not shrink under refinement: {rms_half:e} >= {rms_dt:e}"))
    } else {
        None
    };
    let mut outputs = Outputs::default();
    outputs.add_table("verify.csv", table, plots.then_some(("path", "residual_dt")));
    outputs.add_json("verify.json", &json!({ "paths": per_path, "aggregate": summary }));
    Ok(CommandOutput {
        outputs,
        summary,
        violation,
    })
}
