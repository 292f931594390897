//! Order properties of the penalized scheme.

use penspde::{
    penalty_substep, simulate_path, solve_linear_obstacle, CoefficientSet, EllipticOperator, Field, Mesh1D,
    NoiseModel, Obstacle, PathDriver, PenaltySchedule, Preset, Problem, SolverConfig, Spectrum,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn linear_problem(n: usize, amplitude: f64) -> Problem {
    let mesh = Mesh1D::new(n).unwrap();
    let noise = NoiseModel::sine_spectrum(&mesh, 5, Spectrum::Geometric { ratio: 0.5 }).unwrap();
    Problem::new(
        EllipticOperator::laplacian(&mesh),
        Preset::Linear.build(noise.weighted_trace()),
        Obstacle::sine(amplitude),
        Some(noise),
        mesh.sample(|x| (PI * x).sin()),
    )
    .unwrap()
}

fn max_excess(a: &[Field], b: &[Field]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| p - q))
        .fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn larger_penalty_gives_larger_solution(seed in 0u64..1000, n1 in 1.0f64..500.0, factor in 1.5f64..50.0) {
        let p = linear_problem(16, 0.5);
        let cfg = SolverConfig::new(2e-3, 0.1, n1).unwrap().with_seed(seed);
        let a = simulate_path(&p, &cfg).unwrap();
        let b = simulate_path(&p, &cfg.with_penalty(n1 * factor)).unwrap();
        prop_assert!(max_excess(&a.trajectory.fields, &b.trajectory.fields) <= 1e-12);
        prop_assert!(a.measure.total_mass <= b.measure.total_mass + 1e-12);
    }

    #[test]
    fn ordered_initial_data_stay_ordered(seed in 0u64..1000, shift in 0.0f64..0.3) {
        let p = linear_problem(16, 0.5);
        let q = p.clone().with_initial(p.mesh().sample(|x| (PI * x).sin() + shift * (PI * x).sin().sqrt()));
        let cfg = SolverConfig::new(2e-3, 0.1, 1e3).unwrap().with_seed(seed);
        let a = simulate_path(&p, &cfg).unwrap();
        let b = simulate_path(&q, &cfg).unwrap();
        prop_assert!(max_excess(&a.trajectory.fields, &b.trajectory.fields) <= 1e-12);
    }

    #[test]
    fn penalty_substep_never_overshoots(
        u in prop::collection::vec(-2.0f64..2.0, 1..20),
        s in -2.0f64..2.0,
        n in 0.0f64..1e6,
        dt in 1e-5f64..1e-1,
    ) {
        let obstacle = vec![s; u.len()];
        let mut v = u.clone();
        let inc = penalty_substep(&mut v, &obstacle, n, dt);
        for i in 0..u.len() {
            prop_assert!(inc[i] >= 0.0);
            prop_assert!((v[i] - u[i] - inc[i]).abs() <= 1e-12);
            if u[i] < s {
                prop_assert!(v[i] <= s + 1e-15);
                prop_assert!(v[i] >= u[i]);
            } else {
                prop_assert_eq!(v[i], u[i]);
            }
        }
    }
}

#[test]
fn violation_norms_decrease_along_schedule() {
    let mesh = Mesh1D::new(60).unwrap();
    let p = Problem::new(
        EllipticOperator::laplacian(&mesh),
        CoefficientSet::zero(),
        Obstacle::sine(0.25),
        None,
        mesh.sample(|x| (PI * x).sin()),
    )
    .unwrap();
    let cfg = SolverConfig::new(1e-3, 0.5, 0.0).unwrap();
    let sol = solve_linear_obstacle(&PenaltySchedule::default(), &p, &cfg, &PathDriver::for_config(&p, &cfg)).unwrap();
    assert!(sol.diagnostics.violation_monotone);
    assert!(!sol.diagnostics.monotonicity_fault);
    let d = &sol.diagnostics.per_n;
    for w in d.windows(2) {
        assert!(w[1].violation_sq < w[0].violation_sq);
        assert!(w[1].skorokhod.abs() < w[0].skorokhod.abs());
        assert!(w[1].total_mass >= w[0].total_mass);
    }
    // violation measured after the penalty flow is never larger than before it
    for x in d {
        assert!(x.residual_violation_sq <= x.violation_sq);
        assert!((x.penalty_energy - x.n * x.violation_sq).abs() <= 1e-15 * x.penalty_energy.max(1.0));
    }
}

#[test]
fn inactive_barrier_has_zero_penalty_columns() {
    let p = linear_problem(20, 0.0).with_obstacle(Obstacle::Inactive);
    let cfg = SolverConfig::new(1e-3, 0.05, 0.0).unwrap();
    let sol = solve_linear_obstacle(&PenaltySchedule::default(), &p, &cfg, &PathDriver::for_config(&p, &cfg)).unwrap();
    for d in &sol.diagnostics.per_n {
        assert_eq!(d.violation_sq, 0.0);
        assert_eq!(d.penalty_energy, 0.0);
        assert_eq!(d.total_mass, 0.0);
        assert_eq!(d.skorokhod, 0.0);
    }
    // every n sees the same unconstrained path
    assert_eq!(sol.diagnostics.per_n[0].sup_energy, sol.diagnostics.per_n[3].sup_energy);
}

#[test]
fn violation_norm_slope_on_standard_test() {
    let mesh = Mesh1D::new(200).unwrap();
    let p = Problem::new(
        EllipticOperator::laplacian(&mesh),
        CoefficientSet::zero(),
        Obstacle::sine(0.25),
        None,
        mesh.sample(|x| (PI * x).sin()),
    )
    .unwrap();
    let cfg = SolverConfig::new(1e-3, 0.5, 0.0).unwrap();
    let sol = solve_linear_obstacle(&PenaltySchedule::default(), &p, &cfg, &PathDriver::for_config(&p, &cfg)).unwrap();
    let pts: Vec<(f64, f64)> = sol.diagnostics.per_n.iter().map(|d| (d.n.ln(), d.violation_norm().ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    assert!((-0.7..=-0.3).contains(&slope), "slope {slope}");
}

#[test]
fn measure_lives_on_contact_set() {
    let p = linear_problem(40, 0.25);
    let cfg = SolverConfig::new(1e-3, 0.5, 1e4).unwrap().with_seed(8);
    let run = simulate_path(&p, &cfg).unwrap();
    let mesh = p.mesh();
    assert!(run.measure.total_mass > 0.0);
    for (k, masses) in run.measure.masses.iter().enumerate() {
        let s = p.obstacle.sample(mesh, run.trajectory.times[k + 1]).unwrap();
        for ((m, u), s) in masses.iter().zip(run.trajectory.fields[k + 1].iter()).zip(s.iter()) {
            assert!(*m >= 0.0);
            if u - s > 1e-6 {
                assert_eq!(*m, 0.0);
            }
        }
    }
}
