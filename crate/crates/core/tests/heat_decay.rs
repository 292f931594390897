//! Deterministic heat flow against exact mode decay.

use penspde::{deterministic_penalized, EllipticOperator, Mesh1D, Obstacle, SolverConfig};
use std::f64::consts::PI;

#[test]
fn sine_mode_decays_at_discrete_rate() {
    let mesh = Mesh1D::new(50).unwrap();
    let op = EllipticOperator::laplacian(&mesh);
    let h = mesh.h();
    let mu = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
    let cfg = SolverConfig::new(1e-3, 0.2, 0.0).unwrap();
    let u0 = mesh.sample(|x| (PI * x).sin());
    let traj = deterministic_penalized(&cfg, &op, &Obstacle::Inactive, &u0).unwrap();
    let factor = (1.0 + cfg.dt * mu).powi(-(cfg.steps() as i32));
    for (u, s) in traj.final_field().iter().zip(u0.iter()) {
        assert!((u - factor * s).abs() < 1e-12);
    }
}

#[test]
fn low_barrier_run_follows_exponential_decay() {
    let mesh = Mesh1D::new(100).unwrap();
    let op = EllipticOperator::laplacian(&mesh);
    let h = mesh.h();
    // first discrete eigenpair in closed form (cross-checked by the dense oracle)
    let mu = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
    let cfg = SolverConfig::new(1e-3, 0.3, 1e4).unwrap();
    let u0 = mesh.sample(|x| (PI * x).sin());
    let traj = deterministic_penalized(&cfg, &op, &Obstacle::constant(-1.0), &u0).unwrap();
    let exact = (-mu * cfg.horizon).exp();
    let rel = traj
        .final_field()
        .iter()
        .zip(u0.iter())
        .map(|(u, phi)| (u - exact * phi).abs() / (exact * phi))
        .fold(0.0, f64::max);
    assert!(rel <= 5.0 * cfg.dt * mu * cfg.horizon, "relative error {rel}");
}

#[test]
fn low_barrier_never_binds() {
    let mesh = Mesh1D::new(40).unwrap();
    let op = EllipticOperator::laplacian(&mesh);
    let cfg = SolverConfig::new(1e-3, 0.1, 1e4).unwrap();
    let u0 = mesh.sample(|x| (PI * x).sin());
    let free = deterministic_penalized(&cfg, &op, &Obstacle::Inactive, &u0).unwrap();
    let low = deterministic_penalized(&cfg, &op, &Obstacle::constant(-1.0), &u0).unwrap();
    assert_eq!(free.fields, low.fields);
    assert!(low.penalty_increments.iter().all(|p| p.iter().all(|&v| v == 0.0)));
}
