//! Weighted Picard norm against explicit quadrature.

use penspde::{weighted_distance, weighted_norm, EllipticOperator, Field, Mesh1D, Trajectory};
use std::f64::consts::PI;

fn trajectory(mesh: &Mesh1D, dt: f64, steps: usize, mode: f64, rate: f64) -> Trajectory {
    Trajectory {
        dt,
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        fields: (0..=steps)
            .map(|k| mesh.sample(|x| (-rate * k as f64 * dt).exp() * (mode * PI * x).sin()))
            .collect(),
        penalty_increments: vec![Field::zeros(mesh.n_interior()); steps],
    }
}

#[test]
fn decaying_mode_matches_continuous_integral() {
    let mesh = Mesh1D::new(400).unwrap();
    let op = EllipticOperator::laplacian(&mesh);
    let (dt, steps, rate) = (1e-4, 5000, 1.3);
    let traj = trajectory(&mesh, dt, steps, 1.0, rate);
    let (gamma, delta) = (2.0, 0.7);
    let u0 = &traj.fields[0];
    let spatial = delta * mesh.norm_sq(u0) + op.energy(u0);
    let decay = gamma + 2.0 * rate;
    let exact = spatial * (1.0 - (-decay * steps as f64 * dt).exp()) / decay;
    let got = weighted_norm(&traj, gamma, delta, &mesh);
    // left-endpoint rule: first-order quadrature error
    assert!((got - exact).abs() <= decay * dt * exact, "{got} vs {exact}");
}

#[test]
fn distance_is_norm_of_difference() {
    let mesh = Mesh1D::new(30).unwrap();
    let a = trajectory(&mesh, 1e-2, 50, 1.0, 0.5);
    let b = trajectory(&mesh, 1e-2, 50, 2.0, 2.0);
    let diff = Trajectory {
        fields: a
            .fields
            .iter()
            .zip(&b.fields)
            .map(|(x, y)| Field(x.iter().zip(y.iter()).map(|(p, q)| p - q).collect()))
            .collect(),
        ..a.clone()
    };
    let d = weighted_distance(&a, &b, 1.0, 2.0, &mesh);
    assert!((d - weighted_norm(&diff, 1.0, 2.0, &mesh)).abs() < 1e-12 * d);
    assert_eq!(weighted_distance(&a, &a, 1.0, 2.0, &mesh), 0.0);
}

#[test]
fn left_endpoint_close_to_trapezoid() {
    use rand::{Rng, SeedableRng};
    let mesh = Mesh1D::new(20).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let (dt, steps) = (1e-3, 400);
    // smooth random path: random mode amplitudes drifting in time
    let amps: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rates: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
    let fields: Vec<Field> = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            mesh.sample(|x| {
                (0..4)
                    .map(|m| amps[m] * (-rates[m] * t).exp() * ((m + 1) as f64 * PI * x).sin())
                    .sum()
            })
        })
        .collect();
    let traj = Trajectory {
        dt,
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        fields,
        penalty_increments: vec![Field::zeros(20); steps],
    };
    let op = EllipticOperator::laplacian(&mesh);
    let (gamma, delta) = (1.5, 0.4);
    let integrand = |k: usize| {
        let u = &traj.fields[k];
        (-gamma * traj.times[k]).exp() * (delta * mesh.norm_sq(u) + op.energy(u))
    };
    let trapezoid = (0..steps).map(|k| 0.5 * (integrand(k) + integrand(k + 1))).sum::<f64>() * dt;
    let left = weighted_norm(&traj, gamma, delta, &mesh);
    let bound = 0.5 * dt * (integrand(0) - integrand(steps)).abs() + 1e-12;
    assert!((left - trapezoid).abs() <= bound * 1.01, "{left} vs {trapezoid}");
}

#[test]
fn constant_path_without_discount() {
    let mesh = Mesh1D::new(10).unwrap();
    let v = mesh.sample(|x| x * (1.0 - x));
    let traj = Trajectory {
        dt: 0.1,
        times: (0..=5).map(|k| k as f64 * 0.1).collect(),
        fields: vec![v.clone(); 6],
        penalty_increments: vec![Field::zeros(10); 5],
    };
    let expected = 0.5 * (mesh.norm_sq(&v) + mesh.norm_sq(&mesh.gradient(&v)));
    assert!((weighted_norm(&traj, 0.0, 1.0, &mesh) - expected).abs() < 1e-14);
}
