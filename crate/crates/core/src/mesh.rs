//! Uniform mesh of the unit interval with homogeneous Dirichlet boundary,
//! and the finite-difference divergence-form operator `A = -(a u')'`.
//!
//! Node fields live on the `n` interior nodes `x_i = (i + 1) h`. Edge fields
//! live on the `n + 1` cells `[x_{i-1}, x_i]` (boundary nodes included), so
//! `gradient` maps `R^n -> R^{n+1}` and `divergence` is its exact negative
//! transpose. All `L^2` inner products are `h`-weighted sums.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    n_interior: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn new(n_interior: usize) -> Result<Self> {
        if n_interior == 0 {
            return Err(invalid("mesh needs at least one interior node"));
        }
        let h = 1.0 / (n_interior as f64 + 1.0);
        let nodes = (1..=n_interior).map(|i| i as f64 * h).collect();
        Ok(Self {
            n_interior,
            h,
            nodes,
        })
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_edges(&self) -> usize {
        self.n_interior + 1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Cell midpoints `(e + 1/2) h`, one per edge.
    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_edges()).map(move |e| (e as f64 + 0.5) * self.h)
    }

    /// `h`-weighted inner product of two node (or edge) vectors.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn norm_sq(&self, a: &[f64]) -> f64 {
        self.inner(a, a)
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.nodes.iter().map(|&x| f(x)).collect())
    }

    /// Forward differences `(u_{e} - u_{e-1}) / h` with zero padding at both ends.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n_interior;
        debug_assert_eq!(u.len(), n);
        let inv_h = 1.0 / self.h;
        (0..=n)
            .map(|e| {
                let right = if e < n { u[e] } else { 0.0 };
                let left = if e > 0 { u[e - 1] } else { 0.0 };
                (right - left) * inv_h
            })
            .collect()
    }

    /// Negative transpose of [`gradient`](Self::gradient): `(q_{i+1} - q_i) / h`.
    pub fn divergence(&self, q: &[f64]) -> Result<Field> {
        if q.len() != self.n_edges() {
            return Err(Error::LengthMismatch {
                expected: self.n_edges(),
                actual: q.len(),
            });
        }
        let inv_h = 1.0 / self.h;
        Ok(Field(q.windows(2).map(|w| (w[1] - w[0]) * inv_h).collect()))
    }

    /// Average of the two adjacent edge gradients, used as the nodal value of
    /// `grad u` when evaluating nodal coefficients.
    pub fn nodal_gradient(&self, edge_grad: &[f64]) -> Vec<f64> {
        edge_grad.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Average of the two endpoint values of each edge (boundary values zero).
    pub fn edge_values(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n_interior;
        (0..=n)
            .map(|e| {
                let right = if e < n { u[e] } else { 0.0 };
                let left = if e > 0 { u[e - 1] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    }
}

/// Nodal values at the interior nodes; boundary values are implicitly zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field(v)
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Symmetric tridiagonal stiffness matrix of `A = -(a u')'`.
///
/// Only one off-diagonal is stored, so the matrix is symmetric bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperator {
    mesh: Mesh1D,
    diag: Vec<f64>,
    off: Vec<f64>,
    a_values: Vec<f64>,
    lambda: f64,
    upper: f64,
}

impl EllipticOperator {
    /// Assembles the 3-point stencil with `a` sampled at cell midpoints.
    ///
    /// Row `i` has diagonal `(a_{i-1/2} + a_{i+1/2}) / h^2` and off-diagonals
    /// `-a_{i+-1/2} / h^2`. Every sample must lie in `[lambda, upper]`.
    pub fn assemble(mesh: &Mesh1D, a: impl Fn(f64) -> f64, lambda: f64, upper: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(upper >= lambda) || !upper.is_finite() {
            return Err(invalid(format!(
                "ellipticity bounds must satisfy 0 < lambda <= Lambda < inf, got [{lambda}, {upper}]"
            )));
        }
        let mut a_values = Vec::with_capacity(mesh.n_edges());
        for x in mesh.midpoints() {
            let value = a(x);
            if !(value >= lambda && value <= upper) {
                return Err(Error::Ellipticity {
                    x,
                    value,
                    lower: lambda,
                    upper,
                });
            }
            a_values.push(value);
        }
        let inv_h2 = 1.0 / (mesh.h() * mesh.h());
        let n = mesh.n_interior();
        let diag = (0..n).map(|i| (a_values[i] + a_values[i + 1]) * inv_h2).collect();
        let off = (1..n).map(|i| -a_values[i] * inv_h2).collect();
        Ok(Self {
            mesh: mesh.clone(),
            diag,
            off,
            a_values,
            lambda,
            upper,
        })
    }

    /// Constant coefficient `a = 1` with unit ellipticity bounds.
    pub fn laplacian(mesh: &Mesh1D) -> Self {
        Self::assemble(mesh, |_| 1.0, 1.0, 1.0).expect("unit coefficient is elliptic")
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal entries `A[i][i+1] = A[i+1][i]`.
    pub fn off_diag(&self) -> &[f64] {
        &self.off
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a_values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Upper ellipticity bound; only used for validation.
    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => self.off[i.min(j)],
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.entry(i, j)).collect()).collect()
    }

    /// Matrix-vector product `A u`.
    pub fn apply(&self, u: &[f64]) -> Field {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * u[i];
            if i > 0 {
                acc += self.off[i - 1] * u[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * u[i + 1];
            }
            out[i] = acc;
        }
        Field(out)
    }

    /// Dirichlet energy `(A u, u) = h * sum_e a_e (grad u)_e^2`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let grad = self.mesh.gradient(u);
        self.mesh.h()
            * grad
                .iter()
                .zip(&self.a_values)
                .map(|(g, a)| a * g * g)
                .sum::<f64>()
    }

    /// Solves `(I + dt A) u = rhs` with the Thomas algorithm.
    ///
    /// `I + dt A` is a strictly diagonally dominant M-matrix for `dt >= 0`,
    /// so no pivoting is needed and the solve is order preserving.
    pub fn solve_shifted(&self, dt: f64, rhs: &[f64]) -> Result<Field> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(invalid(format!("time step must be finite and >= 0, got {dt}")));
        }
        if rhs.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                actual: rhs.len(),
            });
        }
        if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite right-hand side at node {i}")));
        }
        if dt == 0.0 {
            return Ok(Field(rhs.to_vec()));
        }
        let n = self.dim();
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut denom = 1.0 + dt * self.diag[0];
        x[0] = rhs[0] / denom;
        for i in 1..n {
            let lower = dt * self.off[i - 1];
            c[i - 1] = lower / denom;
            denom = 1.0 + dt * self.diag[i] - lower * c[i - 1];
            x[i] = (rhs[i] - lower * x[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(Field(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn mesh_invariants() {
        for n in [1, 3, 199, 1000] {
            let mesh = Mesh1D::new(n).unwrap();
            assert!((mesh.h() * (n as f64 + 1.0) - 1.0).abs() < 1e-12);
            assert!(mesh.nodes().windows(2).all(|w| w[0] < w[1]));
            assert!(mesh.nodes().iter().all(|&x| x > 0.0 && x < 1.0));
        }
        assert!(Mesh1D::new(0).is_err());
    }

    #[test]
    fn unit_stencil_n3() {
        let mesh = Mesh1D::new(3).unwrap();
        let op = EllipticOperator::laplacian(&mesh);
        assert!(op.diag().iter().all(|&d| d == 32.0));
        assert!(op.off_diag().iter().all(|&o| o == -16.0));
        assert_eq!(op.entry(0, 2), 0.0);
    }

    #[test]
    fn rejects_ellipticity_violation() {
        let mesh = Mesh1D::new(10).unwrap();
        let err = EllipticOperator::assemble(&mesh, |x| if x > 0.5 { 0.1 } else { 1.0 }, 0.5, 2.0);
        assert!(matches!(err, Err(Error::Ellipticity { .. })));
        assert!(EllipticOperator::assemble(&mesh, |_| 0.0, 0.0, 1.0).is_err());
        assert!(EllipticOperator::assemble(&mesh, |_| f64::NAN, 0.5, 1.0).is_err());
    }

    #[test]
    fn gradient_of_zero_and_linear() {
        let mesh = Mesh1D::new(9).unwrap();
        assert!(mesh.gradient(&Field::zeros(9)).iter().all(|&g| g == 0.0));
        let u = mesh.sample(|x| x);
        let g = mesh.gradient(&u);
        for &ge in &g[..9] {
            assert_abs_diff_eq!(ge, 1.0, epsilon = 1e-12);
        }
        // right boundary edge sees the Dirichlet drop from x_n to 0
        assert!((g[9] - 1.0).abs() > 1.0);
    }

    #[test]
    fn divergence_of_constants() {
        let mesh = Mesh1D::new(7).unwrap();
        let zero = mesh.divergence(&[0.0; 8]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        // all n + 1 fluxes telescope, including the boundary ones
        let d = mesh.divergence(&[2.5; 8]).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        assert!(matches!(mesh.divergence(&[1.0; 7]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn solve_shifted_dt_zero_is_identity() {
        let mesh = Mesh1D::new(5).unwrap();
        let op = EllipticOperator::laplacian(&mesh);
        let rhs = vec![0.1, -0.3, 1e-17, 7.0, 0.2];
        assert_eq!(op.solve_shifted(0.0, &rhs).unwrap().values(), &rhs[..]);
        assert!(op.solve_shifted(0.1, &[0.0, f64::NAN, 0.0, 0.0, 0.0]).is_err());
        assert!(op.solve_shifted(-0.1, &rhs).is_err());
    }

    #[test]
    fn stiffness_is_poisson_stencil_of_gradient() {
        // A = G^T diag(a) G
        let mesh = Mesh1D::new(6).unwrap();
        let op = EllipticOperator::assemble(&mesh, |x| 1.0 + x * x, 1.0, 2.0).unwrap();
        let u = vec![0.3, -1.0, 0.5, 2.0, 0.0, -0.7];
        let flux: Vec<f64> = mesh
            .gradient(&u)
            .iter()
            .zip(op.a_values())
            .map(|(g, a)| g * a)
            .collect();
        let au = mesh.divergence(&flux).unwrap();
        let direct = op.apply(&u);
        for (x, y) in au.iter().zip(direct.iter()) {
            assert_abs_diff_eq!(-x, y, epsilon = 1e-9 * y.abs().max(1.0));
        }
    }

    fn coeff(kind: u8) -> impl Fn(f64) -> f64 {
        move |x: f64| match kind {
            0 => 1.0,
            1 => 1.0 + 0.5 * (6.0 * x).sin(),
            _ => 0.7 + x,
        }
    }

    proptest! {
        #[test]
        fn adjoint_identity(u in proptest::collection::vec(-10.0f64..10.0, 12),
                            q in proptest::collection::vec(-10.0f64..10.0, 13)) {
            let mesh = Mesh1D::new(12).unwrap();
            let lhs = mesh.inner(&mesh.gradient(&u), &q);
            let rhs = -mesh.inner(&u, &mesh.divergence(&q).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn symmetry_and_ellipticity(kind in 0u8..3, u in proptest::collection::vec(-5.0f64..5.0, 20)) {
            let mesh = Mesh1D::new(20).unwrap();
            let op = EllipticOperator::assemble(&mesh, coeff(kind), 0.5, 1.7).unwrap();
            for i in 0..19 {
                prop_assert_eq!(op.entry(i, i + 1).to_bits(), op.entry(i + 1, i).to_bits());
            }
            let quad = mesh.inner(&u, &op.apply(&u));
            let grad_sq = mesh.norm_sq(&mesh.gradient(&u));
            let tol = 1e-9 * quad.abs().max(1.0);
            prop_assert!(quad >= op.lambda() * grad_sq - tol);
            prop_assert!(quad <= op.upper_bound() * grad_sq + tol);
            prop_assert!((quad - op.energy(&u)).abs() <= tol);
            if u.iter().any(|&v| v != 0.0) {
                prop_assert!(quad > 0.0);
            }
        }

        #[test]
        fn shifted_solve_round_trip(v in proptest::collection::vec(-3.0f64..3.0, 30), kind in 0u8..3) {
            let mesh = Mesh1D::new(30).unwrap();
            let op = EllipticOperator::assemble(&mesh, coeff(kind), 0.5, 1.7).unwrap();
            let dt = 0.01;
            let av = op.apply(&v);
            let rhs: Vec<f64> = v.iter().zip(av.iter()).map(|(x, a)| x + dt * a).collect();
            let u = op.solve_shifted(dt, &rhs).unwrap();
            for (a, b) in u.iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
            let scale = 1.0 + rhs.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            let au = op.apply(&u);
            for i in 0..30 {
                prop_assert!((u[i] + dt * au[i] - rhs[i]).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn shifted_solve_is_monotone(base in proptest::collection::vec(-3.0f64..3.0, 25),
                                     bump in proptest::collection::vec(0.0f64..1.0, 25),
                                     dt in 1e-4f64..1.0) {
            let mesh = Mesh1D::new(25).unwrap();
            let op = EllipticOperator::assemble(&mesh, coeff(1), 0.5, 1.7).unwrap();
            let upper: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let lo = op.solve_shifted(dt, &base).unwrap();
            let hi = op.solve_shifted(dt, &upper).unwrap();
            for (a, b) in lo.iter().zip(hi.iter()) {
                prop_assert!(*a <= *b + 1e-12);
            }
        }
    }
}
