//! Spatially coloured Wiener noise as a truncated sine expansion
//! `W(dt, x) = sum_j sqrt(lambda_j) e_j(x) dB^j`, with coordination-free
//! increment addressing by `(seed, path, step)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mesh::{Field, Mesh1D};

/// Eigenvalue decay rule of the covariance operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum Spectrum {
    /// `lambda_i = ratio^i`, `0 < ratio < 1`.
    Geometric { ratio: f64 },
    /// `lambda_i = i^(-exponent)`, `exponent > 1`.
    Polynomial { exponent: f64 },
}

impl Spectrum {
    fn validate(&self) -> Result<()> {
        match *self {
            Spectrum::Geometric { ratio } if !(ratio > 0.0 && ratio < 1.0) => Err(invalid(format!(
                "geometric ratio must lie in (0, 1) for a summable trace, got {ratio}"
            ))),
            Spectrum::Polynomial { exponent } if !(exponent > 1.0 && exponent.is_finite()) => {
                Err(invalid(format!(
                    "polynomial exponent must exceed 1 for a summable trace, got {exponent}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn eigenvalue(&self, i: usize) -> f64 {
        match *self {
            Spectrum::Geometric { ratio } => ratio.powi(i as i32),
            Spectrum::Polynomial { exponent } => (i as f64).powf(-exponent),
        }
    }

    /// `sum_{i > channels} lambda_i`.
    pub fn tail_mass(&self, channels: usize) -> f64 {
        match *self {
            Spectrum::Geometric { ratio } => ratio.powi(channels as i32 + 1) / (1.0 - ratio),
            Spectrum::Polynomial { exponent: p } => {
                // direct partial sum, then Euler-Maclaurin for the remainder
                let start = channels + 1;
                let cut = start + 10_000;
                let head: f64 = (start..cut).map(|i| (i as f64).powf(-p)).sum();
                let m = cut as f64;
                head + m.powf(1.0 - p) / (p - 1.0) + 0.5 * m.powf(-p) + p * m.powf(-p - 1.0) / 12.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    spectrum: Spectrum,
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Field>,
    sup_norms: Vec<f64>,
    // sqrt(lambda_j) e_j(x_i), per channel
    scaled: Vec<Field>,
}

impl NoiseModel {
    /// Sine eigenbasis `e_i(x) = sqrt(2) sin(i pi x)` with the given decay rule.
    pub fn sine_spectrum(mesh: &Mesh1D, channels: usize, spectrum: Spectrum) -> Result<Self> {
        if channels == 0 {
            return Err(invalid("noise needs at least one channel"));
        }
        spectrum.validate()?;
        let eigenvalues: Vec<f64> = (1..=channels).map(|i| spectrum.eigenvalue(i)).collect();
        let eigenfunctions: Vec<Field> = (1..=channels)
            .map(|i| {
                let k = i as f64 * std::f64::consts::PI;
                mesh.sample(|x| std::f64::consts::SQRT_2 * (k * x).sin())
            })
            .collect();
        Ok(Self::from_parts(spectrum, eigenvalues, eigenfunctions))
    }

    fn from_parts(spectrum: Spectrum, eigenvalues: Vec<f64>, eigenfunctions: Vec<Field>) -> Self {
        let sup_norms = eigenfunctions.iter().map(Field::max_abs).collect();
        let scaled = eigenvalues
            .iter()
            .zip(&eigenfunctions)
            .map(|(l, e)| Field(e.iter().map(|v| l.sqrt() * v).collect()))
            .collect();
        Self {
            spectrum,
            eigenvalues,
            eigenfunctions,
            sup_norms,
            scaled,
        }
    }

    pub fn channels(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn spectrum(&self) -> Spectrum {
        self.spectrum
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[Field] {
        &self.eigenfunctions
    }

    pub fn sup_norms(&self) -> &[f64] {
        &self.sup_norms
    }

    /// Partial trace `sum_j lambda_j`.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `sum_j lambda_j ||e_j||_inf^2` over the sampled nodes.
    pub fn weighted_trace(&self) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.sup_norms)
            .map(|(l, s)| l * s * s)
            .sum()
    }

    /// Eigenvalue mass discarded by the truncation.
    pub fn tail_mass(&self) -> f64 {
        self.spectrum.tail_mass(self.channels())
    }

    /// Reconstructed covariance `k(x_a, x_b)` at two node indices.
    pub fn kernel(&self, a: usize, b: usize) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.eigenfunctions)
            .map(|(l, e)| l * e[a] * e[b])
            .sum()
    }

    pub fn kernel_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.eigenfunctions[0].len();
        (0..n).map(|a| (0..n).map(|b| self.kernel(a, b)).collect()).collect()
    }

    /// `(sqrt(lambda_j) * h_tilde * e_j(x_node))_j`.
    pub fn channel_coefficients(&self, h_tilde: f64, node: usize) -> Vec<f64> {
        self.scaled.iter().map(|s| h_tilde * s[node]).collect()
    }

    /// Spatial noise field `sum_j sqrt(lambda_j) e_j(x_i) dB^j` for one increment.
    pub fn noise_field(&self, inc: &NoiseIncrement) -> Field {
        debug_assert_eq!(inc.db.len(), self.channels());
        let n = self.scaled[0].len();
        let mut out = vec![0.0; n];
        for (s, db) in self.scaled.iter().zip(&inc.db) {
            for (o, v) in out.iter_mut().zip(s.iter()) {
                *o += v * db;
            }
        }
        Field(out)
    }
}

/// Per-channel Brownian increments over one step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub db: Vec<f64>,
    pub dt: f64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the generator that produces the draws of `(path, step)`.
pub fn derive_seed(master: u64, path: u64, step: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ path) ^ step.wrapping_mul(GOLDEN))
}

/// Draws one increment: `channels` independent `N(0, dt)` values, channel
/// `j` being the `j`-th draw of the `(seed, path, step)` generator.
pub fn sample_increment(channels: usize, dt: f64, seed: u64, path: u64, step: u64) -> NoiseIncrement {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, path, step));
    let scale = dt.sqrt();
    let db = (0..channels)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect();
    NoiseIncrement { db, dt }
}

/// Addressable Brownian path for one simulation path.
///
/// Increments are generated at resolution `fine_dt`; a stream with
/// `coarsening = m` returns sums of `m` consecutive fine increments, so runs
/// at `dt` and `dt / 2` built from the same fine stream see the same path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseStream {
    pub channels: usize,
    pub seed: u64,
    pub path_id: u64,
    pub fine_dt: f64,
    pub coarsening: usize,
}

impl NoiseStream {
    pub fn new(channels: usize, seed: u64, path_id: u64, dt: f64) -> Self {
        Self {
            channels,
            seed,
            path_id,
            fine_dt: dt,
            coarsening: 1,
        }
    }

    /// Same Brownian path observed at `factor` times the current step.
    pub fn coarsened(self, factor: usize) -> Self {
        Self {
            coarsening: self.coarsening * factor.max(1),
            ..self
        }
    }

    pub fn dt(&self) -> f64 {
        self.fine_dt * self.coarsening as f64
    }

    pub fn increment(&self, step: usize) -> NoiseIncrement {
        let first = (step * self.coarsening) as u64;
        if self.coarsening == 1 {
            return sample_increment(self.channels, self.fine_dt, self.seed, self.path_id, first);
        }
        let mut db = vec![0.0; self.channels];
        for k in first..first + self.coarsening as u64 {
            let fine = sample_increment(self.channels, self.fine_dt, self.seed, self.path_id, k);
            for (acc, v) in db.iter_mut().zip(fine.db) {
                *acc += v;
            }
        }
        NoiseIncrement { db, dt: self.dt() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> Mesh1D {
        Mesh1D::new(15).unwrap()
    }

    #[test]
    fn geometric_partial_trace() {
        let m = NoiseModel::sine_spectrum(&mesh(), 20, Spectrum::Geometric { ratio: 0.5 }).unwrap();
        assert!((m.trace() - (1.0 - 2f64.powi(-20))).abs() < 1e-15);
        assert!((m.tail_mass() - 2f64.powi(-20)).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_summable_spectra() {
        let m = mesh();
        assert!(NoiseModel::sine_spectrum(&m, 5, Spectrum::Geometric { ratio: 1.0 }).is_err());
        assert!(NoiseModel::sine_spectrum(&m, 5, Spectrum::Polynomial { exponent: 1.0 }).is_err());
        assert!(NoiseModel::sine_spectrum(&m, 5, Spectrum::Polynomial { exponent: 0.5 }).is_err());
        assert!(NoiseModel::sine_spectrum(&m, 0, Spectrum::Polynomial { exponent: 2.0 }).is_err());
    }

    #[test]
    fn polynomial_tail_matches_zeta() {
        // zeta(2) = pi^2 / 6
        let s = Spectrum::Polynomial { exponent: 2.0 };
        let partial: f64 = (1..=10).map(|i| s.eigenvalue(i)).sum();
        let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((s.tail_mass(10) - (zeta2 - partial)).abs() < 1e-12);
    }

    #[test]
    fn kernel_symmetric() {
        let m = NoiseModel::sine_spectrum(&mesh(), 7, Spectrum::Polynomial { exponent: 1.5 }).unwrap();
        let k = m.kernel_matrix();
        for a in 0..15 {
            for b in 0..15 {
                assert!((k[a][b] - k[b][a]).abs() <= 1e-12);
            }
        }
        assert!(m.eigenvalues().iter().all(|&l| l >= 0.0));
        assert!(m.weighted_trace().is_finite());
    }

    #[test]
    fn channel_coefficients_formula() {
        let mesh = mesh();
        let m = NoiseModel::sine_spectrum(&mesh, 1, Spectrum::Geometric { ratio: 0.5 }).unwrap();
        // lambda_1 = 1/2 here; compare against the direct formula
        let node = 4;
        let x = mesh.nodes()[node];
        let c = m.channel_coefficients(1.7, node);
        let direct = 0.5f64.sqrt() * 1.7 * std::f64::consts::SQRT_2 * (std::f64::consts::PI * x).sin();
        assert!((c[0] - direct).abs() < 1e-14);
        assert!(m.channel_coefficients(0.0, 3).iter().all(|&v| v == 0.0));

        let m = NoiseModel::sine_spectrum(&mesh, 9, Spectrum::Geometric { ratio: 0.6 }).unwrap();
        for (node, h) in [(0usize, 0.3f64), (7, -2.0), (14, 11.0)] {
            let c = m.channel_coefficients(h, node);
            let lhs: f64 = c.iter().map(|v| v * v).sum();
            let rhs = h * h * (0..9).map(|j| m.eigenvalues()[j] * m.eigenfunctions()[j][node].powi(2)).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }

    #[test]
    fn increments_are_deterministic() {
        let a = sample_increment(6, 0.01, 42, 3, 17);
        let b = sample_increment(6, 0.01, 42, 3, 17);
        assert_eq!(a, b);
        assert_ne!(a.db, sample_increment(6, 0.01, 42, 3, 18).db);
        assert_ne!(a.db, sample_increment(6, 0.01, 42, 4, 17).db);
        assert_ne!(a.db, sample_increment(6, 0.01, 43, 3, 17).db);
    }

    #[test]
    fn coarsened_stream_sums_fine_increments() {
        let fine = NoiseStream::new(4, 9, 1, 0.005);
        let coarse = fine.coarsened(2);
        assert_eq!(coarse.dt(), 0.01);
        let c = coarse.increment(3);
        let f0 = fine.increment(6);
        let f1 = fine.increment(7);
        for j in 0..4 {
            assert_eq!(c.db[j], f0.db[j] + f1.db[j]);
        }
    }
}
