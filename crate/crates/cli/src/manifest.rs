//! Run manifests: config snapshot, derived constants and hashed outputs.

use std::path::Path;

use penspde::{check_contraction, choose_gamma_delta};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    /// Hex SHA-256 of the file contents.
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub contraction_margin: f64,
    pub contraction_holds: bool,
    /// `None` when the contraction condition fails.
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
}

impl DerivedQuantities {
    pub fn for_config(cfg: &ExperimentConfig, noise: Option<&penspde::NoiseModel>) -> Self {
        let k = cfg.coefficients(noise).constants();
        let lambda = cfg.coefficients.lambda;
        let contraction = check_contraction(k.alpha, k.beta, lambda);
        let weights = choose_gamma_delta(k.c, k.alpha, k.beta, lambda).ok();
        Self {
            contraction_margin: contraction.margin,
            contraction_holds: contraction.holds,
            epsilon: weights.map(|w| w.epsilon),
            rho: weights.map(|w| w.rho),
            gamma: weights.map(|w| w.gamma),
            delta: weights.map(|w| w.delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub library_version: String,
    pub config: ExperimentConfig,
    pub derived: DerivedQuantities,
    /// Command-specific scalars (total mass, RMS ratio, ...).
    pub summary: serde_json::Value,
    /// Not covered by any hash and excluded from determinism checks.
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

impl RunManifest {
    /// Recomputes every output hash relative to `dir`; returns the files that differ.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>, CliError> {
        let mut bad = Vec::new();
        for out in &self.outputs {
            if hash_file(&dir.join(&out.file))? != out.sha256 {
                bad.push(out.file.clone());
            }
        }
        Ok(bad)
    }
}
