//! Experiment configuration (TOML with strict key checking).

use std::path::{Path, PathBuf};

use penspde::{
    CoefficientSet, EllipticOperator, Field, Mesh1D, NoiseModel, Obstacle, PenaltySchedule, Preset, Problem,
    SolverConfig, Spectrum,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Interior nodes, `2..=100_000`.
    pub n: usize,
    /// Time step, `(0, horizon]`.
    pub dt: f64,
    /// Final time, an integer multiple of `dt`.
    pub horizon: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
    #[serde(default)]
    pub obstacle: ObstacleConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "spectrum", rename_all = "lowercase")]
pub enum NoiseConfig {
    #[default]
    None,
    /// `lambda_i = ratio^i`, `0 < ratio < 1`.
    Geometric { ratio: f64, channels: usize },
    /// `lambda_i = i^-exponent`, `exponent > 1`.
    Polynomial { exponent: f64, channels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub preset: Preset,
    /// Constant added to `f`.
    #[serde(default)]
    pub source_shift: f64,
    /// Ellipticity constant `lambda` used for the contraction check (`a = 1` gives 1).
    #[serde(default = "one")]
    pub lambda: f64,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Zero,
            source_shift: 0.0,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum ObstacleConfig {
    #[default]
    Inactive,
    /// `S = amplitude * sin(pi x)`.
    Sine { amplitude: f64 },
    Constant { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum InitialConfig {
    /// `xi = amplitude * sin(pi x) + shift` at interior nodes.
    Sine {
        amplitude: f64,
        #[serde(default)]
        shift: f64,
    },
    Zero,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self::Sine {
            amplitude: 1.0,
            shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Strictly increasing, positive; `simulate` and `verify` use the last entry.
    pub schedule: PenaltySchedule,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default = "default_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_max_iter")]
    pub picard_max_iter: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            schedule: PenaltySchedule::default(),
            solver: SolverKind::Penalized,
            picard_tol: default_tol(),
            picard_max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Coefficients evaluated at the current state.
    #[default]
    Penalized,
    /// Fixed-point iteration with coefficients frozen along the previous iterate.
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "one_usize")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: 1,
            seed: 0,
            output_dir: None,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    15
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("`{field}`: {msg}"))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(2..=100_000).contains(&self.n) {
            return Err(bad("n", format!("{} not in 2..=100000", self.n)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(bad("dt", "must be positive and finite"));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(bad("horizon", "must be finite and at least dt"));
        }
        self.solver_config().map_err(|e| bad("horizon", e))?;
        match self.noise {
            NoiseConfig::None => {}
            NoiseConfig::Geometric { ratio, channels } => {
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(bad("noise.ratio", "must lie in (0, 1)"));
                }
                if !(1..=10_000).contains(&channels) {
                    return Err(bad("noise.channels", "must lie in 1..=10000"));
                }
            }
            NoiseConfig::Polynomial { exponent, channels } => {
                if !(exponent > 1.0 && exponent.is_finite()) {
                    return Err(bad("noise.exponent", "must be finite and > 1"));
                }
                if !(1..=10_000).contains(&channels) {
                    return Err(bad("noise.channels", "must lie in 1..=10000"));
                }
            }
        }
        if !self.coefficients.source_shift.is_finite() {
            return Err(bad("coefficients.source_shift", "must be finite"));
        }
        if !(self.coefficients.lambda > 0.0 && self.coefficients.lambda.is_finite()) {
            return Err(bad("coefficients.lambda", "must be positive"));
        }
        match self.obstacle {
            ObstacleConfig::Sine { amplitude } if !amplitude.is_finite() => {
                return Err(bad("obstacle.amplitude", "must be finite"))
            }
            ObstacleConfig::Constant { level } if !level.is_finite() => {
                return Err(bad("obstacle.level", "must be finite"))
            }
            _ => {}
        }
        if let InitialConfig::Sine { amplitude, shift } = self.initial {
            if !(amplitude.is_finite() && shift.is_finite()) {
                return Err(bad("initial", "amplitude and shift must be finite"));
            }
        }
        if !(self.penalty.picard_tol > 0.0) {
            return Err(bad("penalty.picard_tol", "must be positive"));
        }
        if self.penalty.picard_max_iter == 0 {
            return Err(bad("penalty.picard_max_iter", "must be at least 1"));
        }
        if !(1..=100_000).contains(&self.run.paths) {
            return Err(bad("run.paths", "must lie in 1..=100000"));
        }
        self.problem()?.check_compatible().map_err(|e| bad("obstacle", e))?;
        Ok(())
    }

    pub fn mesh(&self) -> Mesh1D {
        Mesh1D::new(self.n).expect("validated mesh size")
    }

    pub fn solver_config(&self) -> penspde::Result<SolverConfig> {
        Ok(SolverConfig::new(self.dt, self.horizon, self.penalty.schedule.finest())?.with_seed(self.run.seed))
    }

    pub fn noise_model(&self, mesh: &Mesh1D) -> Result<Option<NoiseModel>, CliError> {
        let (channels, spectrum) = match self.noise {
            NoiseConfig::None => return Ok(None),
            NoiseConfig::Geometric { ratio, channels } => (channels, Spectrum::Geometric { ratio }),
            NoiseConfig::Polynomial { exponent, channels } => (channels, Spectrum::Polynomial { exponent }),
        };
        NoiseModel::sine_spectrum(mesh, channels, spectrum)
            .map(Some)
            .map_err(|e| bad("noise", e))
    }

    pub fn obstacle(&self) -> Obstacle {
        match self.obstacle {
            ObstacleConfig::Inactive => Obstacle::Inactive,
            ObstacleConfig::Sine { amplitude } => Obstacle::sine(amplitude),
            ObstacleConfig::Constant { level } => Obstacle::constant(level),
        }
    }

    pub fn coefficients(&self, noise: Option<&NoiseModel>) -> CoefficientSet {
        let trace = noise.map_or(0.0, NoiseModel::weighted_trace);
        self.coefficients
            .preset
            .build(trace)
            .with_source_shift(self.coefficients.source_shift)
    }

    pub fn initial(&self, mesh: &Mesh1D) -> Field {
        match self.initial {
            InitialConfig::Sine { amplitude, shift } => {
                mesh.sample(|x| amplitude * (std::f64::consts::PI * x).sin() + shift)
            }
            InitialConfig::Zero => Field::zeros(mesh.n_interior()),
        }
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let mesh = self.mesh();
        let noise = self.noise_model(&mesh)?;
        let coeffs = self.coefficients(noise.as_ref());
        Problem::new(
            EllipticOperator::laplacian(&mesh),
            coeffs,
            self.obstacle(),
            noise,
            self.initial(&mesh),
        )
        .map_err(|e| CliError::Invalid(e.to_string()))
    }
}
