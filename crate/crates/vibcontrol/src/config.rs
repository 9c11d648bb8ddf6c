//! Run configuration: a TOML file with explicit units in the key names.
//! Everything is converted to atomic units at parse time.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VibError};
use crate::units;

fn default_beta() -> f64 {
    1.3
}

fn default_dipole() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    10.0
}

fn default_samples_per_cycle() -> f64 {
    12.0
}

fn default_horizon_multiple() -> f64 {
    2.0
}

fn default_target_fidelity() -> f64 {
    0.99
}

fn default_max_iterations() -> usize {
    2000
}

fn default_stagnation_window() -> usize {
    50
}

fn default_stagnation_tol() -> f64 {
    1e-10
}

fn default_checkpoint_every() -> usize {
    1
}

fn default_memory_budget_mb() -> usize {
    512
}

fn default_thresholds() -> Vec<f64> {
    vec![0.05, 0.10]
}

fn default_beam_radius_um() -> f64 {
    300.0
}

/// One potential curve: a named Morse parameter set or a two-column file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSource {
    Morse {
        d_hartree: f64,
        a_inv_bohr: f64,
        r_e_bohr: f64,
        #[serde(default)]
        offset_hartree: f64,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        tail: TailConfig,
    },
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TailConfig {
    #[default]
    None,
    C3,
    C6,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Reduced mass; exactly one of the two must be set.
    pub mass_amu: Option<f64>,
    pub mass_me: Option<f64>,
    #[serde(default = "default_dipole")]
    pub dipole_au: f64,
    pub ground: PotentialSource,
    pub excited: PotentialSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    pub r_min_bohr: f64,
    pub r_max_bohr: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub e_max_hartree: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Explicit horizon (picoseconds), or auto from the initial level's
    /// vibrational period.
    pub t_ps: Option<f64>,
    /// Horizon = `horizon_multiple` * T*(initial level) when t_ps is unset.
    #[serde(default = "default_horizon_multiple")]
    pub horizon_multiple: f64,
    /// Explicit step count, or auto from the carrier frequencies.
    pub n_steps: Option<usize>,
    #[serde(default = "default_samples_per_cycle")]
    pub samples_per_cycle: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeConfig {
    Gaussian,
    Sin2,
    Sine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessConfig {
    pub amplitude_au: f64,
    /// Carrier frequencies; when empty they are taken from the FC map
    /// (strongest transition out of the initial level and into the target).
    #[serde(default)]
    pub centers_cm1: Vec<f64>,
    pub envelope: EnvelopeConfig,
    /// Sub-pulse FWHM, required for Gaussian envelopes.
    pub fwhm_fs: Option<f64>,
    #[serde(default)]
    pub train_offsets_fs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ShapeConfig {
    Sin2,
    Sine,
    Gaussian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// "quadratic" (default) or "restricted".
    #[serde(default)]
    pub variant: PenaltyVariant,
    /// Weight of the reference-pulling term (restricted only).
    pub alpha2: Option<f64>,
    /// Reference field checkpoint (restricted only); defaults to the guess.
    pub reference_checkpoint: Option<PathBuf>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            alpha: default_alpha(),
            variant: PenaltyVariant::Quadratic,
            alpha2: None,
            reference_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyVariant {
    #[default]
    Quadratic,
    Restricted,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub alpha_small: f64,
    pub alpha_large: f64,
    pub switch_iteration: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    #[serde(default = "default_target_fidelity")]
    pub target_fidelity: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_stagnation_window")]
    pub stagnation_window: usize,
    #[serde(default = "default_stagnation_tol")]
    pub stagnation_tol: f64,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            target_fidelity: default_target_fidelity(),
            max_iterations: default_max_iterations(),
            stagnation_window: default_stagnation_window(),
            stagnation_tol: default_stagnation_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default = "default_memory_budget_mb")]
    pub memory_budget_mb: usize,
    /// Spill directory override; the VIBCONTROL_SPILL_DIR environment
    /// variable takes precedence.
    pub spill_dir: Option<PathBuf>,
    #[serde(default = "default_thresholds")]
    pub census_thresholds: Vec<f64>,
    #[serde(default = "default_beam_radius_um")]
    pub beam_radius_um: f64,
}

/// One stage of the strategy pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum PipelineStage {
    /// Run the Krotov loop on the current field.
    Optimize {
        /// Override of the stop criteria for this stage.
        target_fidelity: Option<f64>,
        max_iterations: Option<usize>,
    },
    /// Divide the current field by `factor` (pulse energy drops by factor^2).
    ReduceIntensity { factor: f64 },
    /// Keep every k-th spectral sample, shrinking the window to T/k.
    CompressTime {
        factor: usize,
        #[serde(default)]
        symmetric: bool,
        /// Pulse-energy budget for the restart as a fraction of the
        /// pre-compression energy; defaults to 1/factor.
        energy_fraction: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub time: TimeConfig,
    /// Ground-channel eigenstate indices.
    pub initial_level: usize,
    #[serde(default)]
    pub target_level: usize,
    pub guess: GuessConfig,
    #[serde(default = "default_shape")]
    pub shape: ShapeConfig,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub stop: StopConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub pipeline: Vec<PipelineStage>,
}

fn default_shape() -> ShapeConfig {
    ShapeConfig::Sin2
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| VibError::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| {
            // toml errors carry line/column spans
            VibError::invalid(format!("{}: {e}", path.display()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mass_me(&self) -> Result<f64> {
        match (self.system.mass_amu, self.system.mass_me) {
            (Some(amu), None) => Ok(units::amu_to_me(amu)),
            (None, Some(me)) => Ok(me),
            (Some(_), Some(_)) => {
                Err(VibError::invalid("set exactly one of mass_amu and mass_me, not both"))
            }
            (None, None) => Err(VibError::invalid("one of mass_amu or mass_me is required")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mass = self.mass_me()?;
        if mass <= 0.0 {
            return Err(VibError::invalid("mass must be positive"));
        }
        if self.grid.n_points < 16 {
            return Err(VibError::invalid("grid.n_points must be at least 16"));
        }
        if self.grid.r_min_bohr >= self.grid.r_max_bohr {
            return Err(VibError::invalid("grid.r_min_bohr must be below grid.r_max_bohr"));
        }
        if let Some(n) = self.time.n_steps {
            if n < 10 {
                return Err(VibError::invalid("time.n_steps must be at least 10"));
            }
        }
        if self.guess.amplitude_au < 0.0 {
            return Err(VibError::invalid("guess.amplitude_au must be nonnegative"));
        }
        if self.guess.envelope == EnvelopeConfig::Gaussian && self.guess.fwhm_fs.is_none() {
            return Err(VibError::invalid("guess.fwhm_fs is required for a Gaussian envelope"));
        }
        if !(self.penalty.alpha > 0.0) {
            return Err(VibError::invalid("penalty.alpha must be positive"));
        }
        match self.penalty.variant {
            PenaltyVariant::Quadratic => {
                if self.penalty.alpha2.is_some() {
                    return Err(VibError::invalid(
                        "penalty.alpha2 only applies to the restricted variant",
                    ));
                }
            }
            PenaltyVariant::Restricted => {
                let a2 = self
                    .penalty
                    .alpha2
                    .ok_or_else(|| VibError::invalid("restricted penalty requires penalty.alpha2"))?;
                if !(a2 >= 0.0 && a2 < self.penalty.alpha) {
                    return Err(VibError::invalid(
                        "restricted penalty requires 0 <= alpha2 < alpha",
                    ));
                }
            }
        }
        for stage in &self.pipeline {
            match stage {
                PipelineStage::ReduceIntensity { factor } => {
                    if !(*factor >= 1.0) {
                        return Err(VibError::invalid("reduce_intensity.factor must be >= 1"));
                    }
                }
                PipelineStage::CompressTime { factor, .. } => {
                    if *factor < 1 {
                        return Err(VibError::invalid("compress_time.factor must be >= 1"));
                    }
                }
                PipelineStage::Optimize { .. } => {}
            }
        }
        if self.output.census_thresholds.iter().any(|&t| !(0.0 < t && t < 1.0)) {
            return Err(VibError::invalid("census thresholds must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
initial_level = 8

[system]
mass_me = 2000.0
[system.ground]
kind = "morse"
d_hartree = 0.02
a_inv_bohr = 0.4587
r_e_bohr = 2.5
[system.excited]
kind = "morse"
d_hartree = 0.016
a_inv_bohr = 0.45
r_e_bohr = 3.2
offset_hartree = 0.02

[grid]
n_points = 64
r_min_bohr = 0.8
r_max_bohr = 12.0
e_max_hartree = 0.05

[guess]
amplitude_au = 0.008
envelope = "sin2"

[output]
dir = "out"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.target_level, 0);
        assert_eq!(cfg.penalty.variant, PenaltyVariant::Quadratic);
        assert_eq!(cfg.stop.max_iterations, 2000);
        assert!((cfg.mass_me().unwrap() - 2000.0).abs() < 1e-12);
        assert_eq!(cfg.output.checkpoint_every, 1);
    }

    #[test]
    fn rejects_double_mass_and_bad_penalty() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.system.mass_amu = Some(1.0);
        assert!(cfg.validate().is_err());
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.penalty.variant = PenaltyVariant::Restricted;
        assert!(cfg.validate().is_err());
        cfg.penalty.alpha2 = Some(cfg.penalty.alpha * 2.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let bad = format!("{MINIMAL}\n[grid.extra]\nx = 1\n");
        let err = toml::from_str::<RunConfig>(&bad).unwrap_err();
        assert!(err.to_string().contains("extra") || err.to_string().contains("unknown"));
    }
}
