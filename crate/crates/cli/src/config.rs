//! Job configuration. One TOML format serves every command; sections a
//! command does not use are ignored by it but still recorded in its outputs.
//!
//! Precedence: built-in defaults < job file < `--params` file < flags.

use std::path::Path;

use anyhow::{Context, Result};
use hfqc_core::benchmarking::{DesignMode, NoiseModel};
use hfqc_core::hamiltonian::{AtomConstants, ControlParameters};
use hfqc_core::io::StateSpec;
use hfqc_core::optimizer::OptimizationConfig;
use hfqc_core::validation::ValidationOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    /// Root seed; every random stream of the run derives from it.
    pub seed: u64,
    pub mode: DesignMode,
    pub params: ControlParameters,
    pub atom: AtomConstants,
    pub optimizer: OptimizationConfig,
    pub ensemble: EnsembleSection,
    pub design: DesignSection,
    pub propagate: PropagateSection,
    pub benchmark: BenchmarkSection,
    pub correlate: CorrelateSection,
    pub validate: ValidationOptions,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: DesignMode::Robust,
            params: ControlParameters::default(),
            atom: AtomConstants::default(),
            optimizer: OptimizationConfig::default(),
            ensemble: EnsembleSection::default(),
            design: DesignSection::default(),
            propagate: PropagateSection::default(),
            benchmark: BenchmarkSection::default(),
            correlate: CorrelateSection::default(),
            validate: ValidationOptions::default(),
        }
    }
}

/// Robust design grid half-widths and the Gaussian evaluation widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub d_omega0_hz: f64,
    pub d_omega_uw_hz: f64,
    pub sigma_omega0_hz: f64,
    pub sigma_omega_uw_hz: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { d_omega0_hz: 100.0, d_omega_uw_hz: 140.0, sigma_omega0_hz: 100.0, sigma_omega_uw_hz: 140.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub initial: StateSpec,
    pub target: StateSpec,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self { initial: StateSpec::Label("4,4".into()), target: StateSpec::Label("3,3".into()) }
    }
}

/// States default to those recorded in the waveform file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagateSection {
    pub initial: Option<StateSpec>,
    pub target: Option<StateSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub progressions: usize,
    pub max_len: usize,
    pub noise: NoiseModel,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self { progressions: 8, max_len: 4, noise: NoiseModel::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateSection {
    pub progressions: usize,
    pub max_len: usize,
    pub omega0_offsets_hz: Vec<f64>,
    pub omega_uw_offsets_hz: Vec<f64>,
}

impl Default for CorrelateSection {
    fn default() -> Self {
        Self {
            progressions: 8,
            max_len: 4,
            omega0_offsets_hz: vec![-300.0, -100.0, 100.0, 300.0],
            omega_uw_offsets_hz: vec![-500.0, 0.0, 500.0],
        }
    }
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading job file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing job file {}", path.display()))
    }

    /// Copies the root seed into the per-module seeds and validates.
    pub fn resolve(mut self) -> Result<Self> {
        self.optimizer.rng_seed = self.seed;
        self.validate.seed = self.seed;
        self.params.validate()?;
        self.optimizer.validate()?;
        self.benchmark.noise.validate()?;
        Ok(self)
    }
}
