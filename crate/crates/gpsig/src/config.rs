//! Run configuration: a TOML file mirroring the training settings, kernel
//! hyperparameters and data paths. Command-line flags override file values,
//! which override the defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use gpsig_core::signature::SigKernelParams;
use gpsig_core::static_kernel::StaticKernelParams;
use gpsig_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}: {1}")]
    Read(String, std::io::Error),
    #[error("{0}: {1}")]
    Parse(String, toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StaticKind {
    Linear,
    #[default]
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub depth: usize,
    pub tau: f64,
    pub lags: Vec<f64>,
    pub static_kernel: StaticKind,
    /// RBF lengthscales per source dimension; initialized from the data when
    /// absent.
    pub lengthscales: Option<Vec<f64>>,
    /// Per-level signature normalization.
    pub normalize: bool,
    /// Initial per-level scalings `σ'_0..σ'_M` (all 1 when absent).
    pub sigma_prime: Option<Vec<f64>>,
    pub beta: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            tau: 1.0,
            lags: Vec::new(),
            static_kernel: StaticKind::Rbf,
            lengthscales: None,
            normalize: true,
            sigma_prime: None,
            beta: 1.0,
        }
    }
}

impl KernelConfig {
    pub fn to_params(&self) -> Result<SigKernelParams, ConfigError> {
        let mut p = SigKernelParams::new(self.depth);
        if let Some(s) = &self.sigma_prime {
            p.sigma_prime = s.clone();
        }
        p.beta = self.beta;
        p.tau = self.tau;
        p.lags = self.lags.clone();
        p.normalize_levels = self.normalize;
        p.static_kernel = match self.static_kernel {
            StaticKind::Linear => StaticKernelParams::Linear,
            StaticKind::Rbf => StaticKernelParams::Rbf {
                lengthscales: self.lengthscales.clone().unwrap_or_default(),
            },
        };
        let mut check = p.clone();
        if let StaticKernelParams::Rbf { lengthscales } = &mut check.static_kernel {
            if lengthscales.is_empty() {
                lengthscales.push(1.0);
            }
        }
        check.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// jsonl file with training records (and optionally split-tagged test
    /// records).
    pub data: Option<PathBuf>,
    /// Separate jsonl test file.
    pub test_data: Option<PathBuf>,
    /// Output directory.
    pub out: PathBuf,
    /// Standardize every state-space dimension using training statistics.
    pub standardize: bool,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    pub kernel: KernelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            test_data: None,
            out: PathBuf::from("."),
            standardize: true,
            threads: None,
            kernel: KernelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(name.clone(), e))?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(_, err) => ConfigError::Parse(name, err),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse("<config>".into(), e))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.kernel.to_params()?;
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.threads == Some(0) {
            return Err(ConfigError::Invalid("threads must be positive".into()));
        }
        Ok(())
    }
}
