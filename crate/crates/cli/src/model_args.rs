//! Model flags, config files and the rule that a flag may not silently contradict a config.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fracvar::mc::ExperimentConfig;
use fracvar::models::{HurstProfile, ProcessModel};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Fbm,
    Bifbm,
    Afbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    Constant,
    Piecewise,
    Smooth,
}

/// Process selection. Either inline flags or `--config`; flags that repeat a config value must
/// agree with it.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// JSON config: an mc experiment config (`{"model": {...}, "n_values": [...], ...}`) or a bare model object
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Process family
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Hurst index H (fbm, bifbm; also the level of a constant afbm profile)
    #[arg(long)]
    pub hurst: Option<f64>,
    /// bifBm exponent K in (0,1]
    #[arg(long)]
    pub k: Option<f64>,
    /// bifBm observation window start T1 > 0
    #[arg(long)]
    pub t1: Option<f64>,
    /// bifBm observation window end T2 > T1
    #[arg(long)]
    pub t2: Option<f64>,
    /// AFBM directional profile
    #[arg(long, value_enum)]
    pub profile: Option<ProfileKind>,
    /// Piecewise profile breakpoints in [0, π), comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub breakpoints: Option<Vec<f64>>,
    /// Piecewise profile values, one per breakpoint
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Smooth profile: minimizing direction θ*
    #[arg(long)]
    pub theta_star: Option<f64>,
    /// Smooth profile: minimum H(θ*)
    #[arg(long)]
    pub h_min: Option<f64>,
    /// Smooth profile: H''(θ*) > 0
    #[arg(long)]
    pub h2: Option<f64>,
    /// Smooth profile: H'''(θ*)
    #[arg(long)]
    pub h3: Option<f64>,
    /// AFBM segment length L [default: 1]
    #[arg(long)]
    pub length: Option<f64>,
    /// AFBM segment offset ε ≥ 0 [default: 0]
    #[arg(long)]
    pub eps: Option<f64>,
    /// AFBM segment direction ω in [0, 2π) [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
}

/// A parsed config file.
pub enum ConfigFile {
    Experiment(ExperimentConfig),
    Model(ProcessModel),
}

impl ConfigFile {
    pub fn model(&self) -> &ProcessModel {
        match self {
            ConfigFile::Experiment(c) => &c.model,
            ConfigFile::Model(m) => m,
        }
    }

    pub fn experiment(&self) -> Option<&ExperimentConfig> {
        match self {
            ConfigFile::Experiment(c) => Some(c),
            ConfigFile::Model(_) => None,
        }
    }
}

pub fn read_config(path: &Path) -> Result<ConfigFile, UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("malformed config {}: {e}", path.display())))?;
    let is_experiment = value.get("model").is_some_and(|m| m.is_object());
    if is_experiment {
        serde_json::from_value(value)
            .map(ConfigFile::Experiment)
            .map_err(|e| UsageError(format!("malformed experiment config {}: {e}", path.display())))
    } else {
        serde_json::from_value(value)
            .map(ConfigFile::Model)
            .map_err(|e| UsageError(format!("malformed model config {}: {e}", path.display())))
    }
}

fn need<T: Copy>(v: Option<T>, flag: &str, model: &str) -> Result<T, UsageError> {
    v.ok_or_else(|| UsageError(format!("--{flag} is required for --model {model}")))
}

impl ModelArgs {
    fn any_model_flag(&self) -> bool {
        self.model.is_some()
            || self.hurst.is_some()
            || self.k.is_some()
            || self.t1.is_some()
            || self.t2.is_some()
            || self.profile.is_some()
            || self.breakpoints.is_some()
            || self.values.is_some()
            || self.theta_star.is_some()
            || self.h_min.is_some()
            || self.h2.is_some()
            || self.h3.is_some()
            || self.length.is_some()
            || self.eps.is_some()
            || self.omega.is_some()
    }

    /// The model described by the inline flags alone.
    pub fn from_flags(&self) -> Result<ProcessModel, UsageError> {
        let Some(kind) = self.model else {
            return Err(UsageError("no model given: use --model or --config".into()));
        };
        let stray = |names: &[(&str, bool)]| -> Result<(), UsageError> {
            match names.iter().find(|(_, set)| *set) {
                Some((name, _)) => Err(UsageError(format!("--{name} does not apply to this model"))),
                None => Ok(()),
            }
        };
        let afbm_only = [
            ("profile", self.profile.is_some()),
            ("breakpoints", self.breakpoints.is_some()),
            ("values", self.values.is_some()),
            ("theta-star", self.theta_star.is_some()),
            ("h-min", self.h_min.is_some()),
            ("h2", self.h2.is_some()),
            ("h3", self.h3.is_some()),
            ("length", self.length.is_some()),
            ("eps", self.eps.is_some()),
            ("omega", self.omega.is_some()),
        ];
        let bifbm_only = [
            ("k", self.k.is_some()),
            ("t1", self.t1.is_some()),
            ("t2", self.t2.is_some()),
        ];
        match kind {
            ModelKind::Fbm => {
                stray(&afbm_only)?;
                stray(&bifbm_only)?;
                Ok(ProcessModel::Fbm {
                    hurst: need(self.hurst, "hurst", "fbm")?,
                })
            }
            ModelKind::Bifbm => {
                stray(&afbm_only)?;
                Ok(ProcessModel::Bifbm {
                    hurst: need(self.hurst, "hurst", "bifbm")?,
                    k: need(self.k, "k", "bifbm")?,
                    t1: need(self.t1, "t1", "bifbm")?,
                    t2: need(self.t2, "t2", "bifbm")?,
                })
            }
            ModelKind::Afbm => {
                stray(&bifbm_only)?;
                let profile = match self.profile {
                    None => return Err(UsageError("--profile is required for --model afbm".into())),
                    Some(ProfileKind::Constant) => HurstProfile::Constant {
                        h: need(self.hurst, "hurst", "afbm --profile constant")?,
                    },
                    Some(ProfileKind::Piecewise) => HurstProfile::PiecewiseConstant {
                        breakpoints: self.breakpoints.clone().ok_or_else(|| {
                            UsageError("--breakpoints is required for --profile piecewise".into())
                        })?,
                        values: self.values.clone().ok_or_else(|| {
                            UsageError("--values is required for --profile piecewise".into())
                        })?,
                    },
                    Some(ProfileKind::Smooth) => HurstProfile::Smooth {
                        theta_star: need(self.theta_star, "theta-star", "afbm --profile smooth")?,
                        h_min: need(self.h_min, "h-min", "afbm --profile smooth")?,
                        h2: need(self.h2, "h2", "afbm --profile smooth")?,
                        h3: self.h3.unwrap_or(0.0),
                    },
                };
                if self.hurst.is_some() && self.profile != Some(ProfileKind::Constant) {
                    return Err(UsageError("--hurst only applies to --profile constant for afbm".into()));
                }
                Ok(ProcessModel::AfbmSegment {
                    profile,
                    length: self.length.unwrap_or(1.0),
                    eps: self.eps.unwrap_or(0.0),
                    omega: self.omega.unwrap_or(0.0),
                })
            }
        }
    }

    /// The model and, when given, the parsed config file.
    pub fn resolve(&self) -> Result<(ProcessModel, Option<ConfigFile>), UsageError> {
        let Some(path) = &self.config else {
            return Ok((self.from_flags()?, None));
        };
        let cfg = read_config(path)?;
        if self.any_model_flag() {
            let flags = self.from_flags().map_err(|e| {
                UsageError(format!("model flags alongside --config must describe the same model: {}", e.0))
            })?;
            if &flags != cfg.model() {
                return Err(UsageError(
                    "model flags conflict with the model in --config; give one or the other".into(),
                ));
            }
        }
        Ok((cfg.model().clone(), Some(cfg)))
    }
}

/// A scalar that may come from a flag, a config, or both; both must agree.
pub fn merge<T: PartialEq + std::fmt::Debug>(
    name: &str,
    flag: Option<T>,
    config: Option<T>,
) -> Result<Option<T>, UsageError> {
    match (flag, config) {
        (Some(f), Some(c)) if f != c => Err(UsageError(format!(
            "--{name} {f:?} conflicts with the config value {c:?}"
        ))),
        (Some(f), _) => Ok(Some(f)),
        (None, c) => Ok(c),
    }
}
