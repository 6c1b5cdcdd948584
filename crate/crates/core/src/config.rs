//! Run configuration: a flat `key = value` text format with `#` comments.
//! Unknown keys are errors.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::driver::{SamplerConfig, SamplerKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: invalid value for `{key}`: {msg}")]
    InvalidValue {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("invalid configuration: {0}")]
    Invariant(String),
}

/// Everything a simulation run needs. Field names double as the config-file
/// keys.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub epsilon: f64,
    pub s_max: f64,
    pub ds: f64,
    pub grid_n: usize,
    pub box_length: f64,
    pub sampler: SamplerKind,
    pub gaussian_amplitudes: bool,
    pub n_modes: usize,
    pub ensemble: usize,
    pub seed: u64,
    /// Interval in `s` between emitted trajectory rows.
    pub output_every: f64,
    pub output_dir: PathBuf,
}

impl SimConfig {
    /// Desk-scale defaults: minutes of runtime, all identity checks
    /// resolvable at 3-4 standard errors.
    pub fn default_desk() -> Self {
        let s_max = 3.0;
        SimConfig {
            epsilon: 0.1,
            s_max,
            ds: 0.01,
            grid_n: 64,
            box_length: std::f64::consts::TAU * s_max.exp(),
            sampler: SamplerKind::PlaneWave,
            gaussian_amplitudes: false,
            n_modes: 64,
            ensemble: 200,
            seed: 1,
            output_every: 0.5,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            kind: self.sampler,
            n_modes: self.n_modes,
            gaussian_amplitudes: self.gaussian_amplitudes,
            box_length: self.box_length,
        }
    }

    /// Validates the invariants and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ConfigError::Invariant(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.ds > 0.0 && self.ds <= 0.1) {
            return Err(ConfigError::Invariant(format!(
                "ds must lie in (0, 0.1], got {}",
                self.ds
            )));
        }
        if self.s_max < 0.0 {
            return Err(ConfigError::Invariant(format!(
                "s_max must be nonnegative, got {}",
                self.s_max
            )));
        }
        if self.ensemble < 1 {
            return Err(ConfigError::Invariant("ensemble must be >= 1".into()));
        }
        if self.grid_n < 16 {
            return Err(ConfigError::Invariant(format!(
                "grid_n must be >= 16, got {}",
                self.grid_n
            )));
        }
        if !(self.box_length > 0.0) {
            return Err(ConfigError::Invariant(format!(
                "box_length must be positive, got {}",
                self.box_length
            )));
        }
        if !(self.output_every > 0.0) {
            return Err(ConfigError::Invariant(format!(
                "output_every must be positive, got {}",
                self.output_every
            )));
        }
        if self.sampler == SamplerKind::LatticeShell
            && self.box_length <= std::f64::consts::TAU * self.s_max.exp()
        {
            return Err(ConfigError::Invariant(format!(
                "lattice-shell sampler needs box_length > 2*pi*e^s_max = {}, got {}",
                std::f64::consts::TAU * self.s_max.exp(),
                self.box_length
            )));
        }
        if self.sampler == SamplerKind::PlaneWave && self.n_modes == 0 {
            return Err(ConfigError::Invariant("n_modes must be >= 1".into()));
        }
        let mut warnings = Vec::new();
        if self.epsilon >= 0.5 {
            warnings.push(format!(
                "epsilon = {} is outside the small-coupling regime the scheme targets; \
                 expect visible discretization bias",
                self.epsilon
            ));
        }
        Ok(warnings)
    }
}

/// Parses the flat `key = value` format. `#` starts a comment; blank lines
/// are ignored; unknown keys are errors. Keys not present keep their
/// desk-scale defaults, except `box_length` which defaults to
/// `2*pi*e^s_max` for the configured `s_max`.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default_desk();
    let mut box_length_set = false;
    let mut s_max_set = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let stripped = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped
            .split_once('=')
            .ok_or_else(|| ConfigError::Malformed {
                line,
                text: stripped.to_string(),
            })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |msg: String| ConfigError::InvalidValue {
            line,
            key: key.to_string(),
            msg,
        };
        match key {
            "epsilon" => cfg.epsilon = value.parse().map_err(|e| bad(format!("{e}")))?,
            "s_max" => {
                cfg.s_max = value.parse().map_err(|e| bad(format!("{e}")))?;
                s_max_set = true;
            }
            "ds" => cfg.ds = value.parse().map_err(|e| bad(format!("{e}")))?,
            "grid_n" => cfg.grid_n = value.parse().map_err(|e| bad(format!("{e}")))?,
            "box_length" => {
                cfg.box_length = value.parse().map_err(|e| bad(format!("{e}")))?;
                box_length_set = true;
            }
            "sampler" => {
                cfg.sampler = match value {
                    "plane-wave" => SamplerKind::PlaneWave,
                    "lattice-shell" => SamplerKind::LatticeShell,
                    other => {
                        return Err(bad(format!(
                            "expected `plane-wave` or `lattice-shell`, got `{other}`"
                        )))
                    }
                }
            }
            "gaussian_amplitudes" => {
                cfg.gaussian_amplitudes = match value {
                    "true" => true,
                    "false" => false,
                    other => return Err(bad(format!("expected `true` or `false`, got `{other}`"))),
                }
            }
            "n_modes" => cfg.n_modes = value.parse().map_err(|e| bad(format!("{e}")))?,
            "ensemble" => cfg.ensemble = value.parse().map_err(|e| bad(format!("{e}")))?,
            "seed" => cfg.seed = value.parse().map_err(|e| bad(format!("{e}")))?,
            "output_every" => cfg.output_every = value.parse().map_err(|e| bad(format!("{e}")))?,
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
    }
    if s_max_set && !box_length_set {
        cfg.box_length = std::f64::consts::TAU * cfg.s_max.exp();
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
