//! Key-value device configuration.
//!
//! ```toml
//! preset = "id500"      # optional base, fields below override it
//! visibility = 0.99
//! p_dark = 3.5e-6
//! eta_ar_db = 3.0       # or eta_ar = 0.501 (linear); not both
//! eta_br_db = 1.5
//! eta_det = 0.2
//! rep_rate = 5e6
//! dead_pulses = 50
//! ```
//!
//! A `--params` argument resolves as a preset name, then as a path, then as
//! `<name>.toml` inside the directory named by `QFP_CONFIG_DIR`.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{ModelError, SystemParams, Transmittance};
use crate::scalar::Real;

pub const CONFIG_DIR_ENV: &str = "QFP_CONFIG_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: both {key} and {key}_db given")]
    Ambiguous { origin: String, key: &'static str },
    #[error("{origin}: unknown preset {name:?}")]
    UnknownPreset { origin: String, name: String },
    #[error("{origin}: {source}")]
    Invalid { origin: String, source: ModelError },
    #[error("no preset or file named {0:?}")]
    NotFound(String),
}

/// Raw file contents; every field is optional so a file may patch a preset.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub preset: Option<String>,
    pub visibility: Option<f64>,
    pub p_dark: Option<f64>,
    pub eta_ar: Option<f64>,
    pub eta_ar_db: Option<f64>,
    pub eta_br: Option<f64>,
    pub eta_br_db: Option<f64>,
    pub eta_det: Option<f64>,
    pub rep_rate: Option<f64>,
    pub dead_pulses: Option<u32>,
}

impl ParamsFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { origin: origin.to_string(), message: e.to_string() })
    }

    pub fn resolve<T: Real>(&self, origin: &str) -> Result<SystemParams<T>, ConfigError> {
        let mut p = match &self.preset {
            Some(name) => SystemParams::preset_by_name(name)
                .ok_or_else(|| ConfigError::UnknownPreset { origin: origin.into(), name: name.clone() })?,
            None => SystemParams::ideal(),
        };
        let invalid = |source| ConfigError::Invalid { origin: origin.into(), source };
        if let Some(v) = self.visibility {
            p.visibility = T::of(v);
        }
        if let Some(v) = self.p_dark {
            p.p_dark = T::of(v);
        }
        let eta = |lin: Option<f64>, db: Option<f64>, key| -> Result<Option<Transmittance<T>>, ConfigError> {
            match (lin, db) {
                (Some(_), Some(_)) => Err(ConfigError::Ambiguous { origin: origin.into(), key }),
                (Some(v), None) => Transmittance::linear(T::of(v)).map(Some).map_err(invalid),
                (None, Some(d)) => Transmittance::from_db(T::of(d)).map(Some).map_err(invalid),
                (None, None) => Ok(None),
            }
        };
        if let Some(t) = eta(self.eta_ar, self.eta_ar_db, "eta_ar")? {
            p.eta_ar = t;
        }
        if let Some(t) = eta(self.eta_br, self.eta_br_db, "eta_br")? {
            p.eta_br = t;
        }
        if let Some(v) = self.eta_det {
            p.eta_det = T::of(v);
        }
        if let Some(v) = self.rep_rate {
            p.rep_rate = T::of(v);
        }
        if let Some(v) = self.dead_pulses {
            p.dead_pulses = v;
        }
        p.validate().map_err(invalid)?;
        Ok(p)
    }
}

impl<T: Real> SystemParams<T> {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        ParamsFile::parse(text, origin)?.resolve(origin)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Preset name, file path, or file in the config directory.
    pub fn load(spec: &str) -> Result<Self, ConfigError> {
        if let Some(p) = Self::preset_by_name(spec) {
            return Ok(p);
        }
        let direct = Path::new(spec);
        if direct.is_file() {
            return Self::from_file(direct);
        }
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            let dir = PathBuf::from(dir);
            for candidate in [dir.join(spec), dir.join(format!("{spec}.toml"))] {
                if candidate.is_file() {
                    return Self::from_file(&candidate);
                }
            }
        }
        Err(ConfigError::NotFound(spec.to_string()))
    }

    /// Linear transmittances are written at full precision so reading the
    /// output back reproduces the parameters bit for bit.
    pub fn to_toml(&self) -> String {
        format!(
            "visibility = {:?}\np_dark = {:?}\neta_ar = {:?} # {:.4} dB\neta_br = {:?} # {:.4} dB\neta_det = {:?}\nrep_rate = {:?}\ndead_pulses = {}\n",
            self.visibility.f64(),
            self.p_dark.f64(),
            self.eta_ar.value().f64(),
            self.eta_ar.loss_db().f64(),
            self.eta_br.value().f64(),
            self.eta_br.loss_db().f64(),
            self.eta_det.f64(),
            self.rep_rate.f64(),
            self.dead_pulses,
        )
    }
}
