//! JSON run configuration.
//!
//! ```json
//! {
//!   "utility": {"kind": "sqrt"},
//!   "kernel": {"kind": "exponential", "rate": 1.0},
//!   "budget": 1.0,
//!   "numerics": {"rel_tol": 1e-8, "divergence_cap": 1e12}
//! }
//! ```
//! Unknown keys are rejected; parse errors name the failing field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::PricingKernel;
use crate::numerics::Numerics;
use crate::utility::Utility;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub utility: Utility,
    pub kernel: PricingKernel,
    #[serde(default)]
    pub budget: Option<f64>,
    #[serde(default)]
    pub numerics: Numerics,
    /// Default output path for machine-format reports and curves.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config at `{field}`: {message}")]
    Parse { field: String, message: String },
    #[error("invalid config at `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            ConfigError::Parse { field, message: e.into_inner().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Model and tolerance checks that serde cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.utility
            .validate()
            .map_err(|e| ConfigError::Invalid { field: "utility", message: e.to_string() })?;
        self.kernel
            .validate()
            .map_err(|e| ConfigError::Invalid { field: "kernel", message: e.to_string() })?;
        self.numerics.validate().map_err(|message| ConfigError::Invalid { field: "numerics", message })?;
        if let Some(a) = self.budget {
            if !(a.is_finite() && a > 0.0) {
                return Err(ConfigError::Invalid { field: "budget", message: format!("must be positive, got {a}") });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_json(
            r#"{"utility": {"kind": "sqrt"}, "kernel": {"kind": "exponential", "rate": 1.0}, "budget": 1}"#,
        )
        .unwrap();
        assert_eq!(cfg.budget, Some(1.0));
        assert_eq!(cfg.numerics, Numerics::default());
    }

    #[test]
    fn parses_series_config() {
        let cfg = RunConfig::from_json(
            r#"{"utility": {"kind": "series", "coefficients": {"rule": "kernel_matched",
                 "kernel": {"kind": "lognormal", "mu": 0, "sigma": 1}}},
                "kernel": {"kind": "lognormal", "mu": 0, "sigma": 1},
                "numerics": {"rel_tol": 1e-9, "mc_n": 1000, "seed": 4}}"#,
        )
        .unwrap();
        assert_eq!(cfg.numerics.seed, 4);
        assert!(cfg.utility.series_coefficients().is_some());
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = RunConfig::from_json(
            r#"{"utility": {"kind": "sqrt"}, "kernel": {"kind": "exponential", "rate": 1.0, "scale": 2}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("kernel"), "{err}");
        let err = RunConfig::from_json(
            r#"{"utility": {"kind": "sqrt"}, "kernel": {"kind": "degenerate", "c": 1}, "numerics": {"rel_tol": "x"}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("numerics.rel_tol"), "{err}");
    }

    #[test]
    fn rejects_invalid_models() {
        let err = RunConfig::from_json(r#"{"utility": {"kind": "power", "alpha": 1.5}, "kernel": {"kind": "heavy_log"}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("utility"), "{err}");
        let err = RunConfig::from_json(
            r#"{"utility": {"kind": "sqrt"}, "kernel": {"kind": "heavy_log"}, "budget": -1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("budget"), "{err}");
    }
}
