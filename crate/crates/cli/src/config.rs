//! Experiment configuration: parsing, validation and the canonical hash.

use rwre_core::walker::StartPolicy;
use rwre_core::EnvSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};

/// Default relative tolerance for exact identities.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Validate,
    Bounds,
    Decompose,
    Orthogonality,
    Corrector,
    Spectral,
    Helmholtz,
    Clt,
}

impl CheckKind {
    pub const ALL: [CheckKind; 8] = [
        CheckKind::Validate,
        CheckKind::Bounds,
        CheckKind::Decompose,
        CheckKind::Orthogonality,
        CheckKind::Corrector,
        CheckKind::Spectral,
        CheckKind::Helmholtz,
        CheckKind::Clt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Validate => "validate",
            CheckKind::Bounds => "bounds",
            CheckKind::Decompose => "decompose",
            CheckKind::Orthogonality => "orthogonality",
            CheckKind::Corrector => "corrector",
            CheckKind::Spectral => "spectral",
            CheckKind::Helmholtz => "helmholtz",
            CheckKind::Clt => "clt",
        }
    }

    /// Fixed stream index, so a check's seed does not depend on which other
    /// checks are enabled.
    pub fn stream(self) -> u64 {
        CheckKind::ALL.iter().position(|&c| c == self).unwrap() as u64
    }

    /// Monte Carlo checks judged at the 99% level.
    pub fn is_statistical(self) -> bool {
        matches!(self, CheckKind::Orthogonality | CheckKind::Clt)
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn uniform_start() -> StartPolicy {
    StartPolicy::Uniform
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Sample times, strictly increasing; the last is the horizon.
    pub horizons: Vec<f64>,
    pub replicas: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "uniform_start")]
    pub start: StartPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub run: RunSpec,
    pub checks: Vec<CheckKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// The part of a config that determines results. Threads and output paths
/// are excluded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CanonicalConfig {
    pub env: EnvSpec,
    pub horizons: Vec<f64>,
    pub replicas: usize,
    pub master_seed: u64,
    pub start: StartPolicy,
    pub checks: Vec<CheckKind>,
    pub tolerance: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("$", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let run = &self.run;
        if run.replicas < 1 {
            return Err(ConfigError::new("run.replicas", "must be at least 1"));
        }
        if run.horizons.is_empty() {
            return Err(ConfigError::new("run.horizons", "must not be empty"));
        }
        for (i, t) in run.horizons.iter().enumerate() {
            if !(t.is_finite() && *t > 0.0) {
                return Err(ConfigError::new(format!("run.horizons[{i}]"), format!("{t} is not a positive time")));
            }
            if i > 0 && *t <= run.horizons[i - 1] {
                return Err(ConfigError::new(format!("run.horizons[{i}]"), "grid must be strictly increasing"));
            }
        }
        if run.threads == Some(0) {
            return Err(ConfigError::new("run.threads", "must be at least 1"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(ConfigError::new("tolerance", "must be positive"));
        }
        for (i, c) in self.checks.iter().enumerate() {
            if self.checks[..i].contains(c) {
                return Err(ConfigError::new(format!("checks[{i}]"), format!("`{c}` listed twice")));
            }
        }
        if self.checks.contains(&CheckKind::Orthogonality) && run.replicas < rwre_core::mart::MIN_REPLICAS {
            return Err(ConfigError::new(
                "run.replicas",
                format!("orthogonality needs at least {} replicas", rwre_core::mart::MIN_REPLICAS),
            ));
        }
        if self.checks.contains(&CheckKind::Clt) && run.horizons.len() < 2 {
            return Err(ConfigError::new("run.horizons", "clt needs at least two sample times"));
        }
        let sites = rwre_core::Torus::new(self.env.d, self.env.side)
            .map_err(|e| ConfigError::new("env", e.to_string()))?
            .num_sites();
        if let StartPolicy::Fixed(x) = run.start {
            if x >= sites {
                return Err(ConfigError::new("run.start.site", format!("site {x} outside torus of {sites} sites")));
            }
        }
        Ok(())
    }

    pub fn canonical(&self) -> CanonicalConfig {
        CanonicalConfig {
            env: self.env.clone(),
            horizons: self.run.horizons.clone(),
            replicas: self.run.replicas,
            master_seed: self.run.master_seed,
            start: self.run.start,
            checks: self.checks.clone(),
            tolerance: self.tolerance,
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn horizon(&self) -> f64 {
        *self.run.horizons.last().expect("validated grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "env": {"generator": "homogeneous", "d": 2, "L": 4, "seed": 1},
        "run": {"horizons": [1.0, 2.0], "replicas": 10, "master_seed": 3},
        "checks": ["validate"]
    }"#;

    fn with(pointer: &str, value: serde_json::Value) -> String {
        let mut v: serde_json::Value = serde_json::from_str(BASE).unwrap();
        *v.pointer_mut(pointer).unwrap() = value;
        v.to_string()
    }

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.tolerance, DEFAULT_TOLERANCE);
        assert_eq!(cfg.run.start, StartPolicy::Uniform);
        assert_eq!(cfg.horizon(), 2.0);
    }

    #[test]
    fn errors_name_the_field() {
        let e = ExperimentConfig::from_json(&with("/run/horizons", serde_json::json!([2.0, 1.0]))).unwrap_err();
        assert_eq!(e.path, "run.horizons[1]");
        let e = ExperimentConfig::from_json(&with("/env/generator", serde_json::json!("spiral"))).unwrap_err();
        assert_eq!(e.path, "env.generator");
        let e = ExperimentConfig::from_json(&with("/run/replicas", serde_json::json!(0))).unwrap_err();
        assert_eq!(e.path, "run.replicas");
        let e = ExperimentConfig::from_json(&with("/checks", serde_json::json!(["validate", "validate"]))).unwrap_err();
        assert_eq!(e.path, "checks[1]");
        let e = ExperimentConfig::from_json(&with("/checks", serde_json::json!(["orthogonality"]))).unwrap_err();
        assert_eq!(e.path, "run.replicas");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = ExperimentConfig::from_json(&with("/run/replicas", serde_json::json!(10)).replace("\"master_seed\"", "\"seed_master\"")).unwrap_err();
        assert!(e.path.starts_with("run"), "{e}");
    }

    #[test]
    fn hash_ignores_threads_and_output() {
        let a = ExperimentConfig::from_json(BASE).unwrap();
        let mut b = a.clone();
        b.run.threads = Some(7);
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.run.master_seed = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
