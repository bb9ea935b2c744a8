//! Service and CLI configuration.

use std::fs;
use std::path::{Path, PathBuf};

use pmmg_core::PermissionStatus;
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "PMMG_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub rules_path: PathBuf,
    pub fixture_path: PathBuf,
    pub seed: u64,
    /// Wall-clock seconds an interactive prompt stays open. Fractions allowed.
    pub prompt_timeout_s: f64,
    pub listen_address: String,
    pub default_decision: PermissionStatus,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            rules_path: "rules.json".into(),
            fixture_path: "real_fixture.json".into(),
            seed: 0,
            prompt_timeout_s: 60.0,
            listen_address: "127.0.0.1:8080".into(),
            default_decision: PermissionStatus::Deny,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl Config {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: Config = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        config.validate()?;
        if let Some(dir) = path.parent() {
            config.rules_path = dir.join(&config.rules_path);
            config.fixture_path = dir.join(&config.fixture_path);
        }
        Ok(config)
    }

    /// `--config` wins over `PMMG_CONFIG`; with neither, defaults relative to
    /// the working directory.
    pub fn resolve(flag: Option<&Path>) -> Result<Config, ConfigError> {
        match flag {
            Some(path) => Config::load(path),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(path) if !path.is_empty() => Config::load(Path::new(&path)),
                _ => Ok(Config::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rules_path.as_os_str().is_empty() || self.fixture_path.as_os_str().is_empty() {
            return Err(ConfigError::Invalid("paths must be non-empty".into()));
        }
        if !(self.prompt_timeout_s.is_finite() && self.prompt_timeout_s > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "prompt_timeout_s must be positive, got {}",
                self.prompt_timeout_s
            )));
        }
        Ok(())
    }

    /// `profiles.json` lives next to the rules file.
    pub fn profiles_path(&self) -> PathBuf {
        self.rules_path.with_file_name("profiles.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults_and_rebases_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pmmg.json");
        fs::write(&path, r#"{"seed": 5, "prompt_timeout_s": 0.5}"#).unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.prompt_timeout_s, 0.5);
        assert_eq!(c.default_decision, PermissionStatus::Deny);
        assert_eq!(c.rules_path, dir.path().join("rules.json"));
        assert_eq!(c.profiles_path(), dir.path().join("profiles.json"));
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pmmg.json");
        for body in [r#"{"prompt_timeout_s": 0}"#, r#"{"rules_path": ""}"#, r#"{"colour": 1}"#, "{"] {
            fs::write(&path, body).unwrap();
            assert!(Config::load(&path).is_err(), "{body}");
        }
    }
}
