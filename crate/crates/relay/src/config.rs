use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use lens_core::event::Gps;
use serde::{Deserialize, Serialize};

use crate::RelayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Authority,
    Civilian,
    /// Camera agents: may upload clips and submit events, nothing else.
    Edge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub token: String,
    pub user_id: String,
    pub role: Role,
    #[serde(default)]
    pub location: Option<Gps>,
}

fn default_bind() -> SocketAddr {
    "127.0.0.1:8080".parse().expect("valid address")
}

fn default_threshold() -> f64 {
    0.5
}

fn default_skew() -> u64 {
    60_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    /// Address of the binary frame-stream listener; off when absent.
    #[serde(default)]
    pub infer_bind: Option<SocketAddr>,
    pub storage: PathBuf,
    /// Initial threshold, used only when the journal has no threshold change.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub tokens: Vec<TokenEntry>,
    /// Built dashboard assets served under `/app`.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    /// Checkpoint directory for remote inference.
    #[serde(default)]
    pub models: Option<PathBuf>,
    /// Compute flow at half resolution during remote inference.
    #[serde(default)]
    pub reduced: bool,
    #[serde(default = "default_skew")]
    pub clock_skew_ms: u64,
}

impl RelayConfig {
    pub fn new(storage: impl Into<PathBuf>) -> Self {
        Self {
            bind: "127.0.0.1:0".parse().expect("valid address"),
            infer_bind: None,
            storage: storage.into(),
            threshold: default_threshold(),
            tokens: Vec::new(),
            static_dir: None,
            models: None,
            reduced: false,
            clock_skew_ms: default_skew(),
        }
    }

    pub fn with_token(mut self, token: &str, user_id: &str, role: Role) -> Self {
        self.tokens.push(TokenEntry {
            token: token.into(),
            user_id: user_id.into(),
            role,
            location: None,
        });
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, RelayError> {
        let cfg: Self = toml::from_str(text).map_err(|e| RelayError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RelayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| RelayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), RelayError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(RelayError::Config(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.tokens {
            if t.token.is_empty() || !seen.insert(&t.token) {
                return Err(RelayError::Config(format!(
                    "empty or duplicate token for user {}",
                    t.user_id
                )));
            }
            if let Some(g) = t.location {
                g.validate("location")
                    .map_err(|e| RelayError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }
}
