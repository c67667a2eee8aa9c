use std::path::{Path, PathBuf};
use std::time::Duration;

use lens_core::event::Gps;
use lens_core::pipeline::{DEFAULT_COOLDOWN_MS, DEFAULT_DEBOUNCE};
use lens_core::videoio::{ActionLabel, SkipPolicy};
use serde::{Deserialize, Serialize};

use crate::EdgeError;

/// Where inference runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Edge,
    Cloud,
}

impl std::str::FromStr for Mode {
    type Err = EdgeError;

    fn from_str(s: &str) -> Result<Self, EdgeError> {
        match s {
            "edge" => Ok(Mode::Edge),
            "cloud" => Ok(Mode::Cloud),
            other => Err(EdgeError::Config(format!(
                "mode must be edge or cloud, not {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub base_ms: u64,
    pub cap_ms: u64,
    /// Give up on the queue (leaving it on disk) after this many consecutive
    /// failures; unlimited when absent.
    #[serde(default)]
    pub max_attempts: Option<u32>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_ms: 1000,
            cap_ms: 60_000,
            max_attempts: None,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = attempt.saturating_sub(1).min(32);
        let ms = self.base_ms.saturating_mul(1u64 << exp).min(self.cap_ms);
        Duration::from_millis(ms)
    }
}

/// Frame source for the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceConfig {
    /// An `.lclip` file.
    Clip { path: PathBuf },
    /// A generated clip from the synthetic dataset.
    Synthetic {
        seed: u64,
        label: ActionLabel,
        #[serde(default)]
        group: u32,
        #[serde(default)]
        clip: u32,
    },
}

fn default_queue_capacity() -> usize {
    8
}

fn default_ring() -> usize {
    180
}

fn default_threshold() -> f64 {
    0.5
}

fn default_debounce() -> usize {
    DEFAULT_DEBOUNCE
}

fn default_cooldown() -> u64 {
    DEFAULT_COOLDOWN_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    pub camera_id: String,
    pub gps: Gps,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub skip: SkipPolicy,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_debounce")]
    pub debounce: usize,
    #[serde(default = "default_cooldown")]
    pub cooldown_ms: u64,
    /// Base URL of the relay REST API.
    pub relay_url: String,
    /// `host:port` of the relay's frame-stream listener (cloud mode).
    #[serde(default)]
    pub infer_addr: Option<String>,
    pub token: String,
    /// Checkpoint directory (edge mode).
    #[serde(default)]
    pub models: Option<PathBuf>,
    /// Directory holding the persistent send queue and the dead-letter file.
    pub queue_dir: PathBuf,
    #[serde(default)]
    pub reduced: bool,
    #[serde(default = "default_ring")]
    pub ring_capacity: usize,
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
    /// Replay the source at its frame rate and drop frames under load instead
    /// of blocking.
    #[serde(default)]
    pub realtime: bool,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub source: Option<SourceConfig>,
}

impl EdgeConfig {
    pub fn new(
        camera_id: &str,
        gps: Gps,
        relay_url: &str,
        token: &str,
        queue_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            camera_id: camera_id.into(),
            gps,
            mode: Mode::Edge,
            skip: SkipPolicy::none(),
            threshold: default_threshold(),
            debounce: default_debounce(),
            cooldown_ms: default_cooldown(),
            relay_url: relay_url.into(),
            infer_addr: None,
            token: token.into(),
            models: None,
            queue_dir: queue_dir.into(),
            reduced: false,
            ring_capacity: default_ring(),
            queue_capacity: default_queue_capacity(),
            realtime: false,
            retry: RetryPolicy::default(),
            source: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, EdgeError> {
        let cfg: Self = toml::from_str(text).map_err(|e| EdgeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EdgeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EdgeError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), EdgeError> {
        let bad = |m: String| Err(EdgeError::Config(m));
        if self.camera_id.trim().is_empty() {
            return bad("camera_id is empty".into());
        }
        self.gps
            .validate("gps")
            .map_err(|e| EdgeError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if self.debounce == 0 {
            return bad("debounce must be at least 1".into());
        }
        SkipPolicy::new(self.skip.skip()).map_err(EdgeError::Core)?;
        if self.queue_capacity == 0 {
            return bad("queue_capacity must be at least 1".into());
        }
        if self.retry.base_ms == 0 || self.retry.cap_ms < self.retry.base_ms {
            return bad("retry needs 0 < base_ms <= cap_ms".into());
        }
        if self.mode == Mode::Cloud && self.infer_addr.is_none() {
            return bad("cloud mode needs infer_addr".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_file() {
        let cfg = EdgeConfig::from_toml(
            r#"
            camera_id = "cam-7"
            gps = { lat = 42.34, lon = -71.09 }
            relay_url = "http://127.0.0.1:8080"
            token = "t"
            queue_dir = "/tmp/q"
            skip = 1
            source = { synthetic = { seed = 7, label = "shooting" } }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.skip.skip(), 1);
        assert_eq!(cfg.mode, Mode::Edge);
        assert_eq!(cfg.debounce, 3);
        assert_eq!(cfg.queue_capacity, 8);
        assert_eq!(
            cfg.source,
            Some(SourceConfig::Synthetic {
                seed: 7,
                label: ActionLabel::Shooting,
                group: 0,
                clip: 0
            })
        );
    }

    #[test]
    fn rejects_out_of_range_values() {
        let base = EdgeConfig::new("c", Gps { lat: 0.0, lon: 0.0 }, "http://x", "t", "/tmp");
        let mut c = base.clone();
        c.threshold = 1.2;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.debounce = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.mode = Mode::Cloud;
        assert!(c.validate().is_err());
        let mut c = base;
        c.gps.lat = 95.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn backoff_doubles_up_to_the_cap() {
        let r = RetryPolicy::default();
        let ms: Vec<u128> = (1..=8).map(|a| r.delay(a).as_millis()).collect();
        assert_eq!(ms, vec![1000, 2000, 4000, 8000, 16000, 32000, 60000, 60000]);
        assert_eq!(r.delay(200).as_millis(), 60000);
    }
}
