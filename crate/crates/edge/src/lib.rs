//! The edge agent: runs the pipeline next to the camera (or streams frames
//! to the relay for remote inference), turns per-frame scores into discrete
//! alerts and delivers them with their clips.

pub mod cloud;
pub mod config;
pub mod outbox;
pub mod queue;
pub mod runner;
pub mod transmit;

pub use config::{EdgeConfig, Mode, RetryPolicy, SourceConfig};
pub use outbox::{DeadLetter, Outbox, PendingItem};
pub use runner::{load_source, run_agent, run_pipeline, AgentReport, Inference, PipelineReport};
pub use transmit::{TransmitStats, Transmitter};

#[derive(Debug, thiserror::Error)]
pub enum EdgeError {
    #[error("config: {0}")]
    Config(String),
    #[error("send queue: {0}")]
    Queue(String),
    #[error("relay unreachable: {0}")]
    Unreachable(String),
    #[error("inference stream: {0}")]
    Stream(String),
    #[error(transparent)]
    Core(#[from] lens_core::Error),
}
