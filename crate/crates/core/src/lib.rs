//! Core of the low-light surveillance pipeline.
//!
//! The crate is organised the way frames flow through the system:
//!
//! - [`videoio`]: frames, clips, the `.lclip` container, ring buffering, frame
//!   skipping, throughput measurement and the synthetic low-light dataset.
//! - [`optflow`]: dense TV-L1 optical flow, flow stacks, visualisation and EPE.
//! - [`streams`]: the spatial and temporal classifiers and their training loop.
//! - [`fusion`]: the polynomial-kernel SVM that fuses both streams, plus
//!   evaluation helpers.
//! - [`pipeline`]: per-frame inference shared by the edge agent and the relay,
//!   and alert debouncing.
//! - [`event`] and [`protocol`]: the alert payload and the binary frame
//!   streaming protocol spoken between edge and relay.

pub mod error;
pub mod event;
pub mod fusion;
pub mod optflow;
pub mod pipeline;
pub mod protocol;
pub mod streams;
pub mod videoio;

pub use error::{Error, Result};
pub use videoio::{ActionLabel, Clip, Frame};
