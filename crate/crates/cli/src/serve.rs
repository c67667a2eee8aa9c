use std::fmt::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Subcommand};
use lens_core::event::{CrimeEvent, Gps};
use lens_core::videoio::{load_clip, SkipPolicy};
use lens_edge::{load_source, run_agent, EdgeConfig, Inference, Mode};
use lens_relay::{start, RelayConfig};
use serde::{Deserialize, Serialize};

use crate::Output;

#[derive(Debug, Subcommand)]
pub enum EdgeCommand {
    /// Process the configured source and deliver detections to the relay.
    Run(EdgeRunArgs),
}

#[derive(Debug, Args)]
pub struct EdgeRunArgs {
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub skip: Option<u32>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub camera_id: Option<String>,
    /// `LAT,LON` in degrees.
    #[arg(long, value_parser = parse_gps, allow_hyphen_values = true)]
    pub gps: Option<Gps>,
    /// Relay base URL.
    #[arg(long)]
    pub relay: Option<String>,
    /// Recorded clip to process instead of the configured source.
    #[arg(long)]
    pub clip: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RelayCommand {
    /// Serve the REST API, the alert stream and remote inference until interrupted.
    Serve(RelayServeArgs),
}

#[derive(Debug, Args)]
pub struct RelayServeArgs {
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    /// Built dashboard to serve under /app.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: lens_edge::EdgeError| e.to_string())
}

pub fn parse_gps(s: &str) -> Result<Gps, String> {
    let (lat, lon) = s.split_once(',').ok_or("expected LAT,LON")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Gps::new(num(lat)?, num(lon)?).map_err(|e| e.to_string())
}

impl EdgeRunArgs {
    pub fn apply(&self, mut c: EdgeConfig) -> anyhow::Result<EdgeConfig> {
        if let Some(m) = self.mode {
            c.mode = m;
        }
        if let Some(s) = self.skip {
            c.skip = SkipPolicy::new(s)?;
        }
        if let Some(t) = self.threshold {
            c.threshold = t;
        }
        if let Some(id) = &self.camera_id {
            c.camera_id = id.clone();
        }
        if let Some(g) = self.gps {
            c.gps = g;
        }
        if let Some(r) = &self.relay {
            c.relay_url = r.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRunReport {
    pub frames_in: u64,
    pub frames_scored: u64,
    pub dropped: u64,
    pub events: Vec<CrimeEvent>,
    pub delivered: u64,
    pub dead_lettered: u64,
    pub retries: u64,
    pub pending: usize,
}

pub fn edge_cmd(cmd: &EdgeCommand, config: Option<&Path>) -> anyhow::Result<Output> {
    let EdgeCommand::Run(args) = cmd;
    let path = config.context("edge run needs --config edge.toml")?;
    let cfg = args.apply(EdgeConfig::load(path)?)?;
    let clip = match (&args.clip, &cfg.source) {
        (Some(p), _) => load_clip(p).with_context(|| format!("loading {}", p.display()))?,
        (None, Some(src)) => load_source(src)?,
        (None, None) => anyhow::bail!("no source: pass --clip or set [source] in the config"),
    };
    let inference = Inference::for_config(&cfg, None)?;
    let rt = tokio::runtime::Runtime::new()?;
    let r = rt.block_on(run_agent(cfg, clip, inference))?;
    let report = EdgeRunReport {
        frames_in: r.pipeline.frames_in,
        frames_scored: r.pipeline.frames_scored,
        dropped: r.pipeline.dropped,
        events: r.pipeline.events,
        delivered: r.transmit.delivered,
        dead_lettered: r.transmit.dead_lettered,
        retries: r.transmit.retries,
        pending: r.pending,
    };
    let mut text = format!(
        "{} frames in, {} scored, {} dropped; {} events, {} delivered, {} dead-lettered, {} pending",
        report.frames_in,
        report.frames_scored,
        report.dropped,
        report.events.len(),
        report.delivered,
        report.dead_lettered,
        report.pending
    );
    for e in &report.events {
        let _ = write!(
            text,
            "\n  {} {} {:.3} at {}",
            e.event_id,
            e.label.name(),
            e.confidence,
            e.timestamp_ms
        );
    }
    Output::new(&report, text)
}

pub fn relay_cmd(cmd: &RelayCommand, config: Option<&Path>) -> anyhow::Result<Output> {
    let RelayCommand::Serve(args) = cmd;
    let path = config.context("relay serve needs --config relay.toml")?;
    let mut cfg = RelayConfig::load(path)?;
    if let Some(b) = args.bind {
        cfg.bind = b;
    }
    if let Some(d) = &args.static_dir {
        cfg.static_dir = Some(d.clone());
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let relay = start(cfg, None).await?;
        eprintln!("relay on {}", relay.url());
        tokio::signal::ctrl_c().await?;
        relay.shutdown();
        anyhow::Ok(())
    })?;
    Output::new(&serde_json::json!({ "stopped": true }), "")
}
