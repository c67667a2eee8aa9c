//! The `lens` command line. Each subcommand is a plain function returning a
//! report, so tests drive them without spawning processes.

pub mod bench;
pub mod data;
pub mod eval;
pub mod flow;
pub mod serve;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "lens",
    version,
    about = "Two-stream crime detection: data, training, evaluation and services"
)]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// TOML configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log filter, e.g. `info` or `lens_edge=debug`.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    /// Print the report as JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the labeled synthetic dataset.
    GenData(data::GenDataArgs),
    /// Train the spatial stream, then the temporal stream from it.
    TrainStreams(train::TrainStreamsArgs),
    /// Fit the fusion SVM on held-out stream outputs.
    TrainSvm(train::TrainSvmArgs),
    /// Accuracy, confusion matrices and percent changes.
    Eval(eval::EvalArgs),
    /// Effective frame rate with and without frame skipping and reduced flow.
    Bench(bench::BenchArgs),
    /// Run the edge agent.
    #[command(subcommand)]
    Edge(serve::EdgeCommand),
    /// Run the relay.
    #[command(subcommand)]
    Relay(serve::RelayCommand),
    /// Compute and colorize the flow between two frames of a clip.
    Flow(flow::FlowArgs),
}

/// What a command prints: `json` with `--json`, `text` otherwise.
#[derive(Debug)]
pub struct Output {
    pub json: serde_json::Value,
    pub text: String,
}

impl Output {
    pub fn new<T: Serialize>(report: &T, text: impl Into<String>) -> anyhow::Result<Self> {
        Ok(Self {
            json: serde_json::to_value(report)?,
            text: text.into(),
        })
    }
}

pub fn init_logging(filter: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(filter)
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub(crate) fn read_toml<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: &Cli) -> anyhow::Result<Output> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::GenData(a) => data::gen_data(a, cli.seed),
        Command::TrainStreams(a) => train::train_streams_cmd(a, cli.seed, config),
        Command::TrainSvm(a) => train::train_svm_cmd(a, cli.seed, config),
        Command::Eval(a) => eval::eval_cmd(a, cli.seed),
        Command::Bench(a) => bench::bench_cmd(a, cli.seed, config),
        Command::Edge(c) => serve::edge_cmd(c, config),
        Command::Relay(c) => serve::relay_cmd(c, config),
        Command::Flow(a) => flow::flow_cmd(a, cli.seed),
    }
}
