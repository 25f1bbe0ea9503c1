//! `eegfatigue` command-line front end.

mod commands;
mod dataset;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eegfatigue_core::Error;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "eegfatigue",
    version,
    about = "Single-channel EEG fatigue detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the channel with the largest variance (mean rank over recordings).
    SelectChannel(SelectChannelArgs),
    /// Extract windowed features of labeled recordings to CSV.
    Extract(ExtractArgs),
    /// Train a bagged-tree model on labeled recordings.
    Train(TrainArgs),
    /// Cross-validate the pipeline and write report.json, report.txt and roc.csv.
    Evaluate(EvaluateArgs),
    /// Replay a recording window by window through a trained model.
    Stream(StreamArgs),
    /// Classify every window of a recording in one batch.
    Predict(PredictArgs),
    /// Write synthetic alert/fatigue recordings and a labels file.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SplitArg {
    Row,
    Recording,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TieArg {
    Alert,
    Fatigue,
}

#[derive(Debug, Args, Serialize)]
struct SignalArgs {
    /// Sampling rate of the CSV recordings.
    #[arg(long, default_value_t = 1000.0)]
    rate_hz: f64,
}

#[derive(Debug, Args, Serialize)]
struct FeatureArgs {
    /// Channel to analyse; chosen by maximum variance when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    channel: Option<String>,
    #[arg(long, default_value_t = 2.0)]
    window_s: f64,
    #[arg(long, default_value_t = 0.5)]
    step_s: f64,
    /// MCD coverage h/n in [0.5, 1]; 0.5 is the half-sample boundary.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Debug, Args, Serialize)]
struct EnsembleArgs {
    #[arg(long, default_value_t = 30)]
    trees: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Label emitted on an exact vote tie.
    #[arg(long, value_enum, default_value_t = TieArg::Alert)]
    tie: TieArg,
}

#[derive(Debug, Args, Serialize)]
struct DatasetArgs {
    /// CSV with columns `recording,label`; paths are relative to the file.
    #[arg(long)]
    labels: std::path::PathBuf,
    /// Restrict to these recordings (must appear in the labels file).
    recordings: Vec<std::path::PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SelectChannelArgs {
    #[arg(required = true)]
    recordings: Vec<std::path::PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    signal: SignalArgs,
}

#[derive(Debug, Args, Serialize)]
struct ExtractArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    signal: SignalArgs,
    #[command(flatten)]
    #[serde(flatten)]
    features: FeatureArgs,
    /// Output feature CSV.
    #[arg(long)]
    #[serde(skip)]
    out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    signal: SignalArgs,
    #[command(flatten)]
    #[serde(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    #[serde(flatten)]
    ensemble: EnsembleArgs,
    /// Output model JSON.
    #[arg(long)]
    #[serde(skip)]
    out: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    signal: SignalArgs,
    #[command(flatten)]
    #[serde(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    #[serde(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value_t = SplitArg::Recording)]
    split: SplitArg,
    /// Directory for report.json, report.txt and roc.csv.
    #[arg(long)]
    #[serde(skip)]
    out_dir: std::path::PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct StreamArgs {
    recording: std::path::PathBuf,
    #[arg(long)]
    model: std::path::PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    signal: SignalArgs,
    /// Pace the replay at the recording's sampling rate.
    #[arg(long)]
    realtime: bool,
    /// Also write the full stream report as JSON.
    #[arg(long)]
    #[serde(skip)]
    report: Option<std::path::PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    recording: std::path::PathBuf,
    #[arg(long)]
    model: std::path::PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    signal: SignalArgs,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out_dir: std::path::PathBuf,
    /// Recordings per class.
    #[arg(long, default_value_t = 12)]
    subjects: usize,
    #[arg(long, default_value_t = 300.0)]
    duration_s: f64,
    #[command(flatten)]
    #[serde(flatten)]
    signal: SignalArgs,
    #[arg(long, default_value_t = 10.0)]
    alert_std: f64,
    #[arg(long, default_value_t = 40.0)]
    fatigue_std: f64,
    #[arg(long, default_value_t = 0.01)]
    outlier_rate: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "TP7")]
    channel: String,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments (exit 2).
    Usage(String),
    /// Unreadable or invalid data (exit 1).
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::TooManyFolds { .. } => CliError::Usage(e.to_string()),
            other => CliError::Data(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SelectChannel(a) => commands::select_channel(a),
        Command::Extract(a) => commands::extract(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Stream(a) => commands::stream(a),
        Command::Predict(a) => commands::predict(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("For more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
