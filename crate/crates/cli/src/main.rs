//! `ocugaze`: record calibration data, train and evaluate the gaze
//! classifier, run it over frame streams and serve the calibration UI.
//!
//! Exit codes: 1 for usage errors, 2 for unreadable or malformed files,
//! 3 when training diverges and 4 when no frame source is available.

mod commands;
mod serve;
mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ocugaze::config::Config;
use ocugaze::Error;

#[derive(Debug, Parser)]
#[command(name = "ocugaze", version, about = "Webcam point-of-gaze estimation")]
struct Cli {
    /// TOML configuration file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the calibration cycle over a frame source and append labelled instances.
    Record(commands::RecordArgs),
    /// Train a classifier and write the model file and its loss trace.
    Train(commands::TrainArgs),
    /// Print the classification report of a model on a dataset.
    Eval(commands::EvalArgs),
    /// Classify a frame stream, one JSON message per frame.
    Predict(commands::PredictArgs),
    /// Serve the calibration UI and the `/ws` session socket on localhost.
    Serve(serve::ServeArgs),
    /// Write a synthetic dataset around the reference feature rows.
    Synth(commands::SynthArgs),
    /// Write the train and test parts of a dataset to separate files.
    Split(commands::SplitArgs),
}

/// Frame source selection shared by `record`, `predict` and `serve`.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    /// Directory of numbered PGM/PPM frames.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Camera device index.
    #[arg(long)]
    camera: Option<u32>,
}

/// A failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const DIVERGED: u8 = 3;
    pub const DEVICE: u8 = 4;

    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: Self::USAGE, message: message.into() }
    }

    /// An error while reading or writing `path`, with the path in the message.
    pub fn at(path: &std::path::Path, e: Error) -> Self {
        let mut failure = Self::from(e);
        failure.message = format!("{}: {}", path.display(), failure.message);
        failure
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parameter(_) | Error::Precondition(_) => Self::USAGE,
            Error::Diverged { .. } => Self::DIVERGED,
            Error::DeviceUnavailable(_) => Self::DEVICE,
            _ => Self::DATA,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: Self::DATA, message: e.to_string() }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

fn load_config(path: Option<&PathBuf>) -> CliResult<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn run(cli: Cli) -> CliResult {
    let config = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Record(args) => commands::record(args, config),
        Command::Train(args) => commands::train(args, config),
        Command::Eval(args) => commands::eval(args),
        Command::Predict(args) => commands::predict(args, config),
        Command::Serve(args) => serve::serve(args, config),
        Command::Synth(args) => commands::synth(args),
        Command::Split(args) => commands::split(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Failure::USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
