//! Batch subcommands: synth, split, train, eval, predict and record.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use ocugaze::config::Config;
use ocugaze::dataset::{self, LabeledInstance, SessionMetadata, SplitSpec, SynthNoise};
use ocugaze::face_detect::Cascade;
use ocugaze::metrics::ClassificationReport;
use ocugaze::nn::{self, Network};
use ocugaze::pipeline::{FeatureExtractor, FrameSource, Pipeline};
use ocugaze::session::{FrameEvent, Inbound, Outbound, RecordedInstance, SessionState};
use ocugaze::GazeClass;

use crate::{source, CliResult, Failure, SourceArgs};

/// Train/test partition options shared by `train`, `eval` and `split`.
#[derive(Debug, Clone, Args)]
pub struct SplitOpts {
    /// Seed of the stratified shuffle.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Share of each class kept for training.
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
}

impl SplitOpts {
    fn spec(&self, balanced: bool) -> SplitSpec {
        SplitSpec { train_fraction: self.train_fraction, seed: self.split_seed, balanced }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    per_class: usize,
    /// `default` for the standard noise levels, or a factor scaling both of them.
    #[arg(long, default_value = "default")]
    sigma: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_sigma(text: &str) -> CliResult<SynthNoise> {
    if text == "default" {
        return Ok(SynthNoise::default());
    }
    match text.parse::<f64>() {
        Ok(f) if f.is_finite() && f >= 0.0 => Ok(SynthNoise::scaled(f)),
        _ => Err(Failure::usage(format!("--sigma expects `default` or a non-negative number, got `{text}`"))),
    }
}

pub fn synth(args: SynthArgs) -> CliResult {
    let noise = parse_sigma(&args.sigma)?;
    let instances = dataset::synthesize(args.per_class, noise, args.seed)?;
    dataset::write_csv(&args.out, &instances).map_err(|e| Failure::at(&args.out, e))?;
    println!("wrote {} instances to {}", instances.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
    /// Equalize per-class test support; surplus rows go to training.
    #[arg(long)]
    balanced: bool,
    #[command(flatten)]
    split: SplitOpts,
}

pub fn split(args: SplitArgs) -> CliResult {
    let instances = dataset::read_csv(&args.data).map_err(|e| Failure::at(&args.data, e))?;
    let (train, test) = dataset::split(&instances, &args.split.spec(args.balanced))?;
    dataset::write_csv(&args.train_out, &train).map_err(|e| Failure::at(&args.train_out, e))?;
    dataset::write_csv(&args.test_out, &test).map_err(|e| Failure::at(&args.test_out, e))?;
    println!("train {} rows -> {}", train.len(), args.train_out.display());
    println!("test {} rows -> {}", test.len(), args.test_out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Initialization and shuffling seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Train on every row instead of holding out the test part.
    #[arg(long)]
    no_split: bool,
    #[command(flatten)]
    split: SplitOpts,
}

/// Loss trace written next to a model: `model.json` gives `model.loss.csv`.
pub fn loss_trace_path(model: &Path) -> PathBuf {
    model.with_extension("loss.csv")
}

pub fn train(args: TrainArgs, config: Config) -> CliResult {
    let mut training = config.training.clone();
    if let Some(seed) = args.seed {
        training.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        training.epochs = epochs;
    }
    let instances = dataset::read_csv(&args.data).map_err(|e| Failure::at(&args.data, e))?;
    let rows = if args.no_split { instances } else { dataset::split(&instances, &args.split.spec(false))?.0 };
    let (features, labels) = dataset::features_and_labels(&rows);
    let outcome = nn::train(&features, &labels, &training)?;
    outcome.network.save(&args.model).map_err(|e| Failure::at(&args.model, e))?;

    let mut trace = String::from("epoch,loss\n");
    for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
        writeln!(trace, "{},{}", epoch + 1, loss).expect("writing to a String");
    }
    let trace_path = loss_trace_path(&args.model);
    std::fs::write(&trace_path, trace)?;

    let final_loss = outcome.loss_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained on {} rows for {} epochs, final loss {final_loss:.4}; model -> {}, loss trace -> {}",
        rows.len(),
        training.epochs,
        args.model.display(),
        trace_path.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Evaluate on a test part with equal support per class.
    #[arg(long, conflicts_with = "all")]
    balanced: bool,
    /// Evaluate on every row instead of the held-out test part.
    #[arg(long)]
    all: bool,
    /// Where to write the report and confusion matrix as JSON
    /// (default: the model path with a `.confusion.json` extension).
    #[arg(long)]
    confusion: Option<PathBuf>,
    #[command(flatten)]
    split: SplitOpts,
}

pub fn evaluate(network: &Network, rows: &[LabeledInstance]) -> CliResult<ClassificationReport> {
    let truth: Vec<GazeClass> = rows.iter().map(|r| r.label).collect();
    let predicted: Vec<GazeClass> = rows.iter().map(|r| network.predict(&r.features).class).collect();
    Ok(ocugaze::metrics::report(&truth, &predicted)?)
}

pub fn eval(args: EvalArgs) -> CliResult {
    let network = Network::load(&args.model).map_err(|e| Failure::at(&args.model, e))?;
    let instances = dataset::read_csv(&args.data).map_err(|e| Failure::at(&args.data, e))?;
    let rows = if args.all { instances } else { dataset::split(&instances, &args.split.spec(args.balanced))?.1 };
    if rows.is_empty() {
        return Err(Failure::usage("the evaluation set is empty"));
    }
    let report = evaluate(&network, &rows)?;
    print!("{report}");
    let path = args.confusion.unwrap_or_else(|| args.model.with_extension("confusion.json"));
    std::fs::write(&path, report.to_json() + "\n")?;
    println!("\nreport and confusion matrix -> {}", path.display());
    Ok(())
}

fn load_cascade(config: &Config) -> CliResult<Cascade> {
    Ok(match &config.cascade {
        Some(path) => Cascade::load(path).map_err(|e| Failure::at(path, e))?,
        None => Cascade::frontal_face(),
    })
}

pub fn build_pipeline(config: &Config, model: &Path) -> CliResult<Pipeline> {
    let network = Network::load(model).map_err(|e| Failure::at(model, e))?;
    Ok(Pipeline::new(load_cascade(config)?, network, config)?)
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    source: SourceArgs,
    /// Majority-vote smoothing window in frames; overrides the configuration.
    #[arg(long)]
    window: Option<usize>,
}

/// Every frame is processed in order; a directory is never dropped from.
pub fn predict(args: PredictArgs, mut config: Config) -> CliResult {
    if let Some(window) = args.window {
        config.smoothing_window = window;
    }
    let mut source = source::open(&args.source)?;
    let mut pipeline = build_pipeline(&config, &args.model)?;
    let mut out = std::io::stdout().lock();
    while let Some(frame) = source.next_frame() {
        let outcome = pipeline.process_frame(&frame?);
        let message = match FrameEvent::from(&outcome) {
            FrameEvent::Predicted { class, confidences, smoothed, .. } => {
                Outbound::Prediction { class, confidences, smoothed }
            }
            FrameEvent::Dropped(reason) => Outbound::Drop { reason },
            FrameEvent::Features(_) => unreachable!("the pipeline always classifies"),
        };
        match writeln!(out, "{}", message.to_json()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => break,
            result => result?,
        }
    }
    let stats = pipeline.stats();
    eprintln!(
        "{} frames, {} dropped, {:.2} ms mean per frame",
        stats.frames_seen,
        stats.dropped.total(),
        stats.end_to_end.mean_ms()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// Dataset CSV to append to; its session sidecar is updated too.
    #[arg(long)]
    out: PathBuf,
    /// Dwell per target in seconds; overrides the configuration.
    #[arg(long)]
    target_seconds: Option<f64>,
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value = "anonymous")]
    subject: String,
    /// Defaults to `session-<n>` after the sessions already in the sidecar.
    #[arg(long)]
    session_id: Option<String>,
}

/// Frames are timestamped at the configured frame rate, so a directory
/// replays exactly as a camera running at that rate would have captured it.
pub fn record(args: RecordArgs, config: Config) -> CliResult {
    let mut source = source::open(&args.source)?;
    let mut extractor = FeatureExtractor::new(load_cascade(&config)?, &config)?;
    let mut session = SessionState::new(config.session)?;
    let frame_ms = 1000.0 / config.session.frame_rate;
    for message in session.handle(&Inbound::StartCalibration { dwell_s: args.target_seconds }, 0)? {
        if let Outbound::Target { class } = message {
            log::info!("target {class} at 0 ms");
        }
    }

    let mut frames = 0u64;
    let mut finished = false;
    while let Some(frame) = source.next_frame() {
        let frame = frame?;
        let now_ms = (frames as f64 * frame_ms).round() as u64;
        frames += 1;
        let event = match extractor.extract(&frame) {
            Ok(features) => FrameEvent::Features(features),
            Err(reason) => FrameEvent::Dropped(reason),
        };
        for message in session.tick(&event, now_ms) {
            match message {
                Outbound::Target { class } => log::info!("target {class} at {now_ms} ms"),
                Outbound::Stopped { .. } => finished = true,
                _ => {}
            }
        }
        if finished {
            break;
        }
    }
    if !finished {
        log::warn!("frames ran out after {frames} frames, before the last target finished");
    }

    let recorded = session.take_recorded();
    if recorded.is_empty() {
        return Err(Failure { code: Failure::DATA, message: "no instances were captured".into() });
    }
    let meta = save_recording(&args.out, &recorded, args.session_id, &args.subject, config.session.frame_rate)?;
    let labels: BTreeSet<u8> = recorded.iter().map(|r| r.instance.label.label()).collect();
    println!(
        "{}: appended {} instances (rows {}..{}) covering classes {:?} to {}",
        meta.session_id,
        meta.rows,
        meta.first_row,
        meta.first_row + meta.rows - 1,
        labels,
        args.out.display()
    );
    Ok(())
}

/// Appends a calibration to `out`. Without an explicit id the session is
/// named `session-<n>` after those already recorded there.
pub fn save_recording(
    out: &Path,
    recorded: &[RecordedInstance],
    session_id: Option<String>,
    subject: &str,
    frame_rate: f64,
) -> CliResult<SessionMetadata> {
    let instances: Vec<LabeledInstance> = recorded.iter().map(|r| r.instance).collect();
    let timestamps: Vec<u64> = recorded.iter().map(|r| r.timestamp_ms).collect();
    let session_id = match session_id {
        Some(id) => id,
        None => format!("session-{}", dataset::read_sessions(out)?.len() + 1),
    };
    Ok(dataset::append_session(out, &instances, &timestamps, &session_id, subject, frame_rate)?)
}
