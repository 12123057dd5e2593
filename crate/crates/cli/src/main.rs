//! `vad`: synthesize scenes, train and run exemplar detectors, and evaluate
//! score volumes or detections against ground truth.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use vad_core::annotations::{parse_detections, parse_ground_truth, write_detections_file, VideoBounds};
use vad_core::detector::{build_exemplars, detect_with_source, detection_records, read_model, write_model};
use vad_core::eval::{
    evaluate_detections, evaluate_volumes, sweep_thresholds, Criterion, EvalOptions, EvalReport, EvalVideo, ScoredVideo,
};
use vad_core::features::FeatureKind;
use vad_core::render::write_overlays;
use vad_core::synth::{write_scene, SceneSpec};
use vad_core::video::load_frame_sequence;
use vad_core::volume::{read_score_volume, write_score_volume};
use vad_core::Config;

#[derive(Parser, Debug)]
#[command(
    name = "vad",
    version,
    about = "Video anomaly detection: exemplar baselines and track/region-based evaluation"
)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable, applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads; 1 runs sequentially. Defaults to all cores.
    #[arg(long, global = true, env = "VAD_THREADS", value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic videos and ground truth from a scene spec.
    Synth(SynthArgs),
    /// Build an exemplar model from training videos.
    Train(TrainArgs),
    /// Score a test video against a model.
    Detect(DetectArgs),
    /// Evaluate score volumes or detections against ground truth.
    Eval(EvalArgs),
    /// Write overlay images of detections and ground truth.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene spec (TOML).
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// Output directory; one subdirectory per video.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Feature type: fg (foreground mask) or flow.
    #[arg(long, value_name = "KIND")]
    feature: Option<FeatureKind>,
    /// Training frame directory; repeatable.
    #[arg(long = "in", value_name = "DIR", required = true)]
    inputs: Vec<PathBuf>,
    /// Output model file.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Test frame directory.
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Output score volume (VADSV1).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write detected regions at --threshold to this CSV.
    #[arg(long, value_name = "FILE", requires = "threshold")]
    detections: Option<PathBuf>,
    /// Score threshold for --detections.
    #[arg(long, value_name = "X")]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Ground-truth CSV, one per test video, in the same order as the inputs.
    #[arg(long, value_name = "FILE")]
    truth: Vec<PathBuf>,
    /// Score volume per test video.
    #[arg(long, value_name = "FILE", conflicts_with = "detections")]
    volume: Vec<PathBuf>,
    /// Scored detections CSV per test video.
    #[arg(long, value_name = "FILE")]
    detections: Vec<PathBuf>,
    /// Frame count per test video (with --detections).
    #[arg(long, value_name = "N")]
    num_frames: Vec<usize>,
    /// Comma-separated criteria: track, region, frame, pixel.
    #[arg(long, value_delimiter = ',', default_value = "track,region,frame,pixel")]
    criteria: Vec<Criterion>,
    /// Report CSV; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-track detected fraction at every threshold.
    #[arg(long, value_name = "FILE")]
    track_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Frame directory.
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    volume: PathBuf,
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Pixels scoring above this are tinted.
    #[arg(long, value_name = "X")]
    threshold: f64,
    /// Output directory for the PNGs.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

/// Misuse detected after parsing; exits like a clap usage error.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for pair in &cli.overrides {
        config.set_pair(pair).map_err(|e| usage(format!("--set {pair}: {e}")))?;
    }
    config.validate()?;
    Ok(config)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = SceneSpec::load(&args.spec)?;
    let videos = spec.generate()?;
    write_scene(&videos, &args.out)?;
    for v in &videos {
        info!("{}: {} frames, {} tracks", v.name, v.frames.len(), v.tracks.len());
    }
    Ok(())
}

fn train(mut config: Config, args: &TrainArgs) -> Result<()> {
    if let Some(kind) = args.feature {
        config.feature = kind;
    }
    let videos = args
        .inputs
        .iter()
        .map(load_frame_sequence)
        .collect::<vad_core::Result<Vec<_>>>()?;
    let model = build_exemplars(&videos, &config)?;
    info!(
        "{} exemplars over {} regions (threshold {})",
        model.exemplar_count(),
        model.grid.len(),
        model.threshold()
    );
    write_model(&model, &args.model)?;
    Ok(())
}

fn detect(args: &DetectArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let seq = load_frame_sequence(&args.input)?;
    let volume = detect_with_source(&model, &seq, Some(&args.input))?;
    write_score_volume(&volume, &args.out)?;
    if let (Some(path), Some(threshold)) = (&args.detections, args.threshold) {
        let records = detection_records(&volume, threshold, model.config.connectivity);
        info!("{} detections above {threshold}", records.len());
        write_detections_file(path, &records)?;
    }
    Ok(())
}

fn write_report(report: &EvalReport, args: &EvalArgs) -> Result<()> {
    match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("{}: cannot create", path.display()))?;
            report.write_csv(BufWriter::new(file))?;
        }
        None => report.write_csv(io::stdout().lock())?,
    }
    if let Some(path) = &args.track_table {
        let file = File::create(path).with_context(|| format!("{}: cannot create", path.display()))?;
        report.write_track_csv(BufWriter::new(file))?;
    }
    for (c, auc) in &report.aucs {
        info!("{c}: AUC (FPR <= 1) = {auc:.4}");
    }
    Ok(())
}

fn eval(config: &Config, args: &EvalArgs) -> Result<()> {
    if args.truth.is_empty() {
        return Err(usage("eval needs at least one --truth file"));
    }
    let inputs = if args.detections.is_empty() {
        &args.volume
    } else {
        &args.detections
    };
    if inputs.is_empty() {
        return Err(usage("eval needs --volume or --detections inputs"));
    }
    if inputs.len() != args.truth.len() {
        return Err(usage(format!(
            "{} --truth files but {} score inputs; give one of each per test video",
            args.truth.len(),
            inputs.len()
        )));
    }
    let opts = EvalOptions {
        alpha: config.alpha,
        beta: config.beta,
        connectivity: config.connectivity,
        criteria: args.criteria.clone(),
    };

    let report = if args.detections.is_empty() {
        let volumes = args
            .volume
            .iter()
            .map(read_score_volume)
            .collect::<vad_core::Result<Vec<_>>>()?;
        let truths = args
            .truth
            .iter()
            .zip(&volumes)
            .map(|(path, v)| {
                let bounds = VideoBounds {
                    width: v.width(),
                    height: v.height(),
                    num_frames: v.num_frames(),
                };
                EvalVideo::new(parse_ground_truth(path, Some(bounds))?, v.num_frames())
            })
            .collect::<vad_core::Result<Vec<_>>>()?;
        let refs: Vec<_> = volumes.iter().collect();
        let thresholds = match &config.thresholds {
            Some(t) => t.clone(),
            None => sweep_thresholds(&refs, config.sweep_points)?,
        };
        let scored: Vec<ScoredVideo> = truths
            .iter()
            .zip(&volumes)
            .map(|(truth, volume)| ScoredVideo { truth, volume })
            .collect();
        evaluate_volumes(&scored, &thresholds, &opts)?
    } else {
        if args.num_frames.len() != args.detections.len() {
            return Err(usage("give one --num-frames per --detections file"));
        }
        let truths = args
            .truth
            .iter()
            .zip(&args.num_frames)
            .map(|(path, &n)| EvalVideo::new(parse_ground_truth(path, None)?, n))
            .collect::<vad_core::Result<Vec<_>>>()?;
        let records = args
            .detections
            .iter()
            .map(parse_detections)
            .collect::<vad_core::Result<Vec<_>>>()?;
        evaluate_detections(&truths, &records, &opts)?
    };
    write_report(&report, args)
}

fn render(args: &RenderArgs) -> Result<()> {
    let seq = load_frame_sequence(&args.input)?;
    let volume = read_score_volume(&args.volume)?;
    let tracks = match &args.truth {
        Some(path) => {
            let bounds = VideoBounds {
                width: seq.width(),
                height: seq.height(),
                num_frames: seq.len(),
            };
            parse_ground_truth(path, Some(bounds))?
        }
        None => Vec::new(),
    };
    write_overlays(&seq, &volume, &tracks, args.threshold, &args.out)?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(config, a),
        Command::Detect(a) => detect(a),
        Command::Eval(a) => eval(&config, a),
        Command::Render(a) => render(a),
    }
}

#[cfg(feature = "parallel")]
fn run_with_threads(threads: Option<usize>, f: impl FnOnce() -> Result<()> + Send) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("cannot start worker threads")?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn run_with_threads(threads: Option<usize>, f: impl FnOnce() -> Result<()> + Send) -> Result<()> {
    if threads.is_some_and(|n| n > 1) {
        log::warn!("built without parallel support; running on one thread");
    }
    f()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    match run_with_threads(cli.threads, || dispatch(&cli)) {
        Ok(()) => {
            let _ = io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            // library errors already embed their cause in the message
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
