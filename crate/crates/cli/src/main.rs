//! `tube-rank` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 invalid or
//! missing input data, 3 runtime failure (including failing to write output).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tube-rank", version, about = "Tube-based person re-identification ranking")]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic gallery file (all cameras, gallery camera first).
    Synth(SynthArgs),
    /// Drop noisy frames and report kept/removed counts per tube.
    Filter(FilterArgs),
    /// Select the key frames of one tube.
    Minimize(MinimizeArgs),
    /// Rank gallery tubes for each probe tube.
    Query(QueryArgs),
    /// Cross-validated CMC/mAP after each stage.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; JSON lines go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    identities: usize,
    #[arg(long, default_value_t = 2)]
    cameras: usize,
    /// Tubes per identity and camera.
    #[arg(long, default_value_t = 3)]
    tubes: usize,
    #[arg(long, default_value_t = 20)]
    min_frames: usize,
    #[arg(long, default_value_t = 40)]
    max_frames: usize,
    #[arg(long, default_value_t = 0.15)]
    noise_rate: f64,
    /// Appearance noise sigma.
    #[arg(long, default_value_t = 0.35)]
    sigma: f64,
    #[arg(long, default_value_t = 10)]
    distractor_pairs: usize,
}

#[derive(Args)]
struct InputArgs {
    /// Gallery file (JSON lines).
    #[arg(long)]
    gallery: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Only filter this tube.
    #[arg(long)]
    tube: Option<String>,
    #[arg(long, default_value_t = 0.5, value_parser = unit_closed)]
    q_min: f64,
    #[arg(long, default_value_t = 3.0, value_parser = non_negative)]
    mad_k: f64,
    #[arg(long, default_value = "pose")]
    channel: String,
    /// Also write the filtered tubes to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MinimizeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Tube to minimize (default: the first tube of the file).
    #[arg(long)]
    tube: Option<String>,
    #[arg(long, default_value_t = 0.4, value_parser = unit_open)]
    phi: f64,
    #[arg(long, default_value = "pose")]
    channel: String,
    /// Exhaustive minimization for tubes of at most 16 frames.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// Probe tubes file. Without it, tubes from the camera of the first
    /// record are the gallery and all other tubes are probes.
    #[arg(long)]
    probes: Option<PathBuf>,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    k: u32,
    /// Channel scored by first-stage retrieval.
    #[arg(long, default_value = "retrieval")]
    channel: String,
    #[arg(long, default_value = "cosine", value_parser = ["cosine", "euclidean"])]
    scorer: String,
    #[arg(long, default_value = "selfsim")]
    selfsim_channel: String,
    #[arg(long, default_value_t = 0.4, value_parser = unit_open)]
    phi: f64,
    #[arg(long, default_value = "pose")]
    pose_channel: String,
    #[arg(long, default_value_t = 0.5, value_parser = unit_closed)]
    q_min: f64,
    #[arg(long, default_value_t = 3.0, value_parser = non_negative)]
    mad_k: f64,
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Only run these probe tubes (repeatable).
    #[arg(long = "probe")]
    probe_ids: Vec<String>,
    /// Include stage-1 lists and the fused result matrix.
    #[arg(long)]
    emit_stages: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    max_rank: u32,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    folds: u32,
    /// Fraction of identities on the training side of each split.
    #[arg(long, default_value_t = 0.5, value_parser = unit_open)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(
        long,
        value_delimiter = ',',
        default_values_t = [1u8, 2, 3],
        value_parser = clap::value_parser!(u8).range(1..=3)
    )]
    stages: Vec<u8>,
    /// Write the CMC curves as CSV (rank,stage1,stage2,stage3).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Report mean wall time per query (makes output run-dependent).
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn unit_open(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

fn unit_closed(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be a finite number >= 0"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(n))
            .build_global()
        {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Filter(a) => commands::filter(a),
        Command::Minimize(a) => commands::minimize(a),
        Command::Query(a) => commands::query(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
