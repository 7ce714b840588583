use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use tube_rank::{
    filter_tube, generate_synthetic, load_gallery, run_benchmark, write_tubes, Error,
    EvalConfig, FilterConfig, Gallery, MinimizerConfig, Pipeline, PipelineConfig, QueryOutcome,
    RetrievalConfig, SynthConfig, Tube,
};

use crate::{EvalArgs, FilterArgs, MinimizeArgs, PipelineArgs, QueryArgs, SynthArgs};

pub struct CliError {
    pub code: u8,
    pub message: String,
}

type CliResult<T = ()> = Result<T, CliError>;

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 1,
            Error::Parse { .. }
            | Error::Schema { .. }
            | Error::Value(_)
            | Error::Validation(_)
            | Error::EmptyQuery(_)
            | Error::EmptyGallery
            | Error::Io { .. } => 2,
            Error::Contract(_) | Error::Size { .. } => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn data_error(message: String) -> CliError {
    CliError { code: 2, message }
}

fn write_failure(path: &str, e: impl std::fmt::Display) -> CliError {
    CliError {
        code: 3,
        message: format!("cannot write {path}: {e}"),
    }
}

/// Writes `text` to `out`, or to stdout when `out` is `None`.
fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| write_failure(&path.display().to_string(), e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|e| write_failure("stdout", e))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

fn write_tube_file(out: Option<&Path>, tubes: &[&Tube]) -> CliResult {
    let name = out.map_or("stdout".to_string(), |p| p.display().to_string());
    let result = match out {
        Some(path) => File::create(path).and_then(|f| write_tubes(BufWriter::new(f), tubes.iter().copied())),
        None => write_tubes(BufWriter::new(std::io::stdout().lock()), tubes.iter().copied()),
    };
    result.map_err(|e| write_failure(&name, e))
}

pub fn synth(a: SynthArgs) -> CliResult {
    let cfg = SynthConfig {
        seed: a.seed,
        n_identities: a.identities,
        n_cameras: a.cameras,
        tubes_per_identity_per_camera: a.tubes,
        frames_per_tube: [a.min_frames, a.max_frames],
        noise_frame_rate: a.noise_rate,
        appearance_noise_sigma: a.sigma,
        distractor_pairs: a.distractor_pairs,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg)?;
    let tubes: Vec<&Tube> = data.gallery.tubes().iter().chain(&data.probes).collect();
    write_tube_file(a.out.as_deref(), &tubes)?;
    if a.out.is_some() {
        #[derive(Serialize)]
        struct Summary {
            tubes: usize,
            frames: usize,
            gallery_tubes: usize,
            probe_tubes: usize,
            corrupted_frames: usize,
        }
        emit(
            None,
            &to_json(&Summary {
                tubes: tubes.len(),
                frames: tubes.iter().map(|t| t.len()).sum(),
                gallery_tubes: data.gallery.len(),
                probe_tubes: data.probes.len(),
                corrupted_frames: data.corrupted.len(),
            }),
        )?;
    }
    Ok(())
}

fn find_tube<'a>(gallery: &'a Gallery, id: &str) -> CliResult<&'a Tube> {
    gallery
        .tube(id)
        .ok_or_else(|| data_error(format!("no tube '{id}' in the gallery file")))
}

pub fn filter(a: FilterArgs) -> CliResult {
    let cfg = FilterConfig {
        q_min: a.q_min,
        mad_k: a.mad_k,
        channel: a.channel,
    };
    cfg.validate()?;
    let gallery = load_gallery(&a.input.gallery)?;
    let tubes: Vec<&Tube> = match &a.tube {
        Some(id) => vec![find_tube(&gallery, id)?],
        None => gallery.tubes().iter().collect(),
    };

    #[derive(Serialize)]
    struct TubeReport {
        tube_id: String,
        kept: usize,
        removed: usize,
        removed_frames: Vec<u64>,
    }
    #[derive(Serialize)]
    struct Report {
        kept: usize,
        removed: usize,
        emptied_tubes: Vec<String>,
        tubes: Vec<TubeReport>,
    }
    let mut report = Report {
        kept: 0,
        removed: 0,
        emptied_tubes: Vec::new(),
        tubes: Vec::new(),
    };
    let mut kept_tubes = Vec::new();
    for tube in tubes {
        let (kept, removed_frames) = match filter_tube(tube, &cfg) {
            Ok(outcome) => {
                let removed = outcome.removed.iter().map(|f| f.frame_index).collect();
                let n = outcome.kept.len();
                kept_tubes.push(outcome.kept);
                (n, removed)
            }
            // A fully noisy tube is reported, not fatal, when filtering a whole file.
            Err(Error::EmptyQuery(_)) if a.tube.is_none() => {
                report.emptied_tubes.push(tube.tube_id().to_string());
                (0, tube.frames().iter().map(|f| f.frame_index).collect())
            }
            Err(e) => return Err(e.into()),
        };
        report.kept += kept;
        report.removed += tube.len() - kept;
        report.tubes.push(TubeReport {
            tube_id: tube.tube_id().to_string(),
            kept,
            removed: tube.len() - kept,
            removed_frames,
        });
    }
    if let Some(out) = &a.out {
        write_tube_file(Some(out), &kept_tubes.iter().collect::<Vec<_>>())?;
    }
    emit(None, &to_json(&report))
}

pub fn minimize(a: MinimizeArgs) -> CliResult {
    let cfg = PipelineConfig {
        minimizer: MinimizerConfig {
            phi: a.phi,
            channel: a.channel,
        },
        oracle: a.oracle,
        ..PipelineConfig::default()
    };
    let pipeline = Pipeline::new(cfg)?;
    let gallery = load_gallery(&a.input.gallery)?;
    let tube = match &a.tube {
        Some(id) => find_tube(&gallery, id)?,
        None => gallery.tubes().first().ok_or(Error::EmptyGallery)?,
    };
    let query = pipeline.minimize(tube)?;

    #[derive(Serialize)]
    struct Report<'a> {
        tube_id: &'a str,
        #[serde(flatten)]
        query: &'a tube_rank::MinimizedQuery,
        selected_frames: Vec<u64>,
    }
    emit(
        None,
        &to_json(&Report {
            tube_id: tube.tube_id(),
            selected_frames: query.selected.iter().map(|&p| tube.frames()[p].frame_index).collect(),
            query: &query,
        }),
    )
}

fn pipeline_config(a: &PipelineArgs) -> PipelineConfig {
    PipelineConfig {
        filter: FilterConfig {
            q_min: a.q_min,
            mad_k: a.mad_k,
            channel: a.pose_channel.clone(),
        },
        minimizer: MinimizerConfig {
            phi: a.phi,
            channel: a.pose_channel.clone(),
        },
        retrieval: RetrievalConfig {
            k: a.k as usize,
            channel: a.channel.clone(),
            scorer: a.scorer.clone(),
        },
        selfsim_channel: a.selfsim_channel.clone(),
        selfsim_scorer: a.scorer.clone(),
        oracle: a.oracle,
    }
}

/// Gallery and probe tubes. Without a probe file the tubes of the first
/// record's camera form the gallery and every other tube is a probe.
fn load_inputs(gallery: &Path, probes: Option<&Path>) -> CliResult<(Gallery, Vec<Tube>)> {
    let all = load_gallery(gallery)?;
    if let Some(path) = probes {
        return Ok((all, load_gallery(path)?.into_tubes()));
    }
    let camera = all
        .tubes()
        .first()
        .ok_or(Error::EmptyGallery)?
        .camera_id()
        .to_string();
    let (gallery, probes) = all.split_by_camera(&camera);
    if probes.is_empty() {
        return Err(data_error(format!(
            "every tube comes from camera '{camera}'; pass --probes or use a file with several cameras"
        )));
    }
    Ok((gallery, probes.into_tubes()))
}

pub fn query(a: QueryArgs) -> CliResult {
    let pipeline = Pipeline::new(pipeline_config(&a.pipeline))?;
    let (gallery, mut probes) = load_inputs(&a.input.gallery, a.pipeline.probes.as_deref())?;
    if !a.probe_ids.is_empty() {
        if let Some(missing) = a
            .probe_ids
            .iter()
            .find(|id| !probes.iter().any(|t| t.tube_id() == id.as_str()))
        {
            return Err(data_error(format!("no probe tube '{missing}'")));
        }
        probes.retain(|t| a.probe_ids.iter().any(|id| id == t.tube_id()));
    }

    #[derive(Serialize)]
    struct Summary<'a> {
        probe_tube_id: &'a str,
        removed_frames: &'a [u64],
        filtered_tube: &'a [u64],
        query: &'a tube_rank::MinimizedQuery,
        ranked_tubes: &'a tube_rank::RankedTubes,
        final_ranking: &'a tube_rank::FinalRanking,
    }
    let mut text = String::new();
    for probe in &probes {
        let outcome: QueryOutcome = pipeline.run(probe, &gallery)?;
        let line = if a.emit_stages {
            serde_json::to_string(&outcome)
        } else {
            serde_json::to_string(&Summary {
                probe_tube_id: &outcome.probe_tube_id,
                removed_frames: &outcome.removed_frames,
                filtered_tube: &outcome.filtered_tube,
                query: &outcome.query,
                ranked_tubes: &outcome.ranked_tubes,
                final_ranking: &outcome.final_ranking,
            })
        };
        text.push_str(&line.expect("serializable outcome"));
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)
}

pub fn eval(a: EvalArgs) -> CliResult {
    let pipeline = Pipeline::new(pipeline_config(&a.pipeline))?;
    let cfg = EvalConfig {
        max_rank: a.max_rank as usize,
        folds: a.folds as usize,
        split_fraction: a.split,
        seed: a.seed,
    };
    cfg.validate()?;
    let (gallery, probes) = load_inputs(&a.input.gallery, a.pipeline.probes.as_deref())?;
    let stages: Vec<usize> = a.stages.iter().map(|&s| usize::from(s)).collect();
    let mut report = run_benchmark(&gallery, &probes, &pipeline, &cfg, &stages)?;
    if !a.timings {
        report.timing = None;
    }
    if let Some(path) = &a.csv {
        std::fs::write(path, report.cmc_csv()).map_err(|e| write_failure(&path.display().to_string(), e))?;
    }
    emit(a.out.as_deref(), &to_json(&report))
}
