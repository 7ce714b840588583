//! First-stage per-image retrieval.
//!
//! Every gallery frame is scored against a query frame by an [`ImageScorer`]
//! and the best `k` are kept. Scoring is exact; galleries of a few hundred
//! tubes do not need an approximate index.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimizer::MinimizedQuery;
use crate::model::{FrameRecord, Gallery, Tube, RETRIEVAL_CHANNEL};
use crate::similarity::{normalized, resolve_channel, unit_cosine};

/// Scores a (query, candidate) embedding pair in [0, 1], higher meaning more
/// similar. Implementations must be deterministic and safe to call from
/// several threads at once.
pub trait ImageScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, query: &[f32], candidate: &[f32]) -> Result<f64>;
}

/// `(1 + cos) / 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CosineScorer;

impl ImageScorer for CosineScorer {
    fn name(&self) -> &str {
        "cosine"
    }

    fn score(&self, query: &[f32], candidate: &[f32]) -> Result<f64> {
        unit_cosine(query, candidate)
    }
}

/// `1 - d / 2` where `d` is the distance between the unit-normalized inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct EuclideanScorer;

impl ImageScorer for EuclideanScorer {
    fn name(&self) -> &str {
        "euclidean"
    }

    fn score(&self, query: &[f32], candidate: &[f32]) -> Result<f64> {
        if query.len() != candidate.len() {
            return Err(Error::Value(format!(
                "dimension mismatch: {} vs {}",
                query.len(),
                candidate.len()
            )));
        }
        let (a, b) = (normalized(query)?, normalized(candidate)?);
        let dist = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        Ok((1.0 - dist / 2.0).clamp(0.0, 1.0))
    }
}

pub const SCORER_NAMES: &[&str] = &["cosine", "euclidean"];

pub fn scorer_by_name(name: &str) -> Result<Box<dyn ImageScorer>> {
    match name {
        "cosine" => Ok(Box::new(CosineScorer)),
        "euclidean" => Ok(Box::new(EuclideanScorer)),
        other => Err(Error::Config(format!(
            "unknown scorer '{other}' (expected one of {})",
            SCORER_NAMES.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredImage {
    pub tube_id: String,
    pub frame_index: u64,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k: usize,
    pub channel: String,
    pub scorer: String,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 20,
            channel: RETRIEVAL_CHANNEL.to_string(),
            scorer: "cosine".to_string(),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ranked list produced for one frame of the minimized query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    /// Position of the query frame within the (filtered) query tube.
    pub query_position: usize,
    pub query_frame_index: u64,
    pub images: Vec<ScoredImage>,
}

/// Total order used by every ranked list: score descending, then tube id
/// and frame index ascending.
pub fn ranking_order(a: (f64, &str, u64), b: (f64, &str, u64)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| a.1.cmp(b.1))
        .then(a.2.cmp(&b.2))
}

/// Resolves the channel to score for `query_frames` against `gallery`.
pub(crate) fn resolve_for<'a>(
    preferred: &'a str,
    gallery: &'a Gallery,
    query_frames: &'a [&'a FrameRecord],
) -> Result<&'a str> {
    resolve_channel(
        preferred,
        gallery.frames().chain(query_frames.iter().copied()),
    )
}

pub fn retrieve_top_k(
    query_frame: &FrameRecord,
    gallery: &Gallery,
    cfg: &RetrievalConfig,
    scorer: &dyn ImageScorer,
) -> Result<Vec<ScoredImage>> {
    cfg.validate()?;
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let query_frames = [query_frame];
    let channel = resolve_for(&cfg.channel, gallery, &query_frames)?;
    top_k_on_channel(query_frame, gallery, channel, cfg.k, scorer)
}

fn top_k_on_channel(
    query_frame: &FrameRecord,
    gallery: &Gallery,
    channel: &str,
    k: usize,
    scorer: &dyn ImageScorer,
) -> Result<Vec<ScoredImage>> {
    let query = query_frame.embedding(channel).expect("resolved channel");
    let dim = gallery.channel_dims()[channel];
    if query.len() != dim {
        return Err(Error::Value(format!(
            "query frame {} of tube '{}': channel '{channel}' has dimension {} but the gallery uses {dim}",
            query_frame.frame_index,
            query_frame.tube_id,
            query.len()
        )));
    }

    let candidates: Vec<&FrameRecord> = gallery.frames().collect();
    let mut scored: Vec<(f64, &FrameRecord)> = candidates
        .par_iter()
        .map(|&frame| {
            let emb = frame.embedding(channel).expect("resolved channel");
            scorer.score(query, emb).map(|s| (s, frame)).map_err(|e| {
                Error::Value(format!(
                    "scoring query frame {} of '{}' against frame {} of '{}': {e}",
                    query_frame.frame_index, query_frame.tube_id, frame.frame_index, frame.tube_id
                ))
            })
        })
        .collect::<Result<_>>()?;

    let cmp = |a: &(f64, &FrameRecord), b: &(f64, &FrameRecord)| {
        ranking_order(
            (a.0, &a.1.tube_id, a.1.frame_index),
            (b.0, &b.1.tube_id, b.1.frame_index),
        )
    };
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);

    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (score, frame))| ScoredImage {
            tube_id: frame.tube_id.clone(),
            frame_index: frame.frame_index,
            score,
            rank: i + 1,
        })
        .collect())
}

/// One ranked list per selected frame of `query`, in selection order.
pub fn retrieve_for_query(
    tube: &Tube,
    query: &MinimizedQuery,
    gallery: &Gallery,
    cfg: &RetrievalConfig,
    scorer: &dyn ImageScorer,
) -> Result<Vec<QueryRow>> {
    cfg.validate()?;
    if query.selected.is_empty() {
        return Err(Error::Contract("minimized query is empty".into()));
    }
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let frames: Vec<&FrameRecord> = query
        .selected
        .iter()
        .map(|&p| {
            tube.frames().get(p).ok_or_else(|| {
                Error::Contract(format!(
                    "selected position {p} out of range for tube '{}'",
                    tube.tube_id()
                ))
            })
        })
        .collect::<Result<_>>()?;
    let channel = resolve_for(&cfg.channel, gallery, &frames)?;

    query
        .selected
        .par_iter()
        .zip(frames.par_iter())
        .map(|(&position, &frame)| {
            Ok(QueryRow {
                query_position: position,
                query_frame_index: frame.frame_index,
                images: top_k_on_channel(frame, gallery, channel, cfg.k, scorer)?,
            })
        })
        .collect()
}
