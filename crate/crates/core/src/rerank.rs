//! Second and third ranking stages.
//!
//! Stage two fuses each first-stage score with a self-similarity score
//! between the query frame and the candidate (equal-weight mean) and
//! re-sorts every row. The re-sorted rows form the result matrix `R`.
//!
//! Stage three ranks tubes by temporal correlation. An entry of `R` at rank
//! `r` weighs `alpha = 1 / r`; a tube weighs `beta = count / max_count`,
//! where `count` is the number of its frames anywhere in `R`. Each entry
//! contributes `tau = alpha * beta` to its tube and tubes are sorted by the
//! sum of their contributions.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameRecord, Gallery, Tube};
use crate::retrieval::{resolve_for, ImageScorer, QueryRow, ScoredImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedImage {
    pub tube_id: String,
    pub frame_index: u64,
    pub stage1_score: f64,
    pub selfsim_score: f64,
    /// Mean of the two scores above.
    pub score: f64,
    /// 1-based rank within the row after fusion.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub query_position: usize,
    pub query_frame_index: u64,
    pub images: Vec<FusedImage>,
}

/// One re-ranked row per minimized query frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMatrix {
    pub rows: Vec<ResultRow>,
}

impl ResultMatrix {
    pub fn entries(&self) -> impl Iterator<Item = &FusedImage> {
        self.rows.iter().flat_map(|r| r.images.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| r.images.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeScore {
    pub tube_id: String,
    pub score: f64,
    pub support: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTubes {
    pub tubes: Vec<TubeScore>,
}

/// The best image of each ranked tube, in tube order. `rank` is the
/// position in this list and `score` the image's fused score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRanking {
    pub images: Vec<ScoredImage>,
}

pub fn self_similarity_rerank(
    rows: &[QueryRow],
    query_tube: &Tube,
    gallery: &Gallery,
    channel: &str,
    scorer: &dyn ImageScorer,
) -> Result<ResultMatrix> {
    let query_frames = rows
        .iter()
        .map(|row| {
            if row.images.is_empty() {
                return Err(Error::Contract(format!(
                    "stage-1 row for query frame {} is empty",
                    row.query_frame_index
                )));
            }
            query_tube
                .frames()
                .get(row.query_position)
                .filter(|f| f.frame_index == row.query_frame_index)
                .ok_or_else(|| {
                    Error::Contract(format!(
                        "query frame {} is not at position {} of tube '{}'",
                        row.query_frame_index,
                        row.query_position,
                        query_tube.tube_id()
                    ))
                })
        })
        .collect::<Result<Vec<&FrameRecord>>>()?;
    let channel = resolve_for(channel, gallery, &query_frames)?;

    let rows = rows
        .par_iter()
        .zip(query_frames.par_iter())
        .map(|(row, &query_frame)| fuse_row(row, query_frame, gallery, channel, scorer))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResultMatrix { rows })
}

fn fuse_row(
    row: &QueryRow,
    query_frame: &FrameRecord,
    gallery: &Gallery,
    channel: &str,
    scorer: &dyn ImageScorer,
) -> Result<ResultRow> {
    let query = query_frame.embedding(channel).expect("resolved channel");
    let mut fused = row
        .images
        .iter()
        .map(|img| {
            let candidate = gallery.frame(&img.tube_id, img.frame_index).ok_or_else(|| {
                Error::Contract(format!(
                    "frame {} of tube '{}' is not in the gallery",
                    img.frame_index, img.tube_id
                ))
            })?;
            let selfsim = scorer
                .score(query, candidate.embedding(channel).expect("resolved channel"))
                .map_err(|e| {
                    Error::Value(format!(
                        "self-similarity of query frame {} against frame {} of '{}': {e}",
                        query_frame.frame_index, img.frame_index, img.tube_id
                    ))
                })?;
            Ok((img.rank, FusedImage {
                tube_id: img.tube_id.clone(),
                frame_index: img.frame_index,
                stage1_score: img.score,
                selfsim_score: selfsim,
                score: (img.score + selfsim) / 2.0,
                rank: 0,
            }))
        })
        .collect::<Result<Vec<(usize, FusedImage)>>>()?;

    // Equal fused scores keep their stage-1 order, which already encodes the
    // (tube_id, frame_index) tie-break.
    fused.sort_by(|(ra, a), (rb, b)| b.score.total_cmp(&a.score).then(ra.cmp(rb)));
    let images = fused
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut img))| {
            img.rank = i + 1;
            img
        })
        .collect();
    Ok(ResultRow {
        query_position: row.query_position,
        query_frame_index: row.query_frame_index,
        images,
    })
}

/// `1 / rank`.
pub fn image_weight(rank: usize) -> Result<f64> {
    if rank == 0 {
        return Err(Error::Contract("ranks start at 1".into()));
    }
    Ok(1.0 / rank as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeWeight {
    pub count: usize,
    pub beta: f64,
}

/// Per-tube entry counts in `R` and the normalized weight
/// `beta = count / max_count`.
pub fn tube_weights(matrix: &ResultMatrix) -> BTreeMap<String, TubeWeight> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for img in matrix.entries() {
        *counts.entry(img.tube_id.clone()).or_default() += 1;
    }
    let max = counts.values().copied().max().unwrap_or(1) as f64;
    counts
        .into_iter()
        .map(|(id, count)| {
            (id, TubeWeight {
                count,
                beta: count as f64 / max,
            })
        })
        .collect()
}

pub fn rank_tubes(matrix: &ResultMatrix) -> Result<RankedTubes> {
    let weights = tube_weights(matrix);
    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for img in matrix.entries() {
        let tau = image_weight(img.rank)? * weights[&img.tube_id].beta;
        *scores.entry(&img.tube_id).or_default() += tau;
    }
    let mut tubes: Vec<TubeScore> = scores
        .into_iter()
        .map(|(id, score)| {
            let w = weights[id];
            TubeScore {
                tube_id: id.to_string(),
                score,
                support: w.count,
                beta: w.beta,
            }
        })
        .collect();
    tubes.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.support.cmp(&a.support))
            .then_with(|| a.tube_id.cmp(&b.tube_id))
    });
    Ok(RankedTubes { tubes })
}

/// For each ranked tube, its entry of `R` with the highest fused score.
/// Ties go to the lower row, then the better rank.
pub fn extract_final_images(matrix: &ResultMatrix, ranked: &RankedTubes) -> FinalRanking {
    let mut best: BTreeMap<&str, &FusedImage> = BTreeMap::new();
    // Row-major scan, so keeping the first maximum honours the tie-break.
    for row in &matrix.rows {
        let mut by_rank: Vec<&FusedImage> = row.images.iter().collect();
        by_rank.sort_by_key(|img| img.rank);
        for img in by_rank {
            best.entry(&img.tube_id)
                .and_modify(|cur| {
                    if img.score > cur.score {
                        *cur = img;
                    }
                })
                .or_insert(img);
        }
    }
    let images = ranked
        .tubes
        .iter()
        .filter_map(|t| best.get(t.tube_id.as_str()))
        .enumerate()
        .map(|(i, img)| ScoredImage {
            tube_id: img.tube_id.clone(),
            frame_index: img.frame_index,
            score: img.score,
            rank: i + 1,
        })
        .collect();
    FinalRanking { images }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(tube: &str, frame: u64, score: f64, rank: usize) -> FusedImage {
        FusedImage {
            tube_id: tube.into(),
            frame_index: frame,
            stage1_score: score,
            selfsim_score: score,
            score,
            rank,
        }
    }

    fn matrix(rows: Vec<Vec<FusedImage>>) -> ResultMatrix {
        ResultMatrix {
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(i, images)| ResultRow {
                    query_position: i,
                    query_frame_index: i as u64,
                    images,
                })
                .collect(),
        }
    }

    #[test]
    fn alpha_is_reciprocal_rank() {
        assert_eq!(image_weight(1).unwrap(), 1.0);
        assert_eq!(image_weight(4).unwrap(), 0.25);
        assert_eq!(image_weight(20).unwrap(), 0.05);
        assert!(matches!(image_weight(0), Err(Error::Contract(_))));
    }

    #[test]
    fn beta_normalizes_by_best_supported_tube() {
        let mut row = Vec::new();
        let mut rank = 1;
        for (tube, n) in [("A", 6), ("B", 3), ("C", 3)] {
            for f in 0..n {
                row.push(entry(tube, f, 0.5, rank));
                rank += 1;
            }
        }
        let w = tube_weights(&matrix(vec![row]));
        assert_eq!(w["A"].beta, 1.0);
        assert_eq!(w["B"].beta, 0.5);
        assert_eq!(w["C"].beta, 0.5);
        assert_eq!(w["A"].count, 6);

        let single = tube_weights(&matrix(vec![vec![entry("Z", 0, 0.9, 1)]]));
        assert_eq!(single["Z"].beta, 1.0);
    }

    #[test]
    fn single_row_tube_scores() {
        let r = matrix(vec![vec![entry("A", 0, 0.9, 1), entry("B", 0, 0.8, 2), entry("A", 1, 0.7, 3)]]);
        let ranked = rank_tubes(&r).unwrap();
        assert_eq!(ranked.tubes[0].tube_id, "A");
        assert!((ranked.tubes[0].score - (1.0 + 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(ranked.tubes[1].tube_id, "B");
        assert!((ranked.tubes[1].score - 0.25).abs() < 1e-12);
        assert_eq!(ranked.tubes[1].support, 1);
    }

    #[test]
    fn mirror_placements_tie_on_tube_id() {
        let r = matrix(vec![
            vec![entry("B", 0, 0.9, 1), entry("A", 0, 0.8, 2)],
            vec![entry("A", 1, 0.9, 1), entry("B", 1, 0.8, 2)],
        ]);
        let ranked = rank_tubes(&r).unwrap();
        assert_eq!(ranked.tubes[0].score, ranked.tubes[1].score);
        assert_eq!(ranked.tubes[0].tube_id, "A");
    }

    #[test]
    fn final_image_is_highest_fused_entry() {
        let r = matrix(vec![
            vec![entry("A", 0, 0.6, 1), entry("B", 0, 0.5, 2)],
            vec![entry("A", 3, 0.8, 1), entry("B", 1, 0.5, 2)],
        ]);
        let ranked = rank_tubes(&r).unwrap();
        let fin = extract_final_images(&r, &ranked);
        assert_eq!(fin.images.len(), 2);
        assert_eq!((fin.images[0].tube_id.as_str(), fin.images[0].frame_index), ("A", 3));
        // B ties at 0.5 in both rows: the first row wins.
        assert_eq!(fin.images[1].frame_index, 0);
        assert_eq!(fin.images[1].rank, 2);
    }

    #[test]
    fn one_tube_only() {
        let r = matrix(vec![vec![entry("A", 0, 0.6, 1), entry("A", 1, 0.5, 2)]]);
        let ranked = rank_tubes(&r).unwrap();
        assert_eq!(ranked.tubes.len(), 1);
        assert_eq!(ranked.tubes[0].beta, 1.0);
        assert_eq!(extract_final_images(&r, &ranked).images.len(), 1);
    }
}
