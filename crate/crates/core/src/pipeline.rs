//! End-to-end query path: filter, minimize, retrieve, fuse, rank tubes.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filter::{filter_tube, FilterConfig};
use crate::minimizer::{
    exhaustive_minimize, greedy_minimize, pairwise_similarity, MinimizedQuery, MinimizerConfig,
    EXHAUSTIVE_MAX_FRAMES,
};
use crate::model::{Gallery, Tube, SELFSIM_CHANNEL};
use crate::rerank::{
    extract_final_images, rank_tubes, self_similarity_rerank, FinalRanking, RankedTubes,
    ResultMatrix,
};
use crate::retrieval::{retrieve_for_query, scorer_by_name, ImageScorer, QueryRow, RetrievalConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub filter: FilterConfig,
    pub minimizer: MinimizerConfig,
    pub retrieval: RetrievalConfig,
    pub selfsim_channel: String,
    pub selfsim_scorer: String,
    /// Use exhaustive minimization for tubes of at most 16 frames.
    pub oracle: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            minimizer: MinimizerConfig::default(),
            retrieval: RetrievalConfig::default(),
            selfsim_channel: SELFSIM_CHANNEL.to_string(),
            selfsim_scorer: "cosine".to_string(),
            oracle: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.minimizer.validate()?;
        self.retrieval.validate()?;
        scorer_by_name(&self.retrieval.scorer)?;
        scorer_by_name(&self.selfsim_scorer)?;
        Ok(())
    }
}

/// Wall time spent in each step of one query, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub filter: f64,
    pub minimize: f64,
    pub retrieval: f64,
    pub self_similarity: f64,
    pub tube_ranking: f64,
}

impl StageTimings {
    /// Cumulative time to produce the output of stage 1, 2 or 3.
    pub fn through_stage(&self, stage: usize) -> f64 {
        let base = self.filter + self.minimize + self.retrieval;
        match stage {
            1 => base,
            2 => base + self.self_similarity,
            _ => base + self.self_similarity + self.tube_ranking,
        }
    }

    pub fn add(&mut self, other: &StageTimings) {
        self.filter += other.filter;
        self.minimize += other.minimize;
        self.retrieval += other.retrieval;
        self.self_similarity += other.self_similarity;
        self.tube_ranking += other.tube_ranking;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub probe_tube_id: String,
    /// Frame indices dropped by the noise filter.
    pub removed_frames: Vec<u64>,
    /// Positions in `query` refer to the filtered tube.
    pub filtered_tube: Vec<u64>,
    pub query: MinimizedQuery,
    pub stage1: Vec<QueryRow>,
    pub result_matrix: ResultMatrix,
    pub ranked_tubes: RankedTubes,
    pub final_ranking: FinalRanking,
    #[serde(skip)]
    pub timings: StageTimings,
}

pub struct Pipeline {
    config: PipelineConfig,
    retrieval_scorer: Box<dyn ImageScorer>,
    selfsim_scorer: Box<dyn ImageScorer>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            retrieval_scorer: scorer_by_name(&config.retrieval.scorer)?,
            selfsim_scorer: scorer_by_name(&config.selfsim_scorer)?,
            config,
        })
    }

    /// Uses caller-provided scorers instead of the named ones.
    pub fn with_scorers(
        config: PipelineConfig,
        retrieval_scorer: Box<dyn ImageScorer>,
        selfsim_scorer: Box<dyn ImageScorer>,
    ) -> Result<Self> {
        config.filter.validate()?;
        config.minimizer.validate()?;
        config.retrieval.validate()?;
        Ok(Self {
            config,
            retrieval_scorer,
            selfsim_scorer,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn minimize(&self, tube: &Tube) -> Result<MinimizedQuery> {
        let sim = pairwise_similarity(tube, &self.config.minimizer.channel)?;
        if self.config.oracle && sim.size() <= EXHAUSTIVE_MAX_FRAMES {
            exhaustive_minimize(&sim, &self.config.minimizer)
        } else {
            greedy_minimize(&sim, &self.config.minimizer)
        }
    }

    pub fn run(&self, probe: &Tube, gallery: &Gallery) -> Result<QueryOutcome> {
        let cfg = &self.config;
        let mut timings = StageTimings::default();

        let clock = Instant::now();
        let filtered = filter_tube(probe, &cfg.filter)?;
        timings.filter = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let query = self.minimize(&filtered.kept)?;
        timings.minimize = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let stage1 = retrieve_for_query(
            &filtered.kept,
            &query,
            gallery,
            &cfg.retrieval,
            self.retrieval_scorer.as_ref(),
        )?;
        timings.retrieval = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let result_matrix = self_similarity_rerank(
            &stage1,
            &filtered.kept,
            gallery,
            &cfg.selfsim_channel,
            self.selfsim_scorer.as_ref(),
        )?;
        timings.self_similarity = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let ranked_tubes = rank_tubes(&result_matrix)?;
        let final_ranking = extract_final_images(&result_matrix, &ranked_tubes);
        timings.tube_ranking = clock.elapsed().as_secs_f64();

        Ok(QueryOutcome {
            probe_tube_id: probe.tube_id().to_string(),
            removed_frames: filtered.removed.iter().map(|f| f.frame_index).collect(),
            filtered_tube: filtered.kept.frames().iter().map(|f| f.frame_index).collect(),
            query,
            stage1,
            result_matrix,
            ranked_tubes,
            final_ranking,
            timings,
        })
    }
}
