//! Tube-based person re-identification.
//!
//! A query tube (the per-frame embeddings of one tracked person) is cleaned
//! of noisy frames, reduced to a few pose-diverse key frames and matched
//! against a gallery of tubes through three stages:
//!
//! 1. per-image retrieval of the top `k` gallery frames for each key frame,
//! 2. fusion with a self-similarity score and re-sorting,
//! 3. tube ranking by temporal correlation of the retrieved frames.
//!
//! [`evaluation`] scores the identity ranking after each stage with CMC and
//! mAP over identity-disjoint folds, and [`synth`] generates seeded galleries
//! for desk-scale experiments.

pub mod error;
pub mod evaluation;
pub mod filter;
pub mod io;
pub mod minimizer;
pub mod model;
pub mod pipeline;
pub mod rerank;
pub mod retrieval;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
pub use evaluation::{
    cmc_curve, mean_ap, run_benchmark, split_folds, stage_identities, BenchmarkReport, CmcCurve,
    EvalConfig, Fold, ProbeResult,
};
pub use filter::{filter_tube, outlier_filter, quality_filter, FilterConfig, FilterOutcome};
pub use io::{load_gallery, parse_frame_record, read_gallery, save_gallery, write_gallery, write_tubes};
pub use minimizer::{
    exhaustive_minimize, greedy_minimize, pairwise_similarity, query_energy, EnergyBreakdown,
    MinimizedQuery, MinimizerConfig, SimilarityMatrix,
};
pub use model::{
    FrameKey, FrameRecord, Gallery, Tube, POSE_CHANNEL, RETRIEVAL_CHANNEL, SELFSIM_CHANNEL,
};
pub use pipeline::{Pipeline, PipelineConfig, QueryOutcome, StageTimings};
pub use rerank::{
    extract_final_images, image_weight, rank_tubes, self_similarity_rerank, tube_weights,
    FinalRanking, FusedImage, RankedTubes, ResultMatrix, ResultRow, TubeScore,
};
pub use retrieval::{
    retrieve_for_query, retrieve_top_k, scorer_by_name, CosineScorer, EuclideanScorer,
    ImageScorer, QueryRow, RetrievalConfig, ScoredImage,
};
pub use synth::{generate_synthetic, SynthConfig, SynthData};
