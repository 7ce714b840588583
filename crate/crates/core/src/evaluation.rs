//! CMC and mAP, identity-disjoint folds and the stagewise benchmark.
//!
//! Rankings are evaluated at the identity level: a ranked tube list is
//! mapped to person ids and every identity after its first occurrence is
//! dropped, so one person owning several gallery tubes cannot push the
//! correct match down.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gallery, Tube};
use crate::pipeline::{Pipeline, QueryOutcome, StageTimings};
use crate::retrieval::ranking_order;

/// Ranks reported individually by the benchmark.
pub const REPORTED_RANKS: [usize; 4] = [1, 5, 10, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub probe_identity: String,
    pub ranked_identities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    /// `values[r - 1]` is the fraction of probes matched within rank `r`.
    pub values: Vec<f64>,
    /// Probes whose identity never appears in their ranked list.
    pub never_matched: usize,
}

impl CmcCurve {
    pub fn at(&self, rank: usize) -> Option<f64> {
        rank.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }
}

/// 1-based position of `identity` after collapsing duplicates.
fn match_rank(ranked: &[String], identity: &str) -> Option<usize> {
    let mut seen = HashSet::new();
    ranked
        .iter()
        .filter(|id| seen.insert(id.as_str()))
        .position(|id| id == identity)
        .map(|p| p + 1)
}

fn check_inputs(results: &[ProbeResult], max_rank: usize) -> Result<()> {
    if max_rank == 0 {
        return Err(Error::Config("max_rank must be at least 1".into()));
    }
    if results.is_empty() {
        return Err(Error::Contract("no probe results to evaluate".into()));
    }
    Ok(())
}

pub fn cmc_curve(results: &[ProbeResult], max_rank: usize) -> Result<CmcCurve> {
    check_inputs(results, max_rank)?;
    let mut hits_at = vec![0usize; max_rank];
    let mut never_matched = 0;
    for r in results {
        match match_rank(&r.ranked_identities, &r.probe_identity) {
            Some(rank) if rank <= max_rank => hits_at[rank - 1] += 1,
            Some(_) => {}
            None => never_matched += 1,
        }
    }
    let n = results.len() as f64;
    let mut cumulative = 0;
    let values = hits_at
        .into_iter()
        .map(|h| {
            cumulative += h;
            cumulative as f64 / n
        })
        .collect();
    Ok(CmcCurve {
        values,
        never_matched,
    })
}

/// Mean average precision over the lists truncated at `max_rank`, in percent.
/// Each probe's AP is the sum of precision at every hit divided by the
/// number of hits within the cut-off (at least 1).
pub fn mean_ap(results: &[ProbeResult], max_rank: usize) -> Result<f64> {
    check_inputs(results, max_rank)?;
    let total: f64 = results
        .iter()
        .map(|r| {
            let mut seen = HashSet::new();
            let (mut hits, mut precision_sum) = (0usize, 0.0);
            for (i, id) in r
                .ranked_identities
                .iter()
                .filter(|id| seen.insert(id.as_str()))
                .take(max_rank)
                .enumerate()
            {
                if *id == r.probe_identity {
                    hits += 1;
                    precision_sum += hits as f64 / (i + 1) as f64;
                }
            }
            precision_sum / hits.max(1) as f64
        })
        .sum();
    Ok(100.0 * total / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub max_rank: usize,
    pub folds: usize,
    /// Fraction of identities assigned to the training side of a split.
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_rank: 20,
            folds: 10,
            split_fraction: 0.5,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rank == 0 {
            return Err(Error::Config("max_rank must be at least 1".into()));
        }
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction {} outside (0, 1)",
                self.split_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train_tubes: Vec<String>,
    pub test_tubes: Vec<String>,
    /// Sorted.
    pub test_identities: Vec<String>,
}

fn person_of(tube: &Tube) -> Result<&str> {
    tube.person_id().ok_or_else(|| {
        Error::Validation(format!(
            "tube '{}' has no person_id; evaluation needs ground truth",
            tube.tube_id()
        ))
    })
}

/// Identity-level random splits, one independent reshuffle per fold.
pub fn split_folds(gallery: &Gallery, cfg: &EvalConfig) -> Result<Vec<Fold>> {
    cfg.validate()?;
    for tube in gallery.tubes() {
        person_of(tube)?;
    }
    let mut identities: Vec<&str> = gallery.identities();
    identities.sort_unstable();
    let n = identities.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "splitting needs at least 2 identities, found {n}"
        )));
    }
    let n_train = ((cfg.split_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.folds)
        .map(|_| {
            let mut order = identities.clone();
            order.shuffle(&mut rng);
            let train: HashSet<&str> = order[..n_train].iter().copied().collect();
            let mut test_identities: Vec<String> =
                order[n_train..].iter().map(|s| s.to_string()).collect();
            test_identities.sort_unstable();
            let (train_tubes, test_tubes): (Vec<&Tube>, Vec<&Tube>) = gallery
                .tubes()
                .iter()
                .partition(|t| train.contains(t.person_id().expect("checked above")));
            let ids = |ts: Vec<&Tube>| ts.iter().map(|t| t.tube_id().to_string()).collect();
            Fold {
                train_tubes: ids(train_tubes),
                test_tubes: ids(test_tubes),
                test_identities,
            }
        })
        .collect())
}

/// Identity ranking after stage 1, 2 or 3 of a query.
///
/// Stages 1 and 2 pool every entry of every row and order them by score
/// (stage-1 score, then fused score), so each tube is represented by its
/// best frame. Stage 3 follows the tube ranking.
pub fn stage_identities(outcome: &QueryOutcome, gallery: &Gallery, stage: usize) -> Result<Vec<String>> {
    let tube_ids: Vec<&str> = match stage {
        1 => {
            let mut pooled: Vec<(f64, &str, u64)> = outcome
                .stage1
                .iter()
                .flat_map(|row| row.images.iter())
                .map(|img| (img.score, img.tube_id.as_str(), img.frame_index))
                .collect();
            pooled.sort_by(|a, b| ranking_order(*a, *b));
            pooled.into_iter().map(|(_, t, _)| t).collect()
        }
        2 => {
            let mut pooled: Vec<(f64, &str, u64)> = outcome
                .result_matrix
                .entries()
                .map(|img| (img.score, img.tube_id.as_str(), img.frame_index))
                .collect();
            pooled.sort_by(|a, b| ranking_order(*a, *b));
            pooled.into_iter().map(|(_, t, _)| t).collect()
        }
        3 => outcome
            .final_ranking
            .images
            .iter()
            .map(|img| img.tube_id.as_str())
            .collect(),
        other => return Err(Error::Config(format!("no stage {other}; stages are 1, 2 and 3"))),
    };
    let mut seen = HashSet::new();
    let mut identities = Vec::new();
    for id in tube_ids {
        let tube = gallery
            .tube(id)
            .ok_or_else(|| Error::Contract(format!("ranked tube '{id}' is not in the gallery")))?;
        let person = person_of(tube)?;
        if seen.insert(person) {
            identities.push(person.to_string());
        }
    }
    Ok(identities)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    /// Fold-averaged CMC curve up to `max_rank`.
    pub cmc: Vec<f64>,
    /// CMC at the reported ranks that do not exceed `max_rank`, keyed by rank.
    pub cmc_at: BTreeMap<usize, f64>,
    /// Fold-averaged mAP in percent.
    pub map: f64,
    pub never_matched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    /// Mean wall time per query to reach each reported stage, in seconds.
    pub mean_query_seconds: BTreeMap<usize, f64>,
    /// Mean wall time per query of each step.
    pub mean_step_seconds: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub folds: usize,
    pub queries: usize,
    /// Mean size of the minimized query.
    pub mean_query_frames: f64,
    pub stages: Vec<StageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingSummary>,
}

impl BenchmarkReport {
    pub fn stage(&self, stage: usize) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// CSV with a `rank` column and one CMC column per reported stage.
    pub fn cmc_csv(&self) -> String {
        let mut out = String::from("rank");
        for s in &self.stages {
            out.push_str(&format!(",stage{}", s.stage));
        }
        out.push('\n');
        let len = self.stages.first().map_or(0, |s| s.cmc.len());
        for r in 0..len {
            out.push_str(&(r + 1).to_string());
            for s in &self.stages {
                out.push_str(&format!(",{}", s.cmc[r]));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the full pipeline for every test-side probe of every fold and scores
/// the identity rankings after each requested stage.
///
/// Within a fold the gallery is restricted to the tubes of the test
/// identities and so are the probes. Every variant is read off the same
/// query run; the stage-1 and stage-2 variants are prefixes of the full
/// cascade.
pub fn run_benchmark(
    gallery: &Gallery,
    probes: &[Tube],
    pipeline: &Pipeline,
    cfg: &EvalConfig,
    stages: &[usize],
) -> Result<BenchmarkReport> {
    cfg.validate()?;
    if stages.is_empty() {
        return Err(Error::Config("at least one stage must be evaluated".into()));
    }
    if let Some(s) = stages.iter().find(|s| !(1..=3).contains(*s)) {
        return Err(Error::Config(format!("no stage {s}; stages are 1, 2 and 3")));
    }
    let mut stages = stages.to_vec();
    stages.sort_unstable();
    stages.dedup();
    for probe in probes {
        person_of(probe)?;
    }
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }

    let folds = split_folds(gallery, cfg)?;
    let mut cmc_sums: HashMap<usize, Vec<f64>> = stages.iter().map(|&s| (s, vec![0.0; cfg.max_rank])).collect();
    let mut map_sums: HashMap<usize, f64> = HashMap::new();
    let mut never: HashMap<usize, usize> = HashMap::new();
    let mut timing_sum = StageTimings::default();
    let mut query_frames = 0usize;
    let mut queries = 0usize;
    let mut evaluated_folds = 0usize;

    for fold in &folds {
        let test: HashSet<&str> = fold.test_identities.iter().map(String::as_str).collect();
        let fold_gallery = gallery.filter(|t| t.person_id().is_some_and(|p| test.contains(p)));
        let fold_probes: Vec<&Tube> = probes
            .iter()
            .filter(|t| t.person_id().is_some_and(|p| test.contains(p)))
            .collect();
        if fold_probes.is_empty() {
            continue;
        }
        let outcomes = fold_probes
            .par_iter()
            .map(|probe| pipeline.run(probe, &fold_gallery))
            .collect::<Result<Vec<QueryOutcome>>>()?;

        for outcome in &outcomes {
            timing_sum.add(&outcome.timings);
            query_frames += outcome.query.selected.len();
        }
        queries += outcomes.len();
        evaluated_folds += 1;

        for &stage in &stages {
            let results = fold_probes
                .iter()
                .zip(&outcomes)
                .map(|(probe, outcome)| {
                    Ok(ProbeResult {
                        probe_identity: person_of(probe)?.to_string(),
                        ranked_identities: stage_identities(outcome, &fold_gallery, stage)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let curve = cmc_curve(&results, cfg.max_rank)?;
            let sums = cmc_sums.get_mut(&stage).expect("stage initialised");
            sums.iter_mut().zip(&curve.values).for_each(|(s, v)| *s += v);
            *map_sums.entry(stage).or_default() += mean_ap(&results, cfg.max_rank)?;
            *never.entry(stage).or_default() += curve.never_matched;
        }
    }

    if evaluated_folds == 0 {
        return Err(Error::Config("no probe belongs to any test split".into()));
    }
    let nf = evaluated_folds as f64;
    let stage_reports = stages
        .iter()
        .map(|&stage| {
            let cmc: Vec<f64> = cmc_sums[&stage].iter().map(|s| s / nf).collect();
            let cmc_at = REPORTED_RANKS
                .iter()
                .filter(|&&r| r <= cfg.max_rank)
                .map(|&r| (r, cmc[r - 1]))
                .collect();
            StageReport {
                stage,
                cmc,
                cmc_at,
                map: map_sums[&stage] / nf,
                never_matched: never[&stage],
            }
        })
        .collect();

    let nq = queries as f64;
    let mean_step = StageTimings {
        filter: timing_sum.filter / nq,
        minimize: timing_sum.minimize / nq,
        retrieval: timing_sum.retrieval / nq,
        self_similarity: timing_sum.self_similarity / nq,
        tube_ranking: timing_sum.tube_ranking / nq,
    };
    Ok(BenchmarkReport {
        folds: evaluated_folds,
        queries,
        mean_query_frames: query_frames as f64 / nq,
        stages: stage_reports,
        timing: Some(TimingSummary {
            mean_query_seconds: stages.iter().map(|&s| (s, mean_step.through_stage(s))).collect(),
            mean_step_seconds: mean_step,
        }),
    })
}
