//! Fixtures and brute-force oracles shared by the integration tests and the
//! acceptance harness. The oracles are written from the definitions and do
//! not call into the library's ranking or scoring code paths.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tube_rank::{
    extract_final_images, filter_tube, generate_synthetic, rank_tubes, self_similarity_rerank,
    FilterConfig, FrameKey, FrameRecord, Gallery, ImageScorer, Pipeline, PipelineConfig,
    ProbeResult, QueryRow, ResultMatrix, Result, SimilarityMatrix, SynthConfig, Tube,
    RETRIEVAL_CHANNEL, SELFSIM_CHANNEL,
};

pub fn frame(tube: &str, idx: u64, embeddings: &[(&str, Vec<f32>)]) -> FrameRecord {
    FrameRecord {
        tube_id: tube.to_string(),
        camera_id: "c0".to_string(),
        person_id: Some(format!("person-{tube}")),
        frame_index: idx,
        timestamp_ms: idx * 40,
        quality: 1.0,
        embeddings: embeddings
            .iter()
            .map(|(ch, v)| (ch.to_string(), v.clone()))
            .collect(),
    }
}

/// Random non-zero embedding. With `coarse`, entries are drawn from
/// {-1, 0, 1} so that exact score ties are common.
pub fn random_embedding(rng: &mut ChaCha8Rng, dim: usize, coarse: bool) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim)
            .map(|_| {
                if coarse {
                    rng.random_range(-1i32..=1) as f32
                } else {
                    rng.random_range(-1.0f32..1.0)
                }
            })
            .collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

pub fn random_tube(
    rng: &mut ChaCha8Rng,
    tube_id: &str,
    frames: usize,
    dim: usize,
    coarse: bool,
) -> Tube {
    let mut idx = 0u64;
    let records = (0..frames)
        .map(|_| {
            idx += rng.random_range(1..4);
            frame(
                tube_id,
                idx,
                &[
                    (RETRIEVAL_CHANNEL, random_embedding(rng, dim, coarse)),
                    (SELFSIM_CHANNEL, random_embedding(rng, dim, coarse)),
                ],
            )
        })
        .collect();
    Tube::new(records).unwrap()
}

/// Gallery of `n_tubes` random tubes with 1 to `max_frames` frames each.
pub fn random_gallery(
    rng: &mut ChaCha8Rng,
    n_tubes: usize,
    max_frames: usize,
    dim: usize,
    coarse: bool,
) -> Gallery {
    let tubes = (0..n_tubes)
        .map(|t| {
            let frames = rng.random_range(1..=max_frames);
            random_tube(rng, &format!("g{t:03}"), frames, dim, coarse)
        })
        .collect();
    Gallery::new(tubes).unwrap()
}

/// Random similarity matrix. With `levels`, entries are multiples of
/// `1 / levels` so that equalities occur.
pub fn random_sim(rng: &mut ChaCha8Rng, m: usize, levels: Option<u32>) -> (Vec<Vec<f64>>, SimilarityMatrix) {
    let mut rows = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let v = match levels {
                Some(l) => f64::from(rng.random_range(0..=l)) / f64::from(l),
                None => rng.random::<f64>(),
            };
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    let sim = SimilarityMatrix::from_rows(rows.clone()).unwrap();
    (rows, sim)
}

/// Query energy straight from its definition on a dense row-major matrix.
pub fn energy_oracle(sim: &[Vec<f64>], selected: &[usize], phi: f64) -> f64 {
    let m = sim.len();
    let mut redundancy = 0.0;
    if selected.len() > 1 {
        for &i in selected {
            let mut lowest = f64::MAX;
            for &j in selected {
                if j != i && sim[i][j] < lowest {
                    lowest = sim[i][j];
                }
            }
            redundancy += lowest;
        }
    }
    let mut uncovered = 0.0;
    for j in 0..m {
        if selected.contains(&j) {
            continue;
        }
        let mut highest = f64::MIN;
        for &i in selected {
            if sim[i][j] > highest {
                highest = sim[i][j];
            }
        }
        uncovered += highest;
    }
    phi * redundancy + uncovered
}

/// Every gallery frame scored and fully sorted; the first `k` entries as
/// `(tube_id, frame_index, score)`.
pub fn full_sort_top_k(
    query: &[f32],
    gallery: &Gallery,
    channel: &str,
    scorer: &dyn ImageScorer,
    k: usize,
) -> Vec<(String, u64, f64)> {
    let mut all = Vec::new();
    for tube in gallery.tubes() {
        for f in tube.frames() {
            let s = scorer.score(query, f.embedding(channel).unwrap()).unwrap();
            all.push((f.tube_id.clone(), f.frame_index, s));
        }
    }
    all.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    all.truncate(k);
    all
}

/// 1-based rank of the probe identity among distinct identities, if any.
fn first_hit(r: &ProbeResult) -> Option<usize> {
    let mut distinct: Vec<&String> = Vec::new();
    for id in &r.ranked_identities {
        if !distinct.contains(&id) {
            distinct.push(id);
        }
    }
    distinct
        .iter()
        .position(|id| **id == r.probe_identity)
        .map(|p| p + 1)
}

pub fn cmc_oracle(results: &[ProbeResult], max_rank: usize) -> Vec<f64> {
    (1..=max_rank)
        .map(|r| {
            let hits = results
                .iter()
                .filter(|p| first_hit(p).is_some_and(|h| h <= r))
                .count();
            hits as f64 / results.len() as f64
        })
        .collect()
}

/// With one relevant identity per probe AP reduces to the reciprocal rank
/// of the hit inside the cut-off.
pub fn map_oracle(results: &[ProbeResult], max_rank: usize) -> f64 {
    let sum: f64 = results
        .iter()
        .map(|p| match first_hit(p) {
            Some(h) if h <= max_rank => 1.0 / h as f64,
            _ => 0.0,
        })
        .sum();
    100.0 * sum / results.len() as f64
}

pub fn random_probe_results(rng: &mut ChaCha8Rng, n: usize, identities: usize) -> Vec<ProbeResult> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(0..=2 * identities);
            ProbeResult {
                probe_identity: format!("p{}", rng.random_range(0..identities + 2)),
                ranked_identities: (0..len)
                    .map(|_| format!("p{}", rng.random_range(0..identities)))
                    .collect(),
            }
        })
        .collect()
}

/// Per-tube entry counts of `R` recomputed from scratch.
pub fn beta_recount(matrix: &ResultMatrix) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for row in &matrix.rows {
        for img in &row.images {
            *counts.entry(img.tube_id.clone()).or_insert(0) += 1;
        }
    }
    let max = *counts.values().max().unwrap_or(&1) as f64;
    counts.into_iter().map(|(t, c)| (t, c as f64 / max)).collect()
}

/// Scorer returning the same value for every pair.
pub struct ConstantScorer(pub f64);

impl ImageScorer for ConstantScorer {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&self, _: &[f32], _: &[f32]) -> Result<f64> {
        Ok(self.0)
    }
}

/// Fraction of injected noisy frames removed and fraction of clean frames
/// removed by the default filter, over 100 synthetic tubes.
pub fn filter_efficacy(seed: u64, noise_frame_rate: f64) -> (f64, f64, usize) {
    let cfg = SynthConfig {
        seed,
        n_identities: 50,
        n_cameras: 2,
        tubes_per_identity_per_camera: 1,
        noise_frame_rate,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg).unwrap();
    let tubes: Vec<&Tube> = data.gallery.tubes().iter().chain(&data.probes).collect();
    assert_eq!(tubes.len(), 100);
    let filter = FilterConfig::default();
    let (mut noisy, mut noisy_removed, mut clean, mut clean_removed) = (0, 0, 0, 0);
    for tube in tubes {
        let outcome = filter_tube(tube, &filter).unwrap();
        let removed: Vec<FrameKey> = outcome
            .removed
            .iter()
            .map(|f| FrameKey::new(f.tube_id.clone(), f.frame_index))
            .collect();
        for f in tube.frames() {
            let key = FrameKey::new(f.tube_id.clone(), f.frame_index);
            let gone = removed.contains(&key);
            if data.corrupted.contains(&key) {
                noisy += 1;
                noisy_removed += usize::from(gone);
            } else {
                clean += 1;
                clean_removed += usize::from(gone);
            }
        }
    }
    (
        noisy_removed as f64 / noisy as f64,
        clean_removed as f64 / clean as f64,
        noisy,
    )
}

/// Generated inputs for the re-ranking properties.
#[derive(Debug, Clone)]
pub struct RerankCase {
    pub seed: u64,
    pub n_tubes: usize,
    pub max_frames: usize,
    pub dim: usize,
    pub k: usize,
    pub query_frames: usize,
    pub coarse: bool,
    pub scale: f64,
}

pub fn rerank_case_strategy() -> impl proptest::strategy::Strategy<Value = RerankCase> {
    use proptest::prelude::*;
    (
        any::<u64>(),
        1usize..8,
        1usize..8,
        2usize..6,
        1usize..25,
        1usize..6,
        any::<bool>(),
        0.05f64..=1.0,
    )
        .prop_map(|(seed, n_tubes, max_frames, dim, k, query_frames, coarse, scale)| RerankCase {
            seed,
            n_tubes,
            max_frames,
            dim,
            k,
            query_frames,
            coarse,
            scale,
        })
}

pub struct RerankFixture {
    pub gallery: Gallery,
    pub probe: Tube,
    pub config: PipelineConfig,
}

impl RerankCase {
    pub fn build(&self) -> RerankFixture {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let gallery = random_gallery(&mut rng, self.n_tubes, self.max_frames, self.dim, self.coarse);
        let probe = random_tube(&mut rng, "probe", self.query_frames, self.dim, self.coarse);
        let mut config = PipelineConfig::default();
        config.retrieval.k = self.k;
        // Keep every probe frame as a query frame so rows are plentiful.
        config.minimizer.phi = 0.999;
        RerankFixture {
            gallery,
            probe,
            config,
        }
    }
}

/// Checks every re-ranking invariant on one generated case.
pub fn check_rerank_invariants(
    case: &RerankCase,
    single: &rayon::ThreadPool,
    multi: &rayon::ThreadPool,
) -> std::result::Result<(), String> {
    let fx = case.build();
    let pipeline = Pipeline::new(fx.config.clone()).map_err(|e| e.to_string())?;
    let outcome = pipeline.run(&fx.probe, &fx.gallery).map_err(|e| e.to_string())?;

    // Stage-2 rows are permutations of stage-1 rows.
    if outcome.stage1.len() != outcome.result_matrix.rows.len() {
        return Err("row count changed by stage 2".into());
    }
    for (s1, s2) in outcome.stage1.iter().zip(&outcome.result_matrix.rows) {
        let mut a: Vec<(String, u64, u64)> = s1
            .images
            .iter()
            .map(|i| (i.tube_id.clone(), i.frame_index, i.score.to_bits()))
            .collect();
        let mut b: Vec<(String, u64, u64)> = s2
            .images
            .iter()
            .map(|i| (i.tube_id.clone(), i.frame_index, i.stage1_score.to_bits()))
            .collect();
        a.sort();
        b.sort();
        if a != b {
            return Err(format!("row {} is not a permutation", s1.query_frame_index));
        }
        let ranks: Vec<usize> = s2.images.iter().map(|i| i.rank).collect();
        if ranks != (1..=s2.images.len()).collect::<Vec<_>>() {
            return Err("stage-2 ranks are not 1..n".into());
        }
        if s2.images.windows(2).any(|w| w[0].score < w[1].score) {
            return Err("stage-2 row is not sorted by fused score".into());
        }
    }

    // tau in (0, 1] and strictly positive tube scores.
    let betas = beta_recount(&outcome.result_matrix);
    for img in outcome.result_matrix.entries() {
        let tau = betas[&img.tube_id] / img.rank as f64;
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(format!("tau {tau} outside (0, 1]"));
        }
    }
    if outcome.ranked_tubes.tubes.iter().any(|t| !(t.score > 0.0)) {
        return Err("non-positive tube score".into());
    }

    // rank_tubes is a permutation of the distinct tubes of R.
    let mut ranked: Vec<&str> = outcome
        .ranked_tubes
        .tubes
        .iter()
        .map(|t| t.tube_id.as_str())
        .collect();
    ranked.sort_unstable();
    let distinct: Vec<&str> = betas.keys().map(String::as_str).collect();
    if ranked != distinct {
        return Err("rank_tubes is not a permutation of the tubes in R".into());
    }
    for t in &outcome.ranked_tubes.tubes {
        if (t.beta - betas[&t.tube_id]).abs() > 0.0 {
            return Err(format!("beta of '{}' disagrees with recount", t.tube_id));
        }
    }

    // A constant self-similarity scorer keeps every stage-1 order, and so
    // does scaling stage-1 scores by c in (0, 1].
    let constant = ConstantScorer(0.5);
    let baseline = orderings(&outcome.stage1, &fx, &constant)?;
    for (s1, fused) in outcome.stage1.iter().zip(&baseline.0) {
        let stage1_order: Vec<(String, u64)> =
            s1.images.iter().map(|i| (i.tube_id.clone(), i.frame_index)).collect();
        if &stage1_order != fused {
            return Err("constant self-similarity changed a row order".into());
        }
    }
    let scaled: Vec<QueryRow> = outcome
        .stage1
        .iter()
        .map(|row| {
            let mut row = row.clone();
            row.images.iter_mut().for_each(|i| i.score *= case.scale);
            row
        })
        .collect();
    if orderings(&scaled, &fx, &constant)? != baseline {
        return Err(format!("scaling stage-1 scores by {} changed an ordering", case.scale));
    }

    // threads=1 and threads=N give byte-identical output.
    let run_in = |pool: &rayon::ThreadPool| {
        pool.install(|| pipeline.run(&fx.probe, &fx.gallery))
            .map(|o| serde_json::to_string(&o).unwrap())
            .map_err(|e| e.to_string())
    };
    if run_in(single)? != run_in(multi)? {
        return Err("threads=1 and threads=N outputs differ".into());
    }
    Ok(())
}

type Orderings = (Vec<Vec<(String, u64)>>, Vec<String>, Vec<(String, u64)>);

fn orderings(rows: &[QueryRow], fx: &RerankFixture, scorer: &dyn ImageScorer) -> std::result::Result<Orderings, String> {
    let query = tube_rank::filter_tube(&fx.probe, &fx.config.filter).map_err(|e| e.to_string())?;
    let matrix = self_similarity_rerank(rows, &query.kept, &fx.gallery, SELFSIM_CHANNEL, scorer)
        .map_err(|e| e.to_string())?;
    let ranked = rank_tubes(&matrix).map_err(|e| e.to_string())?;
    let finals = extract_final_images(&matrix, &ranked);
    Ok((
        matrix
            .rows
            .iter()
            .map(|r| r.images.iter().map(|i| (i.tube_id.clone(), i.frame_index)).collect())
            .collect(),
        ranked.tubes.iter().map(|t| t.tube_id.clone()).collect(),
        finals
            .images
            .iter()
            .map(|i| (i.tube_id.clone(), i.frame_index))
            .collect(),
    ))
}

pub fn thread_pool(n: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
}
