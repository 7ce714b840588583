mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tube_rank::{
    cmc_curve, generate_synthetic, mean_ap, run_benchmark, split_folds, EvalConfig, Gallery,
    Pipeline, PipelineConfig, ProbeResult, SynthConfig, Tube,
};

use common::{cmc_oracle, map_oracle, random_probe_results};

fn identity_gallery(n: usize) -> Gallery {
    let tubes = (0..n)
        .flat_map(|p| {
            (0..2).map(move |t| {
                let mut f = common::frame(&format!("p{p}-t{t}"), 0, &[("retrieval", vec![1.0])]);
                f.person_id = Some(format!("p{p}"));
                Tube::new(vec![f]).unwrap()
            })
        })
        .collect();
    Gallery::new(tubes).unwrap()
}

#[test]
fn cmc_and_map_match_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let results = random_probe_results(&mut rng, 100, 15);
        for max_rank in [1, 5, 20] {
            let curve = cmc_curve(&results, max_rank).unwrap();
            let want = cmc_oracle(&results, max_rank);
            assert_eq!(curve.values.len(), want.len());
            for (a, b) in curve.values.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-9);
            }
            let map = mean_ap(&results, max_rank).unwrap();
            assert!((map - map_oracle(&results, max_rank)).abs() <= 1e-9);
        }
    }
}

#[test]
fn cmc_definition_examples() {
    let probe = |id: &str, ranked: &[&str]| ProbeResult {
        probe_identity: id.into(),
        ranked_identities: ranked.iter().map(|s| s.to_string()).collect(),
    };
    let results = [probe("a", &["a", "b", "c"]), probe("b", &["c", "a", "b"])];
    assert_eq!(cmc_curve(&results, 3).unwrap().values, vec![0.5, 0.5, 1.0]);
    assert_eq!(mean_ap(&[probe("a", &["b", "c", "d", "a"])], 20).unwrap(), 25.0);
}

#[test]
fn folds_split_identities_and_are_reproducible() {
    let gallery = identity_gallery(10);
    let cfg = EvalConfig {
        seed: 3,
        ..EvalConfig::default()
    };
    let folds = split_folds(&gallery, &cfg).unwrap();
    assert_eq!(folds, split_folds(&gallery, &cfg).unwrap());
    assert_eq!(folds.len(), 10);
    let person = |tube: &String| gallery.tube(tube).unwrap().person_id().unwrap().to_string();
    for fold in &folds {
        assert_eq!(fold.test_identities.len(), 5);
        let train: HashSet<String> = fold.train_tubes.iter().map(person).collect();
        let test: HashSet<String> = fold.test_tubes.iter().map(person).collect();
        assert_eq!(train.len(), 5);
        assert!(train.is_disjoint(&test));
        assert_eq!(fold.train_tubes.len() + fold.test_tubes.len(), gallery.len());
    }
    let other = split_folds(&gallery, &EvalConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(folds, other);
}

#[test]
fn every_identity_is_tested_somewhere() {
    // Each identity misses the test side of all 10 folds with probability
    // 2^-10, so about 0.2 of 200 identities are expected to be missed.
    let gallery = identity_gallery(200);
    let mut missed = 0;
    for seed in 0..20 {
        let folds = split_folds(&gallery, &EvalConfig { seed, ..EvalConfig::default() }).unwrap();
        let tested: HashSet<&String> = folds.iter().flat_map(|f| &f.test_identities).collect();
        missed += 200 - tested.len();
    }
    let rate = 1.0 - missed as f64 / 4000.0;
    assert!(rate >= 0.999, "coverage {rate}");
}

#[test]
fn too_few_identities_is_config_error() {
    assert!(matches!(
        split_folds(&identity_gallery(1), &EvalConfig::default()),
        Err(tube_rank::Error::Config(_))
    ));
}

#[test]
fn separable_data_is_solved_by_every_stage() {
    let data = generate_synthetic(&SynthConfig {
        seed: 2,
        n_identities: 6,
        frames_per_tube: [8, 12],
        noise_frame_rate: 0.0,
        appearance_noise_sigma: 0.02,
        camera_offset_sigma: 0.02,
        ..SynthConfig::default()
    })
    .unwrap();
    let pipeline = Pipeline::new(PipelineConfig::default()).unwrap();
    let cfg = EvalConfig {
        folds: 3,
        max_rank: 3,
        ..EvalConfig::default()
    };
    let report = run_benchmark(&data.gallery, &data.probes, &pipeline, &cfg, &[1, 2, 3]).unwrap();
    for stage in 1..=3 {
        let s = report.stage(stage).unwrap();
        assert_eq!(s.cmc_at[&1], 1.0, "stage {stage}");
        assert_eq!(s.map, 100.0);
    }
    let csv = report.cmc_csv();
    assert_eq!(csv.lines().next(), Some("rank,stage1,stage2,stage3"));
    assert_eq!(csv.lines().count(), 4);
    assert!(report.timing.is_some());
}

proptest! {
    #[test]
    fn cmc_is_monotone_and_bounds_map(seed in any::<u64>(), max_rank in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let results = random_probe_results(&mut rng, 30, 10);
        let curve = cmc_curve(&results, max_rank).unwrap();
        prop_assert!(curve.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(curve.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let map = mean_ap(&results, max_rank).unwrap();
        prop_assert!(map <= 100.0 * curve.values[max_rank - 1] + 1e-9);
    }

    #[test]
    fn complete_lists_reach_one(n in 1usize..12, seed in any::<u64>()) {
        // Every probe's identity is present and max_rank covers all identities.
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let results: Vec<ProbeResult> = ids
            .iter()
            .map(|id| {
                let mut ranked = ids.clone();
                ranked.shuffle(&mut rng);
                ProbeResult { probe_identity: id.clone(), ranked_identities: ranked }
            })
            .collect();
        prop_assert_eq!(cmc_curve(&results, n).unwrap().values[n - 1], 1.0);
    }
}
