//! Stagewise CMC on the distractor benchmark for a range of seeds.
//!
//! Run: `cargo run --release --example stagewise -- [phi ...]`

use tube_rank::{generate_synthetic, run_benchmark, EvalConfig, Pipeline, PipelineConfig, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let phis: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let phis = if phis.is_empty() { vec![0.4] } else { phis };

    println!("seed   phi  |Q|   cmc1@s1 cmc1@s2 cmc1@s3  map@s3  ms/query");
    for seed in 42..52 {
        let data = generate_synthetic(&SynthConfig::distractor_benchmark(seed))?;
        for &phi in &phis {
            let mut cfg = PipelineConfig::default();
            cfg.minimizer.phi = phi;
            let pipeline = Pipeline::new(cfg)?;
            let eval = EvalConfig { seed, ..EvalConfig::default() };
            let report = run_benchmark(&data.gallery, &data.probes, &pipeline, &eval, &[1, 2, 3])?;
            let c1 = |s: usize| report.stage(s).unwrap().cmc_at[&1] * 100.0;
            let t = report.timing.as_ref().unwrap().mean_query_seconds[&3] * 1e3;
            println!(
                "{seed:>4} {phi:>5.2} {:>5.2} {:>8.2} {:>7.2} {:>7.2} {:>7.2} {:>9.3}",
                report.mean_query_frames,
                c1(1),
                c1(2),
                c1(3),
                report.stage(3).unwrap().map,
                t
            );
        }
    }
    Ok(())
}
