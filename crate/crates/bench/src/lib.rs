//! Shared fixtures for the benchmarks.

use tube_rank::{generate_synthetic, Result, SynthConfig, SynthData};

/// Benchmark-sized synthetic data set with `n_identities` identities seen
/// by two cameras.
pub fn fixture(n_identities: usize, seed: u64) -> Result<SynthData> {
    generate_synthetic(&SynthConfig {
        n_identities,
        distractor_pairs: n_identities / 5,
        ..SynthConfig::distractor_benchmark(seed)
    })
}
