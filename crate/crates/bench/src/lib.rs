//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use ktnas_core::search_space::random_architecture;
use ktnas_core::{HistoricalTransferredSet, HtsEntry, SearchSpaceSpec, TransferLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// History of `n` random entries with random labels, spread over `n / 4 + 1`
/// generations, with an unbounded negative window.
pub fn random_hts<R: Rng>(n: usize, dim: usize, rng: &mut R) -> HistoricalTransferredSet {
    let space = SearchSpaceSpec::nas201();
    let mut hts = HistoricalTransferredSet::new(usize::MAX);
    for (g, chunk) in (0..n).collect::<Vec<_>>().chunks(4).enumerate() {
        let entries: Vec<HtsEntry> = chunk
            .iter()
            .map(|_| HtsEntry {
                arch: random_architecture(&space, rng),
                embedding: Arc::from(random_vector(dim, rng)),
                label: if rng.random_bool(0.5) { TransferLabel::Positive } else { TransferLabel::Negative },
                generation: g,
            })
            .collect();
        hts.update(g, entries);
    }
    hts
}
