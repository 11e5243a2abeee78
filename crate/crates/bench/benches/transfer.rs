use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ktnas_bench::{random_hts, random_vector, rng};
use ktnas_core::embedding::{generate_walks, train_shared_model, train_skipgram, SkipGramParams};
use ktnas_core::engine::{initialize, TransferStrategy};
use ktnas_core::search_space::{random_architecture, to_graph};
use ktnas_core::{
    dist, select_transfer_population, step_generation, synthesize_landscape, transfer_rank,
    EmbeddingConfig, EmbeddingStore, EngineConfig, FitnessOracle, LandscapeSpec, SearchSpaceSpec,
};
use rand::SeedableRng;

fn transfer(c: &mut Criterion) {
    let mut r = rng(1);
    let hts = random_hts(50, 256, &mut r);
    let candidates: Vec<Vec<f64>> = (0..20).map(|_| random_vector(256, &mut r)).collect();
    c.bench_function("transfer_rank/hts50_cand20_dim256", |b| {
        b.iter(|| transfer_rank(black_box(&hts), black_box(&candidates)).unwrap())
    });
    let ranks = transfer_rank(&hts, &candidates).unwrap();
    c.bench_function("select_transfer_population/m4", |b| {
        b.iter(|| select_transfer_population(black_box(&ranks), 4, &mut r).unwrap())
    });
    let (u, v) = (random_vector(256, &mut r), random_vector(256, &mut r));
    c.bench_function("dist/dim256", |b| b.iter(|| dist(black_box(&u), black_box(&v)).unwrap()));
}

fn embedding(c: &mut Criterion) {
    let space = SearchSpaceSpec::nas201();
    let mut r = rng(2);
    let graph = to_graph(&space, &random_architecture(&space, &mut r)).unwrap();
    c.bench_function("generate_walks/nas201_cell", |b| {
        b.iter(|| generate_walks(black_box(&graph), 10, 20, 1.0, 1.0, &mut r).unwrap())
    });
    let corpus: Vec<_> = (0..32)
        .flat_map(|_| {
            let g = to_graph(&space, &random_architecture(&space, &mut r)).unwrap();
            generate_walks(&g, 10, 20, 1.0, 1.0, &mut r).unwrap()
        })
        .collect();
    let params = SkipGramParams { dim: 64, epochs: 1, ..SkipGramParams::from(&EmbeddingConfig::default()) };
    let mut group = c.benchmark_group("skipgram");
    group.sample_size(10);
    group.bench_function("32_cells_dim64", |b| b.iter(|| train_skipgram(black_box(&corpus), &params, &mut r).unwrap()));
    group.finish();
}

fn engine(c: &mut Criterion) {
    let land = synthesize_landscape(&LandscapeSpec::default(), &mut rng(3)).unwrap();
    let config = EngineConfig {
        embedding: EmbeddingConfig { dim: 64, sample_size: 64, ..Default::default() },
        ..Default::default()
    };
    let model = Arc::new(train_shared_model(land.oracle.space(), &config.embedding).unwrap());
    let mut group = c.benchmark_group("engine");
    group.sample_size(20);
    group.bench_function("ten_generations_two_tasks", |b| {
        b.iter_batched(
            || {
                let oracle = land.oracle.fresh();
                let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
                let (states, _) = initialize(&config, &oracle, &mut r).unwrap();
                let strategy = TransferStrategy::Rank(EmbeddingStore::new(oracle.space().clone(), model.clone()));
                (oracle, states, strategy, r)
            },
            |(oracle, mut states, mut strategy, mut r)| {
                for _ in 0..10 {
                    step_generation(&mut states, &oracle, &config, &mut strategy, &mut r).unwrap();
                }
                states
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, transfer, embedding, engine);
criterion_main!(benches);
