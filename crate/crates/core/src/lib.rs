//! Multi-task evolutionary architecture search with transfer rank.

pub mod embedding;
pub mod engine;
pub mod error;
pub mod harness;
pub mod oracles;
pub mod search_space;
pub mod stats;
pub mod transfer;

pub use embedding::{dist, ArchGraph, EmbeddingConfig, EmbeddingModel, EmbeddingStore, Token};
pub use engine::{
    ablation_random_transfer, baseline_random_search, baseline_regularized_evolution, run,
    run_with_model, step_generation, EngineConfig, GenerationRecord, RunTrace, TaskOutcome,
    TaskState, TransferPolicy, TransferStrategy,
};
pub use error::{Error, Result};
pub use oracles::{synthesize_landscape, FitnessOracle, LandscapeSpec, LoadOptions, TabularOracle};
pub use search_space::{Architecture, Individual, SearchSpaceSpec};
pub use transfer::{
    select_transfer_population, transfer_rank, HistoricalTransferredSet, HtsEntry, TransferLabel,
    TransferRankResult,
};
