//! The multi-task search loop and the single-task baselines it is compared
//! against.
//!
//! Each task keeps a parent population `P` of size `K`. Every generation a
//! transfer population `TP` of size `M` is drawn from the other tasks'
//! populations, offspring `O` are bred from `P ∪ TP`, and the next parents
//! are the top `K` of `P ∪ O ∪ TP`. Transfers are chosen by transfer rank
//! (or uniformly at random for the ablation).

use std::collections::{HashSet, VecDeque};
#[cfg(test)]
use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{train_shared_model, EmbeddingConfig, EmbeddingModel, EmbeddingStore};
use crate::error::{Error, Result};
use crate::oracles::FitnessOracle;
use crate::search_space::{
    crossover, mutate, random_architecture, rank_order, tournament_select, Architecture,
    Individual,
};
use crate::transfer::{
    classify_transferred, rank_within, select_random, select_transfer_population, transfer_rank,
    HistoricalTransferredSet, HtsEntry, TransferLabel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub n_tasks: usize,
    pub population_size: usize,
    pub transfer_count: usize,
    pub saved_generations: usize,
    /// Ranking ratio r, in percent.
    pub ranking_ratio: f64,
    pub max_generations: usize,
    pub tournament_size: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    /// Offspring per generation; the population size when unset.
    pub offspring_count: Option<usize>,
    pub seed: u64,
    /// Unique evaluations allowed per task.
    pub eval_budget: Option<u64>,
    /// Stop once every task has evaluated its known optimum.
    pub stop_at_optimum: bool,
    /// Bound on stored positive transfers; unbounded when unset.
    pub hts_pos_cap: Option<usize>,
    /// Keep the evaluated `P ∪ TP ∪ O` of every generation in the trace.
    pub record_populations: bool,
    pub embedding: EmbeddingConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_tasks: 2,
            population_size: 10,
            transfer_count: 4,
            saved_generations: 5,
            ranking_ratio: 20.0,
            max_generations: 100,
            tournament_size: 5,
            crossover_probability: 0.0,
            mutation_probability: 1.0,
            offspring_count: None,
            seed: 0,
            eval_budget: None,
            stop_at_optimum: true,
            hts_pos_cap: None,
            record_populations: false,
            embedding: EmbeddingConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn offspring(&self) -> usize {
        self.offspring_count.unwrap_or(self.population_size)
    }

    /// Budget used by the single-task baselines.
    pub fn baseline_budget(&self) -> u64 {
        self.eval_budget
            .unwrap_or((self.max_generations * self.offspring()) as u64)
    }

    /// Checks the configuration for multi-task search with the given policy.
    pub fn validate(&self, policy: TransferPolicy) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.population_size == 0 {
            return fail("population_size must be at least 1".into());
        }
        if self.tournament_size == 0 {
            return fail("tournament_size must be at least 1".into());
        }
        if self.max_generations == 0 {
            return fail("max_generations must be at least 1".into());
        }
        if self.saved_generations == 0 {
            return fail("saved_generations must be at least 1".into());
        }
        if !(self.ranking_ratio > 0.0 && self.ranking_ratio <= 100.0) {
            return fail(format!("ranking_ratio {} outside (0, 100]", self.ranking_ratio));
        }
        for (name, p) in [
            ("crossover_probability", self.crossover_probability),
            ("mutation_probability", self.mutation_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} {p} outside [0, 1]"));
            }
        }
        if self.offspring() == 0 {
            return fail("offspring_count must be at least 1".into());
        }
        if self.n_tasks < 2 {
            return fail(format!("multi-task search needs at least 2 tasks, got {}", self.n_tasks));
        }
        let pool = self.population_size * (self.n_tasks - 1);
        if self.transfer_count > pool {
            return fail(format!(
                "transfer_count {} exceeds the {pool} candidates of the other tasks",
                self.transfer_count
            ));
        }
        if policy == TransferPolicy::Rank && self.transfer_count == 0 {
            return fail("transfer_count must be at least 1".into());
        }
        if self.eval_budget == Some(0) {
            return fail("eval_budget must be positive".into());
        }
        self.embedding.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferPolicy {
    /// Transfers chosen by transfer rank against the task's history.
    Rank,
    /// Transfers drawn uniformly from the other tasks' populations.
    Random,
}

/// What a task carries from one generation to the next for labeling.
#[derive(Debug, Clone)]
pub struct PendingTransfers {
    pub generation: usize,
    pub transfers: Vec<Individual>,
    /// `P ∪ TP` the offspring were bred from.
    pub parent_pool: Vec<Individual>,
    pub offspring: Vec<Individual>,
    pub next_parents: Vec<Individual>,
}

#[derive(Debug, Clone)]
pub struct TaskState {
    pub task: usize,
    pub population: Vec<Individual>,
    pub transfers: Vec<Individual>,
    pub hts: HistoricalTransferredSet,
    pub best: Individual,
    /// Index of the generation the current population will breed.
    pub generation: usize,
    pub pending: Option<PendingTransfers>,
    /// Unique evaluations spent when the optimum was first evaluated.
    pub evals_to_optimum: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub task: usize,
    pub generation: usize,
    pub best_fitness: f64,
    pub unique_evals: u64,
    /// Mean 1-based fitness rank of the transfers within `P ∪ TP ∪ O`.
    pub mean_tp_rank: Option<f64>,
    /// Labels assigned during this generation to the previous transfers.
    pub labels: Vec<TransferLabel>,
    /// The ranked pool, when populations are recorded.
    pub pool: Vec<PoolMember>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Parent,
    Transfer,
    Offspring,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Parent => "P",
            Role::Transfer => "TP",
            Role::Offspring => "O",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolMember {
    pub role: Role,
    pub arch: Architecture,
    pub fitness: f64,
}

fn snapshot(groups: &[(Role, &[Individual])], task: usize) -> Vec<PoolMember> {
    groups
        .iter()
        .flat_map(|(role, inds)| {
            inds.iter().map(move |i| PoolMember { role: *role, arch: i.arch.clone(), fitness: i.fitness[&task] })
        })
        .collect()
}

impl GenerationRecord {
    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == TransferLabel::Positive).count()
    }

    pub fn negative_count(&self) -> usize {
        self.labels.len() - self.positive_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub best: Architecture,
    pub best_fitness: f64,
    /// `None` when the optimum was not reached within budget.
    pub evals_to_optimum: Option<u64>,
    pub unique_evals: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algorithm: String,
    pub seed: u64,
    pub records: Vec<GenerationRecord>,
    pub outcomes: Vec<TaskOutcome>,
}

impl RunTrace {
    /// Sum of per-task evaluations-to-optimum, `None` if any task missed.
    pub fn total_evals_to_optimum(&self) -> Option<u64> {
        self.outcomes.iter().map(|o| o.evals_to_optimum).sum()
    }
}

/// How transfers are selected during a generation step.
pub enum TransferStrategy {
    Rank(EmbeddingStore),
    Random,
}

impl TransferStrategy {
    pub fn policy(&self) -> TransferPolicy {
        match self {
            TransferStrategy::Rank(_) => TransferPolicy::Rank,
            TransferStrategy::Random => TransferPolicy::Random,
        }
    }
}

fn evaluate_into<O: FitnessOracle + ?Sized>(
    oracle: &O,
    task: usize,
    ind: &mut Individual,
) -> Result<()> {
    let f = oracle.evaluate(task, &ind.arch)?;
    ind.fitness.insert(task, f);
    Ok(())
}

fn note_optimum<O: FitnessOracle + ?Sized>(oracle: &O, state: &mut TaskState, evaluated: &[Individual]) {
    if state.evals_to_optimum.is_some() {
        return;
    }
    if let Some((_, target)) = oracle.optimum(state.task) {
        if evaluated.iter().any(|i| i.fitness[&state.task] >= target) {
            state.evals_to_optimum = Some(oracle.unique_evaluations(state.task));
        }
    }
}

/// Evaluates in order, noting the evaluation count at which the optimum
/// first appears.
fn evaluate_all<O: FitnessOracle + ?Sized>(
    oracle: &O,
    task: usize,
    individuals: &mut [Individual],
    found: &mut Option<u64>,
) -> Result<()> {
    let target = oracle.optimum(task).map(|(_, f)| f);
    for ind in individuals.iter_mut() {
        evaluate_into(oracle, task, ind)?;
        if found.is_none() && target.is_some_and(|t| ind.fitness[&task] >= t) {
            *found = Some(oracle.unique_evaluations(task));
        }
    }
    Ok(())
}

/// Top `k` of `pool` on `task` with duplicate encodings collapsed to their
/// first occurrence; duplicates refill only if fewer than `k` are distinct.
pub fn select_top_k(pool: &[Individual], task: usize, k: usize) -> Vec<Individual> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| rank_order(&pool[a], &pool[b], task).then(a.cmp(&b)));
    let mut seen = HashSet::new();
    let (unique, dupes): (Vec<usize>, Vec<usize>) =
        order.into_iter().partition(|&i| seen.insert(pool[i].arch.clone()));
    unique
        .into_iter()
        .chain(dupes)
        .take(k)
        .map(|i| pool[i].clone())
        .collect()
}

fn best_of(pool: &[Individual], task: usize) -> Individual {
    pool.iter()
        .min_by(|a, b| rank_order(a, b, task))
        .expect("non-empty population")
        .clone()
}

fn mean_rank(transfers: &[Individual], pool: &[Individual], task: usize) -> Option<f64> {
    if transfers.is_empty() {
        return None;
    }
    let sum: usize = transfers.iter().map(|t| rank_within(t, pool, task)).sum();
    Some(sum as f64 / transfers.len() as f64)
}

fn as_transfer(ind: &Individual) -> Individual {
    let mut t = ind.clone();
    t.is_transferred = true;
    t
}

/// Random initial populations, random initial transfers from the other
/// tasks, evaluation, and the first top-`K` selection.
pub fn initialize<O: FitnessOracle + ?Sized, R: Rng + ?Sized>(
    config: &EngineConfig,
    oracle: &O,
    rng: &mut R,
) -> Result<(Vec<TaskState>, Vec<GenerationRecord>)> {
    if oracle.n_tasks() != config.n_tasks {
        return Err(Error::Config(format!(
            "configuration has {} tasks but the oracle serves {}",
            config.n_tasks,
            oracle.n_tasks()
        )));
    }
    let n = config.n_tasks;
    let k = config.population_size;
    let space = oracle.space().clone();
    let initial: Vec<Vec<Individual>> = (0..n)
        .map(|task| {
            (0..k)
                .map(|_| Individual::new(random_architecture(&space, rng), task))
                .collect()
        })
        .collect();

    let mut states = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for task in 0..n {
        let candidates: Vec<&Individual> = (0..n)
            .filter(|&j| j != task)
            .flat_map(|j| initial[j].iter())
            .collect();
        let picks = select_random(candidates.len(), config.transfer_count, rng)?;
        let mut transfers: Vec<Individual> = picks.iter().map(|&i| as_transfer(candidates[i])).collect();
        let mut population = initial[task].clone();

        let mut found = None;
        evaluate_all(oracle, task, &mut population, &mut found)?;
        evaluate_all(oracle, task, &mut transfers, &mut found)?;

        let pool: Vec<Individual> = population.iter().chain(&transfers).cloned().collect();
        let next = select_top_k(&pool, task, k);
        let best = best_of(&next, task);
        records.push(GenerationRecord {
            task,
            generation: 0,
            best_fitness: best.fitness[&task],
            unique_evals: oracle.unique_evaluations(task),
            mean_tp_rank: mean_rank(&transfers, &pool, task),
            labels: Vec::new(),
            pool: if config.record_populations {
                snapshot(&[(Role::Parent, &population), (Role::Transfer, &transfers)], task)
            } else {
                Vec::new()
            },
        });
        states.push(TaskState {
            task,
            population: next,
            transfers,
            hts: HistoricalTransferredSet::with_pos_cap(config.saved_generations, config.hts_pos_cap),
            best,
            generation: 1,
            pending: None,
            evals_to_optimum: found,
        });
    }
    Ok((states, records))
}

fn breed<R: Rng + ?Sized>(
    config: &EngineConfig,
    space: &crate::search_space::SearchSpaceSpec,
    pool: &[Individual],
    task: usize,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    let count = config.offspring();
    let mut offspring = Vec::with_capacity(count);
    while offspring.len() < count {
        let a = tournament_select(pool, task, config.tournament_size, rng)?;
        let b = tournament_select(pool, task, config.tournament_size, rng)?;
        let children = if rng.random_bool(config.crossover_probability) {
            let (c, d) = crossover(&a.arch, &b.arch, rng)?;
            let parents = if a.arch == b.arch {
                vec![a.arch.clone()]
            } else {
                vec![a.arch.clone(), b.arch.clone()]
            };
            [(c, parents.clone()), (d, parents)]
        } else {
            [
                (a.arch.clone(), vec![a.arch.clone()]),
                (b.arch.clone(), vec![b.arch.clone()]),
            ]
        };
        for (arch, parents) in children {
            if offspring.len() == count {
                break;
            }
            let arch = mutate(&arch, space, config.mutation_probability, rng)?;
            offspring.push(Individual::new(arch, task).with_parents(parents));
        }
    }
    Ok(offspring)
}

/// One synchronous generation for every task. Transfer selection for all
/// tasks reads the current populations before any task replaces its own.
pub fn step_generation<O: FitnessOracle + ?Sized, R: Rng + ?Sized>(
    states: &mut [TaskState],
    oracle: &O,
    config: &EngineConfig,
    strategy: &mut TransferStrategy,
    rng: &mut R,
) -> Result<Vec<GenerationRecord>> {
    let n = states.len();
    let space = oracle.space().clone();
    let mut labels_per_task = vec![Vec::new(); n];

    // Label last generation's transfers, then pick new ones.
    let mut new_transfers = Vec::with_capacity(n);
    for i in 0..n {
        let t = states[i].generation;
        if let Some(p) = states[i].pending.take() {
            let labels = classify_transferred(
                &p.transfers,
                &p.parent_pool,
                &p.next_parents,
                &p.offspring,
                i,
                config.ranking_ratio,
            )?;
            if let TransferStrategy::Rank(store) = strategy {
                let entries = p
                    .transfers
                    .iter()
                    .zip(&labels)
                    .map(|(c, &label)| {
                        Ok(HtsEntry {
                            arch: c.arch.clone(),
                            embedding: store.embed(&c.arch)?,
                            label,
                            generation: t,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                states[i].hts.update(t, entries);
            }
            labels_per_task[i] = labels;
        }

        let candidates: Vec<&Individual> = (0..n)
            .filter(|&j| j != i)
            .flat_map(|j| states[j].population.iter())
            .collect();
        let picks = match strategy {
            TransferStrategy::Rank(store) => {
                let embeddings = candidates
                    .iter()
                    .map(|c| store.embed(&c.arch))
                    .collect::<Result<Vec<Arc<[f64]>>>>()?;
                let ranks = transfer_rank(&states[i].hts, &embeddings)?;
                select_transfer_population(&ranks, config.transfer_count, rng)?
            }
            TransferStrategy::Random => select_random(candidates.len(), config.transfer_count, rng)?,
        };
        new_transfers.push(picks.iter().map(|&c| as_transfer(candidates[c])).collect::<Vec<_>>());
    }

    let mut records = Vec::with_capacity(n);
    for (state, (mut transfers, labels)) in states.iter_mut().zip(new_transfers.into_iter().zip(labels_per_task)) {
        let task = state.task;
        let mut found = state.evals_to_optimum;
        evaluate_all(oracle, task, &mut transfers, &mut found)?;

        let parent_pool: Vec<Individual> = state.population.iter().chain(&transfers).cloned().collect();
        let mut offspring = breed(config, &space, &parent_pool, task, rng)?;
        evaluate_all(oracle, task, &mut offspring, &mut found)?;
        state.evals_to_optimum = found;

        let union: Vec<Individual> = state
            .population
            .iter()
            .chain(&offspring)
            .chain(&transfers)
            .cloned()
            .collect();
        let next = select_top_k(&union, task, config.population_size);
        let best = best_of(&next, task);
        if rank_order(&best, &state.best, task).is_lt() {
            state.best = best;
        }
        records.push(GenerationRecord {
            task,
            generation: state.generation,
            best_fitness: state.best.fitness[&task],
            unique_evals: oracle.unique_evaluations(task),
            mean_tp_rank: mean_rank(&transfers, &union, task),
            labels,
            pool: if config.record_populations {
                snapshot(
                    &[(Role::Parent, &state.population), (Role::Offspring, &offspring), (Role::Transfer, &transfers)],
                    task,
                )
            } else {
                Vec::new()
            },
        });
        note_optimum(oracle, state, &next);
        state.pending = Some(PendingTransfers {
            generation: state.generation,
            transfers: transfers.clone(),
            parent_pool,
            offspring,
            next_parents: next.clone(),
        });
        state.transfers = transfers;
        state.population = next;
        state.generation += 1;
    }
    Ok(records)
}

fn task_done<O: FitnessOracle + ?Sized>(config: &EngineConfig, oracle: &O, state: &TaskState) -> bool {
    let found = config.stop_at_optimum && state.evals_to_optimum.is_some();
    let spent = config
        .eval_budget
        .is_some_and(|b| oracle.unique_evaluations(state.task) >= b);
    found || spent
}

fn outcome<O: FitnessOracle + ?Sized>(config: &EngineConfig, oracle: &O, state: &TaskState) -> TaskOutcome {
    let within = |e: u64| config.eval_budget.is_none_or(|b| e <= b);
    TaskOutcome {
        best: state.best.arch.clone(),
        best_fitness: state.best.fitness[&state.task],
        evals_to_optimum: state.evals_to_optimum.filter(|&e| within(e)),
        unique_evals: oracle.unique_evaluations(state.task),
    }
}

pub fn run_with_strategy<O: FitnessOracle + ?Sized>(
    config: &EngineConfig,
    oracle: &O,
    mut strategy: TransferStrategy,
    algorithm: &str,
) -> Result<RunTrace> {
    config.validate(strategy.policy())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut states, mut records) = initialize(config, oracle, &mut rng)?;
    let mut t = 1;
    while t < config.max_generations && !states.iter().all(|s| task_done(config, oracle, s)) {
        records.extend(step_generation(&mut states, oracle, config, &mut strategy, &mut rng)?);
        t += 1;
    }
    Ok(RunTrace {
        algorithm: algorithm.to_string(),
        seed: config.seed,
        records,
        outcomes: states.iter().map(|s| outcome(config, oracle, s)).collect(),
    })
}

/// Multi-task search with transfer rank, training the shared embedding model
/// from `config.embedding`.
pub fn run<O: FitnessOracle + ?Sized>(config: &EngineConfig, oracle: &O) -> Result<RunTrace> {
    config.validate(TransferPolicy::Rank)?;
    let model = train_shared_model(oracle.space(), &config.embedding)?;
    run_with_model(config, oracle, Arc::new(model))
}

/// Multi-task search with transfer rank over a pre-trained embedding model.
pub fn run_with_model<O: FitnessOracle + ?Sized>(
    config: &EngineConfig,
    oracle: &O,
    model: Arc<EmbeddingModel>,
) -> Result<RunTrace> {
    let store = EmbeddingStore::new(oracle.space().clone(), model);
    run_with_strategy(config, oracle, TransferStrategy::Rank(store), "ktnas")
}

/// The same loop with transfers drawn uniformly at random.
pub fn ablation_random_transfer<O: FitnessOracle + ?Sized>(config: &EngineConfig, oracle: &O) -> Result<RunTrace> {
    run_with_strategy(config, oracle, TransferStrategy::Random, "ktnas-random-transfer")
}

fn baseline_rng(config: &EngineConfig, task: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(task as u64 + 1);
    rng
}

fn validate_baseline<O: FitnessOracle + ?Sized>(config: &EngineConfig, oracle: &O, task: usize) -> Result<()> {
    if task >= oracle.n_tasks() {
        return Err(Error::Config(format!("task {task} out of range")));
    }
    if config.population_size == 0 || config.tournament_size == 0 {
        return Err(Error::Config("population and tournament sizes must be positive".into()));
    }
    if config.baseline_budget() == 0 {
        return Err(Error::Config("evaluation budget must be positive".into()));
    }
    Ok(())
}

/// Uniform random sampling without repeats until the optimum is evaluated or
/// the budget is spent. One record per `K` samples.
pub fn baseline_random_search<O: FitnessOracle + ?Sized>(
    config: &EngineConfig,
    oracle: &O,
    task: usize,
) -> Result<RunTrace> {
    validate_baseline(config, oracle, task)?;
    let mut rng = baseline_rng(config, task);
    let space = oracle.space().clone();
    let budget = config.baseline_budget();
    let size = space.size();
    let per_record = config.population_size as u64;
    let target = oracle.optimum(task).map(|(_, f)| f);

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut best: Option<(Architecture, f64)> = None;
    let mut found = None;
    let mut samples = 0u64;
    while samples < budget && (seen.len() as u128) < size {
        let arch = random_architecture(&space, &mut rng);
        if !seen.insert(arch.clone()) {
            continue;
        }
        let f = oracle.evaluate(task, &arch)?;
        samples += 1;
        if best.as_ref().is_none_or(|(b, bf)| f > *bf || (f == *bf && arch < *b)) {
            best = Some((arch, f));
        }
        if found.is_none() && target.is_some_and(|t| f >= t) {
            found = Some(oracle.unique_evaluations(task));
        }
        let stop = found.is_some() && config.stop_at_optimum;
        if samples % per_record == 0 || stop || samples == budget {
            records.push(GenerationRecord {
                task,
                generation: records.len(),
                best_fitness: best.as_ref().unwrap().1,
                unique_evals: oracle.unique_evaluations(task),
                mean_tp_rank: None,
                labels: Vec::new(),
                pool: Vec::new(),
            });
        }
        if stop {
            break;
        }
    }
    let (best, best_fitness) = best.expect("budget of at least one sample");
    Ok(RunTrace {
        algorithm: "rs".into(),
        seed: config.seed,
        records,
        outcomes: vec![TaskOutcome {
            best,
            best_fitness,
            evals_to_optimum: found.filter(|&e| e <= budget),
            unique_evals: oracle.unique_evaluations(task),
        }],
    })
}

/// Aging evolution: a queue of `K` individuals; each cycle a tournament picks
/// a parent, its single-gene mutant joins the queue and the oldest member
/// leaves. One record per `K` cycles.
pub fn baseline_regularized_evolution<O: FitnessOracle + ?Sized>(
    config: &EngineConfig,
    oracle: &O,
    task: usize,
) -> Result<RunTrace> {
    validate_baseline(config, oracle, task)?;
    let mut rng = baseline_rng(config, task);
    let space = oracle.space().clone();
    let budget = config.baseline_budget();
    let k = config.population_size;
    let target = oracle.optimum(task).map(|(_, f)| f);
    // Cached re-evaluations cost nothing, so cap the cycles as well.
    let max_cycles = budget.saturating_mul(50);

    let mut found = None;
    let mut queue: VecDeque<Individual> = VecDeque::with_capacity(k + 1);
    let mut best: Option<Individual> = None;
    let mut records = Vec::new();
    let consider = |ind: &Individual, best: &mut Option<Individual>, found: &mut Option<u64>| {
        if best.as_ref().is_none_or(|b| rank_order(ind, b, task).is_lt()) {
            *best = Some(ind.clone());
        }
        if found.is_none() && target.is_some_and(|t| ind.fitness[&task] >= t) {
            *found = Some(oracle.unique_evaluations(task));
        }
    };
    for _ in 0..k {
        let mut ind = Individual::new(random_architecture(&space, &mut rng), task);
        evaluate_into(oracle, task, &mut ind)?;
        consider(&ind, &mut best, &mut found);
        queue.push_back(ind);
    }
    let record = |records: &mut Vec<GenerationRecord>, best: &Option<Individual>| {
        records.push(GenerationRecord {
            task,
            generation: records.len(),
            best_fitness: best.as_ref().unwrap().fitness[&task],
            unique_evals: oracle.unique_evaluations(task),
            mean_tp_rank: None,
            labels: Vec::new(),
            pool: Vec::new(),
        });
    };
    record(&mut records, &best);

    let done = |found: &Option<u64>| {
        (config.stop_at_optimum && found.is_some()) || oracle.unique_evaluations(task) >= budget
    };
    let mut cycles = 0u64;
    let pool_buf: &mut Vec<Individual> = &mut Vec::with_capacity(k);
    while !done(&found) && cycles < max_cycles {
        pool_buf.clear();
        pool_buf.extend(queue.iter().cloned());
        let parent = tournament_select(pool_buf, task, config.tournament_size, &mut rng)?;
        let arch = mutate(&parent.arch, &space, config.mutation_probability, &mut rng)?;
        let mut child = Individual::new(arch, task).with_parents(vec![parent.arch.clone()]);
        evaluate_into(oracle, task, &mut child)?;
        consider(&child, &mut best, &mut found);
        queue.push_back(child);
        queue.pop_front();
        cycles += 1;
        if cycles % k as u64 == 0 || done(&found) {
            record(&mut records, &best);
        }
    }
    let best = best.expect("initial population is non-empty");
    Ok(RunTrace {
        algorithm: "rea".into(),
        seed: config.seed,
        records,
        outcomes: vec![TaskOutcome {
            best_fitness: best.fitness[&task],
            best: best.arch,
            evals_to_optimum: found.filter(|&e| e <= budget),
            unique_evals: oracle.unique_evaluations(task),
        }],
    })
}

/// Runs a single-task baseline on every task and merges the traces.
pub fn run_baseline_all_tasks<O: FitnessOracle + ?Sized>(
    config: &EngineConfig,
    oracle: &O,
    baseline: fn(&EngineConfig, &O, usize) -> Result<RunTrace>,
) -> Result<RunTrace> {
    let mut merged: Option<RunTrace> = None;
    for task in 0..oracle.n_tasks() {
        let trace = baseline(config, oracle, task)?;
        match merged.as_mut() {
            None => merged = Some(trace),
            Some(m) => {
                m.records.extend(trace.records);
                m.outcomes.extend(trace.outcomes);
            }
        }
    }
    merged.ok_or_else(|| Error::Config("oracle has no tasks".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::TabularOracle;
    use crate::search_space::{enumerate_space, SearchSpaceSpec};
    use crate::stats::median;

    fn small_embedding() -> EmbeddingConfig {
        EmbeddingConfig { dim: 16, num_walks: 4, walk_len: 10, epochs: 2, sample_size: 64, ..Default::default() }
    }

    /// Two tasks over the whole space with a fitness that depends on the genes.
    fn toy_oracle(nodes: usize, ops: usize, seed: u64) -> TabularOracle {
        let space = SearchSpaceSpec::with_op_count(nodes, ops).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = enumerate_space(&space)
            .unwrap()
            .map(|a| {
                let base: f64 = a.genes().iter().map(|&g| g as f64).sum();
                let row = vec![base + rng.random::<f64>(), base + rng.random::<f64>()];
                (a, row)
            })
            .collect();
        TabularOracle::from_rows(space, vec!["a".into(), "b".into()], rows).unwrap()
    }

    fn single_task_oracle(nodes: usize, ops: usize, seed: u64) -> TabularOracle {
        let space = SearchSpaceSpec::with_op_count(nodes, ops).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = enumerate_space(&space)
            .unwrap()
            .map(|a| {
                let base: f64 = a.genes().iter().map(|&g| ((g as u64 * 7 + seed) % ops as u64) as f64).sum();
                (a, vec![base + 2.0 * rng.random::<f64>()])
            })
            .collect();
        TabularOracle::from_rows(space, vec!["a".into()], rows).unwrap()
    }

    fn config(seed: u64) -> EngineConfig {
        EngineConfig { seed, embedding: small_embedding(), ..Default::default() }
    }

    #[test]
    fn initial_transfers_come_from_the_other_task() {
        let oracle = toy_oracle(4, 3, 0);
        let cfg = config(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (states, records) = initialize(&cfg, &oracle, &mut rng).unwrap();
        assert_eq!(records.len(), 2);
        for s in &states {
            assert_eq!(s.population.len(), 10);
            assert_eq!(s.transfers.len(), 4);
            assert!(s.hts.is_empty());
            assert!(s.transfers.iter().all(|t| t.origin_task != s.task && t.is_transferred));
        }
    }

    #[test]
    fn single_generation_is_initialization() {
        let oracle = toy_oracle(4, 3, 0);
        let cfg = EngineConfig { max_generations: 1, ..config(1) };
        let trace = run(&cfg, &oracle).unwrap();
        assert_eq!(trace.records.len(), 2);
        assert!(trace.records.iter().all(|r| r.generation == 0));
    }

    #[test]
    fn run_finds_the_optimum_and_is_deterministic() {
        let oracle = toy_oracle(3, 3, 7);
        let cfg = config(11);
        let a = run(&cfg, &oracle.fresh()).unwrap();
        let b = run(&cfg, &oracle.fresh()).unwrap();
        assert_eq!(a, b);
        for (task, o) in a.outcomes.iter().enumerate() {
            assert_eq!(Some((o.best.clone(), o.best_fitness)), oracle.optimum(task));
            assert!(o.evals_to_optimum.is_some());
        }
    }

    #[test]
    fn best_fitness_never_decreases_and_populations_keep_size() {
        let oracle = toy_oracle(4, 4, 2);
        let cfg = EngineConfig { stop_at_optimum: false, max_generations: 30, ..config(5) };
        let store = EmbeddingStore::new(oracle.space().clone(), Arc::new(train_shared_model(oracle.space(), &cfg.embedding).unwrap()));
        let mut strategy = TransferStrategy::Rank(store);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut states, first) = initialize(&cfg, &oracle, &mut rng).unwrap();
        let mut last: Vec<f64> = first.iter().map(|r| r.best_fitness).collect();
        for _ in 1..30 {
            let recs = step_generation(&mut states, &oracle, &cfg, &mut strategy, &mut rng).unwrap();
            for (r, s) in recs.iter().zip(&states) {
                assert!(r.best_fitness >= last[r.task]);
                last[r.task] = r.best_fitness;
                assert_eq!(s.population.len(), cfg.population_size);
                assert_eq!(s.transfers.len(), cfg.transfer_count);
                let pop_best = s.population.iter().map(|i| i.fitness[&s.task]).fold(f64::MIN, f64::max);
                assert_eq!(pop_best, r.best_fitness);
            }
        }
        assert!(states.iter().all(|s| !s.hts.is_empty()));
    }

    #[test]
    fn ablation_without_transfers_runs_independently() {
        let oracle = toy_oracle(4, 3, 4);
        let cfg = EngineConfig { transfer_count: 0, ..config(9) };
        let trace = ablation_random_transfer(&cfg, &oracle).unwrap();
        assert!(trace.records.iter().all(|r| r.mean_tp_rank.is_none() || r.generation == 0));
        assert!(run(&cfg, &oracle.fresh()).is_err());
        assert_eq!(trace, ablation_random_transfer(&cfg, &oracle.fresh()).unwrap());
    }

    #[test]
    fn config_validation() {
        let ok = EngineConfig::default();
        assert!(ok.validate(TransferPolicy::Rank).is_ok());
        for bad in [
            EngineConfig { transfer_count: 11, ..ok.clone() },
            EngineConfig { n_tasks: 1, ..ok.clone() },
            EngineConfig { ranking_ratio: 0.0, ..ok.clone() },
            EngineConfig { saved_generations: 0, ..ok.clone() },
            EngineConfig { max_generations: 0, ..ok.clone() },
            EngineConfig { mutation_probability: 1.5, ..ok.clone() },
        ] {
            assert!(bad.validate(TransferPolicy::Rank).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn top_k_collapses_duplicates() {
        let mk = |g: u8, f: f64| {
            let mut i = Individual::new(Architecture::new(vec![g]), 0);
            i.fitness.insert(0, f);
            i
        };
        let pool = vec![mk(0, 1.0), mk(1, 3.0), mk(1, 3.0), mk(2, 2.0)];
        let top: Vec<u8> = select_top_k(&pool, 0, 3).iter().map(|i| i.arch.genes()[0]).collect();
        assert_eq!(top, vec![1, 2, 0]);
        let top: Vec<u8> = select_top_k(&pool, 0, 4).iter().map(|i| i.arch.genes()[0]).collect();
        assert_eq!(top, vec![1, 2, 0, 1]);
    }

    #[test]
    fn random_search_budget_one() {
        let oracle = single_task_oracle(4, 5, 0);
        let cfg = EngineConfig { eval_budget: Some(1), ..EngineConfig::default() };
        let trace = baseline_random_search(&cfg, &oracle, 0).unwrap();
        assert_eq!(oracle.unique_evaluations(0), 1);
        assert_eq!(trace.outcomes[0].unique_evals, 1);
    }

    #[test]
    fn random_search_mean_on_eight_architectures() {
        // uniform search without replacement over 8 items finds a fixed one
        // after (8 + 1) / 2 draws on average
        let oracle = single_task_oracle(3, 2, 1);
        let mut total = 0u64;
        for seed in 0..1000 {
            let o = oracle.fresh();
            let cfg = EngineConfig { seed, eval_budget: Some(8), ..EngineConfig::default() };
            let trace = baseline_random_search(&cfg, &o, 0).unwrap();
            let n = trace.outcomes[0].evals_to_optimum.unwrap();
            assert_eq!(n, o.unique_evaluations(0));
            total += n;
        }
        let mean = total as f64 / 1000.0;
        assert!((mean - 4.5).abs() < 0.25, "mean {mean}");
    }

    /// Aging evolution written against plain vectors, drawing from the rng
    /// in the same order as the library.
    fn reference_rea(fit: &dyn Fn(&[u8]) -> f64, genes: usize, ops: usize, k: usize, tour: usize, target: f64, budget: usize, seed: u64) -> Option<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut seen = HashSet::new();
        let mut queue: Vec<Vec<u8>> = Vec::new();
        let eval = |g: &Vec<u8>, seen: &mut HashSet<Vec<u8>>| -> Option<usize> {
            seen.insert(g.clone());
            (fit(g) >= target).then_some(seen.len())
        };
        let mut found = None;
        for _ in 0..k {
            let g: Vec<u8> = (0..genes).map(|_| rng.random_range(0..ops) as u8).collect();
            found = found.or(eval(&g, &mut seen));
            queue.push(g);
        }
        let better = |a: &Vec<u8>, b: &Vec<u8>| fit(a) > fit(b) || (fit(a) == fit(b) && a < b);
        let mut cycles = 0;
        while found.is_none() && seen.len() < budget && cycles < budget * 50 {
            let mut w = rng.random_range(0..queue.len());
            for _ in 1..tour {
                let c = rng.random_range(0..queue.len());
                if better(&queue[c], &queue[w]) {
                    w = c;
                }
            }
            let mut child = queue[w].clone();
            let pos = rng.random_range(0..genes);
            let d = rng.random_range(0..ops - 1) as u8;
            child[pos] = if d >= child[pos] { d + 1 } else { d };
            found = found.or(eval(&child, &mut seen));
            queue.push(child);
            queue.remove(0);
            cycles += 1;
        }
        found.filter(|&e| e <= budget)
    }

    #[test]
    fn regularized_evolution_matches_reference() {
        let oracle = single_task_oracle(4, 4, 3);
        let table: HashMap<Vec<u8>, f64> =
            oracle.keys().iter().map(|a| (a.genes().to_vec(), oracle.peek(0, a).unwrap())).collect();
        let fit = |g: &[u8]| table[g];
        let target = oracle.optimum(0).unwrap().1;
        let (mut ours, mut theirs) = (Vec::new(), Vec::new());
        for seed in 0..200 {
            let cfg = EngineConfig { seed, eval_budget: Some(300), ..EngineConfig::default() };
            let o = oracle.fresh();
            let trace = baseline_regularized_evolution(&cfg, &o, 0).unwrap();
            ours.push(trace.outcomes[0].evals_to_optimum.map(|v| v as f64));
            theirs.push(reference_rea(&fit, 6, 4, 10, 5, target, 300, seed).map(|v| v as f64));
        }
        let (a, b) = (median(&ours).unwrap(), median(&theirs).unwrap());
        assert!((a - b).abs() <= 0.1 * b, "{a} vs {b}");
    }

    #[test]
    fn regularized_evolution_with_one_member_walks() {
        let oracle = single_task_oracle(3, 3, 0);
        let cfg = EngineConfig { population_size: 1, tournament_size: 1, eval_budget: Some(5), ..EngineConfig::default() };
        let trace = baseline_regularized_evolution(&cfg, &oracle, 0).unwrap();
        assert!(oracle.unique_evaluations(0) <= 5);
        assert!(!trace.records.is_empty());
    }
}
