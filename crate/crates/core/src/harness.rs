//! Experiment plans, concurrent multi-seed execution and CSV reports.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{train_shared_model, EmbeddingModel};
use crate::engine::{
    ablation_random_transfer, baseline_random_search, baseline_regularized_evolution,
    run_baseline_all_tasks, run_with_model, EngineConfig, RunTrace,
};
use crate::error::{Error, Result};
use crate::oracles::{synthesize_landscape, FitnessOracle, LandscapeSpec, LoadOptions, TabularOracle};
use crate::stats::{censored_cmp, mann_whitney_u, mean_sd, median, quantile};

pub const TRACE_HEADER: &str = "# ktnas-trace v1";
pub const RUNS_HEADER: &str = "# ktnas-runs v1";
pub const SUMMARY_HEADER: &str = "# ktnas-summary v1";
pub const COMPARE_HEADER: &str = "# ktnas-compare v1";
pub const POPULATIONS_HEADER: &str = "# ktnas-populations v1";

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "KTNAS_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "ktnas-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ktnas")]
    Ktnas,
    #[serde(rename = "ktnas-random-transfer")]
    KtnasRandomTransfer,
    #[serde(rename = "rea")]
    Rea,
    #[serde(rename = "rs")]
    Rs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Ktnas,
        Algorithm::KtnasRandomTransfer,
        Algorithm::Rea,
        Algorithm::Rs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ktnas => "ktnas",
            Algorithm::KtnasRandomTransfer => "ktnas-random-transfer",
            Algorithm::Rea => "rea",
            Algorithm::Rs => "rs",
        }
    }

    /// Runs one seed. `model` is required for transfer rank.
    pub fn run<O: FitnessOracle + ?Sized>(
        self,
        config: &EngineConfig,
        oracle: &O,
        model: Option<&Arc<EmbeddingModel>>,
    ) -> Result<RunTrace> {
        match self {
            Algorithm::Ktnas => {
                let model = model
                    .ok_or_else(|| Error::Config("transfer rank needs an embedding model".into()))?;
                run_with_model(config, oracle, model.clone())
            }
            Algorithm::KtnasRandomTransfer => ablation_random_transfer(config, oracle),
            Algorithm::Rea => run_baseline_all_tasks(config, oracle, baseline_regularized_evolution),
            Algorithm::Rs => run_baseline_all_tasks(config, oracle, baseline_random_search),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown algorithm {s:?}; expected one of ktnas, ktnas-random-transfer, rea, rs"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleSource {
    File { path: PathBuf, negate: Vec<usize> },
    Landscape(LandscapeSpec),
}

impl OracleSource {
    pub fn load(&self) -> Result<TabularOracle> {
        match self {
            OracleSource::File { path, negate } => TabularOracle::load(
                path,
                &LoadOptions { negate: negate.clone(), space: None },
            ),
            OracleSource::Landscape(spec) => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                Ok(synthesize_landscape(spec, &mut rng)?.oracle)
            }
        }
    }
}

/// On-disk form of a plan: TOML, every field optional.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub algorithms: Vec<String>,
    pub seeds: Vec<u64>,
    /// Benchmark CSV, relative to the plan file.
    pub oracle: Option<PathBuf>,
    /// Task columns to negate when loading the benchmark.
    pub negate: Vec<usize>,
    pub landscape: Option<LandscapeSpec>,
    pub output_dir: Option<PathBuf>,
    pub engine: EngineConfig,
}

impl PlanConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a plan file, resolving its oracle path against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut plan = Self::from_toml(&text)?;
        if let (Some(oracle), Some(dir)) = (plan.oracle.as_mut(), path.parent()) {
            if oracle.is_relative() {
                *oracle = dir.join(&*oracle);
            }
        }
        Ok(plan)
    }

    /// Applies `key=value` overrides to the engine section. Values use TOML
    /// syntax; nested keys are dotted (`embedding.dim=64`).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut table = toml::Value::try_from(&self.engine).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let value = parse_toml_value(raw.trim());
            let mut slot = &mut table;
            let parts: Vec<&str> = key.trim().split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let map = slot
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override key {key:?} is not a table path")))?;
                if i + 1 == parts.len() {
                    map.insert(part.to_string(), value.clone());
                    break;
                }
                slot = map
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()));
            }
        }
        self.engine = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(())
    }
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    toml::from_str::<toml::Table>(&doc)
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Parses `"0..10"`, `"3"` or `"1,4,9"`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("invalid seed list {spec:?}"));
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub algorithms: Vec<Algorithm>,
    pub oracle: OracleSource,
    pub seeds: Vec<u64>,
    pub engine: EngineConfig,
    pub output_dir: PathBuf,
    pub force: bool,
}

impl ExperimentPlan {
    /// Validates a plan file. Missing algorithms default to all four, missing
    /// seeds to `0`, a missing output directory to the environment default.
    pub fn from_config(config: PlanConfig, force: bool) -> Result<Self> {
        let mut algorithms = config
            .algorithms
            .iter()
            .map(|a| a.parse())
            .collect::<Result<Vec<Algorithm>>>()?;
        if algorithms.is_empty() {
            algorithms = Algorithm::ALL.to_vec();
        }
        algorithms.sort();
        algorithms.dedup();
        let mut seeds = config.seeds;
        if seeds.is_empty() {
            seeds.push(0);
        }
        seeds.sort_unstable();
        seeds.dedup();
        let oracle = match (config.oracle, config.landscape) {
            (Some(path), None) => OracleSource::File { path, negate: config.negate },
            (None, Some(spec)) => OracleSource::Landscape(spec),
            (None, None) => return Err(Error::Config("plan needs an oracle file or a landscape".into())),
            (Some(_), Some(_)) => {
                return Err(Error::Config("plan sets both an oracle file and a landscape".into()))
            }
        };
        let output_dir = config.output_dir.unwrap_or_else(default_output_dir);
        Ok(Self { algorithms, oracle, seeds, engine: config.engine, output_dir, force })
    }
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub task_names: Vec<String>,
    /// Completed runs sorted by `(algorithm, seed)`.
    pub runs: Vec<(Algorithm, RunTrace)>,
    pub failures: Vec<RunFailure>,
}

/// Runs every `(algorithm, seed)` pair concurrently, each on a private copy
/// of the oracle's counters.
pub fn execute(plan: &ExperimentPlan, oracle: &TabularOracle) -> Result<ExperimentResult> {
    let mut engine = plan.engine.clone();
    engine.n_tasks = oracle.n_tasks();
    let model = if plan.algorithms.contains(&Algorithm::Ktnas) {
        engine.validate(crate::engine::TransferPolicy::Rank)?;
        Some(Arc::new(train_shared_model(oracle.space(), &engine.embedding)?))
    } else {
        None
    };
    let jobs: Vec<(Algorithm, u64)> = plan
        .algorithms
        .iter()
        .flat_map(|&a| plan.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let mut outcomes: Vec<(Algorithm, u64, Result<RunTrace>)> = jobs
        .into_par_iter()
        .map(|(algorithm, seed)| {
            let config = EngineConfig { seed, ..engine.clone() };
            let private = oracle.fresh();
            (algorithm, seed, algorithm.run(&config, &private, model.as_ref()))
        })
        .collect();
    outcomes.sort_by_key(|(a, s, _)| (*a, *s));

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (algorithm, seed, outcome) in outcomes {
        match outcome {
            Ok(trace) => runs.push((algorithm, trace)),
            Err(e) => failures.push(RunFailure { algorithm, seed, message: e.to_string() }),
        }
    }
    Ok(ExperimentResult { task_names: oracle.task_names().to_vec(), runs, failures })
}

/// One line of the trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub algorithm: String,
    pub seed: u64,
    pub task: usize,
    pub generation: usize,
    pub best_fitness: f64,
    pub unique_evals: u64,
    pub mean_tp_rank: Option<f64>,
    pub tp_pos_count: usize,
    pub tp_neg_count: usize,
}

/// Per-run, per-task outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub algorithm: String,
    pub seed: u64,
    pub task: usize,
    pub evals_to_optimum: Option<u64>,
    pub unique_evals: u64,
    pub best_fitness: f64,
    pub best_encoding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    /// Task index, or `total` for the per-run sum over tasks.
    pub task: String,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Censored (unsuccessful) runs rank last; empty when the statistic
    /// falls on a censored run.
    pub median_evals: Option<f64>,
    pub q1_evals: Option<f64>,
    pub q3_evals: Option<f64>,
    pub best_fitness_mean: Option<f64>,
    pub best_fitness_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub rank: usize,
    pub algorithm: String,
    pub task: String,
    pub median_evals: Option<f64>,
    pub success_rate: f64,
    /// Two-sided Mann-Whitney U p-value of ktnas against this algorithm.
    pub p_value_vs_ktnas: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRow {
    pub algorithm: String,
    pub seed: u64,
    pub task: usize,
    pub generation: usize,
    pub role: String,
    pub encoding: String,
    pub fitness: f64,
}

pub fn trace_rows(result: &ExperimentResult) -> Vec<TraceRow> {
    result
        .runs
        .iter()
        .flat_map(|(alg, trace)| {
            trace.records.iter().map(move |r| TraceRow {
                algorithm: alg.name().into(),
                seed: trace.seed,
                task: r.task,
                generation: r.generation,
                best_fitness: r.best_fitness,
                unique_evals: r.unique_evals,
                mean_tp_rank: r.mean_tp_rank,
                tp_pos_count: r.positive_count(),
                tp_neg_count: r.negative_count(),
            })
        })
        .collect()
}

pub fn run_rows(result: &ExperimentResult) -> Vec<RunRow> {
    result
        .runs
        .iter()
        .flat_map(|(alg, trace)| {
            trace.outcomes.iter().enumerate().map(move |(task, o)| RunRow {
                algorithm: alg.name().into(),
                seed: trace.seed,
                task,
                evals_to_optimum: o.evals_to_optimum,
                unique_evals: o.unique_evals,
                best_fitness: o.best_fitness,
                best_encoding: o.best.encoding(),
            })
        })
        .collect()
}

pub fn population_rows(result: &ExperimentResult) -> Vec<PopulationRow> {
    result
        .runs
        .iter()
        .flat_map(|(alg, trace)| {
            trace.records.iter().flat_map(move |r| {
                r.pool.iter().map(move |m| PopulationRow {
                    algorithm: alg.name().into(),
                    seed: trace.seed,
                    task: r.task,
                    generation: r.generation,
                    role: m.role.as_str().into(),
                    encoding: m.arch.encoding(),
                    fitness: m.fitness,
                })
            })
        })
        .collect()
}

/// Per-(algorithm, seed) totals: the sum of evaluations-to-optimum over
/// tasks, censored if any task is.
fn totals(rows: &[RunRow], algorithm: &str) -> Vec<Option<f64>> {
    let mut seeds: Vec<u64> = rows.iter().filter(|r| r.algorithm == algorithm).map(|r| r.seed).collect();
    seeds.dedup();
    seeds
        .iter()
        .map(|&s| {
            rows.iter()
                .filter(|r| r.algorithm == algorithm && r.seed == s)
                .map(|r| r.evals_to_optimum.map(|v| v as f64))
                .sum()
        })
        .collect()
}

fn evals_for(rows: &[RunRow], algorithm: &str, task: Option<usize>) -> Vec<Option<f64>> {
    match task {
        Some(t) => rows
            .iter()
            .filter(|r| r.algorithm == algorithm && r.task == t)
            .map(|r| r.evals_to_optimum.map(|v| v as f64))
            .collect(),
        None => totals(rows, algorithm),
    }
}

/// Aggregates run rows (sorted by algorithm, seed, task) into one row per
/// algorithm and task plus a `total` row per algorithm.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut algorithms: Vec<&str> = rows.iter().map(|r| r.algorithm.as_str()).collect();
    algorithms.dedup();
    let n_tasks = rows.iter().map(|r| r.task + 1).max().unwrap_or(0);
    let mut out = Vec::new();
    for alg in algorithms {
        for task in (0..n_tasks).map(Some).chain([None]) {
            let evals = evals_for(rows, alg, task);
            let successes = evals.iter().filter(|e| e.is_some()).count();
            let (fit_mean, fit_sd) = match task {
                Some(t) => {
                    let fits: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.algorithm == alg && r.task == t)
                        .map(|r| r.best_fitness)
                        .collect();
                    let (m, s) = mean_sd(&fits);
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            out.push(SummaryRow {
                algorithm: alg.to_string(),
                task: task.map_or_else(|| "total".to_string(), |t| t.to_string()),
                runs: evals.len(),
                successes,
                success_rate: successes as f64 / evals.len().max(1) as f64,
                median_evals: median(&evals),
                q1_evals: quantile(&evals, 0.25),
                q3_evals: quantile(&evals, 0.75),
                best_fitness_mean: fit_mean,
                best_fitness_sd: fit_sd,
            });
        }
    }
    out
}

/// Ranks algorithms by median evaluations-to-optimum, per task and in total,
/// with a Mann-Whitney p-value of ktnas against each other algorithm.
pub fn compare(rows: &[RunRow]) -> Vec<CompareRow> {
    let summary = summarize(rows);
    let mut tasks: Vec<String> = summary.iter().map(|s| s.task.clone()).collect();
    let total_last = |t: &String| (t == "total", t.parse::<usize>().unwrap_or(usize::MAX));
    tasks.sort_by_key(total_last);
    tasks.dedup();
    let mut out = Vec::new();
    for task in tasks {
        let task_idx = task.parse::<usize>().ok();
        let ktnas = evals_for(rows, Algorithm::Ktnas.name(), task_idx);
        let mut group: Vec<&SummaryRow> = summary.iter().filter(|s| s.task == task).collect();
        group.sort_by(|a, b| {
            censored_cmp(a.median_evals, b.median_evals)
                .then(b.success_rate.total_cmp(&a.success_rate))
                .then(a.algorithm.cmp(&b.algorithm))
        });
        for (i, s) in group.into_iter().enumerate() {
            let p = if s.algorithm == Algorithm::Ktnas.name() || ktnas.is_empty() {
                None
            } else {
                mann_whitney_u(&ktnas, &evals_for(rows, &s.algorithm, task_idx)).map(|m| m.p_value)
            };
            out.push(CompareRow {
                rank: i + 1,
                algorithm: s.algorithm.clone(),
                task: task.clone(),
                median_evals: s.median_evals,
                success_rate: s.success_rate,
                p_value_vs_ktnas: p,
            });
        }
    }
    out
}

/// Plain-text table of compare rows.
pub fn format_compare(rows: &[CompareRow]) -> String {
    let fmt_opt = |v: Option<f64>, prec: usize| v.map_or("censored".to_string(), |x| format!("{x:.prec$}"));
    let mut s = format!(
        "{:<6} {:<4} {:<22} {:>12} {:>8} {:>12}\n",
        "task", "rank", "algorithm", "median", "success", "p vs ktnas"
    );
    for r in rows {
        let p = r.p_value_vs_ktnas.map_or("-".to_string(), |p| format!("{p:.4}"));
        s.push_str(&format!(
            "{:<6} {:<4} {:<22} {:>12} {:>8.2} {:>12}\n",
            r.task,
            r.rank,
            r.algorithm,
            fmt_opt(r.median_evals, 1),
            r.success_rate,
            p
        ));
    }
    s
}

fn write_csv<T: Serialize, W: Write>(mut w: W, header: &str, rows: &[T]) -> Result<()> {
    writeln!(w, "{header}")?;
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a CSV written by this module, checking its versioned header line.
pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(reader: R, header: &str) -> Result<Vec<T>> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    let (first, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    if first.trim_end() != header {
        return Err(Error::Parse { line: 1, message: format!("expected header {header:?}") });
    }
    let mut csv = csv::Reader::from_reader(body.as_bytes());
    csv.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Parse { line: i + 3, message: e.to_string() }))
        .collect()
}

pub fn read_csv_file<T: for<'de> Deserialize<'de>>(path: &Path, header: &str) -> Result<Vec<T>> {
    read_csv(File::open(path)?, header)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Fails if any of `paths` exists and `force` is unset.
pub fn check_overwrite(paths: &[PathBuf], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(Error::Config(format!(
            "{} already exists; pass --force to overwrite",
            p.display()
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub trace: PathBuf,
    pub runs: PathBuf,
    pub summary: PathBuf,
    pub compare: PathBuf,
    pub populations: PathBuf,
    pub failures: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            trace: dir.join("trace.csv"),
            runs: dir.join("runs.csv"),
            summary: dir.join("summary.csv"),
            compare: dir.join("compare.csv"),
            populations: dir.join("populations.csv"),
            failures: dir.join("failures.csv"),
        }
    }
}

/// Writes trace, runs and summary (and populations when recorded).
pub fn write_run_outputs(result: &ExperimentResult, plan: &ExperimentPlan) -> Result<OutputPaths> {
    let paths = OutputPaths::in_dir(&plan.output_dir);
    let mut targets = vec![paths.trace.clone(), paths.runs.clone(), paths.summary.clone()];
    if plan.engine.record_populations {
        targets.push(paths.populations.clone());
    }
    if !result.failures.is_empty() {
        targets.push(paths.failures.clone());
    }
    check_overwrite(&targets, plan.force)?;
    fs::create_dir_all(&plan.output_dir)?;
    let runs = run_rows(result);
    write_csv(create(&paths.trace)?, TRACE_HEADER, &trace_rows(result))?;
    write_csv(create(&paths.runs)?, RUNS_HEADER, &runs)?;
    write_csv(create(&paths.summary)?, SUMMARY_HEADER, &summarize(&runs))?;
    if plan.engine.record_populations {
        write_csv(create(&paths.populations)?, POPULATIONS_HEADER, &population_rows(result))?;
    }
    if !result.failures.is_empty() {
        let mut w = create(&paths.failures)?;
        writeln!(w, "algorithm,seed,message")?;
        for f in &result.failures {
            writeln!(w, "{},{},\"{}\"", f.algorithm, f.seed, f.message.replace('"', "\"\""))?;
        }
        w.flush()?;
    }
    Ok(paths)
}

/// `run`: execute the plan and write trace, runs and summary CSVs.
pub fn cmd_run(plan: &ExperimentPlan) -> Result<(ExperimentResult, OutputPaths)> {
    let paths = OutputPaths::in_dir(&plan.output_dir);
    check_overwrite(&[paths.trace.clone(), paths.runs.clone(), paths.summary.clone()], plan.force)?;
    let oracle = plan.oracle.load()?;
    let result = execute(plan, &oracle)?;
    let paths = write_run_outputs(&result, plan)?;
    Ok((result, paths))
}

/// `compare`: `run` plus the ranked comparison table.
pub fn cmd_compare(plan: &ExperimentPlan) -> Result<(ExperimentResult, Vec<CompareRow>, OutputPaths)> {
    let paths = OutputPaths::in_dir(&plan.output_dir);
    check_overwrite(&[paths.compare.clone()], plan.force)?;
    let (result, paths) = cmd_run(plan)?;
    let rows = compare(&run_rows(&result));
    write_csv(create(&paths.compare)?, COMPARE_HEADER, &rows)?;
    Ok((result, rows, paths))
}

/// Sidecar path for a landscape CSV: `x.csv` becomes `x.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// `gen-landscape`: synthesize, write the benchmark CSV and its metadata.
pub fn cmd_gen_landscape(spec: &LandscapeSpec, out: &Path, force: bool) -> Result<crate::oracles::LandscapeReport> {
    let meta = sidecar_path(out);
    check_overwrite(&[out.to_path_buf(), meta.clone()], force)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let land = synthesize_landscape(spec, &mut rng)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    land.oracle.save(out)?;
    let mut w = create(&meta)?;
    serde_json::to_writer_pretty(&mut w, &land.report).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(land.report)
}
