use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ktnas_core::harness::{
    cmd_compare, cmd_gen_landscape, cmd_run, format_compare, parse_seeds, ExperimentPlan,
    ExperimentResult, PlanConfig,
};
use ktnas_core::{Error, LandscapeSpec};

/// Multi-task evolutionary architecture search with transfer rank.
#[derive(Parser)]
#[command(name = "ktnas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a correlated multi-task benchmark CSV and its metadata sidecar.
    GenLandscape(GenArgs),
    /// Run algorithms over seeds and write trace, runs and summary CSVs.
    Run(PlanArgs),
    /// Run every algorithm on the same seeds and rank them.
    Compare(PlanArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output CSV; the sidecar is written next to it as <name>.meta.json.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    #[arg(long, default_value_t = 5)]
    ops: usize,
    #[arg(long, default_value_t = 2)]
    tasks: usize,
    /// Target mean pairwise Kendall tau.
    #[arg(long, conflicts_with = "lambda")]
    tau: Option<f64>,
    /// Fixed shared-score weight instead of a tau target.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    epistasis: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct PlanArgs {
    /// TOML plan file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Benchmark CSV (overrides the plan file).
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Negate a task column of the benchmark (loss-style tasks). Repeatable.
    #[arg(long)]
    negate: Vec<usize>,
    /// ktnas, ktnas-random-transfer, rea or rs. Repeatable; default all.
    #[arg(long = "algorithm", short)]
    algorithms: Vec<String>,
    /// Seeds as `0..30`, `7` or `1,2,5`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    generations: Option<usize>,
    /// Unique evaluations allowed per task.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    transfer_count: Option<usize>,
    /// Engine override as key=value, e.g. `embedding.dim=64`. Repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
    /// Output directory (default: plan file, then $KTNAS_OUTPUT_DIR, then ./ktnas-out).
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

impl PlanArgs {
    fn plan(&self) -> Result<ExperimentPlan, Error> {
        let mut cfg = match &self.config {
            Some(path) => PlanConfig::load(path)?,
            None => PlanConfig::default(),
        };
        if let Some(oracle) = &self.oracle {
            cfg.oracle = Some(oracle.clone());
            cfg.landscape = None;
        }
        if !self.negate.is_empty() {
            cfg.negate = self.negate.clone();
        }
        if !self.algorithms.is_empty() {
            cfg.algorithms = self.algorithms.clone();
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = parse_seeds(seeds)?;
        }
        let mut overrides = Vec::new();
        let mut flag = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push(format!("{key}={v}"));
            }
        };
        flag("max_generations", self.generations.map(|v| v.to_string()));
        flag("eval_budget", self.budget.map(|v| v.to_string()));
        flag("population_size", self.population.map(|v| v.to_string()));
        flag("transfer_count", self.transfer_count.map(|v| v.to_string()));
        overrides.extend(self.overrides.iter().cloned());
        cfg.apply_overrides(&overrides)?;
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        ExperimentPlan::from_config(cfg, self.force)
    }
}

fn report_failures(result: &ExperimentResult) -> ExitCode {
    for f in &result.failures {
        eprintln!("error: {} seed {}: {}", f.algorithm, f.seed, f.message);
    }
    if result.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::GenLandscape(a) => {
            let spec = LandscapeSpec {
                num_nodes: a.nodes,
                num_ops: a.ops,
                n_tasks: a.tasks,
                target_rank_corr: if a.lambda.is_some() { None } else { Some(a.tau.unwrap_or(0.8)) },
                lambda: a.lambda,
                epistasis: a.epistasis,
                seed: a.seed,
            };
            let report = cmd_gen_landscape(&spec, &a.out, a.force)?;
            println!(
                "wrote {} (lambda {:.6}, mean pairwise tau {:.4})",
                a.out.display(),
                report.lambda,
                report.mean_pairwise_tau
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(a) => {
            let (result, paths) = cmd_run(&a.plan()?)?;
            println!("wrote {}, {}, {}", paths.trace.display(), paths.runs.display(), paths.summary.display());
            Ok(report_failures(&result))
        }
        Command::Compare(a) => {
            let (result, rows, paths) = cmd_compare(&a.plan()?)?;
            print!("{}", format_compare(&rows));
            println!("wrote {}", paths.compare.display());
            Ok(report_failures(&result))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}
