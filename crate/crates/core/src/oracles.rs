//! Fitness sources: a tabular benchmark oracle backed by a CSV file, and a
//! generator of synthetic multi-task landscapes with a chosen inter-task
//! rank correlation.
//!
//! Benchmark CSV schema: header `encoding,task_0,...,task_{N-1}`, one row
//! per architecture `e0:e1:...,<f64>,...`. Fitness is "higher is better".

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_space::{enumerate_space, Architecture, SearchSpaceSpec};
use crate::stats::kendall_tau_b;

/// Source of per-task fitness values for architectures.
pub trait FitnessOracle {
    fn space(&self) -> &SearchSpaceSpec;

    fn n_tasks(&self) -> usize;

    /// Fitness of `arch` on `task`; the first lookup of a `(task, arch)` pair
    /// counts as one unique evaluation.
    fn evaluate(&self, task: usize, arch: &Architecture) -> Result<f64>;

    fn unique_evaluations(&self, task: usize) -> u64;

    /// Best architecture on `task`, when the oracle knows it.
    fn optimum(&self, task: usize) -> Option<(Architecture, f64)>;
}

#[derive(Debug)]
struct Table {
    space: SearchSpaceSpec,
    task_names: Vec<String>,
    keys: Vec<Architecture>,
    index: HashMap<Architecture, usize>,
    /// Row-major `keys.len() x n_tasks`.
    values: Vec<f64>,
    negated: Vec<bool>,
    optima: Vec<(Architecture, f64)>,
}

/// Lookup-table oracle. Clones made with [`TabularOracle::fresh`] share the
/// table but keep private evaluation counters.
#[derive(Debug)]
pub struct TabularOracle {
    table: Arc<Table>,
    served: Mutex<Vec<HashSet<usize>>>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Task columns whose values are losses; they are negated on load.
    pub negate: Vec<usize>,
    /// Expected search space. Inferred from the encodings when absent.
    pub space: Option<SearchSpaceSpec>,
}

impl TabularOracle {
    pub fn from_rows(
        space: SearchSpaceSpec,
        task_names: Vec<String>,
        rows: Vec<(Architecture, Vec<f64>)>,
    ) -> Result<Self> {
        let n_tasks = task_names.len();
        if n_tasks == 0 {
            return Err(Error::InvalidInput("a fitness table needs at least one task".into()));
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput("a fitness table needs at least one row".into()));
        }
        let mut keys = Vec::with_capacity(rows.len());
        let mut index = HashMap::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * n_tasks);
        for (arch, row) in rows {
            space.validate(&arch)?;
            if row.len() != n_tasks {
                return Err(Error::DimensionMismatch { expected: n_tasks, got: row.len() });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite fitness {v} for {arch}")));
            }
            if index.insert(arch.clone(), keys.len()).is_some() {
                return Err(Error::InvalidInput(format!("duplicate key {arch}")));
            }
            keys.push(arch);
            values.extend(row);
        }
        let optima = (0..n_tasks)
            .map(|t| {
                let best = (0..keys.len())
                    .max_by(|&a, &b| {
                        values[a * n_tasks + t]
                            .total_cmp(&values[b * n_tasks + t])
                            .then_with(|| keys[b].cmp(&keys[a]))
                    })
                    .expect("non-empty table");
                (keys[best].clone(), values[best * n_tasks + t])
            })
            .collect();
        Ok(Self {
            table: Arc::new(Table {
                space,
                task_names,
                keys,
                index,
                values,
                negated: vec![false; n_tasks],
                optima,
            }),
            served: Mutex::new(vec![HashSet::new(); n_tasks]),
        })
    }

    /// Same table, zeroed evaluation counters.
    pub fn fresh(&self) -> Self {
        Self {
            table: self.table.clone(),
            served: Mutex::new(vec![HashSet::new(); self.n_tasks()]),
        }
    }

    pub fn task_names(&self) -> &[String] {
        &self.table.task_names
    }

    /// Architectures in file order.
    pub fn keys(&self) -> &[Architecture] {
        &self.table.keys
    }

    pub fn len(&self) -> usize {
        self.table.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.keys.is_empty()
    }

    /// Which task columns were negated on load.
    pub fn negated(&self) -> &[bool] {
        &self.table.negated
    }

    /// Fitness column of one task, in key order.
    pub fn column(&self, task: usize) -> Vec<f64> {
        let n = self.n_tasks();
        (0..self.len()).map(|r| self.table.values[r * n + task]).collect()
    }

    /// Stored value without touching the counters.
    pub fn peek(&self, task: usize, arch: &Architecture) -> Option<f64> {
        let row = *self.table.index.get(arch)?;
        self.table.values.get(row * self.n_tasks() + task).copied()
    }

    /// Kendall tau-b between two task columns over the full key set.
    pub fn kendall_tau(&self, task_a: usize, task_b: usize) -> Option<f64> {
        kendall_tau_b(&self.column(task_a), &self.column(task_b))
    }

    pub fn tau_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.n_tasks();
        (0..n)
            .map(|a| (0..n).map(|b| self.kendall_tau(a, b).unwrap_or(f64::NAN)).collect())
            .collect()
    }

    pub fn load(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, options)
    }

    pub fn read_csv<R: Read>(reader: R, options: &LoadOptions) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .from_reader(reader);
        let header = csv.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
        if header.get(0) != Some("encoding") {
            return Err(Error::Parse { line: 1, message: "first column must be `encoding`".into() });
        }
        let task_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        if task_names.is_empty() {
            return Err(Error::Parse { line: 1, message: "missing task columns".into() });
        }
        for (i, name) in task_names.iter().enumerate() {
            if name != &format!("task_{i}") {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected column task_{i}, found {name:?}"),
                });
            }
        }
        for &t in &options.negate {
            if t >= task_names.len() {
                return Err(Error::Config(format!("cannot negate missing task column {t}")));
            }
        }

        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for record in csv.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                Error::Parse { line, message: e.to_string() }
            })?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            let err = |message: String| Error::Parse { line, message };
            let arch: Architecture = record[0].parse().map_err(|e: Error| err(e.to_string()))?;
            if !seen.insert(arch.clone()) {
                return Err(err(format!("duplicate key {arch}")));
            }
            let mut values = Vec::with_capacity(task_names.len());
            for (t, field) in record.iter().skip(1).enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| err(format!("bad fitness {field:?}")))?;
                if !v.is_finite() {
                    return Err(err(format!("non-finite fitness {field:?}")));
                }
                values.push(if options.negate.contains(&t) { -v } else { v });
            }
            rows.push((arch, values));
        }
        if rows.is_empty() {
            return Err(Error::Parse { line: 2, message: "no data rows".into() });
        }
        let space = match &options.space {
            Some(s) => s.clone(),
            None => infer_space(&rows)?,
        };
        let mut oracle = Self::from_rows(space, task_names, rows)?;
        let table = Arc::get_mut(&mut oracle.table).expect("freshly built table is unshared");
        for &t in &options.negate {
            table.negated[t] = true;
        }
        Ok(oracle)
    }

    /// Writes the table in the benchmark CSV schema. Values are stored
    /// (post-negation) fitness.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        csv.write_record(std::iter::once("encoding".to_string()).chain(self.table.task_names.iter().cloned()))?;
        let n = self.n_tasks();
        for (r, key) in self.table.keys.iter().enumerate() {
            csv.write_record(
                std::iter::once(key.encoding())
                    .chain(self.table.values[r * n..(r + 1) * n].iter().map(|v| format!("{v:?}"))),
            )?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn infer_space(rows: &[(Architecture, Vec<f64>)]) -> Result<SearchSpaceSpec> {
    let genes = rows[0].0.len();
    let nodes = (2..64).find(|n| n * (n - 1) / 2 == genes).ok_or_else(|| {
        Error::InvalidInput(format!("{genes} genes do not match a complete cell DAG"))
    })?;
    let ops = rows
        .iter()
        .flat_map(|(a, _)| a.genes().iter().copied())
        .max()
        .unwrap_or(0) as usize
        + 1;
    SearchSpaceSpec::with_op_count(nodes, ops)
}

impl FitnessOracle for TabularOracle {
    fn space(&self) -> &SearchSpaceSpec {
        &self.table.space
    }

    fn n_tasks(&self) -> usize {
        self.table.task_names.len()
    }

    fn evaluate(&self, task: usize, arch: &Architecture) -> Result<f64> {
        let n = self.n_tasks();
        if task >= n {
            return Err(Error::InvalidInput(format!("task {task} out of range ({n} tasks)")));
        }
        let row = *self.table.index.get(arch).ok_or_else(|| Error::UnknownKey {
            task,
            key: arch.encoding(),
        })?;
        self.served.lock().expect("counter lock")[task].insert(row);
        Ok(self.table.values[row * n + task])
    }

    fn unique_evaluations(&self, task: usize) -> u64 {
        self.served.lock().expect("counter lock")[task].len() as u64
    }

    fn optimum(&self, task: usize) -> Option<(Architecture, f64)> {
        self.table.optima.get(task).cloned()
    }
}

/// Parameters of a synthetic multi-task landscape.
///
/// Every score field over the space is a random additive-plus-pairwise model
/// `f(g) = sum_i a_i[g_i] + sum_{i<j} b_ij[g_i][g_j]`, standardized. Task `k`
/// fitness is `λ·s_k·u + (1-λ)·ε_k` with a shared field `u`, private fields
/// `ε_k` and signs `s_k` (`-1` on odd tasks for anti-correlated targets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeSpec {
    pub num_nodes: usize,
    pub num_ops: usize,
    pub n_tasks: usize,
    /// Desired mean pairwise Kendall tau; λ is searched to meet it.
    pub target_rank_corr: Option<f64>,
    /// Fixed shared-score weight; used instead of a target when set.
    pub lambda: Option<f64>,
    /// Standard deviation of the pairwise interaction terms relative to the
    /// per-edge terms.
    pub epistasis: f64,
    pub seed: u64,
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        Self {
            num_nodes: 4,
            num_ops: 5,
            n_tasks: 2,
            target_rank_corr: Some(0.8),
            lambda: None,
            epistasis: 0.5,
            seed: 0,
        }
    }
}

/// Allowed distance between the realized and requested mean pairwise tau.
pub const TAU_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeReport {
    pub spec: LandscapeSpec,
    pub lambda: f64,
    pub tau_matrix: Vec<Vec<f64>>,
    pub mean_pairwise_tau: f64,
    pub negated: Vec<bool>,
}

pub struct Landscape {
    pub oracle: TabularOracle,
    pub report: LandscapeReport,
}

pub fn synthesize_landscape<R: Rng + ?Sized>(spec: &LandscapeSpec, rng: &mut R) -> Result<Landscape> {
    let space = SearchSpaceSpec::with_op_count(spec.num_nodes, spec.num_ops)?;
    if spec.n_tasks == 0 {
        return Err(Error::Config("landscape needs at least one task".into()));
    }
    if !(spec.epistasis >= 0.0) {
        return Err(Error::Config("epistasis must be non-negative".into()));
    }
    let archs: Vec<Architecture> = enumerate_space(&space)?.collect();
    if archs.len() < 2 {
        return Err(Error::Config("landscape needs at least two architectures".into()));
    }

    let mut fields: Vec<Vec<f64>> = (0..=spec.n_tasks)
        .map(|_| score_field(&space, &archs, spec.epistasis, rng))
        .collect();
    decorrelate(&mut fields);
    let shared = fields.remove(0);
    let private = fields;

    let anti = match (spec.target_rank_corr, spec.lambda) {
        (Some(t), None) => {
            if !(-1.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("target tau {t} outside [-1, 1]")));
            }
            t < 0.0
        }
        (None, Some(l)) => {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("lambda {l} outside [0, 1]")));
            }
            false
        }
        _ => {
            return Err(Error::Config(
                "set exactly one of target_rank_corr and lambda".into(),
            ))
        }
    };
    if anti && spec.n_tasks != 2 {
        return Err(Error::UnreachableTau {
            target: spec.target_rank_corr.unwrap(),
            min: 0.0,
            max: 1.0,
        });
    }
    let signs: Vec<f64> = (0..spec.n_tasks)
        .map(|k| if anti && k % 2 == 1 { -1.0 } else { 1.0 })
        .collect();

    let columns = |lambda: f64| -> Vec<Vec<f64>> {
        private
            .iter()
            .zip(&signs)
            .map(|(eps, s)| {
                shared
                    .iter()
                    .zip(eps)
                    .map(|(u, e)| lambda * s * u + (1.0 - lambda) * e)
                    .collect()
            })
            .collect()
    };
    let mean_tau = |cols: &[Vec<f64>]| -> f64 {
        if cols.len() < 2 {
            return 1.0;
        }
        let mut sum = 0.0;
        let mut count = 0.0;
        for a in 0..cols.len() {
            for b in a + 1..cols.len() {
                sum += kendall_tau_b(&cols[a], &cols[b]).unwrap_or(0.0);
                count += 1.0;
            }
        }
        sum / count
    };

    let lambda = match (spec.target_rank_corr, spec.lambda) {
        (_, Some(l)) => l,
        (Some(_), None) if spec.n_tasks < 2 => 1.0,
        (Some(target), None) => {
            let lo_tau = mean_tau(&columns(0.0));
            let hi_tau = mean_tau(&columns(1.0));
            let (min, max) = if lo_tau < hi_tau { (lo_tau, hi_tau) } else { (hi_tau, lo_tau) };
            if target < min - TAU_TOLERANCE || target > max + TAU_TOLERANCE {
                return Err(Error::UnreachableTau { target, min, max });
            }
            // |tau| grows with lambda
            let goal = target.abs();
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut best = (f64::INFINITY, 0.0);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let tau = mean_tau(&columns(mid));
                let gap = (tau - target).abs();
                if gap < best.0 {
                    best = (gap, mid);
                }
                if gap < 1e-3 {
                    break;
                }
                if tau.abs() < goal {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if best.0 > TAU_TOLERANCE {
                return Err(Error::UnreachableTau { target, min, max });
            }
            best.1
        }
        (None, None) => unreachable!(),
    };

    let cols = columns(lambda);
    let rows = archs
        .into_iter()
        .enumerate()
        .map(|(r, a)| (a, cols.iter().map(|c| c[r]).collect()))
        .collect();
    let names = (0..spec.n_tasks).map(|k| format!("task_{k}")).collect();
    let oracle = TabularOracle::from_rows(space, names, rows)?;
    let tau_matrix = oracle.tau_matrix();
    let mean_pairwise_tau = mean_tau(&cols);
    Ok(Landscape {
        report: LandscapeReport {
            spec: spec.clone(),
            lambda,
            tau_matrix,
            mean_pairwise_tau,
            negated: vec![false; spec.n_tasks],
        },
        oracle,
    })
}

/// Standardized additive-plus-pairwise random field over `archs`.
fn score_field<R: Rng + ?Sized>(
    space: &SearchSpaceSpec,
    archs: &[Architecture],
    epistasis: f64,
    rng: &mut R,
) -> Vec<f64> {
    let e = space.edge_count();
    let k = space.num_ops();
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let main: Vec<f64> = (0..e * k).map(|_| normal()).collect();
    let mut pair = vec![0.0; e * e * k * k];
    for i in 0..e {
        for j in i + 1..e {
            for a in 0..k {
                for b in 0..k {
                    pair[((i * e + j) * k + a) * k + b] = epistasis * normal();
                }
            }
        }
    }
    let mut field: Vec<f64> = archs
        .iter()
        .map(|arch| {
            let g = arch.genes();
            let mut s = 0.0;
            for i in 0..e {
                let a = g[i] as usize;
                s += main[i * k + a];
                for j in i + 1..e {
                    s += pair[((i * e + j) * k + a) * k + g[j] as usize];
                }
            }
            s
        })
        .collect();
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    field.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    field
}

/// Sequential Gram-Schmidt over zero-mean fields, each rescaled to unit
/// variance. A field left with (almost) nothing after projection is kept as
/// drawn.
fn decorrelate(fields: &mut [Vec<f64>]) {
    let n = fields.first().map_or(0, Vec::len) as f64;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n;
    for i in 0..fields.len() {
        let (done, rest) = fields.split_at_mut(i);
        let f = &mut rest[0];
        let mut residual = f.clone();
        for g in done.iter() {
            let c = dot(&residual, g);
            residual.iter_mut().zip(g).for_each(|(r, v)| *r -= c * v);
        }
        let norm = dot(&residual, &residual).sqrt();
        if norm > 1e-6 {
            *f = residual.into_iter().map(|r| r / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_csv() -> String {
        let mut s = String::from("encoding,task_0,task_1\n");
        for i in 0..8u8 {
            let genes = [(i >> 2) & 1, (i >> 1) & 1, i & 1];
            s.push_str(&format!("{}:{}:{},{},{}\n", genes[0], genes[1], genes[2], i as f64 * 0.5, 7 - i));
        }
        s
    }

    #[test]
    fn load_toy_table() {
        let oracle = TabularOracle::read_csv(toy_csv().as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(oracle.len(), 8);
        assert_eq!(oracle.space().num_nodes(), 3);
        assert_eq!(oracle.space().num_ops(), 2);
        let a: Architecture = "1:0:1".parse().unwrap();
        assert_eq!(oracle.evaluate(0, &a).unwrap(), 2.5);
        assert_eq!(oracle.evaluate(1, &a).unwrap(), 2.0);
    }

    #[test]
    fn duplicate_key_is_named() {
        let csv = "encoding,task_0\n0:0:1,1.0\n0:0:1,2.0\n";
        let err = TabularOracle::read_csv(csv.as_bytes(), &LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("0:0:1"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        let opts = LoadOptions::default();
        assert!(TabularOracle::read_csv("encoding\n0:0:1\n".as_bytes(), &opts).is_err());
        assert!(TabularOracle::read_csv("encoding,task_0\n0:0:1,NaN\n".as_bytes(), &opts).is_err());
        assert!(TabularOracle::read_csv("encoding,task_0\n0:0:1,inf\n".as_bytes(), &opts).is_err());
        let err = TabularOracle::read_csv("encoding,task_0\n0:0:1,1\n0:1:0,abc\n".as_bytes(), &opts)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        assert!(TabularOracle::read_csv("arch,task_0\n0:0:1,1\n".as_bytes(), &opts).is_err());
    }

    #[test]
    fn counter_counts_distinct_keys() {
        let oracle = TabularOracle::read_csv(toy_csv().as_bytes(), &LoadOptions::default()).unwrap();
        let a: Architecture = "0:1:1".parse().unwrap();
        oracle.evaluate(0, &a).unwrap();
        oracle.evaluate(0, &a).unwrap();
        assert_eq!(oracle.unique_evaluations(0), 1);
        assert_eq!(oracle.unique_evaluations(1), 0);
        for key in oracle.keys().to_vec() {
            oracle.evaluate(0, &key).unwrap();
        }
        assert_eq!(oracle.unique_evaluations(0), 8);
        assert_eq!(oracle.fresh().unique_evaluations(0), 0);
        let missing: Architecture = "0:1:2".parse().unwrap();
        assert!(matches!(oracle.evaluate(0, &missing), Err(Error::UnknownKey { .. })));
    }

    #[test]
    fn optimum_is_brute_force_argmax() {
        let oracle = TabularOracle::read_csv(toy_csv().as_bytes(), &LoadOptions::default()).unwrap();
        for t in 0..2 {
            let keys = oracle.keys().to_vec();
            let best = keys
                .iter()
                .map(|k| (oracle.peek(t, k).unwrap(), k.clone()))
                .fold(None::<(f64, Architecture)>, |acc, (v, k)| match acc {
                    Some((bv, bk)) if bv > v || (bv == v && bk < k) => Some((bv, bk)),
                    _ => Some((v, k)),
                })
                .unwrap();
            assert_eq!(oracle.optimum(t).unwrap(), (best.1, best.0));
        }
        assert_eq!(oracle.unique_evaluations(0), 0);
    }

    #[test]
    fn optimum_ties_and_negation() {
        let csv = "encoding,task_0\n0:0:1,5\n0:0:0,5\n1:1:1,3\n";
        let oracle = TabularOracle::read_csv(csv.as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(oracle.optimum(0).unwrap().0.encoding(), "0:0:0");
        let negated = TabularOracle::read_csv(
            csv.as_bytes(),
            &LoadOptions { negate: vec![0], space: None },
        )
        .unwrap();
        // loss minimum is the fitness maximum
        assert_eq!(negated.optimum(0).unwrap(), ("1:1:1".parse().unwrap(), -3.0));
        assert_eq!(negated.negated(), &[true]);
        let single = TabularOracle::read_csv("encoding,task_0\n1:0:1,0.25\n".as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(single.optimum(0).unwrap().0.encoding(), "1:0:1");
    }

    #[test]
    fn tau_identities() {
        let oracle = TabularOracle::read_csv(toy_csv().as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(oracle.kendall_tau(0, 0), Some(1.0));
        assert_eq!(oracle.kendall_tau(0, 1), Some(-1.0));
    }

    #[test]
    fn synthesize_save_load_round_trip() {
        let spec = LandscapeSpec { num_nodes: 3, num_ops: 3, target_rank_corr: Some(0.5), ..Default::default() };
        let land = synthesize_landscape(&spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut buf = Vec::new();
        land.oracle.write_csv(&mut buf).unwrap();
        let back = TabularOracle::read_csv(buf.as_slice(), &LoadOptions::default()).unwrap();
        assert_eq!(back.keys(), land.oracle.keys());
        for t in 0..2 {
            assert_eq!(back.column(t), land.oracle.column(t));
        }
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("encoding,task_0,task_1\n0:0:0,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn lambda_one_gives_identical_rankings() {
        let spec = LandscapeSpec { num_nodes: 3, num_ops: 4, target_rank_corr: None, lambda: Some(1.0), ..Default::default() };
        let land = synthesize_landscape(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(land.oracle.kendall_tau(0, 1), Some(1.0));
    }

    #[test]
    fn lambda_zero_is_near_independent() {
        let mut big = 0;
        for seed in 0..20 {
            let spec = LandscapeSpec { target_rank_corr: None, lambda: Some(0.0), seed, ..Default::default() };
            let land = synthesize_landscape(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            if land.oracle.kendall_tau(0, 1).unwrap().abs() >= 0.1 {
                big += 1;
            }
        }
        assert!(big <= 2, "{big} of 20 seeds exceeded |tau| 0.1");
    }

    #[test]
    fn target_tau_is_met() {
        for (seed, target) in [(1, 0.8), (2, 0.0), (3, -0.6), (4, 0.3)] {
            let spec = LandscapeSpec { target_rank_corr: Some(target), seed, ..Default::default() };
            let land = synthesize_landscape(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let tau = land.oracle.kendall_tau(0, 1).unwrap();
            assert!((tau - target).abs() <= TAU_TOLERANCE, "target {target} realized {tau}");
            assert_eq!(land.report.tau_matrix[0][1], tau);
        }
    }

    #[test]
    fn negative_target_needs_two_tasks() {
        let spec = LandscapeSpec { n_tasks: 3, num_nodes: 3, target_rank_corr: Some(-0.5), ..Default::default() };
        assert!(matches!(
            synthesize_landscape(&spec, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::UnreachableTau { .. })
        ));
    }

    #[test]
    fn synthesis_is_reproducible() {
        let spec = LandscapeSpec { num_nodes: 3, ..Default::default() };
        let a = synthesize_landscape(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = synthesize_landscape(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.oracle.column(1), b.oracle.column(1));
        assert_eq!(a.report.lambda, b.report.lambda);
    }
}
