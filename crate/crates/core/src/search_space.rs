//! Cell genotypes, their canonical encoding, and the variation and selection
//! operators shared by every searcher.
//!
//! A cell is a complete DAG over `num_nodes` nodes. Every edge `(u, v)` with
//! `u < v` carries one operation from the op set, so an architecture is a
//! fixed-length vector of op indices listed in lexicographic edge order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{ArchGraph, Token};
use crate::error::{Error, Result};

/// Refuse to enumerate spaces larger than this by default.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 22;

/// NAS-Bench-201 operation names, in benchmark order.
pub const NAS201_OPS: [&str; 5] = [
    "none",
    "skip_connect",
    "nor_conv_1x1",
    "nor_conv_3x3",
    "avg_pool_3x3",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpaceSpec {
    num_nodes: usize,
    op_set: Vec<String>,
}

impl SearchSpaceSpec {
    pub fn new(num_nodes: usize, op_set: Vec<String>) -> Result<Self> {
        if num_nodes < 2 {
            return Err(Error::InvalidInput(format!(
                "a cell needs at least 2 nodes, got {num_nodes}"
            )));
        }
        if op_set.is_empty() {
            return Err(Error::InvalidInput("op set is empty".into()));
        }
        if op_set.len() > u8::MAX as usize + 1 {
            return Err(Error::InvalidInput(format!(
                "at most 256 operations are supported, got {}",
                op_set.len()
            )));
        }
        for (i, op) in op_set.iter().enumerate() {
            if op_set[..i].contains(op) {
                return Err(Error::InvalidInput(format!("duplicate operation {op:?}")));
            }
        }
        Ok(Self { num_nodes, op_set })
    }

    /// A space with generic operation names `op0..op{num_ops-1}`.
    pub fn with_op_count(num_nodes: usize, num_ops: usize) -> Result<Self> {
        Self::new(num_nodes, (0..num_ops).map(|i| format!("op{i}")).collect())
    }

    /// The 4-node, 5-op NAS-Bench-201 cell space.
    pub fn nas201() -> Self {
        Self::new(4, NAS201_OPS.iter().map(|s| s.to_string()).collect())
            .expect("NAS-Bench-201 space is valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn op_set(&self) -> &[String] {
        &self.op_set
    }

    pub fn num_ops(&self) -> usize {
        self.op_set.len()
    }

    pub fn edge_count(&self) -> usize {
        self.num_nodes * (self.num_nodes - 1) / 2
    }

    /// Edges `(src, dst)` in gene order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.edge_count());
        for u in 0..self.num_nodes {
            for v in u + 1..self.num_nodes {
                edges.push((u, v));
            }
        }
        edges
    }

    /// `|op_set| ^ edge_count`, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        let mut size: u128 = 1;
        for _ in 0..self.edge_count() {
            size = size.saturating_mul(self.num_ops() as u128);
        }
        size
    }

    pub fn contains(&self, arch: &Architecture) -> bool {
        arch.genes.len() == self.edge_count()
            && arch.genes.iter().all(|&g| (g as usize) < self.num_ops())
    }

    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        if self.contains(arch) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "architecture {arch} is not a member of a {}-node, {}-op space",
                self.num_nodes,
                self.num_ops()
            )))
        }
    }
}

impl Default for SearchSpaceSpec {
    fn default() -> Self {
        Self::nas201()
    }
}

/// Operation choice per cell edge. Ordering is lexicographic over the genes,
/// which is the tie-break order used throughout the engine.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Architecture {
    genes: Vec<u8>,
}

impl Architecture {
    pub fn new(genes: Vec<u8>) -> Self {
        Self { genes }
    }

    pub fn genes(&self) -> &[u8] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn hamming(&self, other: &Architecture) -> usize {
        self.genes
            .iter()
            .zip(&other.genes)
            .filter(|(a, b)| a != b)
            .count()
            + self.genes.len().abs_diff(other.genes.len())
    }

    /// Canonical `e0:e1:...` encoding.
    pub fn encoding(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.genes.iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidInput("empty architecture encoding".into()));
        }
        s.split(':')
            .map(|tok| {
                tok.parse::<u8>().map_err(|_| {
                    Error::InvalidInput(format!("bad gene {tok:?} in encoding {s:?}"))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Architecture::new)
    }
}

/// An architecture together with its search bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub arch: Architecture,
    pub fitness: BTreeMap<usize, f64>,
    /// Encodings of the parents this individual was bred from (at most two).
    pub parents: Vec<Architecture>,
    pub origin_task: usize,
    pub is_transferred: bool,
}

impl Individual {
    pub fn new(arch: Architecture, origin_task: usize) -> Self {
        Self {
            arch,
            fitness: BTreeMap::new(),
            parents: Vec::new(),
            origin_task,
            is_transferred: false,
        }
    }

    pub fn with_parents(mut self, parents: Vec<Architecture>) -> Self {
        debug_assert!(parents.len() <= 2);
        self.parents = parents;
        self
    }

    pub fn fitness_on(&self, task: usize) -> Result<f64> {
        self.fitness.get(&task).copied().ok_or_else(|| {
            Error::ContractViolation(format!(
                "individual {} has not been evaluated on task {task}",
                self.arch
            ))
        })
    }

    pub fn has_parent(&self, arch: &Architecture) -> bool {
        self.parents.iter().any(|p| p == arch)
    }
}

/// Ranking order on one task: higher fitness first, smaller encoding on ties.
///
/// Both individuals must already carry a fitness for `task`.
pub fn rank_order(a: &Individual, b: &Individual, task: usize) -> Ordering {
    let fa = a.fitness[&task];
    let fb = b.fitness[&task];
    fb.total_cmp(&fa).then_with(|| a.arch.cmp(&b.arch))
}

pub fn ensure_evaluated(pool: &[Individual], task: usize) -> Result<()> {
    for ind in pool {
        ind.fitness_on(task)?;
    }
    Ok(())
}

pub fn random_architecture<R: Rng + ?Sized>(space: &SearchSpaceSpec, rng: &mut R) -> Architecture {
    let n_ops = space.num_ops();
    Architecture::new(
        (0..space.edge_count())
            .map(|_| rng.random_range(0..n_ops) as u8)
            .collect(),
    )
}

/// Uniform crossover: each gene position swaps between the children with
/// probability 0.5.
pub fn crossover<R: Rng + ?Sized>(
    a: &Architecture,
    b: &Architecture,
    rng: &mut R,
) -> Result<(Architecture, Architecture)> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "cannot cross genotypes of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut first = a.genes.clone();
    let mut second = b.genes.clone();
    for i in 0..first.len() {
        if rng.random_bool(0.5) {
            std::mem::swap(&mut first[i], &mut second[i]);
        }
    }
    Ok((Architecture::new(first), Architecture::new(second)))
}

/// Mutation with two regimes. `p_mut == 1` resamples exactly one uniformly
/// chosen gene to a different op; `p_mut < 1` resamples each gene to a
/// different op independently with probability `p_mut`.
pub fn mutate<R: Rng + ?Sized>(
    arch: &Architecture,
    space: &SearchSpaceSpec,
    p_mut: f64,
    rng: &mut R,
) -> Result<Architecture> {
    if !(0.0..=1.0).contains(&p_mut) {
        return Err(Error::InvalidInput(format!(
            "mutation probability {p_mut} outside [0, 1]"
        )));
    }
    let n_ops = space.num_ops();
    let mut genes = arch.genes.clone();
    if n_ops < 2 || genes.is_empty() || p_mut == 0.0 {
        return Ok(Architecture::new(genes));
    }
    if p_mut == 1.0 {
        let pos = rng.random_range(0..genes.len());
        genes[pos] = resample_other(genes[pos], n_ops, rng);
    } else {
        for g in genes.iter_mut() {
            if rng.random_bool(p_mut) {
                *g = resample_other(*g, n_ops, rng);
            }
        }
    }
    Ok(Architecture::new(genes))
}

fn resample_other<R: Rng + ?Sized>(current: u8, n_ops: usize, rng: &mut R) -> u8 {
    let draw = rng.random_range(0..n_ops - 1) as u8;
    if draw >= current {
        draw + 1
    } else {
        draw
    }
}

/// Draws `size` contestants uniformly with replacement and returns the best
/// on `task`.
pub fn tournament_select<'a, R: Rng + ?Sized>(
    pool: &'a [Individual],
    task: usize,
    size: usize,
    rng: &mut R,
) -> Result<&'a Individual> {
    if pool.is_empty() {
        return Err(Error::InvalidInput("tournament over an empty pool".into()));
    }
    if size == 0 {
        return Err(Error::InvalidInput("tournament size must be at least 1".into()));
    }
    ensure_evaluated(pool, task)?;
    let mut winner = &pool[rng.random_range(0..pool.len())];
    for _ in 1..size {
        let challenger = &pool[rng.random_range(0..pool.len())];
        if rank_order(challenger, winner, task) == Ordering::Less {
            winner = challenger;
        }
    }
    Ok(winner)
}

/// Edge-to-node conversion: one node per gene, plus INPUT and OUTPUT.
///
/// Node ids: `0` is INPUT, `1 + i` is gene `i`, `edge_count + 1` is OUTPUT.
pub fn to_graph(space: &SearchSpaceSpec, arch: &Architecture) -> Result<ArchGraph> {
    space.validate(arch)?;
    let edges = space.edges();
    let last = space.num_nodes() - 1;
    let output = edges.len() + 1;

    let mut nodes = Vec::with_capacity(edges.len() + 2);
    nodes.push((0, Token::Input));
    for (i, &op) in arch.genes.iter().enumerate() {
        nodes.push((
            i + 1,
            Token::Edge {
                position: i as u16,
                op: op as u16,
            },
        ));
    }
    nodes.push((output, Token::Output));

    let mut arcs = Vec::new();
    for (i, &(u, v)) in edges.iter().enumerate() {
        if u == 0 {
            arcs.push((0, i + 1));
        }
        for (j, &(_, dst)) in edges.iter().enumerate() {
            if dst == u {
                arcs.push((j + 1, i + 1));
            }
        }
        if v == last {
            arcs.push((i + 1, output));
        }
    }
    arcs.sort_unstable();
    ArchGraph::new(nodes, arcs)
}

/// Lexicographic iterator over every genotype of a space.
#[derive(Debug, Clone)]
pub struct SpaceIter {
    next: Option<Vec<u8>>,
    n_ops: u8,
}

impl Iterator for SpaceIter {
    type Item = Architecture;

    fn next(&mut self) -> Option<Architecture> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut advanced = false;
        for g in succ.iter_mut().rev() {
            if *g + 1 < self.n_ops {
                *g += 1;
                advanced = true;
                break;
            }
            *g = 0;
        }
        if advanced {
            self.next = Some(succ);
        }
        Some(Architecture::new(current))
    }
}

pub fn enumerate_space(space: &SearchSpaceSpec) -> Result<SpaceIter> {
    enumerate_space_capped(space, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_space_capped(space: &SearchSpaceSpec, cap: u128) -> Result<SpaceIter> {
    let size = space.size();
    if size > cap {
        return Err(Error::EnumerationCap { size, cap });
    }
    Ok(SpaceIter {
        next: Some(vec![0; space.edge_count()]),
        n_ops: space.num_ops() as u8,
    })
}
