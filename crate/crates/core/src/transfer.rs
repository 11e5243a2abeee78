//! Transfer rank: labeling past transfers as positive or negative, keeping
//! them in a historical transferred set, and ranking new candidates by the
//! labels of the history entries nearest to them in embedding space.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;

use crate::embedding::dist;
use crate::error::{Error, Result};
use crate::search_space::{ensure_evaluated, rank_order, Architecture, Individual};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransferLabel {
    Positive,
    Negative,
}

impl TransferLabel {
    pub fn value(self) -> i64 {
        match self {
            TransferLabel::Positive => 1,
            TransferLabel::Negative => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HtsEntry {
    pub arch: Architecture,
    pub embedding: Arc<[f64]>,
    pub label: TransferLabel,
    pub generation: usize,
}

/// Positives accumulate (optionally capped, oldest evicted first); negatives
/// are kept for the `m` most recent generations only.
#[derive(Debug, Clone)]
pub struct HistoricalTransferredSet {
    pos: VecDeque<HtsEntry>,
    neg_window: VecDeque<(usize, Vec<HtsEntry>)>,
    saved_generations: usize,
    pos_cap: Option<usize>,
}

impl HistoricalTransferredSet {
    pub fn new(saved_generations: usize) -> Self {
        Self::with_pos_cap(saved_generations, None)
    }

    pub fn with_pos_cap(saved_generations: usize, pos_cap: Option<usize>) -> Self {
        assert!(saved_generations >= 1, "at least one negative generation must be kept");
        Self {
            pos: VecDeque::new(),
            neg_window: VecDeque::new(),
            saved_generations,
            pos_cap,
        }
    }

    pub fn saved_generations(&self) -> usize {
        self.saved_generations
    }

    pub fn positives(&self) -> impl Iterator<Item = &HtsEntry> {
        self.pos.iter()
    }

    pub fn negatives(&self) -> impl Iterator<Item = &HtsEntry> {
        self.neg_window.iter().flat_map(|(_, set)| set.iter())
    }

    /// Generations whose negative sets are currently retained, oldest first.
    pub fn negative_generations(&self) -> Vec<usize> {
        self.neg_window.iter().map(|(t, _)| *t).collect()
    }

    /// Positives followed by retained negatives, oldest generation first.
    pub fn entries(&self) -> impl Iterator<Item = &HtsEntry> {
        self.positives().chain(self.negatives())
    }

    pub fn len(&self) -> usize {
        self.pos.len() + self.neg_window.iter().map(|(_, s)| s.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label_sum(&self) -> i64 {
        self.entries().map(|e| e.label.value()).sum()
    }

    /// Adds the labeled transfers of generation `t`. Negatives form the
    /// generation-`t` set; sets older than the `m` most recent are dropped.
    pub fn update(&mut self, t: usize, labeled: impl IntoIterator<Item = HtsEntry>) {
        let mut negatives = Vec::new();
        for mut entry in labeled {
            entry.generation = t;
            match entry.label {
                TransferLabel::Positive => self.pos.push_back(entry),
                TransferLabel::Negative => negatives.push(entry),
            }
        }
        if let Some(cap) = self.pos_cap {
            while self.pos.len() > cap {
                self.pos.pop_front();
            }
        }
        self.neg_window.push_back((t, negatives));
        while self.neg_window.len() > self.saved_generations {
            self.neg_window.pop_front();
        }
    }

    /// Snapshot rows `generation,encoding,label`.
    pub fn write_csv<W: Write>(&self, mut w: W, generation: usize) -> Result<()> {
        for e in self.entries() {
            writeln!(w, "{generation},{},{}", e.arch, e.label.value())?;
        }
        Ok(())
    }
}

/// Labels each transferred individual: positive iff at least one offspring
/// that lists it as a parent would rank within the top `ceil(r% * |Z|)` of
/// `z` on `task`. Transfers without offspring are negative.
///
/// `parent_pool` is `P ∪ TP`, the pool the offspring were bred from.
pub fn classify_transferred(
    tp: &[Individual],
    parent_pool: &[Individual],
    z: &[Individual],
    offspring: &[Individual],
    task: usize,
    r_pct: f64,
) -> Result<Vec<TransferLabel>> {
    if !(r_pct > 0.0 && r_pct <= 100.0) {
        return Err(Error::InvalidInput(format!("ranking ratio {r_pct} outside (0, 100]")));
    }
    ensure_evaluated(z, task)?;
    ensure_evaluated(offspring, task)?;
    for child in offspring {
        for parent in &child.parents {
            if !parent_pool.iter().any(|p| &p.arch == parent) {
                return Err(Error::ContractViolation(format!(
                    "offspring {} lists parent {parent} outside P ∪ TP",
                    child.arch
                )));
            }
        }
    }
    let top = top_count(r_pct, z.len());
    let in_top: Vec<bool> = offspring
        .iter()
        .map(|child| rank_within(child, z, task) <= top)
        .collect();

    Ok(tp
        .iter()
        .map(|c| {
            let positive = offspring
                .iter()
                .zip(&in_top)
                .any(|(child, &good)| good && child.has_parent(&c.arch));
            if positive {
                TransferLabel::Positive
            } else {
                TransferLabel::Negative
            }
        })
        .collect())
}

/// `ceil(r% * n)`, exact for integer percentages.
pub fn top_count(r_pct: f64, n: usize) -> usize {
    ((r_pct * n as f64) / 100.0 - 1e-9).ceil().max(0.0) as usize
}

/// 1-based position `ind` would take in `pool` ordered by fitness on `task`
/// (ties by encoding). Members equal to `ind` do not push it down.
pub fn rank_within(ind: &Individual, pool: &[Individual], task: usize) -> usize {
    1 + pool
        .iter()
        .filter(|other| rank_order(other, ind, task) == Ordering::Less)
        .count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferRankResult {
    /// Transfer rank per candidate.
    pub phi: Vec<i64>,
    /// Indices into the history's `entries()` order associated with each candidate.
    pub associations: Vec<Vec<usize>>,
}

/// Associates every history entry with its nearest candidate (cosine
/// distance, ties to the lowest candidate index) and sums the associated
/// labels per candidate.
pub fn transfer_rank<V: AsRef<[f64]>>(
    hts: &HistoricalTransferredSet,
    candidates: &[V],
) -> Result<TransferRankResult> {
    let entries: Vec<&HtsEntry> = hts.entries().collect();
    transfer_rank_entries(&entries, candidates)
}

pub fn transfer_rank_entries<V: AsRef<[f64]>>(
    entries: &[&HtsEntry],
    candidates: &[V],
) -> Result<TransferRankResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("transfer rank needs at least one candidate".into()));
    }
    let dim = candidates[0].as_ref().len();
    for v in candidates.iter().map(AsRef::as_ref).chain(entries.iter().map(|e| &*e.embedding)) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
    }
    let mut phi = vec![0i64; candidates.len()];
    let mut associations = vec![Vec::new(); candidates.len()];
    for (i, entry) in entries.iter().enumerate() {
        let mut nearest = 0;
        let mut best = f64::INFINITY;
        for (j, cand) in candidates.iter().enumerate() {
            let d = pair_distance(&entry.embedding, cand.as_ref())?;
            if d < best {
                best = d;
                nearest = j;
            }
        }
        associations[nearest].push(i);
        phi[nearest] += entry.label.value();
    }
    Ok(TransferRankResult { phi, associations })
}

/// Cosine distance, with zero embeddings (from a degenerate model) treated as
/// coincident.
fn pair_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    match dist(a, b) {
        Err(Error::ZeroVector) => Ok(0.0),
        other => other,
    }
}

/// Picks `m` candidate indices: groups of equal rank are taken whole in
/// descending rank order while they fit, and the first group that does not
/// fit contributes a uniform random subset to reach exactly `m`.
pub fn select_transfer_population<R: Rng + ?Sized>(
    ranks: &TransferRankResult,
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = ranks.phi.len();
    if m == 0 || n < m {
        return Err(Error::InvalidInput(format!(
            "cannot select {m} transfers from {n} candidates"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ranks.phi[b].cmp(&ranks.phi[a]).then(a.cmp(&b)));

    let mut selected = Vec::with_capacity(m);
    let mut start = 0;
    while start < n && selected.len() < m {
        let value = ranks.phi[order[start]];
        let end = start + order[start..].iter().take_while(|&&i| ranks.phi[i] == value).count();
        let group = &order[start..end];
        if selected.len() + group.len() <= m {
            selected.extend_from_slice(group);
        } else {
            let mut group = group.to_vec();
            let need = m - selected.len();
            partial_shuffle(&mut group, need, rng);
            selected.extend_from_slice(&group[..need]);
        }
        start = end;
    }
    Ok(selected)
}

/// `m` distinct indices out of `0..n`, uniformly at random.
pub fn select_random<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < m {
        return Err(Error::InvalidInput(format!(
            "cannot select {m} transfers from {n} candidates"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    partial_shuffle(&mut idx, m, rng);
    idx.truncate(m);
    Ok(idx)
}

/// Fisher-Yates over the first `k` slots.
fn partial_shuffle<T, R: Rng + ?Sized>(items: &mut [T], k: usize, rng: &mut R) {
    for i in 0..k.min(items.len()) {
        let j = rng.random_range(i..items.len());
        items.swap(i, j);
    }
}
