//! Architecture embeddings: biased second-order random walks over cell
//! graphs, a skip-gram model with negative sampling trained on those walks,
//! and the cosine distance between the resulting vectors.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_space::{random_architecture, to_graph, Architecture, SearchSpaceSpec};

/// Node label in an architecture graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Input,
    /// Operation `op` placed on the cell edge at gene `position`.
    Edge { position: u16, op: u16 },
    Output,
}

impl Token {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Token::Input | Token::Output)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Input => f.write_str("INPUT"),
            Token::Output => f.write_str("OUTPUT"),
            Token::Edge { position, op } => write!(f, "e{position}:{op}"),
        }
    }
}

impl FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "INPUT" => Ok(Token::Input),
            "OUTPUT" => Ok(Token::Output),
            _ => {
                let bad = || Error::InvalidInput(format!("bad token {s:?}"));
                let body = s.strip_prefix('e').ok_or_else(bad)?;
                let (pos, op) = body.split_once(':').ok_or_else(bad)?;
                Ok(Token::Edge {
                    position: pos.parse().map_err(|_| bad())?,
                    op: op.parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

/// Node-labeled DAG produced from a cell genotype.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchGraph {
    nodes: Vec<(usize, Token)>,
    arcs: Vec<(usize, usize)>,
    /// Undirected neighbor lists, by position in `nodes`, sorted and deduplicated.
    neighbors: Vec<Vec<usize>>,
}

impl ArchGraph {
    /// Builds a graph, checking that node ids are unique, arcs reference
    /// known nodes, and the arcs form no directed cycle.
    pub fn new(nodes: Vec<(usize, Token)>, arcs: Vec<(usize, usize)>) -> Result<Self> {
        let mut slot = HashMap::with_capacity(nodes.len());
        for (i, &(id, _)) in nodes.iter().enumerate() {
            if slot.insert(id, i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate node id {id}")));
            }
        }
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        let mut indegree = vec![0usize; nodes.len()];
        let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nodes.len()];
        for &(src, dst) in &arcs {
            let (Some(&s), Some(&d)) = (slot.get(&src), slot.get(&dst)) else {
                return Err(Error::InvalidInput(format!(
                    "arc ({src}, {dst}) references an unknown node"
                )));
            };
            if s == d {
                return Err(Error::InvalidInput(format!("self loop on node {src}")));
            }
            out[s].push(d);
            indegree[d] += 1;
            neighbors[s].insert(d);
            neighbors[d].insert(s);
        }
        // Kahn's algorithm
        let mut ready: Vec<usize> = (0..nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(n) = ready.pop() {
            seen += 1;
            for &m in &out[n] {
                indegree[m] -= 1;
                if indegree[m] == 0 {
                    ready.push(m);
                }
            }
        }
        if seen != nodes.len() {
            return Err(Error::InvalidInput("graph contains a directed cycle".into()));
        }
        Ok(Self {
            nodes,
            arcs,
            neighbors: neighbors.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn nodes(&self) -> &[(usize, Token)] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[(usize, usize)] {
        &self.arcs
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> + '_ {
        self.nodes.iter().map(|&(_, t)| t)
    }

    fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }
}

/// Hyperparameters for walk generation and skip-gram training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub num_walks: usize,
    pub walk_len: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub p: f64,
    pub q: f64,
    /// Number of uniformly sampled architectures whose walks form the corpus.
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            num_walks: 10,
            walk_len: 20,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            min_lr: 0.0001,
            p: 1.0,
            q: 1.0,
            sample_size: 512,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("embedding: {m}")));
        if self.dim == 0 {
            return fail("dim must be positive");
        }
        if self.num_walks == 0 || self.walk_len < 2 {
            return fail("need num_walks >= 1 and walk_len >= 2");
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return fail("p and q must be positive");
        }
        if self.window == 0 || self.epochs == 0 {
            return fail("window and epochs must be positive");
        }
        if !(self.lr > 0.0 && self.min_lr >= 0.0 && self.min_lr <= self.lr) {
            return fail("need 0 <= min_lr <= lr and lr > 0");
        }
        Ok(())
    }
}

/// node2vec walks. The graph is walked as undirected; from `cur` reached via
/// `prev`, a neighbor `x` gets weight `1/p` if `x == prev`, `1` if `x` is
/// adjacent to `prev`, and `1/q` otherwise.
pub fn generate_walks<R: Rng + ?Sized>(
    graph: &ArchGraph,
    num_walks: usize,
    walk_len: usize,
    p: f64,
    q: f64,
    rng: &mut R,
) -> Result<Vec<Vec<Token>>> {
    if graph.nodes.is_empty() {
        return Err(Error::InvalidInput("cannot walk an empty graph".into()));
    }
    if num_walks == 0 || walk_len < 2 || !(p > 0.0) || !(q > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bad walk parameters: num_walks={num_walks} walk_len={walk_len} p={p} q={q}"
        )));
    }
    let mut walks = Vec::with_capacity(num_walks * graph.nodes.len());
    let mut weights = Vec::new();
    for _ in 0..num_walks {
        for start in 0..graph.nodes.len() {
            let mut walk = vec![start];
            while walk.len() < walk_len {
                let cur = *walk.last().unwrap();
                let nbrs = &graph.neighbors[cur];
                if nbrs.is_empty() {
                    break;
                }
                let next = if walk.len() == 1 {
                    nbrs[rng.random_range(0..nbrs.len())]
                } else {
                    let prev = walk[walk.len() - 2];
                    weights.clear();
                    weights.extend(nbrs.iter().map(|&x| {
                        if x == prev {
                            1.0 / p
                        } else if graph.is_adjacent(x, prev) {
                            1.0
                        } else {
                            1.0 / q
                        }
                    }));
                    nbrs[sample_weighted(&weights, rng)]
                };
                walk.push(next);
            }
            walks.push(walk.into_iter().map(|i| graph.nodes[i].1).collect());
        }
    }
    Ok(walks)
}

fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return i;
        }
        target -= w;
    }
    weights.len() - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub min_lr: f64,
}

impl From<&EmbeddingConfig> for SkipGramParams {
    fn from(c: &EmbeddingConfig) -> Self {
        Self {
            dim: c.dim,
            window: c.window,
            negatives: c.negatives,
            epochs: c.epochs,
            lr: c.lr,
            min_lr: c.min_lr,
        }
    }
}

/// Token vectors learned by skip-gram training.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    tokens: Vec<Token>,
    index: HashMap<Token, usize>,
    vectors: Vec<f32>,
    degenerate: bool,
    /// Walk and training settings that produced this model, when known.
    pub config: Option<EmbeddingConfig>,
}

impl EmbeddingModel {
    fn from_parts(dim: usize, tokens: Vec<Token>, vectors: Vec<f32>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let degenerate = tokens.len() <= 1;
        Self {
            dim,
            tokens,
            index,
            vectors,
            degenerate,
            config: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &[Token] {
        &self.tokens
    }

    /// A single-token vocabulary carries no similarity information; every
    /// embedding from such a model is the zero vector.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn vector(&self, token: &Token) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Writes `token<TAB>v1<TAB>...<TAB>v_dim` rows after a `#` header line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# ktnas-embedding v1 dim={}", self.dim)?;
        for (i, t) in self.tokens.iter().enumerate() {
            write!(w, "{t}")?;
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(w, "\t{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut vectors = Vec::new();
        let mut dim = None;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: n + 1, message };
            let mut fields = line.split('\t');
            let token: Token = fields
                .next()
                .unwrap_or_default()
                .parse()
                .map_err(|e: Error| err(e.to_string()))?;
            let before = vectors.len();
            for f in fields {
                vectors.push(f.parse::<f32>().map_err(|_| err(format!("bad value {f:?}")))?);
            }
            let width = vectors.len() - before;
            match dim {
                None => dim = Some(width),
                Some(d) if d != width => {
                    return Err(err(format!("expected {d} values, found {width}")))
                }
                _ => {}
            }
            tokens.push(token);
        }
        let dim = dim.ok_or_else(|| Error::Parse {
            line: 0,
            message: "no embedding rows".into(),
        })?;
        if dim == 0 {
            return Err(Error::Parse { line: 1, message: "rows carry no values".into() });
        }
        Ok(Self::from_parts(dim, tokens, vectors))
    }
}

/// Skip-gram with negative sampling over a token corpus.
///
/// Input vectors start uniform in `[-0.5/dim, 0.5/dim]`, output vectors at
/// zero; negatives follow the unigram distribution raised to 0.75; the
/// learning rate decays linearly from `lr` to `min_lr` over all epochs.
pub fn train_skipgram<R: Rng + ?Sized>(
    corpus: &[Vec<Token>],
    params: &SkipGramParams,
    rng: &mut R,
) -> Result<EmbeddingModel> {
    if corpus.iter().all(|w| w.is_empty()) {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    if params.dim == 0 || params.window == 0 {
        return Err(Error::InvalidInput("dim and window must be positive".into()));
    }
    let dim = params.dim;
    let vocab: Vec<Token> = corpus
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<Token, usize> = vocab.iter().enumerate().map(|(i, &t)| (t, i)).collect();

    if vocab.len() == 1 {
        return Ok(EmbeddingModel::from_parts(dim, vocab, vec![0.0; dim]));
    }

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|w| w.iter().map(|t| index[t]).collect())
        .collect();
    let mut counts = vec![0f64; vocab.len()];
    for s in &sentences {
        for &w in s {
            counts[w] += 1.0;
        }
    }
    let noise = WeightedIndex::new(counts.iter().map(|c| c.powf(0.75)))
        .map_err(|e| Error::InvalidInput(format!("negative sampling table: {e}")))?;

    let half = 0.5 / dim as f32;
    let mut syn0: Vec<f32> = (0..vocab.len() * dim)
        .map(|_| rng.random_range(-half..half))
        .collect();
    let mut syn1 = vec![0f32; vocab.len() * dim];
    let mut grad = vec![0f32; dim];

    let total_words = sentences.iter().map(Vec::len).sum::<usize>() as f64 * params.epochs as f64;
    let mut processed = 0f64;

    for _ in 0..params.epochs {
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let progress = processed / total_words;
                let lr = (params.lr - (params.lr - params.min_lr) * progress) as f32;
                processed += 1.0;

                let reach = params.window - rng.random_range(0..params.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = sentence[ctx_pos];
                    let input = &mut syn0[context * dim..(context + 1) * dim];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for d in 0..=params.negatives {
                        let (target, label) = if d == 0 {
                            (center, 1.0f32)
                        } else {
                            let t = noise.sample(rng);
                            if t == center {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let output = &mut syn1[target * dim..(target + 1) * dim];
                        let f = dot32(input, output);
                        let g = if f > 6.0 {
                            (label - 1.0) * lr
                        } else if f < -6.0 {
                            label * lr
                        } else {
                            (label - sigmoid(f)) * lr
                        };
                        for ((gr, o), i) in grad.iter_mut().zip(output.iter_mut()).zip(input.iter()) {
                            *gr += g * *o;
                            *o += g * i;
                        }
                    }
                    for (i, gr) in input.iter_mut().zip(&grad) {
                        *i += gr;
                    }
                }
            }
        }
    }

    Ok(EmbeddingModel::from_parts(dim, vocab, syn0))
}

fn dot32(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            lanes[k] += x[k] * y[k];
        }
    }
    lanes.iter().sum::<f32>() + tail
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean of the graph's operation-token vectors; INPUT and OUTPUT are left out.
pub fn embed_architecture(model: &EmbeddingModel, graph: &ArchGraph) -> Result<Vec<f64>> {
    let inner: Vec<Token> = graph.tokens().filter(|t| !t.is_terminal()).collect();
    let missing: Vec<String> = inner
        .iter()
        .filter(|t| model.vector(t).is_none())
        .map(Token::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::OutOfVocabulary(missing));
    }
    let mut mean = vec![0f64; model.dim];
    if model.is_degenerate() || inner.is_empty() {
        return Ok(mean);
    }
    for t in &inner {
        for (m, v) in mean.iter_mut().zip(model.vector(t).unwrap()) {
            *m += *v as f64;
        }
    }
    let n = inner.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Cosine distance `1 - cos(v1, v2)`, clamped to `[0, 2]`.
pub fn dist(v1: &[f64], v2: &[f64]) -> Result<f64> {
    if v1.len() != v2.len() {
        return Err(Error::DimensionMismatch {
            expected: v1.len(),
            got: v2.len(),
        });
    }
    let (mut dot, mut n1, mut n2) = (0.0, 0.0, 0.0);
    for (a, b) in v1.iter().zip(v2) {
        dot += a * b;
        n1 += a * a;
        n2 += b * b;
    }
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((1.0 - dot / (n1.sqrt() * n2.sqrt())).clamp(0.0, 2.0))
}

/// Trains one model shared by every architecture of a space.
///
/// The corpus holds walks over `sample_size` uniformly drawn architectures
/// plus one single-op architecture per operation, so every `(position, op)`
/// token of the space is in the vocabulary.
pub fn train_shared_model(space: &SearchSpaceSpec, config: &EmbeddingConfig) -> Result<EmbeddingModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut archs: Vec<Architecture> = (0..space.num_ops())
        .map(|op| Architecture::new(vec![op as u8; space.edge_count()]))
        .collect();
    archs.extend((0..config.sample_size).map(|_| random_architecture(space, &mut rng)));

    let mut corpus = Vec::new();
    for arch in &archs {
        let graph = to_graph(space, arch)?;
        corpus.extend(generate_walks(
            &graph,
            config.num_walks,
            config.walk_len,
            config.p,
            config.q,
            &mut rng,
        )?);
    }
    let mut model = train_skipgram(&corpus, &SkipGramParams::from(config), &mut rng)?;
    model.config = Some(config.clone());
    Ok(model)
}

/// Per-encoding cache of architecture embeddings under a frozen model.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    space: SearchSpaceSpec,
    model: Arc<EmbeddingModel>,
    cache: HashMap<Architecture, Arc<[f64]>>,
}

impl EmbeddingStore {
    pub fn new(space: SearchSpaceSpec, model: Arc<EmbeddingModel>) -> Self {
        Self {
            space,
            model,
            cache: HashMap::new(),
        }
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    pub fn embed(&mut self, arch: &Architecture) -> Result<Arc<[f64]>> {
        if let Some(v) = self.cache.get(arch) {
            return Ok(v.clone());
        }
        let graph = to_graph(&self.space, arch)?;
        let v: Arc<[f64]> = embed_architecture(&self.model, &graph)?.into();
        self.cache.insert(arch.clone(), v.clone());
        Ok(v)
    }
}
