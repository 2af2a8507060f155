//! Request traces: parsing and synthetic workload generation.
//!
//! All generators are deterministic in their parameters and seed.

use std::fmt;
use std::io::{BufRead, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::topology::Topology;
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("malformed trace line {line}: {content:?}")]
    MalformedLine { line: usize, content: String },
    #[error("node {node} out of range (node_count = {node_count}) at line {line}")]
    NodeOutOfRange { line: usize, node: u64, node_count: usize },
    #[error("traffic matrix has no positive off-diagonal entry")]
    AllZeroMatrix,
    #[error("traffic matrix malformed: {0}")]
    MalformedMatrix(String),
    #[error("invalid Zipf exponent {0} (must be finite and > 0)")]
    InvalidExponent(f64),
    #[error("paging item {item} out of range 1..={n_items}")]
    ItemOutOfRange { item: usize, n_items: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("i/o error: {0}")]
    Io(std::io::ErrorKind),
}

/// Unordered pair of distinct nodes, stored with `src < dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodePair {
    pub src: NodeId,
    pub dst: NodeId,
}

/// A communication request is a node pair.
pub type Request = NodePair;

impl NodePair {
    /// Canonical pair, or `None` for a self-loop.
    pub fn new(a: NodeId, b: NodeId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self { src: a, dst: b }),
            std::cmp::Ordering::Greater => Some(Self { src: b, dst: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// The endpoint that is not `node`. `node` must be an endpoint.
    #[inline]
    pub fn other(self, node: NodeId) -> NodeId {
        if node == self.src {
            self.dst
        } else {
            self.src
        }
    }

    #[inline]
    pub fn touches(self, node: NodeId) -> bool {
        self.src == node || self.dst == node
    }
}

impl fmt::Display for NodePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.src, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub node_count: usize,
    pub requests: Vec<Request>,
}

impl Trace {
    pub fn new(node_count: usize, requests: Vec<Request>) -> Self {
        debug_assert!(requests.iter().all(|r| (r.dst as usize) < node_count));
        Self { node_count, requests }
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Writes one `src,dst` line per request.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.requests {
            writeln!(out, "{},{}", r.src, r.dst)?;
        }
        Ok(())
    }
}

/// Result of [`parse_trace`]; intra-rack (self-loop) lines are counted, not emitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTrace {
    pub trace: Trace,
    pub skipped_self_loops: usize,
}

/// Parses `src dst` / `src,dst` lines. Extra trailing fields are ignored,
/// blank lines and `#` comments are skipped.
pub fn parse_trace<R: BufRead>(reader: R, node_count: usize) -> Result<ParsedTrace, TraceError> {
    let mut requests = Vec::new();
    let mut skipped = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| TraceError::Io(e.kind()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty());
        let malformed = || TraceError::MalformedLine { line: line_no, content: line.clone() };
        let mut next_node = || -> Result<u64, TraceError> {
            fields.next().and_then(|f| f.parse::<u64>().ok()).ok_or_else(malformed)
        };
        let a = next_node()?;
        let b = next_node()?;
        for node in [a, b] {
            if node >= node_count as u64 {
                return Err(TraceError::NodeOutOfRange { line: line_no, node, node_count });
            }
        }
        match NodePair::new(a as NodeId, b as NodeId) {
            Some(pair) => requests.push(pair),
            None => skipped += 1,
        }
    }
    Ok(ParsedTrace { trace: Trace::new(node_count, requests), skipped_self_loops: skipped })
}

/// Reads an `n x n` whitespace-separated weight matrix.
pub fn read_matrix<R: BufRead>(reader: R) -> Result<Vec<Vec<f64>>, TraceError> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TraceError::Io(e.kind()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TraceError::MalformedMatrix(format!("line {}: {e}", idx + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Draws `count` i.i.d. requests from the off-diagonal mass of `matrix`.
/// Direction is ignored: pair `{i,j}` has weight `m[i][j] + m[j][i]`.
pub fn sample_from_matrix(
    matrix: &[Vec<f64>],
    count: usize,
    seed: u64,
) -> Result<Trace, TraceError> {
    let n = matrix.len();
    if let Some(bad) = matrix.iter().position(|row| row.len() != n) {
        return Err(TraceError::MalformedMatrix(format!("row {bad} is not of length {n}")));
    }
    let mut pairs = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let w = matrix[i][j] + matrix[j][i];
            if !(w >= 0.0) || !w.is_finite() || matrix[i][j] < 0.0 || matrix[j][i] < 0.0 {
                return Err(TraceError::MalformedMatrix(format!(
                    "entry ({i},{j}) is negative or not finite"
                )));
            }
            if w > 0.0 {
                pairs.push(NodePair { src: i as NodeId, dst: j as NodeId });
                weights.push(w);
            }
        }
    }
    if pairs.is_empty() {
        return Err(TraceError::AllZeroMatrix);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Trace::new(n, draw(&pairs, &weights, count, &mut rng)))
}

/// Zipf-skewed workload: all node pairs are ranked by a seeded shuffle and
/// the pair of rank `r` gets weight `r^-exponent`.
pub fn zipf_trace(
    node_count: usize,
    exponent: f64,
    count: usize,
    seed: u64,
) -> Result<Trace, TraceError> {
    if !(exponent > 0.0) || !exponent.is_finite() {
        return Err(TraceError::InvalidExponent(exponent));
    }
    if node_count < 2 {
        return Err(TraceError::InvalidParams("zipf trace needs at least 2 nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = all_pairs(node_count);
    pairs.shuffle(&mut rng);
    let weights: Vec<f64> = (1..=pairs.len()).map(|r| (r as f64).powf(-exponent)).collect();
    Ok(Trace::new(node_count, draw(&pairs, &weights, count, &mut rng)))
}

/// Pair ranking used by [`zipf_trace`] (rank 1 first).
pub fn zipf_ranking(node_count: usize, seed: u64) -> Vec<NodePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = all_pairs(node_count);
    pairs.shuffle(&mut rng);
    pairs
}

/// Star-graph instance turning a paging sequence into a matching trace:
/// each paging request to item `i` becomes `ceil(alpha)` requests `(0, i)`.
pub fn adversarial_star_instance(
    n_items: usize,
    b: usize,
    a: usize,
    alpha: f64,
    paging_sequence: &[usize],
) -> Result<(Topology, Trace), TraceError> {
    if n_items <= b {
        return Err(TraceError::InvalidParams(format!(
            "need more items than cache slots (n_items = {n_items}, b = {b})"
        )));
    }
    if a < 1 || a > b {
        return Err(TraceError::InvalidParams(format!("need 1 <= a <= b, got a = {a}, b = {b}")));
    }
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(TraceError::InvalidParams(format!("alpha must be finite and >= 1, got {alpha}")));
    }
    let topology =
        Topology::star(n_items).map_err(|e| TraceError::InvalidParams(e.to_string()))?;
    let block = alpha.ceil() as usize;
    let mut requests = Vec::with_capacity(block * paging_sequence.len());
    for &item in paging_sequence {
        if item == 0 || item > n_items {
            return Err(TraceError::ItemOutOfRange { item, n_items });
        }
        let pair = NodePair { src: 0, dst: item as NodeId };
        requests.extend(std::iter::repeat(pair).take(block));
    }
    Ok((topology, Trace::new(n_items + 1, requests)))
}

fn all_pairs(node_count: usize) -> Vec<NodePair> {
    let mut pairs = Vec::with_capacity(node_count * (node_count - 1) / 2);
    for u in 0..node_count {
        for v in u + 1..node_count {
            pairs.push(NodePair { src: u as NodeId, dst: v as NodeId });
        }
    }
    pairs
}

fn draw(pairs: &[NodePair], weights: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<Request> {
    if count == 0 {
        return Vec::new();
    }
    let dist = WeightedIndex::new(weights).expect("weights validated by caller");
    (0..count).map(|_| pairs[dist.sample(rng)]).collect()
}
