//! Fixed (non-reconfigurable) networks and their hop-count distance matrix.
//!
//! A [`Topology`] only exposes the nodes that take part in the matching
//! problem (racks, or star leaves and center). Generators that need internal
//! switches to induce distances build the full switch graph, run BFS on it
//! and then project the matrix down to the rack nodes.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("graph is disconnected: node {unreachable} is unreachable from node {from}")]
    DisconnectedGraph { from: NodeId, unreachable: NodeId },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("node {node} out of range (node_count = {node_count})")]
    NodeOutOfRange { node: usize, node_count: usize },
    #[error("invalid topology parameters: {0}")]
    InvalidParams(String),
    #[error("malformed edge list at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(std::io::ErrorKind),
}

/// Generator families for [`Topology::generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    /// Center `0` plus `leaves` leaf nodes `1..=leaves`.
    Star { leaves: usize },
    /// `leaves` rack nodes, each wired to all `spines` spine switches.
    LeafSpine { leaves: usize, spines: usize },
    /// Three-tier k-ary fat-tree with `k^3/4` rack nodes.
    FatTree { k: usize },
}

/// Fixed network restricted to the matching nodes, with dense hop distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    node_count: usize,
    /// Unit links between matching nodes (pairs at distance 1), canonical order.
    links: Vec<(NodeId, NodeId)>,
    dist: Vec<u32>,
    max_dist: u32,
}

impl Topology {
    /// Builds a topology from an undirected edge list; every node is a matching node.
    pub fn build_from_edges(
        node_count: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self, TopologyError> {
        Self::build_projected(node_count, edges, node_count)
    }

    /// Builds the graph on `node_count` vertices and keeps only the first
    /// `visible` of them as matching nodes.
    pub fn build_projected(
        node_count: usize,
        edges: &[(usize, usize)],
        visible: usize,
    ) -> Result<Self, TopologyError> {
        if node_count == 0 {
            return Err(TopologyError::InvalidParams("node_count must be positive".into()));
        }
        if visible == 0 || visible > node_count {
            return Err(TopologyError::InvalidParams(format!(
                "visible node count {visible} not in 1..={node_count}"
            )));
        }
        let mut adj = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            for node in [u, v] {
                if node >= node_count {
                    return Err(TopologyError::NodeOutOfRange { node, node_count });
                }
            }
            if u == v {
                return Err(TopologyError::SelfLoop(u as NodeId));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }

        let mut dist = vec![0u32; visible * visible];
        let mut scratch = vec![u32::MAX; node_count];
        let mut queue = VecDeque::with_capacity(node_count);
        for src in 0..visible {
            scratch.fill(u32::MAX);
            scratch[src] = 0;
            queue.clear();
            queue.push_back(src);
            while let Some(u) = queue.pop_front() {
                let next = scratch[u] + 1;
                for &v in &adj[u] {
                    if scratch[v] == u32::MAX {
                        scratch[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            if let Some(bad) = scratch.iter().position(|&d| d == u32::MAX) {
                return Err(TopologyError::DisconnectedGraph {
                    from: src as NodeId,
                    unreachable: bad as NodeId,
                });
            }
            dist[src * visible..(src + 1) * visible].copy_from_slice(&scratch[..visible]);
        }

        let mut links = Vec::new();
        for u in 0..visible {
            for v in u + 1..visible {
                if dist[u * visible + v] == 1 {
                    links.push((u as NodeId, v as NodeId));
                }
            }
        }
        let max_dist = dist.iter().copied().max().unwrap_or(0);
        Ok(Self { node_count: visible, links, dist, max_dist })
    }

    pub fn generate(kind: TopologyKind) -> Result<Self, TopologyError> {
        let (total, edges, visible) = switch_graph(kind)?;
        Self::build_projected(total, &edges, visible)
    }

    pub fn star(leaves: usize) -> Result<Self, TopologyError> {
        Self::generate(TopologyKind::Star { leaves })
    }

    pub fn leaf_spine(leaves: usize, spines: usize) -> Result<Self, TopologyError> {
        Self::generate(TopologyKind::LeafSpine { leaves, spines })
    }

    pub fn fat_tree(k: usize) -> Result<Self, TopologyError> {
        Self::generate(TopologyKind::FatTree { k })
    }

    /// Complete graph: every pair is at distance 1.
    pub fn complete(node_count: usize) -> Result<Self, TopologyError> {
        let mut edges = Vec::new();
        for u in 0..node_count {
            for v in u + 1..node_count {
                edges.push((u, v));
            }
        }
        Self::build_from_edges(node_count, &edges)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Hop distance between `u` and `v`.
    #[inline]
    pub fn dist(&self, u: NodeId, v: NodeId) -> u32 {
        self.dist[u as usize * self.node_count + v as usize]
    }

    /// Largest pairwise distance (the `ℓ_max` of the cost model).
    pub fn max_dist(&self) -> u32 {
        self.max_dist
    }

    /// Fixed links among matching nodes.
    pub fn links(&self) -> &[(NodeId, NodeId)] {
        &self.links
    }

    pub fn distance_matrix(&self) -> &[u32] {
        &self.dist
    }

    /// Reads the edge-list format: `n m [r]`, then `m` lines `u v`.
    ///
    /// The optional third header field `r` marks the first `r` nodes as
    /// matching nodes; the remaining ones are internal switches.
    pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Self, TopologyError> {
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let (line_no, header) = match lines.next() {
            Some((n, l)) => (n, l.map_err(|e| TopologyError::Io(e.kind()))?),
            None => {
                return Err(TopologyError::Malformed { line: 1, reason: "missing header".into() })
            }
        };
        let fields = parse_usizes(&header, line_no)?;
        let (n, m, r) = match fields.as_slice() {
            [n, m] => (*n, *m, *n),
            [n, m, r] => (*n, *m, *r),
            _ => {
                return Err(TopologyError::Malformed {
                    line: line_no,
                    reason: "header must be `n m` or `n m r`".into(),
                })
            }
        };
        let mut edges = Vec::with_capacity(m);
        for (line_no, line) in lines {
            let line = line.map_err(|e| TopologyError::Io(e.kind()))?;
            match parse_usizes(&line, line_no)?.as_slice() {
                [u, v] => edges.push((*u, *v)),
                _ => {
                    return Err(TopologyError::Malformed {
                        line: line_no,
                        reason: "expected `u v`".into(),
                    })
                }
            }
        }
        if edges.len() != m {
            return Err(TopologyError::Malformed {
                line: line_no,
                reason: format!("header announces {m} edges, found {}", edges.len()),
            });
        }
        Self::build_projected(n, &edges, r)
    }
}

/// Writes the full switch graph of a generated topology in edge-list format.
/// Emits the plain `n m` header when every node is a matching node.
pub fn write_edge_list<W: Write>(kind: TopologyKind, mut out: W) -> Result<(), TopologyError> {
    let (total, edges, visible) = switch_graph(kind)?;
    let io = |e: std::io::Error| TopologyError::Io(e.kind());
    if visible == total {
        writeln!(out, "{} {}", total, edges.len()).map_err(io)?;
    } else {
        writeln!(out, "{} {} {}", total, edges.len(), visible).map_err(io)?;
    }
    for (u, v) in edges {
        writeln!(out, "{u} {v}").map_err(io)?;
    }
    Ok(())
}

fn parse_usizes(line: &str, line_no: usize) -> Result<Vec<usize>, TopologyError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<usize>().map_err(|_| TopologyError::Malformed {
                line: line_no,
                reason: format!("not a non-negative integer: {tok:?}"),
            })
        })
        .collect()
}

/// Returns `(total vertex count, edges, matching node count)`. Matching
/// nodes always occupy ids `0..matching node count`.
fn switch_graph(kind: TopologyKind) -> Result<(usize, Vec<(usize, usize)>, usize), TopologyError> {
    match kind {
        TopologyKind::Star { leaves } => {
            if leaves == 0 {
                return Err(TopologyError::InvalidParams("star needs at least one leaf".into()));
            }
            let edges = (1..=leaves).map(|v| (0, v)).collect();
            Ok((leaves + 1, edges, leaves + 1))
        }
        TopologyKind::LeafSpine { leaves, spines } => {
            if leaves == 0 || spines == 0 {
                return Err(TopologyError::InvalidParams(
                    "leaf_spine needs positive leaf and spine counts".into(),
                ));
            }
            let mut edges = Vec::with_capacity(leaves * spines);
            for leaf in 0..leaves {
                for spine in 0..spines {
                    edges.push((leaf, leaves + spine));
                }
            }
            Ok((leaves + spines, edges, leaves))
        }
        TopologyKind::FatTree { k } => {
            if k < 2 || k % 2 != 0 {
                return Err(TopologyError::InvalidParams(format!(
                    "fat_tree arity must be even and >= 2, got {k}"
                )));
            }
            let half = k / 2;
            let racks = k * k * k / 4;
            let edge_sw = k * half;
            let agg_sw = k * half;
            let core_sw = half * half;
            let edge_base = racks;
            let agg_base = edge_base + edge_sw;
            let core_base = agg_base + agg_sw;
            let mut edges = Vec::new();
            for pod in 0..k {
                for e in 0..half {
                    let edge_id = edge_base + pod * half + e;
                    for h in 0..half {
                        edges.push(((pod * half + e) * half + h, edge_id));
                    }
                    for a in 0..half {
                        edges.push((edge_id, agg_base + pod * half + a));
                    }
                }
                // aggregation switch `a` of each pod uplinks to core group `a`
                for a in 0..half {
                    for c in 0..half {
                        edges.push((agg_base + pod * half + a, core_base + a * half + c));
                    }
                }
            }
            Ok((core_base + core_sw, edges, racks))
        }
    }
}
