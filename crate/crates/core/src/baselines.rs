//! Comparison algorithms and the exact offline optimum for tiny instances.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::engine::{serve, CostLedger, MatchingState};
use crate::topology::Topology;
use crate::trace::{NodePair, Request, Trace};
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("instance too large for brute force: {0}")]
    InstanceTooLarge(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Serves everything over the fixed network.
pub fn oblivious_cost(topology: &Topology, trace: &Trace) -> f64 {
    trace.requests.iter().map(|r| topology.dist(r.src, r.dst) as f64).sum()
}

/// Per-pair request counts of a trace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WeightedDemand {
    counts: HashMap<NodePair, u64>,
    total: u64,
}

impl WeightedDemand {
    pub fn from_trace(trace: &Trace) -> Self {
        let mut demand = Self::default();
        for &r in &trace.requests {
            demand.add(r, 1);
        }
        demand
    }

    pub fn add(&mut self, pair: NodePair, count: u64) {
        *self.counts.entry(pair).or_insert(0) += count;
        self.total += count;
    }

    pub fn count(&self, pair: NodePair) -> u64 {
        self.counts.get(&pair).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodePair, u64)> + '_ {
        self.counts.iter().map(|(&p, &c)| (p, c))
    }
}

/// Static matching chosen offline, with its cost on the trace it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticMatching {
    pub edges: Vec<NodePair>,
    pub setup_cost: f64,
    pub routing_cost: f64,
}

impl StaticMatching {
    pub fn total(&self) -> f64 {
        self.setup_cost + self.routing_cost
    }
}

/// Greedy b-matching by saved routing cost `count * (dist - 1)`, ties by
/// canonical pair order. Pairs that save nothing are never picked.
pub fn offline_greedy_bmatching(
    demand: &WeightedDemand,
    topology: &Topology,
    b: usize,
    alpha: f64,
) -> StaticMatching {
    let mut candidates: Vec<(u64, NodePair)> = demand
        .pairs()
        .map(|(p, c)| (c * (topology.dist(p.src, p.dst) as u64 - 1), p))
        .filter(|&(saving, _)| saving > 0)
        .collect();
    candidates.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut degree = vec![0usize; topology.node_count()];
    let mut edges = Vec::new();
    for (_, p) in candidates {
        if degree[p.src as usize] < b && degree[p.dst as usize] < b {
            degree[p.src as usize] += 1;
            degree[p.dst as usize] += 1;
            edges.push(p);
        }
    }
    edges.sort_unstable();

    let routing_cost = demand
        .pairs()
        .map(|(p, c)| {
            let per = if edges.binary_search(&p).is_ok() { 1 } else { topology.dist(p.src, p.dst) };
            (c * per as u64) as f64
        })
        .sum();
    StaticMatching { setup_cost: alpha * edges.len() as f64, edges, routing_cost }
}

/// Deterministic online stand-in for BMA: credit-based insertion with
/// threshold `alpha`, degree overflow evicts the incident edge that earned
/// the least credit since it was inserted.
///
/// Credit of an absent pair grows by its hop distance per request; credit
/// of a configured edge grows by the hop distance it saved per request.
#[derive(Debug, Clone)]
pub struct Dbma {
    topology: Arc<Topology>,
    b: usize,
    alpha: f64,
    state: MatchingState,
    credit: Vec<f64>,
    incident: Vec<Vec<NodeId>>,
}

/// What a D-BMA step changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DbmaEvents {
    pub inserted: Option<NodePair>,
    pub evicted: Vec<NodePair>,
}

impl Dbma {
    pub fn new(topology: Arc<Topology>, b: usize, alpha: f64) -> Result<Self, BaselineError> {
        if b < 1 {
            return Err(BaselineError::InvalidParams("b must be at least 1".into()));
        }
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(BaselineError::InvalidParams(format!("alpha must be >= 1, got {alpha}")));
        }
        let n = topology.node_count();
        Ok(Self {
            state: MatchingState::new(n, b),
            credit: vec![0.0; n * n],
            incident: vec![Vec::with_capacity(b); n],
            topology,
            b,
            alpha,
        })
    }

    pub fn state(&self) -> &MatchingState {
        &self.state
    }

    pub fn credit(&self, pair: NodePair) -> f64 {
        self.credit[self.slot(pair)]
    }

    #[inline]
    fn slot(&self, pair: NodePair) -> usize {
        pair.src as usize * self.topology.node_count() + pair.dst as usize
    }

    pub fn process(&mut self, req: Request, ledger: &mut CostLedger) -> DbmaEvents {
        serve(&self.state, &self.topology, req, ledger);
        self.step(req, ledger)
    }

    /// Credit update and reconfiguration after `req` has been served.
    pub fn step(&mut self, req: Request, ledger: &mut CostLedger) -> DbmaEvents {
        let mut events = DbmaEvents::default();
        let slot = self.slot(req);
        let ell = self.topology.dist(req.src, req.dst) as f64;
        self.credit[slot] += ell;
        if self.state.contains(req) || self.credit[slot] < self.alpha {
            return events;
        }
        for node in [req.src, req.dst] {
            if self.state.degree(node) >= self.b {
                let victim = self.weakest_incident(node);
                self.detach(victim);
                ledger.record_removal();
                events.evicted.push(victim);
            }
        }
        self.state.insert(req);
        self.incident[req.src as usize].push(req.dst);
        self.incident[req.dst as usize].push(req.src);
        self.credit[slot] = 0.0;
        ledger.record_insertion();
        events.inserted = Some(req);
        events
    }

    fn weakest_incident(&self, node: NodeId) -> NodePair {
        self.incident[node as usize]
            .iter()
            .map(|&other| NodePair::new(node, other).expect("no self-loops in matching"))
            .min_by(|a, b| {
                self.credit[self.slot(*a)].total_cmp(&self.credit[self.slot(*b)]).then(a.cmp(b))
            })
            .expect("full node has incident edges")
    }

    fn detach(&mut self, pair: NodePair) {
        self.state.remove(pair);
        for (from, to) in [(pair.src, pair.dst), (pair.dst, pair.src)] {
            let list = &mut self.incident[from as usize];
            let pos = list.iter().position(|&x| x == to).expect("incident list in sync");
            list.swap_remove(pos);
        }
        let slot = self.slot(pair);
        self.credit[slot] = 0.0;
    }
}

pub const MAX_BRUTE_NODES: usize = 5;
pub const MAX_BRUTE_DEGREE: usize = 2;
pub const MAX_BRUTE_REQUESTS: usize = 12;

/// Exact offline optimum with degree cap `a`, by dynamic programming over
/// (request index, matching configuration).
///
/// The matching starts empty and may change before every request; moving
/// between two configurations costs `alpha` per pair in their symmetric
/// difference.
pub fn brute_force_opt(
    topology: &Topology,
    trace: &Trace,
    a: usize,
    alpha: f64,
) -> Result<f64, BaselineError> {
    let n = topology.node_count();
    if n > MAX_BRUTE_NODES || a > MAX_BRUTE_DEGREE || trace.len() > MAX_BRUTE_REQUESTS {
        return Err(BaselineError::InstanceTooLarge(format!(
            "{n} nodes, a = {a}, {} requests (limits {MAX_BRUTE_NODES}, {MAX_BRUTE_DEGREE}, {MAX_BRUTE_REQUESTS})",
            trace.len()
        )));
    }
    if a < 1 {
        return Err(BaselineError::InvalidParams("a must be at least 1".into()));
    }
    let pairs: Vec<NodePair> = (0..n as NodeId)
        .flat_map(|u| (u + 1..n as NodeId).map(move |v| NodePair { src: u, dst: v }))
        .collect();
    let dims = pairs.len();
    let configs = 1usize << dims;
    let feasible: Vec<bool> = (0..configs)
        .map(|mask| {
            let mut deg = [0usize; MAX_BRUTE_NODES];
            for (i, p) in pairs.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    deg[p.src as usize] += 1;
                    deg[p.dst as usize] += 1;
                }
            }
            deg.iter().all(|&d| d <= a)
        })
        .collect();

    let mut best = vec![f64::INFINITY; configs];
    best[0] = 0.0;
    for req in &trace.requests {
        // cheapest way to reach each configuration: Hamming distance
        // relaxation, one dimension at a time
        for bit in 0..dims {
            for mask in 0..configs {
                let from = best[mask ^ (1 << bit)] + alpha;
                if from < best[mask] {
                    best[mask] = from;
                }
            }
        }
        let idx = pairs.iter().position(|p| p == req).expect("request within topology");
        let ell = topology.dist(req.src, req.dst) as f64;
        for mask in 0..configs {
            if feasible[mask] {
                best[mask] += if mask >> idx & 1 == 1 { 1.0 } else { ell };
            } else {
                best[mask] = f64::INFINITY;
            }
        }
    }
    Ok(best.into_iter().fold(f64::INFINITY, f64::min))
}
