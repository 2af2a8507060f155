//! R-BMA: randomized online b-matching driven by per-node paging.
//!
//! Every request is first served (cost 1 over a matching edge, hop distance
//! otherwise). Only every `k_e`-th request to a pair `e`, with
//! `k_e = ceil(alpha / dist(e))`, is *special*: it is forwarded as a page
//! request to the marking caches of both endpoints. A pair is a matching
//! edge exactly when it sits in both endpoint caches. In lazy mode pairs
//! evicted from a cache stay configured but marked, and are pruned only
//! when a node exceeds its degree cap.

use std::collections::VecDeque;
use std::str::FromStr;
use std::sync::Arc;

use arrayvec::ArrayVec;
use thiserror::Error;

use crate::paging::{node_rng, MarkingCache, PagingEvents, PagingPolicy};
use crate::topology::Topology;
use crate::trace::{NodePair, Request, Trace};
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid cost parameters: alpha = {alpha}, ell = {ell} (both must be >= 1)")]
    InvalidCost { alpha: f64, ell: u32 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("request {request} references a node outside the topology ({node_count} nodes)")]
    NodeOutOfRange { request: NodePair, node_count: usize },
    #[error("matching invariant violated: {0}")]
    InvariantViolation(String),
}

/// How pairs evicted from a cache leave the matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RemovalMode {
    /// Remove immediately, keeping the matching equal to the cache intersection.
    Strict,
    /// Mark for removal; prune marked edges only when a degree exceeds `b`.
    #[default]
    Lazy,
}

impl RemovalMode {
    pub fn name(self) -> &'static str {
        match self {
            RemovalMode::Strict => "strict",
            RemovalMode::Lazy => "lazy",
        }
    }
}

impl FromStr for RemovalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Self::Strict),
            "lazy" => Ok(Self::Lazy),
            other => Err(format!("unknown removal mode {other:?}")),
        }
    }
}

/// `ceil(alpha / ell)`: how many requests to a pair make one special request.
pub fn special_threshold(alpha: f64, ell: u32) -> Result<u32, EngineError> {
    if !(alpha >= 1.0) || !alpha.is_finite() || ell < 1 {
        return Err(EngineError::InvalidCost { alpha, ell });
    }
    Ok((alpha / ell as f64).ceil() as u32)
}

/// Separate accumulators for routing and reconfiguration cost.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostLedger {
    pub alpha: f64,
    pub routing_cost: f64,
    pub insertions: u64,
    pub removals: u64,
}

impl CostLedger {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }

    #[inline]
    pub fn charge_routing(&mut self, cost: f64) {
        self.routing_cost += cost;
    }

    #[inline]
    pub fn record_insertion(&mut self) {
        self.insertions += 1;
    }

    #[inline]
    pub fn record_removal(&mut self) {
        self.removals += 1;
    }

    /// `alpha` per inserted or removed matching edge.
    pub fn reconfig_cost(&self) -> f64 {
        self.alpha * (self.insertions + self.removals) as f64
    }

    pub fn total(&self) -> f64 {
        self.routing_cost + self.reconfig_cost()
    }

    /// Loss factor `1 + max_dist / alpha` of the reduction to unit costs.
    pub fn gamma(&self, max_dist: u32) -> f64 {
        1.0 + max_dist as f64 / self.alpha
    }
}

const UNMARKED: u64 = u64::MAX;

/// Current b-matching, with lazy-removal marks.
#[derive(Debug, Clone)]
pub struct MatchingState {
    node_count: usize,
    b: usize,
    present: Vec<bool>,
    marked_at: Vec<u64>,
    degree: Vec<u32>,
    edge_count: usize,
    marked_count: usize,
    /// Per node, marked incident edges by mark time. May hold stale entries.
    mark_queue: Vec<VecDeque<(u64, NodePair)>>,
}

impl MatchingState {
    pub fn new(node_count: usize, b: usize) -> Self {
        Self {
            node_count,
            b,
            present: vec![false; node_count * node_count],
            marked_at: vec![UNMARKED; node_count * node_count],
            degree: vec![0; node_count],
            edge_count: 0,
            marked_count: 0,
            mark_queue: vec![VecDeque::new(); node_count],
        }
    }

    #[inline]
    fn slot(&self, pair: NodePair) -> usize {
        pair.src as usize * self.node_count + pair.dst as usize
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn contains(&self, pair: NodePair) -> bool {
        self.present[self.slot(pair)]
    }

    #[inline]
    pub fn is_marked(&self, pair: NodePair) -> bool {
        self.marked_at[self.slot(pair)] != UNMARKED
    }

    #[inline]
    pub fn degree(&self, node: NodeId) -> usize {
        self.degree[node as usize] as usize
    }

    /// Number of configured edges, marked ones included.
    pub fn len(&self) -> usize {
        self.edge_count
    }

    pub fn is_empty(&self) -> bool {
        self.edge_count == 0
    }

    pub fn marked_len(&self) -> usize {
        self.marked_count
    }

    /// All configured edges in canonical order.
    pub fn edges(&self) -> Vec<NodePair> {
        self.collect(|s, i| s.present[i])
    }

    pub fn marked_edges(&self) -> Vec<NodePair> {
        self.collect(|s, i| s.marked_at[i] != UNMARKED)
    }

    fn collect(&self, keep: impl Fn(&Self, usize) -> bool) -> Vec<NodePair> {
        let n = self.node_count;
        let mut out = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if keep(self, u * n + v) {
                    out.push(NodePair { src: u as NodeId, dst: v as NodeId });
                }
            }
        }
        out
    }

    /// Adds `pair`; returns false if it was already present.
    pub fn insert(&mut self, pair: NodePair) -> bool {
        let slot = self.slot(pair);
        if self.present[slot] {
            return false;
        }
        self.present[slot] = true;
        self.degree[pair.src as usize] += 1;
        self.degree[pair.dst as usize] += 1;
        self.edge_count += 1;
        true
    }

    /// Drops `pair` (and its mark); returns false if it was absent.
    pub fn remove(&mut self, pair: NodePair) -> bool {
        let slot = self.slot(pair);
        if !self.present[slot] {
            return false;
        }
        self.present[slot] = false;
        if self.marked_at[slot] != UNMARKED {
            self.marked_at[slot] = UNMARKED;
            self.marked_count -= 1;
        }
        self.degree[pair.src as usize] -= 1;
        self.degree[pair.dst as usize] -= 1;
        self.edge_count -= 1;
        true
    }

    /// Marks a present, unmarked edge at time `clock`.
    pub fn mark(&mut self, pair: NodePair, clock: u64) -> bool {
        let slot = self.slot(pair);
        if !self.present[slot] || self.marked_at[slot] != UNMARKED {
            return false;
        }
        self.marked_at[slot] = clock;
        self.marked_count += 1;
        for node in [pair.src, pair.dst] {
            let limit = 4 * (self.b + 1);
            let queue = &mut self.mark_queue[node as usize];
            queue.push_back((clock, pair));
            if queue.len() > limit {
                let (present, marked_at, n) = (&self.present, &self.marked_at, self.node_count);
                queue.retain(|&(t, p)| {
                    let s = p.src as usize * n + p.dst as usize;
                    present[s] && marked_at[s] == t
                });
            }
        }
        true
    }

    pub fn unmark(&mut self, pair: NodePair) -> bool {
        let slot = self.slot(pair);
        if self.marked_at[slot] == UNMARKED {
            return false;
        }
        self.marked_at[slot] = UNMARKED;
        self.marked_count -= 1;
        true
    }

    /// Removes and returns the longest-marked edge incident to `node`;
    /// among edges marked at the same time the canonically smallest goes first.
    pub fn prune_oldest_marked(&mut self, node: NodeId) -> Option<NodePair> {
        let queue = &mut self.mark_queue[node as usize];
        let mut best: Option<(u64, NodePair, usize)> = None;
        // drop stale front entries, then pick the smallest (time, pair) among
        // the valid entries sharing the front timestamp
        while let Some(&(t, p)) = queue.front() {
            let s = p.src as usize * self.node_count + p.dst as usize;
            if self.present[s] && self.marked_at[s] == t {
                break;
            }
            queue.pop_front();
        }
        for (i, &(t, p)) in queue.iter().enumerate() {
            if best.is_some_and(|(bt, _, _)| t > bt) {
                break;
            }
            let s = p.src as usize * self.node_count + p.dst as usize;
            if self.present[s] && self.marked_at[s] == t
                && best.map_or(true, |(bt, bp, _)| (t, p) < (bt, bp))
            {
                best = Some((t, p, i));
            }
        }
        let (_, pair, i) = best?;
        self.mark_queue[node as usize].remove(i);
        self.remove(pair);
        Some(pair)
    }

    /// Recomputes degrees from the edge set and checks the cap `b`.
    pub fn check_degrees(&self) -> Result<(), EngineError> {
        let mut deg = vec![0usize; self.node_count];
        for e in self.edges() {
            deg[e.src as usize] += 1;
            deg[e.dst as usize] += 1;
        }
        for (v, &d) in deg.iter().enumerate() {
            if d != self.degree[v] as usize {
                return Err(EngineError::InvariantViolation(format!(
                    "degree bookkeeping of node {v}: stored {} actual {d}",
                    self.degree[v]
                )));
            }
            if d > self.b {
                return Err(EngineError::InvariantViolation(format!(
                    "node {v} has degree {d} > b = {}",
                    self.b
                )));
            }
        }
        Ok(())
    }
}

/// Per-pair occurrence counters modulo `k_e`.
#[derive(Debug, Clone)]
pub struct SpecialCounters {
    node_count: usize,
    threshold: Vec<u32>,
    count: Vec<u32>,
}

impl SpecialCounters {
    pub fn new(topology: &Topology, alpha: f64) -> Result<Self, EngineError> {
        let n = topology.node_count();
        let mut threshold = vec![1; n * n];
        for u in 0..n {
            for v in u + 1..n {
                threshold[u * n + v] = special_threshold(alpha, topology.dist(u as NodeId, v as NodeId))?;
            }
        }
        Ok(Self { node_count: n, threshold, count: vec![0; n * n] })
    }

    /// Counts one request to `pair`; true when it is special.
    #[inline]
    pub fn advance(&mut self, pair: NodePair) -> bool {
        let slot = pair.src as usize * self.node_count + pair.dst as usize;
        let c = self.count[slot] + 1;
        if c == self.threshold[slot] {
            self.count[slot] = 0;
            true
        } else {
            self.count[slot] = c;
            false
        }
    }

    pub fn threshold(&self, pair: NodePair) -> u32 {
        self.threshold[pair.src as usize * self.node_count + pair.dst as usize]
    }

    pub fn count(&self, pair: NodePair) -> u32 {
        self.count[pair.src as usize * self.node_count + pair.dst as usize]
    }
}

/// Routing charge for `req`: 1 over a configured edge (marked or not),
/// hop distance otherwise.
#[inline]
pub fn serve(state: &MatchingState, topology: &Topology, req: Request, ledger: &mut CostLedger) -> f64 {
    let cost = if state.contains(req) { 1.0 } else { topology.dist(req.src, req.dst) as f64 };
    ledger.charge_routing(cost);
    cost
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbmaParams {
    pub b: usize,
    pub alpha: f64,
    pub policy: PagingPolicy,
    pub mode: RemovalMode,
}

/// Reconfiguration caused by one request.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepEvents {
    pub special: bool,
    /// Cache events at `req.src` and `req.dst`, for special requests.
    pub paging: Option<[(NodeId, PagingEvents<NodePair>); 2]>,
    pub inserted: bool,
    pub removed: ArrayVec<NodePair, 4>,
    pub marked: ArrayVec<NodePair, 2>,
}

/// R-BMA state: matching, special-request counters and one cache per node.
#[derive(Debug, Clone)]
pub struct Rbma {
    topology: Arc<Topology>,
    params: RbmaParams,
    state: MatchingState,
    counters: SpecialCounters,
    caches: Vec<MarkingCache<NodePair>>,
    clock: u64,
}

impl Rbma {
    pub fn new(topology: Arc<Topology>, params: RbmaParams, seed: u64) -> Result<Self, EngineError> {
        if params.b < 1 {
            return Err(EngineError::InvalidParams("b must be at least 1".into()));
        }
        let n = topology.node_count();
        let counters = SpecialCounters::new(&topology, params.alpha)?;
        let caches = (0..n as NodeId)
            .map(|v| MarkingCache::new(params.b, params.policy, node_rng(seed, v)))
            .collect();
        Ok(Self {
            state: MatchingState::new(n, params.b),
            topology,
            params,
            counters,
            caches,
            clock: 0,
        })
    }

    pub fn params(&self) -> RbmaParams {
        self.params
    }

    pub fn state(&self) -> &MatchingState {
        &self.state
    }

    pub fn counters(&self) -> &SpecialCounters {
        &self.counters
    }

    pub fn cache(&self, node: NodeId) -> &MarkingCache<NodePair> {
        &self.caches[node as usize]
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Serves `req` and then reconfigures.
    pub fn process(&mut self, req: Request, ledger: &mut CostLedger) -> Result<StepEvents, EngineError> {
        if req.dst as usize >= self.topology.node_count() {
            return Err(EngineError::NodeOutOfRange {
                request: req,
                node_count: self.topology.node_count(),
            });
        }
        serve(&self.state, &self.topology, req, ledger);
        self.step(req, ledger)
    }

    /// Reconfiguration after `req` has been served.
    pub fn step(&mut self, req: Request, ledger: &mut CostLedger) -> Result<StepEvents, EngineError> {
        let mut events = StepEvents::default();
        if !self.counters.advance(req) {
            return Ok(events);
        }
        events.special = true;
        self.clock += 1;

        let at_src = self.caches[req.src as usize].request(req);
        let at_dst = self.caches[req.dst as usize].request(req);
        events.paging = Some([(req.src, at_src), (req.dst, at_dst)]);

        let mut evicted: ArrayVec<NodePair, 2> =
            [at_src.evicted, at_dst.evicted].into_iter().flatten().collect();
        evicted.sort_unstable();
        for pair in evicted {
            match self.params.mode {
                RemovalMode::Strict => {
                    if self.state.remove(pair) {
                        ledger.record_removal();
                        events.removed.push(pair);
                    }
                }
                RemovalMode::Lazy => {
                    if self.state.mark(pair, self.clock) {
                        events.marked.push(pair);
                    }
                }
            }
        }

        if self.state.insert(req) {
            ledger.record_insertion();
            events.inserted = true;
        } else {
            self.state.unmark(req);
        }

        for node in [req.src, req.dst] {
            while self.state.degree(node) > self.params.b {
                if self.params.mode == RemovalMode::Strict {
                    return Err(EngineError::InvariantViolation(format!(
                        "strict mode: node {node} exceeds degree {}",
                        self.params.b
                    )));
                }
                let pruned = self.state.prune_oldest_marked(node).ok_or_else(|| {
                    EngineError::InvariantViolation(format!(
                        "node {node} exceeds degree {} with no marked edge to prune",
                        self.params.b
                    ))
                })?;
                ledger.record_removal();
                events.removed.push(pruned);
            }
        }
        Ok(events)
    }

    /// Full consistency check between the matching and the caches.
    pub fn check_invariants(&self) -> Result<(), EngineError> {
        self.state.check_degrees()?;
        let both_cached = |e: NodePair| {
            self.caches[e.src as usize].contains(&e) && self.caches[e.dst as usize].contains(&e)
        };
        for e in self.state.edges() {
            let unmarked = !self.state.is_marked(e);
            if self.params.mode == RemovalMode::Strict && self.state.is_marked(e) {
                return Err(EngineError::InvariantViolation(format!("strict mode: {e} is marked")));
            }
            if unmarked && !both_cached(e) {
                return Err(EngineError::InvariantViolation(format!(
                    "{e} is an unmarked matching edge but not cached at both endpoints"
                )));
            }
            if !unmarked && both_cached(e) {
                return Err(EngineError::InvariantViolation(format!(
                    "{e} is marked although cached at both endpoints"
                )));
            }
        }
        for cache in &self.caches {
            for &e in cache.pages() {
                if both_cached(e) && !self.state.contains(e) {
                    return Err(EngineError::InvariantViolation(format!(
                        "{e} is cached at both endpoints but not in the matching"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Runs R-BMA over a whole trace.
pub fn run_algorithm(
    topology: Arc<Topology>,
    trace: &Trace,
    params: RbmaParams,
    seed: u64,
) -> Result<(CostLedger, MatchingState), EngineError> {
    let mut ledger = CostLedger::new(params.alpha);
    let mut rbma = Rbma::new(topology, params, seed)?;
    for &req in &trace.requests {
        rbma.process(req, &mut ledger)?;
    }
    Ok((ledger, rbma.state))
}
