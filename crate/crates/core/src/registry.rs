//! Algorithms behind a common trait, registered by name.
//!
//! The harness and CLI only ever see `Box<dyn Algorithm>`; adding a new
//! strategy means implementing [`Algorithm`] and registering a factory.

use std::sync::Arc;

use thiserror::Error;

use crate::baselines::{offline_greedy_bmatching, BaselineError, Dbma, WeightedDemand};
use crate::engine::{serve, CostLedger, EngineError, MatchingState, Rbma, RbmaParams, RemovalMode};
use crate::paging::PagingPolicy;
use crate::topology::Topology;
use crate::trace::{Request, Trace};

#[derive(Debug, Error, PartialEq)]
pub enum AlgorithmError {
    #[error("unknown algorithm {name:?} (available: {available})")]
    UnknownAlgorithm { name: String, available: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// An algorithm that serves a request sequence one request at a time.
pub trait Algorithm: Send {
    fn name(&self) -> &'static str;

    /// Charges any configuration done before the first request.
    fn prepare(&mut self, _ledger: &mut CostLedger) {}

    /// Serves `req` and applies the algorithm's reconfiguration.
    fn process(&mut self, req: Request, ledger: &mut CostLedger) -> Result<(), AlgorithmError>;

    /// Current set of matching edges.
    fn matching(&self) -> &MatchingState;

    /// Access to the R-BMA internals (caches) when this is R-BMA.
    fn as_rbma(&self) -> Option<&Rbma> {
        None
    }
}

/// Everything a factory may need to instantiate an algorithm for one run.
#[derive(Debug, Clone)]
pub struct BuildContext {
    pub topology: Arc<Topology>,
    /// Whole trace, for offline algorithms.
    pub trace: Arc<Trace>,
    pub b: usize,
    pub alpha: f64,
    pub policy: PagingPolicy,
    pub mode: RemovalMode,
    pub seed: u64,
}

pub type Factory = fn(&BuildContext) -> Result<Box<dyn Algorithm>, AlgorithmError>;

#[derive(Clone)]
pub struct AlgorithmEntry {
    pub name: &'static str,
    pub description: &'static str,
    /// Caveat echoed into result metadata.
    pub note: Option<&'static str>,
    pub factory: Factory,
}

impl std::fmt::Debug for AlgorithmEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlgorithmEntry").field("name", &self.name).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Default)]
pub struct AlgorithmRegistry {
    entries: Vec<AlgorithmEntry>,
}

impl AlgorithmRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding `rbma`, `dbma`, `so_bma` and `oblivious`.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(AlgorithmEntry {
            name: "rbma",
            description: "randomized online b-matching via per-node marking caches",
            note: None,
            factory: |ctx| {
                let params =
                    RbmaParams { b: ctx.b, alpha: ctx.alpha, policy: ctx.policy, mode: ctx.mode };
                Ok(Box::new(RbmaAlgorithm(Rbma::new(ctx.topology.clone(), params, ctx.seed)?)))
            },
        });
        reg.register(AlgorithmEntry {
            name: "dbma",
            description: "deterministic credit-based online b-matching",
            note: Some("stand-in baseline"),
            factory: |ctx| Ok(Box::new(DbmaAlgorithm(Dbma::new(ctx.topology.clone(), ctx.b, ctx.alpha)?))),
        });
        reg.register(AlgorithmEntry {
            name: "so_bma",
            description: "static offline b-matching chosen greedily from whole-trace demand",
            note: Some("greedy max-weight b-matching, not exact"),
            factory: |ctx| Ok(Box::new(SoBma::new(ctx))),
        });
        reg.register(AlgorithmEntry {
            name: "oblivious",
            description: "every request routed over the fixed network",
            note: None,
            factory: |ctx| Ok(Box::new(Oblivious::new(ctx.topology.clone(), ctx.b))),
        });
        reg
    }

    /// Adds an entry, replacing any previous entry with the same name.
    pub fn register(&mut self, entry: AlgorithmEntry) {
        self.entries.retain(|e| e.name != entry.name);
        self.entries.push(entry);
    }

    pub fn get(&self, name: &str) -> Option<&AlgorithmEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn entry(&self, name: &str) -> Result<&AlgorithmEntry, AlgorithmError> {
        self.get(name).ok_or_else(|| AlgorithmError::UnknownAlgorithm {
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn build(&self, name: &str, ctx: &BuildContext) -> Result<Box<dyn Algorithm>, AlgorithmError> {
        (self.entry(name)?.factory)(ctx)
    }
}

struct RbmaAlgorithm(Rbma);

impl Algorithm for RbmaAlgorithm {
    fn name(&self) -> &'static str {
        "rbma"
    }

    fn process(&mut self, req: Request, ledger: &mut CostLedger) -> Result<(), AlgorithmError> {
        self.0.process(req, ledger)?;
        Ok(())
    }

    fn matching(&self) -> &MatchingState {
        self.0.state()
    }

    fn as_rbma(&self) -> Option<&Rbma> {
        Some(&self.0)
    }
}

struct DbmaAlgorithm(Dbma);

impl Algorithm for DbmaAlgorithm {
    fn name(&self) -> &'static str {
        "dbma"
    }

    fn process(&mut self, req: Request, ledger: &mut CostLedger) -> Result<(), AlgorithmError> {
        self.0.process(req, ledger);
        Ok(())
    }

    fn matching(&self) -> &MatchingState {
        self.0.state()
    }
}

struct SoBma {
    topology: Arc<Topology>,
    state: MatchingState,
}

impl SoBma {
    fn new(ctx: &BuildContext) -> Self {
        let demand = WeightedDemand::from_trace(&ctx.trace);
        let chosen = offline_greedy_bmatching(&demand, &ctx.topology, ctx.b, ctx.alpha);
        let mut state = MatchingState::new(ctx.topology.node_count(), ctx.b);
        for e in chosen.edges {
            state.insert(e);
        }
        Self { topology: ctx.topology.clone(), state }
    }
}

impl Algorithm for SoBma {
    fn name(&self) -> &'static str {
        "so_bma"
    }

    fn prepare(&mut self, ledger: &mut CostLedger) {
        for _ in 0..self.state.len() {
            ledger.record_insertion();
        }
    }

    fn process(&mut self, req: Request, ledger: &mut CostLedger) -> Result<(), AlgorithmError> {
        serve(&self.state, &self.topology, req, ledger);
        Ok(())
    }

    fn matching(&self) -> &MatchingState {
        &self.state
    }
}

struct Oblivious {
    topology: Arc<Topology>,
    empty: MatchingState,
}

impl Oblivious {
    fn new(topology: Arc<Topology>, b: usize) -> Self {
        let empty = MatchingState::new(topology.node_count(), b);
        Self { topology, empty }
    }
}

impl Algorithm for Oblivious {
    fn name(&self) -> &'static str {
        "oblivious"
    }

    fn process(&mut self, req: Request, ledger: &mut CostLedger) -> Result<(), AlgorithmError> {
        ledger.charge_routing(self.topology.dist(req.src, req.dst) as f64);
        Ok(())
    }

    fn matching(&self) -> &MatchingState {
        &self.empty
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::oblivious_cost;
    use crate::trace::zipf_trace;

    fn ctx(b: usize, alpha: f64) -> BuildContext {
        let topology = Arc::new(Topology::leaf_spine(8, 2).unwrap());
        let trace = Arc::new(zipf_trace(8, 1.0, 2000, 4).unwrap());
        BuildContext {
            topology,
            trace,
            b,
            alpha,
            policy: PagingPolicy::RandomizedMarking,
            mode: RemovalMode::Lazy,
            seed: 1,
        }
    }

    fn run(reg: &AlgorithmRegistry, name: &str, ctx: &BuildContext) -> CostLedger {
        let mut alg = reg.build(name, ctx).unwrap();
        let mut ledger = CostLedger::new(ctx.alpha);
        alg.prepare(&mut ledger);
        for &r in &ctx.trace.requests {
            alg.process(r, &mut ledger).unwrap();
        }
        ledger
    }

    #[test]
    fn builtin_names() {
        let reg = AlgorithmRegistry::builtin();
        assert_eq!(reg.names(), vec!["rbma", "dbma", "so_bma", "oblivious"]);
        assert_eq!(reg.get("dbma").unwrap().note, Some("stand-in baseline"));
        assert!(matches!(
            reg.build("lru", &ctx(2, 2.0)),
            Err(AlgorithmError::UnknownAlgorithm { .. })
        ));
    }

    #[test]
    fn oblivious_matches_direct_sum() {
        let reg = AlgorithmRegistry::builtin();
        let c = ctx(2, 2.0);
        let ledger = run(&reg, "oblivious", &c);
        assert_eq!(ledger.total(), oblivious_cost(&c.topology, &c.trace));
    }

    #[test]
    fn so_bma_matches_offline_greedy() {
        let reg = AlgorithmRegistry::builtin();
        let c = ctx(3, 5.0);
        let ledger = run(&reg, "so_bma", &c);
        let direct =
            offline_greedy_bmatching(&WeightedDemand::from_trace(&c.trace), &c.topology, 3, 5.0);
        assert_eq!(ledger.routing_cost, direct.routing_cost);
        assert_eq!(ledger.reconfig_cost(), direct.setup_cost);
    }

    #[test]
    fn custom_registration_replaces() {
        let mut reg = AlgorithmRegistry::builtin();
        reg.register(AlgorithmEntry {
            name: "oblivious",
            description: "replaced",
            note: None,
            factory: |ctx| Ok(Box::new(Oblivious::new(ctx.topology.clone(), 1))),
        });
        assert_eq!(reg.names().len(), 4);
        assert_eq!(reg.get("oblivious").unwrap().description, "replaced");
    }
}
