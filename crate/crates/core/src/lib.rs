//! Online (b,a)-matching for reconfigurable datacenter networks.
//!
//! The crate simulates a network made of a fixed topology plus a set of
//! reconfigurable point-to-point links (a b-matching). Requests between node
//! pairs are served over a matching edge at cost 1 or over the fixed network
//! at the hop distance; adding or removing a matching edge costs `alpha`.
//!
//! * [`topology`]: fixed networks and distances.
//! * [`trace`]: request traces and workload generators.
//! * [`paging`]: per-node marking caches and the Belady MIN oracle.
//! * [`engine`]: R-BMA, the randomized online algorithm built from paging.
//! * [`baselines`]: oblivious routing, the D-BMA stand-in, static greedy
//!   SO-BMA and the brute-force offline optimum.
//! * [`registry`]: every algorithm behind the [`registry::Algorithm`] trait,
//!   selectable by name.
//! * [`harness`]: repeated runs, sweeps, CSV output and oracle checks.

pub mod baselines;
pub mod engine;
pub mod harness;
pub mod paging;
pub mod registry;
pub mod topology;
pub mod trace;

pub use engine::{CostLedger, MatchingState, RemovalMode};
pub use paging::PagingPolicy;
pub use registry::{Algorithm, AlgorithmRegistry, BuildContext};
pub use topology::Topology;
pub use trace::{NodePair, Request, Trace};

/// Node identifier (matching nodes are numbered `0..node_count`).
pub type NodeId = u32;
