//! Per-node paging caches.
//!
//! [`MarkingCache`] implements the phase-based marking algorithm in its
//! randomized form (evict a uniformly random unmarked page) and a
//! deterministic form (evict the smallest unmarked page). [`belady_min`] is
//! the offline optimum used as an oracle.
//!
//! Cost convention: one unit per fetch, evictions are free, no bypassing.

use std::collections::HashMap;
use std::hash::Hash;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PagingPolicy {
    #[default]
    RandomizedMarking,
    DeterministicMarking,
}

impl PagingPolicy {
    pub fn name(self) -> &'static str {
        match self {
            PagingPolicy::RandomizedMarking => "randomized_marking",
            PagingPolicy::DeterministicMarking => "deterministic_marking",
        }
    }
}

impl FromStr for PagingPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "randomized_marking" | "randomized" | "random" => Ok(Self::RandomizedMarking),
            "deterministic_marking" | "deterministic" => Ok(Self::DeterministicMarking),
            other => Err(format!("unknown paging policy {other:?}")),
        }
    }
}

/// What a single cache request did. Marking evicts at most one page per fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PagingEvents<P> {
    pub fault: bool,
    pub evicted: Option<P>,
    pub fetched: Option<P>,
}

/// Random stream for the cache of `node` under run seed `seed`.
///
/// Each node gets its own ChaCha stream so that per-node decisions do not
/// depend on how requests of other nodes interleave.
pub fn node_rng(seed: u64, node: NodeId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng
}

/// Marking cache with O(1) operations for the randomized policy.
///
/// `slots[..unmarked]` holds the unmarked pages, `slots[unmarked..]` the
/// marked ones; `index` maps a page to its slot.
#[derive(Debug, Clone)]
pub struct MarkingCache<P> {
    capacity: usize,
    policy: PagingPolicy,
    slots: Vec<P>,
    unmarked: usize,
    index: HashMap<P, usize>,
    rng: ChaCha8Rng,
    faults: u64,
    phases: u64,
}

impl<P: Copy + Eq + Hash + Ord> MarkingCache<P> {
    pub fn new(capacity: usize, policy: PagingPolicy, rng: ChaCha8Rng) -> Self {
        assert!(capacity >= 1, "cache capacity must be positive");
        Self {
            capacity,
            policy,
            slots: Vec::with_capacity(capacity),
            unmarked: 0,
            index: HashMap::with_capacity(capacity + 1),
            rng,
            faults: 0,
            phases: 0,
        }
    }

    pub fn with_seed(capacity: usize, policy: PagingPolicy, seed: u64) -> Self {
        Self::new(capacity, policy, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn request(&mut self, page: P) -> PagingEvents<P> {
        if let Some(&slot) = self.index.get(&page) {
            if slot < self.unmarked {
                self.unmarked -= 1;
                self.swap(slot, self.unmarked);
            }
            return PagingEvents { fault: false, evicted: None, fetched: None };
        }

        self.faults += 1;
        let mut evicted = None;
        if self.slots.len() == self.capacity {
            if self.unmarked == 0 {
                // phase boundary
                self.unmarked = self.slots.len();
                self.phases += 1;
            }
            let victim = match self.policy {
                PagingPolicy::RandomizedMarking => self.rng.gen_range(0..self.unmarked),
                PagingPolicy::DeterministicMarking => (0..self.unmarked)
                    .min_by_key(|&i| self.slots[i])
                    .expect("at least one unmarked page"),
            };
            // move victim to the end of the unmarked block, then to the tail
            self.unmarked -= 1;
            self.swap(victim, self.unmarked);
            let last = self.slots.len() - 1;
            self.swap(self.unmarked, last);
            let gone = self.slots.pop().expect("non-empty cache");
            self.index.remove(&gone);
            evicted = Some(gone);
        } else if self.slots.is_empty() {
            self.phases += 1;
        }
        self.index.insert(page, self.slots.len());
        self.slots.push(page);
        PagingEvents { fault: true, evicted, fetched: Some(page) }
    }

    fn swap(&mut self, i: usize, j: usize) {
        if i != j {
            self.slots.swap(i, j);
            self.index.insert(self.slots[i], i);
            self.index.insert(self.slots[j], j);
        }
    }

    pub fn contains(&self, page: &P) -> bool {
        self.index.contains_key(page)
    }

    pub fn is_marked(&self, page: &P) -> bool {
        self.index.get(page).is_some_and(|&slot| slot >= self.unmarked)
    }

    pub fn pages(&self) -> &[P] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn policy(&self) -> PagingPolicy {
        self.policy
    }

    pub fn faults(&self) -> u64 {
        self.faults
    }

    /// Number of phases started so far (the first fault opens phase 1).
    pub fn phases(&self) -> u64 {
        self.phases
    }

    pub fn marked_count(&self) -> usize {
        self.slots.len() - self.unmarked
    }
}

/// Fault count of farthest-in-future eviction, the offline paging optimum.
pub fn belady_min<P: Copy + Eq + Hash>(sequence: &[P], capacity: usize) -> usize {
    assert!(capacity >= 1, "cache capacity must be positive");
    let mut next_use = vec![usize::MAX; sequence.len()];
    let mut last_seen: HashMap<P, usize> = HashMap::new();
    for (i, page) in sequence.iter().enumerate().rev() {
        if let Some(&j) = last_seen.get(page) {
            next_use[i] = j;
        }
        last_seen.insert(*page, i);
    }

    // cached page -> index of its next request
    let mut cache: Vec<(P, usize)> = Vec::with_capacity(capacity);
    let mut faults = 0;
    for (i, &page) in sequence.iter().enumerate() {
        if let Some(entry) = cache.iter_mut().find(|(p, _)| *p == page) {
            entry.1 = next_use[i];
            continue;
        }
        faults += 1;
        if cache.len() == capacity {
            let victim = cache
                .iter()
                .enumerate()
                .max_by_key(|(_, (_, next))| *next)
                .map(|(slot, _)| slot)
                .expect("full cache");
            cache.swap_remove(victim);
        }
        cache.push((page, next_use[i]));
    }
    faults
}
