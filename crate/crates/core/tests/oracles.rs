//! Implementations checked against independent brute-force oracles.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbma::baselines::{brute_force_opt, offline_greedy_bmatching, Dbma, WeightedDemand};
use rbma::engine::{run_algorithm, CostLedger, Rbma, RbmaParams};
use rbma::paging::{belady_min, node_rng, MarkingCache};
use rbma::topology::TopologyKind;
use rbma::{NodePair, PagingPolicy, RemovalMode, Topology, Trace};

fn p(a: u32, b: u32) -> NodePair {
    NodePair::new(a, b).unwrap()
}

fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<u64>> {
    let inf = u64::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(u, v) in edges {
        d[u][v] = 1;
        d[v][u] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Random connected graph: random tree plus extra edges.
fn random_connected(n: usize, extra: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    for _ in 0..extra {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            edges.push((u, v));
        }
    }
    edges
}

#[test]
fn bfs_matches_floyd_warshall_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.gen_range(1..30);
        let edges = random_connected(n, rng.gen_range(0..2 * n), &mut rng);
        let topo = Topology::build_from_edges(n, &edges).unwrap();
        let fw = floyd_warshall(n, &edges);
        for u in 0..n {
            for v in 0..n {
                assert_eq!(topo.dist(u as u32, v as u32) as u64, fw[u][v]);
            }
        }
    }
}

#[test]
fn generated_topologies_match_floyd_warshall_on_switch_graph() {
    // rebuild the switch graph from the written edge list, then project
    for kind in [
        TopologyKind::Star { leaves: 6 },
        TopologyKind::LeafSpine { leaves: 7, spines: 3 },
        TopologyKind::FatTree { k: 4 },
        TopologyKind::FatTree { k: 6 },
    ] {
        let mut buf = Vec::new();
        rbma::topology::write_edge_list(kind, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: Vec<usize> =
            lines.next().unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
        let edges: Vec<(usize, usize)> = lines
            .map(|l| {
                let mut it = l.split_whitespace().map(|t| t.parse().unwrap());
                (it.next().unwrap(), it.next().unwrap())
            })
            .collect();
        let fw = floyd_warshall(header[0], &edges);
        let topo = Topology::generate(kind).unwrap();
        let visible = topo.node_count();
        assert!(topo.max_dist() >= 1);
        for u in 0..visible {
            for v in 0..visible {
                assert_eq!(topo.dist(u as u32, v as u32) as u64, fw[u][v], "{kind:?} ({u},{v})");
            }
        }
    }
    assert_eq!(Topology::fat_tree(6).unwrap().node_count(), 54);
}

/// Minimum faults over every eviction schedule (no bypassing).
fn exhaustive_paging_opt(seq: &[u8], capacity: usize) -> usize {
    fn go(seq: &[u8], i: usize, cache: u16, capacity: usize, memo: &mut HashMap<(usize, u16), usize>) -> usize {
        if i == seq.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, cache)) {
            return v;
        }
        let bit = 1u16 << seq[i];
        let best = if cache & bit != 0 {
            go(seq, i + 1, cache, capacity, memo)
        } else if (cache.count_ones() as usize) < capacity {
            1 + go(seq, i + 1, cache | bit, capacity, memo)
        } else {
            (0..16)
                .filter(|b| cache >> b & 1 == 1)
                .map(|b| 1 + go(seq, i + 1, (cache & !(1 << b)) | bit, capacity, memo))
                .min()
                .unwrap()
        };
        memo.insert((i, cache), best);
        best
    }
    go(seq, 0, 0, capacity, &mut HashMap::new())
}

#[test]
fn belady_two_slot_example_is_optimal() {
    let seq = [0u8, 1, 2, 0, 1];
    assert_eq!(exhaustive_paging_opt(&seq, 2), 4);
    assert_eq!(belady_min(&seq, 2), 4);
}

proptest! {
    #[test]
    fn belady_equals_exhaustive(seq in prop::collection::vec(0u8..5, 0..14), capacity in 1usize..4) {
        prop_assert_eq!(belady_min(&seq, capacity), exhaustive_paging_opt(&seq, capacity));
    }

    #[test]
    fn few_pages_only_compulsory_misses(seq in prop::collection::vec(0u8..3, 0..30), extra in 0usize..3) {
        let distinct = seq.iter().collect::<HashSet<_>>().len();
        prop_assert_eq!(belady_min(&seq, 3 + extra), distinct);
    }

    #[test]
    fn marking_invariants(seq in prop::collection::vec(0u32..8, 1..200), capacity in 1usize..5, seed: u64) {
        let mut cache = MarkingCache::with_seed(capacity, PagingPolicy::RandomizedMarking, seed);
        let mut phase_pages: HashSet<u32> = HashSet::new();
        let mut phase = 0;
        for &page in &seq {
            let marked: Vec<u32> = cache.pages().iter().copied().filter(|q| cache.is_marked(q)).collect();
            let ev = cache.request(page);
            prop_assert_eq!(ev.fault, ev.fetched.is_some());
            if cache.phases() != phase {
                phase = cache.phases();
                phase_pages.clear();
            } else if let Some(v) = ev.evicted {
                prop_assert!(!marked.contains(&v), "evicted marked page {}", v);
            }
            phase_pages.insert(page);
            prop_assert!(phase_pages.len() <= capacity);
            prop_assert!(cache.len() <= capacity);
            prop_assert!(cache.is_marked(&page));
            if ev.evicted.is_some() {
                prop_assert!(ev.fault);
            }
        }
        // same seed, same events
        let mut a = MarkingCache::with_seed(capacity, PagingPolicy::RandomizedMarking, seed);
        let mut b = MarkingCache::with_seed(capacity, PagingPolicy::RandomizedMarking, seed);
        for &page in &seq {
            prop_assert_eq!(a.request(page), b.request(page));
        }
    }
}

/// Exact optimum by enumerating every sequence of configurations over the
/// requested pairs; pairs that are never requested cannot lower the cost.
fn enumerate_opt(topo: &Topology, trace: &Trace, a: usize, alpha: f64) -> f64 {
    let mut pairs: Vec<NodePair> = trace.requests.clone();
    pairs.sort();
    pairs.dedup();
    let configs: Vec<u32> = (0..1u32 << pairs.len())
        .filter(|&mask| {
            let mut deg = vec![0; topo.node_count()];
            for (i, e) in pairs.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    deg[e.src as usize] += 1;
                    deg[e.dst as usize] += 1;
                }
            }
            deg.iter().all(|&d| d <= a)
        })
        .collect();
    let mut best = f64::INFINITY;
    let len = trace.len();
    let mut choice = vec![0usize; len];
    loop {
        let mut cost = 0.0;
        let mut prev = 0u32;
        for (t, req) in trace.requests.iter().enumerate() {
            let cur = configs[choice[t]];
            cost += alpha * (prev ^ cur).count_ones() as f64;
            let idx = pairs.iter().position(|e| e == req).unwrap();
            cost += if cur >> idx & 1 == 1 { 1.0 } else { topo.dist(req.src, req.dst) as f64 };
            prev = cur;
        }
        best = best.min(cost);
        // odometer
        let mut t = 0;
        while t < len {
            choice[t] += 1;
            if choice[t] < configs.len() {
                break;
            }
            choice[t] = 0;
            t += 1;
        }
        if t == len {
            return best;
        }
    }
}

#[test]
fn brute_force_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 150 {
        let n = rng.gen_range(3..=5);
        let edges = random_connected(n, rng.gen_range(0..3), &mut rng);
        let topo = Topology::build_from_edges(n, &edges).unwrap();
        let pool: Vec<NodePair> = (0..3)
            .filter_map(|_| NodePair::new(rng.gen_range(0..n as u32), rng.gen_range(0..n as u32)))
            .collect();
        if pool.is_empty() {
            continue;
        }
        let len = rng.gen_range(0..=6);
        let requests = (0..len).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
        let trace = Trace::new(n, requests);
        let a = rng.gen_range(1..=2);
        let alpha = [1.0, 1.5, 2.0, 4.0][rng.gen_range(0..4)];
        let dp = brute_force_opt(&topo, &trace, a, alpha).unwrap();
        let exact = enumerate_opt(&topo, &trace, a, alpha);
        assert_eq!(dp, exact, "n={n} a={a} alpha={alpha} trace={:?}", trace.requests);
        checked += 1;
    }
}

#[test]
fn greedy_example_and_exhaustive_optimum() {
    // three nodes all at distance 2: leaves 1..=3 of a star
    let topo = Topology::star(3).unwrap();
    let mut demand = WeightedDemand::default();
    demand.add(p(1, 2), 10);
    demand.add(p(2, 3), 9);
    demand.add(p(1, 3), 1);
    let greedy = offline_greedy_bmatching(&demand, &topo, 1, 1.0);
    // best static 1-matching by exhaustive search over subsets of the three pairs
    let candidates = [p(1, 2), p(2, 3), p(1, 3)];
    let mut best_saving = 0;
    for mask in 0u32..8 {
        let chosen: Vec<NodePair> = (0..3).filter(|i| mask >> i & 1 == 1).map(|i| candidates[i]).collect();
        let mut deg = [0; 4];
        for e in &chosen {
            deg[e.src as usize] += 1;
            deg[e.dst as usize] += 1;
        }
        if deg.iter().all(|&d| d <= 1) {
            best_saving = best_saving.max(chosen.iter().map(|e| demand.count(*e)).sum::<u64>());
        }
    }
    let greedy_saving: u64 = greedy.edges.iter().map(|e| demand.count(*e)).sum();
    assert_eq!(greedy.edges, vec![p(1, 2)]);
    assert_eq!(greedy_saving, best_saving);
}

#[test]
fn brute_force_is_a_lower_bound_for_every_algorithm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let n = rng.gen_range(3..=5);
        let topo = Arc::new(Topology::build_from_edges(n, &random_connected(n, 1, &mut rng)).unwrap());
        let len = rng.gen_range(1..=12);
        let requests = (0..len)
            .filter_map(|_| NodePair::new(rng.gen_range(0..n as u32), rng.gen_range(0..n as u32)))
            .collect();
        let trace = Arc::new(Trace::new(n, requests));
        let b = rng.gen_range(1..=2);
        let alpha = [1.0, 2.0, 3.0][rng.gen_range(0..3)];
        let opt = brute_force_opt(&topo, &trace, b, alpha).unwrap();
        let registry = rbma::AlgorithmRegistry::builtin();
        for name in registry.names() {
            for seed in 0..5 {
                let ctx = rbma::BuildContext {
                    topology: topo.clone(),
                    trace: trace.clone(),
                    b,
                    alpha,
                    policy: PagingPolicy::RandomizedMarking,
                    mode: RemovalMode::Lazy,
                    seed,
                };
                let mut alg = registry.build(name, &ctx).unwrap();
                let mut ledger = CostLedger::new(alpha);
                alg.prepare(&mut ledger);
                for &r in &trace.requests {
                    alg.process(r, &mut ledger).unwrap();
                }
                assert!(opt <= ledger.total() + 1e-9, "{name}: {} < opt {opt}", ledger.total());
            }
        }
    }
}

fn skewed_trace(n: usize, len: usize, rng: &mut ChaCha8Rng) -> Trace {
    let hot: Vec<NodePair> = (0..2 * n)
        .filter_map(|_| NodePair::new(rng.gen_range(0..n as u32), rng.gen_range(0..n as u32)))
        .collect();
    let requests = (0..len)
        .map(|_| {
            if rng.gen_bool(0.7) {
                hot[rng.gen_range(0..hot.len())]
            } else {
                loop {
                    if let Some(pair) = NodePair::new(rng.gen_range(0..n as u32), rng.gen_range(0..n as u32)) {
                        break pair;
                    }
                }
            }
        })
        .collect();
    Trace::new(n, requests)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lazy_routes_no_worse_than_strict(seed: u64, b in 1usize..4, alpha_idx in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = Arc::new(Topology::fat_tree(4).unwrap());
        let trace = skewed_trace(16, 800, &mut rng);
        let alpha = [1.0, 3.0, 10.0][alpha_idx];
        let run = |mode| {
            let params = RbmaParams { b, alpha, policy: PagingPolicy::RandomizedMarking, mode };
            run_algorithm(topo.clone(), &trace, params, seed).unwrap()
        };
        let (strict, strict_state) = run(RemovalMode::Strict);
        let (lazy, lazy_state) = run(RemovalMode::Lazy);
        prop_assert!(lazy.routing_cost <= strict.routing_cost);
        for (ledger, state) in [(strict, strict_state), (lazy, lazy_state)] {
            prop_assert_eq!(ledger.insertions - ledger.removals, state.len() as u64);
            prop_assert_eq!(ledger.reconfig_cost(), alpha * (ledger.insertions + ledger.removals) as f64);
        }
    }

    #[test]
    fn engine_invariants_hold_every_step(seed: u64, b in 1usize..4, lazy: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = Arc::new(Topology::leaf_spine(7, 2).unwrap());
        let trace = skewed_trace(7, 300, &mut rng);
        let mode = if lazy { RemovalMode::Lazy } else { RemovalMode::Strict };
        let params = RbmaParams { b, alpha: 2.0, policy: PagingPolicy::RandomizedMarking, mode };
        let mut rbma = Rbma::new(topo, params, seed).unwrap();
        let mut ledger = CostLedger::new(2.0);
        for &r in &trace.requests {
            rbma.process(r, &mut ledger).unwrap();
            rbma.check_invariants().unwrap();
        }
    }

    #[test]
    fn dbma_respects_degree_cap(seed: u64, b in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = Arc::new(Topology::star(8).unwrap());
        let trace = skewed_trace(9, 400, &mut rng);
        let mut dbma = Dbma::new(topo, b, 2.0).unwrap();
        let mut ledger = CostLedger::new(2.0);
        for &r in &trace.requests {
            dbma.process(r, &mut ledger);
            prop_assert!(dbma.state().check_degrees().is_ok());
        }
    }

    #[test]
    fn deterministic_policy_ignores_seed(s1: u64, s2: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let topo = Arc::new(Topology::star(6).unwrap());
        let trace = skewed_trace(7, 300, &mut rng);
        let params = RbmaParams { b: 2, alpha: 2.0, policy: PagingPolicy::DeterministicMarking, mode: RemovalMode::Lazy };
        let (a, _) = run_algorithm(topo.clone(), &trace, params, s1).unwrap();
        let (b, _) = run_algorithm(topo, &trace, params, s2).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn per_node_streams_are_independent_of_interleaving() {
    // a node's cache only sees its own projected requests with its own stream
    let mut rng = node_rng(9, 3);
    let mut other = node_rng(9, 3);
    assert_eq!(rng.gen::<u64>(), other.gen::<u64>());
    assert_ne!(node_rng(9, 3).gen::<u64>(), node_rng(9, 4).gen::<u64>());
}
