//! Experiment runner: repeated seeded runs, sweeps over `b`, CSV results and
//! the small-instance oracle check.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{brute_force_opt, BaselineError};
use crate::engine::{CostLedger, RemovalMode};
use crate::paging::PagingPolicy;
use crate::registry::{AlgorithmError, AlgorithmRegistry, BuildContext};
use crate::topology::{Topology, TopologyError, TopologyKind};
use crate::trace::{parse_trace, read_matrix, sample_from_matrix, zipf_trace, Trace, TraceError};

pub const DEFAULT_REPETITIONS: u64 = 5;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CSV_HEADER: [&str; 12] = [
    "algorithm",
    "b",
    "a",
    "alpha",
    "mode",
    "seed",
    "routing_cost",
    "reconfig_cost",
    "total_cost",
    "insertions",
    "removals",
    "wall_time_s",
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn open(path: &Path) -> Result<BufReader<File>, HarnessError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| HarnessError::File { path: path.to_path_buf(), source })
}

/// Where the fixed network comes from: an edge-list file or a generator spec
/// (`star:<n>`, `leaf_spine:<leaves>x<spines>`, `fat_tree:<k>`).
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    File(PathBuf),
    Generated(TopologyKind),
}

impl FromStr for TopologySource {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("bad topology spec {s:?}"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        match s.split_once(':') {
            Some(("star", n)) => Ok(Self::Generated(TopologyKind::Star { leaves: num(n)? })),
            Some(("fat_tree", k)) => Ok(Self::Generated(TopologyKind::FatTree { k: num(k)? })),
            Some(("leaf_spine", rest)) => {
                let (l, sp) = rest.split_once(['x', ',']).ok_or_else(bad)?;
                Ok(Self::Generated(TopologyKind::LeafSpine { leaves: num(l)?, spines: num(sp)? }))
            }
            _ => Ok(Self::File(PathBuf::from(s))),
        }
    }
}

impl TopologySource {
    pub fn load(&self) -> Result<Topology, HarnessError> {
        match self {
            Self::File(path) => Ok(Topology::read_edge_list(open(path)?)?),
            Self::Generated(kind) => Ok(Topology::generate(*kind)?),
        }
    }
}

/// Where requests come from: a trace file or a generator spec
/// (`zipf:<exponent>:<count>[:<seed>]`, `matrix:<path>:<count>[:<seed>]`).
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Zipf { exponent: f64, count: usize, seed: u64 },
    Matrix { path: PathBuf, count: usize, seed: u64 },
}

impl FromStr for TraceSource {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("bad trace spec {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        let seed_at = |i: usize| -> Result<u64, HarnessError> {
            parts.get(i).map_or(Ok(0), |t| t.parse().map_err(|_| bad()))
        };
        match parts.as_slice() {
            ["zipf", exp, count, ..] if parts.len() <= 4 => Ok(Self::Zipf {
                exponent: exp.parse().map_err(|_| bad())?,
                count: count.parse().map_err(|_| bad())?,
                seed: seed_at(3)?,
            }),
            ["matrix", path, count, ..] if parts.len() <= 4 => Ok(Self::Matrix {
                path: PathBuf::from(path),
                count: count.parse().map_err(|_| bad())?,
                seed: seed_at(3)?,
            }),
            ["zipf", ..] | ["matrix", ..] => Err(bad()),
            _ => Ok(Self::File(PathBuf::from(s))),
        }
    }
}

impl TraceSource {
    pub fn load(&self, node_count: usize) -> Result<Trace, HarnessError> {
        match self {
            Self::File(path) => Ok(parse_trace(open(path)?, node_count)?.trace),
            Self::Zipf { exponent, count, seed } => {
                Ok(zipf_trace(node_count, *exponent, *count, *seed)?)
            }
            Self::Matrix { path, count, seed } => {
                let matrix = read_matrix(open(path)?)?;
                if matrix.len() != node_count {
                    return Err(HarnessError::Config(format!(
                        "matrix is {}x{} but the topology has {node_count} nodes",
                        matrix.len(),
                        matrix.len()
                    )));
                }
                Ok(sample_from_matrix(&matrix, *count, *seed)?)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub topology: TopologySource,
    pub trace: TraceSource,
    pub algorithm: String,
    pub b: usize,
    pub a: usize,
    pub alpha: f64,
    pub mode: RemovalMode,
    pub policy: PagingPolicy,
    /// One repetition per seed; `0..5` when not given.
    pub seeds: Vec<u64>,
    pub parallel: bool,
}

impl RunConfig {
    pub fn new(topology: TopologySource, trace: TraceSource, algorithm: &str) -> Self {
        Self {
            topology,
            trace,
            algorithm: algorithm.to_string(),
            b: 1,
            a: 1,
            alpha: 1.0,
            mode: RemovalMode::default(),
            policy: PagingPolicy::default(),
            seeds: (0..DEFAULT_REPETITIONS).collect(),
            parallel: false,
        }
    }

    pub fn repetitions(&self) -> usize {
        self.seeds.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.a < 1 || self.a > self.b {
            return Err(HarnessError::Config(format!(
                "need 1 <= a <= b, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        if !(self.alpha >= 1.0) || !self.alpha.is_finite() {
            return Err(HarnessError::Config(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// Topology and trace loaded for a config.
#[derive(Debug, Clone)]
pub struct Workload {
    pub topology: Arc<Topology>,
    pub trace: Arc<Trace>,
}

impl Workload {
    pub fn load(config: &RunConfig) -> Result<Self, HarnessError> {
        let topology = config.topology.load()?;
        let trace = config.trace.load(topology.node_count())?;
        Ok(Self { topology: Arc::new(topology), trace: Arc::new(trace) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repetition {
    pub seed: u64,
    pub routing_cost: f64,
    pub reconfig_cost: f64,
    pub total_cost: f64,
    pub insertions: f64,
    pub removals: f64,
    pub wall_time_s: f64,
}

impl Repetition {
    fn from_ledger(seed: u64, ledger: &CostLedger, wall_time_s: f64) -> Self {
        Self {
            seed,
            routing_cost: ledger.routing_cost,
            reconfig_cost: ledger.reconfig_cost(),
            total_cost: ledger.total(),
            insertions: ledger.insertions as f64,
            removals: ledger.removals as f64,
            wall_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub algorithm: String,
    pub b: usize,
    pub a: usize,
    pub alpha: f64,
    pub mode: RemovalMode,
    pub policy: PagingPolicy,
    pub note: Option<String>,
    pub version: String,
    pub repetitions: Vec<Repetition>,
}

impl RunResult {
    /// Arithmetic mean over repetitions; the `seed` field is unused.
    pub fn mean(&self) -> Repetition {
        let n = self.repetitions.len().max(1) as f64;
        let avg = |f: fn(&Repetition) -> f64| self.repetitions.iter().map(f).sum::<f64>() / n;
        Repetition {
            seed: 0,
            routing_cost: avg(|r| r.routing_cost),
            reconfig_cost: avg(|r| r.reconfig_cost),
            total_cost: avg(|r| r.total_cost),
            insertions: avg(|r| r.insertions),
            removals: avg(|r| r.removals),
            wall_time_s: avg(|r| r.wall_time_s),
        }
    }

    /// Same results with the timing fields zeroed.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.repetitions.iter_mut().for_each(|r| r.wall_time_s = 0.0);
        out
    }
}

/// Loads the workload and runs the configured algorithm once per seed.
pub fn run(config: &RunConfig) -> Result<RunResult, HarnessError> {
    config.validate()?;
    let workload = Workload::load(config)?;
    run_workload(config, &workload, &AlgorithmRegistry::builtin())
}

/// Runs on an already loaded workload. Only the request loop is timed.
pub fn run_workload(
    config: &RunConfig,
    workload: &Workload,
    registry: &AlgorithmRegistry,
) -> Result<RunResult, HarnessError> {
    config.validate()?;
    let entry = registry.entry(&config.algorithm)?;
    let one = |seed: u64| -> Result<Repetition, HarnessError> {
        let ctx = BuildContext {
            topology: workload.topology.clone(),
            trace: workload.trace.clone(),
            b: config.b,
            alpha: config.alpha,
            policy: config.policy,
            mode: config.mode,
            seed,
        };
        let mut alg = (entry.factory)(&ctx)?;
        let mut ledger = CostLedger::new(config.alpha);
        let start = Instant::now();
        alg.prepare(&mut ledger);
        for &req in &workload.trace.requests {
            alg.process(req, &mut ledger)?;
        }
        let elapsed = start.elapsed().as_secs_f64();
        Ok(Repetition::from_ledger(seed, &ledger, elapsed))
    };

    let mut repetitions = if config.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> =
                config.seeds.iter().map(|&seed| scope.spawn(move || one(seed))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("repetition thread panicked"))
                .collect::<Result<Vec<_>, _>>()
        })?
    } else {
        config.seeds.iter().map(|&seed| one(seed)).collect::<Result<Vec<_>, _>>()?
    };
    repetitions.sort_by_key(|r| r.seed);

    Ok(RunResult {
        algorithm: entry.name.to_string(),
        b: config.b,
        a: config.a,
        alpha: config.alpha,
        mode: config.mode,
        policy: config.policy,
        note: entry.note.map(str::to_string),
        version: VERSION.to_string(),
        repetitions,
    })
}

/// One run per cache size `b`, in the given order.
pub fn sweep(config: &RunConfig, b_values: &[usize]) -> Result<Vec<(usize, RunResult)>, HarnessError> {
    if let Some(&b) = b_values.iter().find(|&&b| b < config.a) {
        return Err(HarnessError::Config(format!("sweep value b = {b} is below a = {}", config.a)));
    }
    if b_values.is_empty() {
        return Ok(Vec::new());
    }
    let workload = Workload::load(config)?;
    let registry = AlgorithmRegistry::builtin();
    b_values
        .iter()
        .map(|&b| {
            let cfg = RunConfig { b, ..config.clone() };
            run_workload(&cfg, &workload, &registry).map(|r| (b, r))
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct CsvRow {
    algorithm: String,
    b: usize,
    a: usize,
    alpha: f64,
    mode: String,
    seed: String,
    routing_cost: f64,
    reconfig_cost: f64,
    total_cost: f64,
    insertions: f64,
    removals: f64,
    wall_time_s: f64,
}

impl CsvRow {
    fn new(result: &RunResult, seed: String, rep: &Repetition) -> Self {
        Self {
            algorithm: result.algorithm.clone(),
            b: result.b,
            a: result.a,
            alpha: result.alpha,
            mode: result.mode.name().to_string(),
            seed,
            routing_cost: rep.routing_cost,
            reconfig_cost: rep.reconfig_cost,
            total_cost: rep.total_cost,
            insertions: rep.insertions,
            removals: rep.removals,
            wall_time_s: rep.wall_time_s,
        }
    }
}

/// One row per repetition followed by a `mean` row, for every result.
pub fn write_results<W: std::io::Write>(results: &[RunResult], out: W) -> Result<(), HarnessError> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for result in results {
        for rep in &result.repetitions {
            writer.serialize(CsvRow::new(result, rep.seed.to_string(), rep))?;
        }
        writer.serialize(CsvRow::new(result, "mean".into(), &result.mean()))?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_results_csv(results: &[RunResult], path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|source| HarnessError::File { path: path.to_path_buf(), source })?;
    write_results(results, file)
}

/// Reads a results file back. Policy, note and version are not part of the
/// CSV and come back as defaults.
pub fn read_results<R: std::io::Read>(input: R) -> Result<Vec<RunResult>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Config(format!("unexpected CSV header {headers:?}")));
    }
    let mut results = Vec::new();
    let mut pending: Vec<Repetition> = Vec::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row?;
        if row.seed == "mean" {
            let mode = row.mode.parse().map_err(HarnessError::Config)?;
            results.push(RunResult {
                algorithm: row.algorithm,
                b: row.b,
                a: row.a,
                alpha: row.alpha,
                mode,
                policy: PagingPolicy::default(),
                note: None,
                version: VERSION.to_string(),
                repetitions: std::mem::take(&mut pending),
            });
            continue;
        }
        let seed = row
            .seed
            .parse()
            .map_err(|_| HarnessError::Config(format!("bad seed field {:?}", row.seed)))?;
        pending.push(Repetition {
            seed,
            routing_cost: row.routing_cost,
            reconfig_cost: row.reconfig_cost,
            total_cost: row.total_cost,
            insertions: row.insertions,
            removals: row.removals,
            wall_time_s: row.wall_time_s,
        });
    }
    if !pending.is_empty() {
        return Err(HarnessError::Config("results file ends without a mean row".into()));
    }
    Ok(results)
}

pub fn read_results_csv(path: &Path) -> Result<Vec<RunResult>, HarnessError> {
    read_results(open(path)?)
}

/// R-BMA against the exact offline optimum on a tiny instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub trials: usize,
    pub mean_total: f64,
    pub opt: f64,
    /// `1 + max_dist / alpha`.
    pub gamma: f64,
    /// Additive allowance `gamma * alpha * |V|^2`.
    pub beta_allowance: f64,
    /// `(mean_total - beta_allowance) / opt`, zero when `opt` is zero.
    pub ratio: f64,
    pub low_confidence: bool,
}

impl OracleReport {
    /// Whether the mean cost stays within `factor * gamma * ln(b+1) * opt + beta`.
    pub fn within_envelope(&self, factor: f64, b: usize) -> bool {
        self.mean_total <= self.envelope(factor, b)
    }

    pub fn envelope(&self, factor: f64, b: usize) -> f64 {
        factor * self.gamma * ((b + 1) as f64).ln() * self.opt + self.beta_allowance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    pub b: usize,
    pub a: usize,
    pub alpha: f64,
    pub mode: RemovalMode,
    pub policy: PagingPolicy,
    pub trials: usize,
}

/// Runs R-BMA with seeds `0..trials` and compares its mean to the offline optimum with cap `a`.
pub fn oracle_check(
    topology: Arc<Topology>,
    trace: Arc<Trace>,
    params: OracleParams,
) -> Result<OracleReport, HarnessError> {
    if params.trials == 0 {
        return Err(HarnessError::Config("oracle check needs at least one trial".into()));
    }
    if params.a < 1 || params.a > params.b {
        return Err(HarnessError::Config(format!(
            "need 1 <= a <= b, got a = {}, b = {}",
            params.a, params.b
        )));
    }
    let opt = brute_force_opt(&topology, &trace, params.a, params.alpha)?;
    let registry = AlgorithmRegistry::builtin();
    let mut sum = 0.0;
    for seed in 0..params.trials as u64 {
        let ctx = BuildContext {
            topology: topology.clone(),
            trace: trace.clone(),
            b: params.b,
            alpha: params.alpha,
            policy: params.policy,
            mode: params.mode,
            seed,
        };
        let mut alg = registry.build("rbma", &ctx)?;
        let mut ledger = CostLedger::new(params.alpha);
        for &req in &trace.requests {
            alg.process(req, &mut ledger)?;
        }
        sum += ledger.total();
    }
    let mean_total = sum / params.trials as f64;
    let gamma = 1.0 + topology.max_dist() as f64 / params.alpha;
    let n = topology.node_count() as f64;
    let beta_allowance = gamma * params.alpha * n * n;
    let ratio = if opt > 0.0 { (mean_total - beta_allowance) / opt } else { 0.0 };
    Ok(OracleReport {
        trials: params.trials,
        mean_total,
        opt,
        gamma,
        beta_allowance,
        ratio,
        low_confidence: params.trials < 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::NodePair;

    fn config(algorithm: &str) -> RunConfig {
        let mut cfg = RunConfig::new(
            "leaf_spine:10x2".parse().unwrap(),
            "zipf:1.1:3000:5".parse().unwrap(),
            algorithm,
        );
        cfg.b = 3;
        cfg.a = 2;
        cfg.alpha = 4.0;
        cfg
    }

    #[test]
    fn source_specs() {
        assert_eq!(
            "leaf_spine:50x4".parse::<TopologySource>().unwrap(),
            TopologySource::Generated(TopologyKind::LeafSpine { leaves: 50, spines: 4 })
        );
        assert_eq!(
            "fat_tree:4".parse::<TopologySource>().unwrap(),
            TopologySource::Generated(TopologyKind::FatTree { k: 4 })
        );
        assert_eq!(
            "topo.txt".parse::<TopologySource>().unwrap(),
            TopologySource::File("topo.txt".into())
        );
        assert!("star:x".parse::<TopologySource>().is_err());
        assert_eq!(
            "zipf:1.2:100".parse::<TraceSource>().unwrap(),
            TraceSource::Zipf { exponent: 1.2, count: 100, seed: 0 }
        );
        assert_eq!(
            "matrix:m.txt:10:3".parse::<TraceSource>().unwrap(),
            TraceSource::Matrix { path: "m.txt".into(), count: 10, seed: 3 }
        );
        assert!("zipf:1.2".parse::<TraceSource>().is_err());
    }

    #[test]
    fn oblivious_identical_across_seeds() {
        let result = run(&config("oblivious")).unwrap();
        assert_eq!(result.repetitions.len(), 5);
        let first = &result.repetitions[0];
        for r in &result.repetitions {
            assert_eq!(r.total_cost, first.total_cost);
            assert!(r.wall_time_s > 0.0);
        }
        assert_eq!(result.repetitions.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rbma_deterministic_per_seed_list() {
        let mut cfg = config("rbma");
        cfg.seeds = vec![3, 9];
        let a = run(&cfg).unwrap().without_timing();
        let b = run(&cfg).unwrap().without_timing();
        assert_eq!(a, b);
        cfg.parallel = true;
        assert_eq!(run(&cfg).unwrap().without_timing(), a);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = config("rbma");
        cfg.a = 4;
        assert!(matches!(run(&cfg), Err(HarnessError::Config(_))));
        let mut cfg = config("rbma");
        cfg.seeds.clear();
        assert!(matches!(run(&cfg), Err(HarnessError::Config(_))));
        let cfg = config("nope");
        assert!(matches!(run(&cfg), Err(HarnessError::Algorithm(_))));
        let mut cfg = config("rbma");
        cfg.trace = TraceSource::File("/nonexistent/trace.txt".into());
        assert!(matches!(run(&cfg), Err(HarnessError::File { .. })));
    }

    #[test]
    fn csv_row_counts() {
        let mut cfg = config("oblivious");
        cfg.seeds = vec![7];
        let one = run(&cfg).unwrap();
        let mut buf = Vec::new();
        write_results(std::slice::from_ref(&one), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert!(lines[2].contains(",mean,"));

        let five = run(&config("oblivious")).unwrap();
        let mut buf = Vec::new();
        write_results(&[five], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);

        let mut buf = Vec::new();
        write_results(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn csv_roundtrip() {
        let results = vec![run(&config("rbma")).unwrap(), run(&config("dbma")).unwrap()];
        let mut buf = Vec::new();
        write_results(&results, &mut buf).unwrap();
        let back = read_results(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (orig, parsed) in results.iter().zip(&back) {
            assert_eq!(orig.repetitions, parsed.repetitions);
            assert_eq!((orig.b, orig.a, orig.alpha, orig.mode), (parsed.b, parsed.a, parsed.alpha, parsed.mode));
            assert_eq!(orig.algorithm, parsed.algorithm);
        }
    }

    #[test]
    fn sweep_keys_and_oblivious_constant() {
        let mut cfg = config("oblivious");
        cfg.a = 1;
        let results = sweep(&cfg, &[6, 18]).unwrap();
        assert_eq!(results.iter().map(|(b, _)| *b).collect::<Vec<_>>(), vec![6, 18]);
        assert_eq!(results[0].1.mean().routing_cost, results[1].1.mean().routing_cost);
        assert!(sweep(&cfg, &[]).unwrap().is_empty());
        cfg.a = 2;
        assert!(sweep(&cfg, &[1]).is_err());
    }

    #[test]
    fn oracle_alpha_huge_is_oblivious() {
        let topo = Arc::new(Topology::build_from_edges(3, &[(0, 1), (1, 2)]).unwrap());
        let pair = NodePair::new(0, 2).unwrap();
        let trace = Arc::new(Trace::new(3, vec![pair; 4]));
        let params = OracleParams {
            b: 1,
            a: 1,
            alpha: 100.0,
            mode: RemovalMode::Lazy,
            policy: PagingPolicy::RandomizedMarking,
            trials: 1,
        };
        let report = oracle_check(topo, trace, params).unwrap();
        assert_eq!(report.opt, 8.0);
        // k = 50: R-BMA never reconfigures on 4 requests
        assert_eq!(report.mean_total, 8.0);
        assert!(report.low_confidence);
        assert!(report.within_envelope(8.0, 1));
    }
}
