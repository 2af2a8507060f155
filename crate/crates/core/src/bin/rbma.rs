use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbma::harness::{
    self, oracle_check, write_results, OracleParams, RunConfig, TopologySource, TraceSource,
};
use rbma::topology::{write_edge_list, TopologyKind};
use rbma::trace::{adversarial_star_instance, read_matrix, sample_from_matrix, zipf_trace};
use rbma::{AlgorithmRegistry, PagingPolicy, RemovalMode};

#[derive(Parser, Debug)]
#[command(name = "rbma", version, about = "Online b-matching simulator for reconfigurable datacenter networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one or more algorithms on a workload, once per seed.
    Simulate(SimArgs),
    /// Run over several cache sizes b.
    Sweep {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long = "b-values", value_delimiter = ',', required = true)]
        b_values: Vec<usize>,
    },
    /// Generate a request trace.
    GenTrace(GenTraceArgs),
    /// Generate a fixed topology as an edge list.
    GenTopology(GenTopologyArgs),
    /// Compare R-BMA's mean cost with the exact offline optimum on a tiny instance.
    Oracle {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Edge-list path or generator spec: star:<n>, leaf_spine:<l>x<s>, fat_tree:<k>.
    #[arg(long)]
    topology: String,
    /// Trace path or generator spec: zipf:<exp>:<count>[:<seed>], matrix:<path>:<count>[:<seed>].
    #[arg(long)]
    trace: String,
    /// Comma-separated algorithm names.
    #[arg(long = "algo", value_delimiter = ',', default_value = "rbma")]
    algorithms: Vec<String>,
    #[arg(long, default_value_t = 1)]
    b: usize,
    /// Degree cap of the offline adversary; defaults to b.
    #[arg(long)]
    a: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value = "lazy")]
    mode: RemovalMode,
    #[arg(long, default_value = "randomized_marking")]
    policy: PagingPolicy,
    /// Comma-separated seeds, one repetition each (default 0,1,2,3,4).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value = "off")]
    parallel: Toggle,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TopoKind {
    Star,
    #[value(alias = "leaf_spine")]
    LeafSpine,
    #[value(alias = "fat_tree")]
    FatTree,
}

#[derive(Args, Debug)]
struct GenTopologyArgs {
    #[arg(long, value_enum)]
    kind: TopoKind,
    /// Leaves of a star.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    leaves: Option<usize>,
    #[arg(long)]
    spines: Option<usize>,
    /// Fat-tree arity.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TraceKind {
    Matrix,
    Zipf,
    #[value(alias = "star_adversary")]
    StarAdversary,
}

#[derive(Args, Debug)]
struct GenTraceArgs {
    #[arg(long, value_enum)]
    kind: TraceKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of requests (zipf, matrix) or paging requests (star-adversary).
    #[arg(long)]
    count: usize,
    /// n x n traffic matrix (matrix kind).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Node count (zipf kind).
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    exponent: f64,
    /// Paging items, i.e. star leaves (star-adversary kind).
    #[arg(long)]
    items: Option<usize>,
    #[arg(long, default_value_t = 1)]
    b: usize,
    #[arg(long)]
    a: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Explicit paging sequence; otherwise `count` uniform items are drawn.
    #[arg(long, value_delimiter = ',')]
    sequence: Option<Vec<usize>>,
    /// Also write the star topology (star-adversary kind).
    #[arg(long = "topology-out")]
    topology_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn configs(sim: &SimArgs) -> Result<Vec<RunConfig>> {
    let topology: TopologySource = sim.topology.parse()?;
    let trace: TraceSource = sim.trace.parse()?;
    let registry = AlgorithmRegistry::builtin();
    sim.algorithms
        .iter()
        .map(|name| {
            registry.entry(name)?;
            let mut cfg = RunConfig::new(topology.clone(), trace.clone(), name);
            cfg.b = sim.b;
            cfg.a = sim.a.unwrap_or(sim.b);
            cfg.alpha = sim.alpha;
            cfg.mode = sim.mode;
            cfg.policy = sim.policy;
            if let Some(seeds) = &sim.seeds {
                cfg.seeds = seeds.clone();
            }
            cfg.parallel = sim.parallel == Toggle::On;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}

fn simulate(sim: &SimArgs) -> Result<()> {
    let mut results = Vec::new();
    for cfg in configs(sim)? {
        let result = harness::run(&cfg)?;
        if let Some(note) = &result.note {
            eprintln!("note: {}: {note}", result.algorithm);
        }
        results.push(result);
    }
    write_results(&results, output(&sim.out)?)?;
    Ok(())
}

fn sweep(sim: &SimArgs, b_values: &[usize]) -> Result<()> {
    let mut results = Vec::new();
    for mut cfg in configs(sim)? {
        // a defaults to b, which is swept here
        cfg.a = sim.a.unwrap_or(1);
        for (_, result) in harness::sweep(&cfg, b_values)? {
            results.push(result);
        }
    }
    write_results(&results, output(&sim.out)?)?;
    Ok(())
}

fn oracle(sim: &SimArgs, trials: usize) -> Result<()> {
    let topology = sim.topology.parse::<TopologySource>()?.load()?;
    let trace = sim.trace.parse::<TraceSource>()?.load(topology.node_count())?;
    let params = OracleParams {
        b: sim.b,
        a: sim.a.unwrap_or(sim.b),
        alpha: sim.alpha,
        mode: sim.mode,
        policy: sim.policy,
        trials,
    };
    let report = oracle_check(Arc::new(topology), Arc::new(trace), params)?;
    let mut out = output(&sim.out)?;
    writeln!(out, "trials,mean_total,opt,gamma,beta_allowance,ratio,confidence")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        report.trials,
        report.mean_total,
        report.opt,
        report.gamma,
        report.beta_allowance,
        report.ratio,
        if report.low_confidence { "low-confidence" } else { "ok" }
    )?;
    Ok(())
}

fn gen_topology(args: &GenTopologyArgs) -> Result<()> {
    let need = |v: Option<usize>, flag: &str| v.with_context(|| format!("--{flag} is required"));
    let kind = match args.kind {
        TopoKind::Star => TopologyKind::Star { leaves: need(args.n, "n")? },
        TopoKind::LeafSpine => TopologyKind::LeafSpine {
            leaves: need(args.leaves, "leaves")?,
            spines: need(args.spines, "spines")?,
        },
        TopoKind::FatTree => TopologyKind::FatTree { k: need(args.k, "k")? },
    };
    let mut out = output(&args.out)?;
    write_edge_list(kind, &mut out)?;
    out.flush()?;
    Ok(())
}

fn gen_trace(args: &GenTraceArgs) -> Result<()> {
    let trace = match args.kind {
        TraceKind::Zipf => {
            let nodes = args.nodes.context("--nodes is required for zipf traces")?;
            zipf_trace(nodes, args.exponent, args.count, args.seed)?
        }
        TraceKind::Matrix => {
            let path = args.matrix.as_ref().context("--matrix is required for matrix traces")?;
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let matrix = read_matrix(io::BufReader::new(file))?;
            sample_from_matrix(&matrix, args.count, args.seed)?
        }
        TraceKind::StarAdversary => {
            let items = args.items.context("--items is required for star-adversary traces")?;
            let sequence = match &args.sequence {
                Some(seq) => seq.clone(),
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
                    (0..args.count).map(|_| rng.gen_range(1..=items)).collect()
                }
            };
            let a = args.a.unwrap_or(args.b);
            let (_, trace) = adversarial_star_instance(items, args.b, a, args.alpha, &sequence)?;
            if let Some(path) = &args.topology_out {
                write_topology_file(TopologyKind::Star { leaves: items }, path)?;
            }
            trace
        }
    };
    let mut out = output(&args.out)?;
    trace.write_to(&mut out)?;
    out.flush()?;
    Ok(())
}

fn write_topology_file(kind: TopologyKind, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_edge_list(kind, &mut out)?;
    out.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(sim) => simulate(sim),
        Command::Sweep { sim, b_values } => {
            if b_values.is_empty() {
                bail!("--b-values must not be empty");
            }
            sweep(sim, b_values)
        }
        Command::GenTrace(args) => gen_trace(args),
        Command::GenTopology(args) => gen_topology(args),
        Command::Oracle { sim, trials } => oracle(sim, *trials),
    }
}

fn one_line(msg: &str) -> String {
    msg.split('\n').map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: usage: {}", one_line(&e.to_string().replace("error: ", "")));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
