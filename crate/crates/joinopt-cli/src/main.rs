//! `joinopt` — generate workloads, optimize queries, verify the optimizer,
//! and benchmark it.
//!
//! Exit codes are a stable contract: 0 success, 2 usage error, 3 optimizer
//! timeout, 4 verification failure, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use joinopt::costmodel::{CostKind, CostModelConfig};
use joinopt::dpexact::{dpsize, dpsub, mpdp, mpdp_tree, EnumerationFault};
use joinopt::heuristics::{goo_with_stats, idp2_with_stats, uniondp_with_stats};
use joinopt::planmemo::{Plan, RunStats};
use joinopt::querygraph::QueryGraph;
use joinopt::workload::{generate, read_query, write_query, GeneratorConfig, Topology};
use joinopt_cli::bench::{append_records, read_records, render_report, summarize, BenchRecord};
use joinopt_cli::dump::optimize_json;
use joinopt_cli::exit_code;
use joinopt_cli::verify::{run_verification, VerifyConfig};

#[derive(Parser)]
#[command(name = "joinopt", version, about = "Join-order optimizer workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded query files.
    Generate(GenerateArgs),
    /// Optimize one query file and print a JSON plan dump.
    Optimize(OptimizeArgs),
    /// Run the randomized oracle suites.
    Verify(VerifyArgs),
    /// Run optimizers over generated workloads and append CSV rows.
    Bench(BenchArgs),
    /// Summarize a benchmark CSV with per-query cost normalization.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// star, snowflake, chain, clique, or randomwalk.
    #[arg(long, value_parser = parse_topology)]
    topology: Topology,
    /// Relation count: a single value like `12` or an inclusive range like `10..14`.
    #[arg(long, value_parser = parse_rels)]
    rels: RelRange,
    /// Queries per size.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum dimension depth (snowflake only).
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Query file to optimize.
    #[arg(long)]
    query: PathBuf,
    #[arg(long, value_enum)]
    algo: Algo,
    #[arg(long, env = "JOINOPT_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,
    /// Partition/window bound for the heuristics.
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u64).range(2..=25))]
    k: u64,
    /// c_out or hash_join.
    #[arg(long, default_value = "hash_join", value_parser = parse_cost)]
    cost: CostKind,
}

#[derive(Args)]
struct VerifyArgs {
    /// Largest graph to draw (the brute-force oracles cap at 14).
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..=14))]
    max_rels: u64,
    #[arg(long, default_value_t = 32)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where failing trials write reproducer query files.
    #[arg(long, default_value = ".")]
    repro_dir: PathBuf,
    /// Deliberately skip part of the enumeration to prove the suites catch it.
    #[arg(long, hide = true, value_parser = parse_fault)]
    inject_fault: Option<EnumerationFault>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated algorithms to run.
    #[arg(long, value_delimiter = ',', value_enum, required = true)]
    algos: Vec<Algo>,
    #[arg(long, value_parser = parse_topology)]
    topology: Topology,
    #[arg(long, value_parser = parse_rels)]
    rels: RelRange,
    /// Queries per size.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Comma-separated worker counts; every algorithm runs once per count.
    #[arg(long, env = "JOINOPT_WORKERS", value_delimiter = ',', default_value = "1")]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u64).range(2..=25))]
    k: u64,
    #[arg(long, default_value = "hash_join", value_parser = parse_cost)]
    cost: CostKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV file to append rows to.
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Algo {
    #[value(name = "dpsize")]
    DpSize,
    #[value(name = "dpsub")]
    DpSub,
    #[value(name = "mpdp")]
    Mpdp,
    #[value(name = "mpdp-tree")]
    MpdpTree,
    #[value(name = "goo")]
    Goo,
    #[value(name = "idp2")]
    Idp2,
    #[value(name = "uniondp")]
    UnionDp,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::DpSize => "dpsize",
            Algo::DpSub => "dpsub",
            Algo::Mpdp => "mpdp",
            Algo::MpdpTree => "mpdp-tree",
            Algo::Goo => "goo",
            Algo::Idp2 => "idp2",
            Algo::UnionDp => "uniondp",
        }
    }
}

/// Inclusive list of relation counts from `--rels`.
#[derive(Clone)]
struct RelRange(Vec<usize>);

fn parse_rels(s: &str) -> Result<RelRange, String> {
    let parse_one = |t: &str| {
        t.parse::<usize>().map_err(|_| format!("invalid relation count {t:?}"))
    };
    let sizes = match s.split_once("..") {
        None => vec![parse_one(s)?],
        Some((a, b)) => {
            let (a, b) = (parse_one(a)?, parse_one(b)?);
            if a > b {
                return Err(format!("empty range {s:?}"));
            }
            (a..=b).collect()
        }
    };
    if sizes.iter().any(|&n| n < 2) {
        return Err("need at least 2 relations".into());
    }
    Ok(RelRange(sizes))
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    Topology::from_str(s).map_err(|e| e.to_string())
}

fn parse_cost(s: &str) -> Result<CostKind, String> {
    CostKind::from_str(s)
}

fn parse_fault(s: &str) -> Result<EnumerationFault, String> {
    match s {
        "skip-last-block" => Ok(EnumerationFault::SkipLastBlock),
        other => Err(format!("unknown fault {other:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Optimize(args) => cmd_optimize(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Seed for query `q` of size `n`: distinct per (n, q), stable across runs.
fn child_seed(base: u64, n: usize, q: usize) -> u64 {
    base ^ ((n as u64) << 32 | q as u64)
}

fn cmd_generate(args: GenerateArgs) -> Result<u8> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    for &n in &args.rels.0 {
        for q in 0..args.count {
            let mut cfg = GeneratorConfig::new(args.topology, n, child_seed(args.seed, n, q));
            cfg.depth = args.depth;
            let g = generate(&cfg)?;
            let path = args.out_dir.join(format!("{}-n{n}-q{q}.json", args.topology));
            write_query(&g, &path)?;
            println!("{}", path.display());
        }
    }
    Ok(exit_code::SUCCESS)
}

/// One optimizer call; `Err` carries anything but a timeout.
fn run_algo(
    algo: Algo,
    g: &QueryGraph,
    cfg: &CostModelConfig,
    workers: usize,
    timeout: Duration,
    k: usize,
) -> joinopt::Result<(Arc<Plan>, RunStats)> {
    let exact = |r: joinopt::Result<joinopt::dpexact::OptimizerResult>| r.map(|r| (r.plan, r.stats));
    match algo {
        Algo::DpSize => exact(dpsize(g, cfg, workers, timeout)),
        Algo::DpSub => exact(dpsub(g, cfg, workers, timeout)),
        Algo::Mpdp => exact(mpdp(g, cfg, workers, timeout)),
        Algo::MpdpTree => exact(mpdp_tree(g, cfg, workers, timeout)),
        Algo::Goo => Ok(goo_with_stats(g, cfg)),
        Algo::Idp2 => Ok(idp2_with_stats(g, cfg, k, workers, timeout)),
        Algo::UnionDp => uniondp_with_stats(g, cfg, k, workers, timeout),
    }
}

fn cmd_optimize(args: OptimizeArgs) -> Result<u8> {
    let g = read_query(&args.query)?;
    let cfg = CostModelConfig::new(args.cost);
    let timeout = Duration::from_millis(args.timeout_ms);
    match run_algo(args.algo, &g, &cfg, args.workers, timeout, args.k as usize) {
        Ok((plan, stats)) => {
            println!("{:#}", optimize_json(Some((&plan, &g)), &stats));
            Ok(exit_code::SUCCESS)
        }
        Err(joinopt::Error::Timeout { stats }) => {
            println!("{:#}", optimize_json(None, &stats));
            Ok(exit_code::TIMEOUT)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    if args.trials == 0 {
        eprintln!("warning: --trials 0 requested; passing vacuously");
    }
    let mut cfg =
        VerifyConfig::new(args.max_rels as usize, args.trials, args.seed, &args.repro_dir);
    if let Some(fault) = args.inject_fault {
        cfg.fault = fault;
    }
    std::fs::create_dir_all(&cfg.repro_dir)
        .with_context(|| format!("cannot create {}", cfg.repro_dir.display()))?;
    let report = run_verification(&cfg);
    for suite in &report.suites {
        let verdict = if suite.failures == 0 { "PASS" } else { "FAIL" };
        println!(
            "suite {:<24} {:>6} checks  {:>3} failures  [{verdict}]",
            suite.name, suite.checks, suite.failures
        );
    }
    for failure in &report.failures {
        eprintln!("FAIL [{}] {}", failure.suite, failure.description);
        if let Some(path) = &failure.reproducer {
            eprintln!("     reproducer: {}", path.display());
        }
    }
    if report.passed() {
        println!("verification: PASS ({} trials)", report.trials);
        Ok(exit_code::SUCCESS)
    } else {
        println!(
            "verification: FAIL ({} failures over {} trials)",
            report.failures.len(),
            report.trials
        );
        Ok(exit_code::VERIFY_FAILED)
    }
}

fn cmd_bench(args: BenchArgs) -> Result<u8> {
    let cfg = CostModelConfig::new(args.cost);
    let timeout = Duration::from_millis(args.timeout_ms);
    let mut rows: Vec<BenchRecord> = Vec::new();
    for &n in &args.rels.0 {
        for q in 0..args.count {
            let mut gen_cfg = GeneratorConfig::new(args.topology, n, child_seed(args.seed, n, q));
            gen_cfg.depth = 4;
            let g = generate(&gen_cfg)?;
            let query_id = format!("{}{n}-s{}-q{q}", args.topology, args.seed);
            for &workers in &args.workers {
                for &algo in &args.algos {
                    let outcome = run_algo(algo, &g, &cfg, workers, timeout, args.k as usize);
                    let (plan_cost, stats) = match outcome {
                        Ok((plan, stats)) => (Some(plan.cost), stats),
                        Err(joinopt::Error::Timeout { stats }) => (None, stats),
                        Err(e) => {
                            bail!("{} on {query_id}: {e}", algo.name());
                        }
                    };
                    rows.push(BenchRecord {
                        algo: algo.name().to_string(),
                        query_id: query_id.clone(),
                        n_rels: n,
                        topology: args.topology.name().to_string(),
                        workers,
                        cost_kind: cfg.kind.to_string(),
                        opt_time_ms: stats.elapsed.as_secs_f64() * 1e3,
                        plan_cost,
                        evaluated_pairs: stats.evaluated_counter,
                        ccp_pairs: stats.ccp_counter,
                        timed_out: stats.timed_out,
                    });
                }
            }
        }
    }
    append_records(&args.csv, &rows)?;
    eprintln!("appended {} rows to {}", rows.len(), args.csv.display());
    Ok(exit_code::SUCCESS)
}

fn cmd_report(args: ReportArgs) -> Result<u8> {
    let records = read_records(&args.csv)?;
    if records.is_empty() {
        eprintln!("{}: no rows", args.csv.display());
        return Ok(exit_code::SUCCESS);
    }
    let summaries = summarize(&records);
    render_report(&summaries, &mut std::io::stdout())?;
    Ok(exit_code::SUCCESS)
}
