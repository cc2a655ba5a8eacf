//! Randomized self-checks of the optimizer against its brute-force oracles.
//!
//! Each trial draws a topology, size, and cost model from a seeded stream,
//! generates a graph, runs every applicable algorithm, and feeds the results
//! through four suites:
//!
//! * **optimality-equivalence** — every exact algorithm returns a plan whose
//!   cost equals the subset-DP oracle's, and the plan survives bottom-up
//!   recomputation.
//! * **counter-agreement** — the valid-pair counters match the brute-force
//!   pair count, agree across algorithms, and match the closed-form counting
//!   mode.
//! * **lemma-invariants** — the block-pruned enumeration never does more
//!   work than the subset enumeration, tree runs evaluate only valid pairs,
//!   and the heuristics respect their quality bounds.
//! * **determinism** — worker counts do not change results, and regeneration
//!   from the same seed is byte-identical.
//!
//! A failing trial writes the offending graph to disk so it can be replayed
//! with `optimize` flags; the report carries the path.
//!
//! Oracles cap at 14 relations; clique trials stay at 9 or fewer so the
//! quadratic pair enumeration of `dpsize` keeps runs prompt.

use std::path::{Path, PathBuf};
use std::time::Duration;

use joinopt::costmodel::CostModelConfig;
use joinopt::dpexact::{
    count_pairs, dpsize, dpsub, mpdp_tree, mpdp_with_fault, oracle_ccp_count, oracle_optimal,
    EnumerationFault, ExactAlgorithm, OptimizerResult, MAX_ORACLE_RELS,
};
use joinopt::heuristics::{goo, idp2, uniondp};
use joinopt::querygraph::QueryGraph;
use joinopt::workload::{generate, query_to_json, write_query, GeneratorConfig, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Suite names, in report order.
pub const SUITES: [&str; 4] =
    ["optimality-equivalence", "counter-agreement", "lemma-invariants", "determinism"];

/// Everything that determines a verification run.
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Largest graph to draw; bounded by the oracles' 14-relation cap.
    pub max_rels: usize,
    pub trials: u64,
    pub seed: u64,
    /// Where failing trials drop their reproducer graphs.
    pub repro_dir: PathBuf,
    /// Deliberate enumeration defect, used to prove the suites can catch one.
    pub fault: EnumerationFault,
}

impl VerifyConfig {
    pub fn new(max_rels: usize, trials: u64, seed: u64, repro_dir: &Path) -> Self {
        assert!(
            (2..=MAX_ORACLE_RELS).contains(&max_rels),
            "verification needs 2..={MAX_ORACLE_RELS} relations, got {max_rels}"
        );
        VerifyConfig {
            max_rels,
            trials,
            seed,
            repro_dir: repro_dir.to_path_buf(),
            fault: EnumerationFault::default(),
        }
    }
}

/// One failed check.
#[derive(Debug, Clone)]
pub struct Failure {
    pub suite: &'static str,
    pub trial: u64,
    pub description: String,
    /// Graph file to replay the failure against, when it could be written.
    pub reproducer: Option<PathBuf>,
}

/// Per-suite tally.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub checks: u64,
    pub failures: u64,
}

/// Outcome of a whole verification run.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub trials: u64,
    pub suites: Vec<SuiteOutcome>,
    pub failures: Vec<Failure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Run `cfg.trials` seeded trials through all four suites.
pub fn run_verification(cfg: &VerifyConfig) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tally = Tally { checks: [0; 4], failures: Vec::new() };
    for trial in 0..cfg.trials {
        let topology = Topology::ALL[rng.gen_range(0..Topology::ALL.len())];
        let cap = match topology {
            Topology::Clique => cfg.max_rels.min(9),
            _ => cfg.max_rels,
        };
        let n = rng.gen_range(2..=cap);
        let cost = if rng.gen() { CostModelConfig::c_out() } else { CostModelConfig::hash_join() };
        let gen_cfg = GeneratorConfig::new(topology, n, rng.gen());
        let g = generate(&gen_cfg).expect("in-range generator configs cannot fail");
        run_trial(cfg, trial, &gen_cfg, &g, &cost, &mut tally);
    }
    VerifyReport {
        trials: cfg.trials,
        suites: SUITES
            .iter()
            .enumerate()
            .map(|(i, &name)| SuiteOutcome {
                name,
                checks: tally.checks[i],
                failures: tally.failures.iter().filter(|f| f.suite == name).count() as u64,
            })
            .collect(),
        failures: tally.failures,
    }
}

struct Tally {
    checks: [u64; 4],
    failures: Vec<Failure>,
}

/// No deadline: verification graphs are small and every run must finish.
const NO_LIMIT: Duration = Duration::MAX;
/// Worker count exercising real thread handoff in the main runs.
const WORKERS: usize = 2;

fn run_trial(
    cfg: &VerifyConfig,
    trial: u64,
    gen_cfg: &GeneratorConfig,
    g: &QueryGraph,
    cost: &CostModelConfig,
    tally: &mut Tally,
) {
    let mut repro: Option<Option<PathBuf>> = None;
    let mut check = |suite: usize, ok: bool, description: &dyn Fn() -> String| {
        tally.checks[suite] += 1;
        if ok {
            return;
        }
        let reproducer = repro
            .get_or_insert_with(|| {
                let path = cfg.repro_dir.join(format!("verify-repro-t{trial}.json"));
                write_query(g, &path).ok().map(|()| path)
            })
            .clone();
        let context = format!(
            "[trial {trial}: {} n={} seed={} cost={}]",
            gen_cfg.topology, gen_cfg.n_rels, gen_cfg.seed, cost.kind
        );
        tally.failures.push(Failure {
            suite: SUITES[suite],
            trial,
            description: format!("{context} {}", description()),
            reproducer,
        });
    };

    let oracle = oracle_optimal(g, cost).expect("trial sizes fit the oracle");
    let oracle_pairs = oracle_ccp_count(g).expect("trial sizes fit the oracle");

    let runs: Vec<(ExactAlgorithm, OptimizerResult)> = {
        let mut runs = vec![
            (
                ExactAlgorithm::DpSize,
                dpsize(g, cost, WORKERS, NO_LIMIT).expect("dpsize fits any trial"),
            ),
            (
                ExactAlgorithm::DpSub,
                dpsub(g, cost, WORKERS, NO_LIMIT).expect("dpsub fits any trial"),
            ),
            (
                ExactAlgorithm::Mpdp,
                mpdp_with_fault(g, cost, WORKERS, NO_LIMIT, cfg.fault)
                    .expect("mpdp fits any trial"),
            ),
        ];
        if g.is_tree() {
            runs.push((
                ExactAlgorithm::MpdpTree,
                mpdp_tree(g, cost, WORKERS, NO_LIMIT).expect("the graph is a tree"),
            ));
        }
        runs
    };

    // Suite 0: every exact algorithm reproduces the oracle's optimum with a
    // plan that withstands recomputation.
    for (algo, run) in &runs {
        check(0, run.plan.cost == oracle.cost, &|| {
            format!(
                "{} found cost {}, oracle found {}",
                algo.name(),
                run.plan.cost,
                oracle.cost
            )
        });
        check(0, run.plan.set == g.full_set(), &|| {
            format!("{} plan does not cover the query", algo.name())
        });
        let recomputed = run.plan.validate(g, cost);
        check(0, recomputed.is_ok(), &|| {
            format!("{} plan fails recomputation: {}", algo.name(), recomputed.clone().unwrap_err())
        });
    }

    // Suite 1: valid-pair counters equal the brute-force count, and live
    // counters equal the closed-form counting mode.
    for (algo, run) in &runs {
        check(1, run.stats.ccp_counter == oracle_pairs, &|| {
            format!(
                "{} counted {} valid pairs, brute force counted {oracle_pairs}",
                algo.name(),
                run.stats.ccp_counter
            )
        });
        let counted = count_pairs(g, *algo).expect("trial sizes fit counting mode");
        let live = (run.stats.evaluated_counter, run.stats.ccp_counter);
        check(1, counted == live, &|| {
            format!(
                "{} live counters {live:?} disagree with counting mode {counted:?}",
                algo.name()
            )
        });
    }

    // Suite 2: enumeration bounds and heuristic quality bounds.
    let by_algo = |algo: ExactAlgorithm| runs.iter().find(|(a, _)| *a == algo).map(|(_, r)| r);
    let sub = by_algo(ExactAlgorithm::DpSub).expect("dpsub always runs");
    let block = by_algo(ExactAlgorithm::Mpdp).expect("mpdp always runs");
    check(
        2,
        block.stats.evaluated_counter <= sub.stats.evaluated_counter,
        &|| {
            format!(
                "block pruning evaluated {} pairs, subset enumeration only {}",
                block.stats.evaluated_counter, sub.stats.evaluated_counter
            )
        },
    );
    if let Some(tree) = by_algo(ExactAlgorithm::MpdpTree) {
        check(
            2,
            tree.stats.evaluated_counter == tree.stats.ccp_counter,
            &|| {
                format!(
                    "tree enumeration evaluated {} pairs but only {} were valid",
                    tree.stats.evaluated_counter, tree.stats.ccp_counter
                )
            },
        );
    }
    let greedy = goo(g, cost);
    check(2, greedy.cost >= oracle.cost, &|| {
        format!("greedy cost {} undercuts the optimum {}", greedy.cost, oracle.cost)
    });
    let refined = idp2(g, cost, 5, WORKERS, NO_LIMIT);
    check(2, refined.cost <= greedy.cost, &|| {
        format!("idp2 cost {} exceeds the greedy cost {}", refined.cost, greedy.cost)
    });
    let partitioned = uniondp(g, cost, MAX_ORACLE_RELS, WORKERS, NO_LIMIT)
        .expect("within the partition bound uniondp cannot time out");
    check(2, partitioned.cost == oracle.cost, &|| {
        format!(
            "uniondp within its bound found cost {}, oracle found {}",
            partitioned.cost, oracle.cost
        )
    });

    // Suite 3: worker counts change nothing, and the generator is a pure
    // function of its config.
    let single = mpdp_with_fault(g, cost, 1, NO_LIMIT, cfg.fault).expect("mpdp fits any trial");
    let wide = mpdp_with_fault(g, cost, 3, NO_LIMIT, cfg.fault).expect("mpdp fits any trial");
    check(
        3,
        single.plan.cost.to_bits() == wide.plan.cost.to_bits()
            && single.plan.expr(g) == wide.plan.expr(g)
            && single.stats.evaluated_counter == wide.stats.evaluated_counter
            && single.stats.ccp_counter == wide.stats.ccp_counter,
        &|| "worker counts 1 and 3 disagree".to_string(),
    );
    let again = generate(gen_cfg).expect("in-range generator configs cannot fail");
    check(3, query_to_json(&again) == query_to_json(g), &|| {
        "regeneration from the same seed produced a different graph".to_string()
    });
}
