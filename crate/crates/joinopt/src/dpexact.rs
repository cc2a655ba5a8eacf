//! Exact join-order optimizers over connected subgraphs.
//!
//! Four algorithms share one level-synchronous driver ([`level_pipeline`]):
//!
//! - [`dpsize`] pairs memo entries by size `(l, i−l)` and rejects invalid
//!   combinations after the fact, which makes it evaluate far more pairs
//!   than the others (overlapping pairs count as evaluated, then fail the
//!   disjointness check).
//! - [`dpsub`] enumerates, per connected set, every nonempty subset mask of
//!   the set and keeps the splits that form valid join pairs.
//! - [`mpdp_tree`] exploits acyclicity: removing one induced edge is the
//!   only way to split a connected subtree, so it enumerates exactly the
//!   valid pairs — its evaluated counter equals its valid-pair counter.
//! - [`mpdp`] generalizes that to cyclic graphs: subset masks are drawn only
//!   inside biconnected blocks and grown back to full splits, bounding the
//!   per-set work by `Σ_blocks 2^|b|` instead of `2^|S|`.
//!
//! Two brute-force oracles ([`oracle_optimal`], [`oracle_ccp_count`]) share
//! no enumeration machinery with the production algorithms; the test suites
//! treat them as ground truth. [`count_pairs`] replays each algorithm's
//! enumeration arithmetic without building plans, so counter ratios can be
//! measured on queries far beyond practical optimization size.
//!
//! Determinism: plan costs, plan shapes, and both counters are bit-identical
//! for any worker count. Workers only ever read frozen lower levels of the
//! memo, each candidate set has a single producer (sets are partitioned by
//! rank), and ties are broken by a total order on candidates.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::costmodel::{estimate_cardinality, join_cost_given, CostModelConfig};
use crate::error::Error;
use crate::planmemo::{candidate_beats, MemoTable, Plan, RunStats};
use crate::querygraph::{find_blocks, grow, has_cross_edge, is_connected, QueryGraph};
use crate::relset::{binomial, deposit_subset, next_combination_word, unrank_combination, RelSet};
use crate::Result;

/// Hard capacity of the exact path: set ranks and subset masks live in `u64`.
pub const MAX_EXACT_RELS: usize = 64;

/// Largest query [`count_pairs`] will enumerate (it walks all `2^n` subsets).
pub const MAX_COUNTING_RELS: usize = 30;

/// Largest query the brute-force oracles accept.
pub const MAX_ORACLE_RELS: usize = 14;

/// Set ranks claimed per work item from the shared level counter.
const CHUNK: u64 = 1024;

/// Left-side memo entries claimed per work item in the pair-based driver.
const PAIR_CHUNK: u64 = 16;

/// Which exact enumeration strategy the shared driver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExactAlgorithm {
    DpSize,
    DpSub,
    Mpdp,
    MpdpTree,
}

impl ExactAlgorithm {
    pub const ALL: [ExactAlgorithm; 4] =
        [ExactAlgorithm::DpSize, ExactAlgorithm::DpSub, ExactAlgorithm::Mpdp, ExactAlgorithm::MpdpTree];

    pub fn name(self) -> &'static str {
        match self {
            ExactAlgorithm::DpSize => "dpsize",
            ExactAlgorithm::DpSub => "dpsub",
            ExactAlgorithm::Mpdp => "mpdp",
            ExactAlgorithm::MpdpTree => "mpdp-tree",
        }
    }
}

/// The optimal plan plus the run's counters and timing.
#[derive(Debug, Clone)]
pub struct OptimizerResult {
    pub plan: Arc<Plan>,
    pub stats: RunStats,
}

/// Test hook: deliberately corrupted enumeration, used by the verification
/// harness to prove it would catch a broken optimizer. Not part of the API.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnumerationFault {
    #[default]
    None,
    /// Drop the last biconnected block of every multi-block set, losing the
    /// splits (and valid-pair counts) that block would have produced.
    SkipLastBlock,
}

/// Size-driven dynamic programming: level `i` pairs every memo entry of size
/// `l` with every entry of size `i − l`.
pub fn dpsize(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    workers: usize,
    timeout: Duration,
) -> Result<OptimizerResult> {
    level_pipeline(g, cfg, ExactAlgorithm::DpSize, workers, timeout)
}

/// Subset-driven dynamic programming: every nonempty subset mask of each
/// connected set is tried as a left side.
pub fn dpsub(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    workers: usize,
    timeout: Duration,
) -> Result<OptimizerResult> {
    level_pipeline(g, cfg, ExactAlgorithm::DpSub, workers, timeout)
}

/// Tree-specialized dynamic programming; errors on cyclic input.
pub fn mpdp_tree(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    workers: usize,
    timeout: Duration,
) -> Result<OptimizerResult> {
    level_pipeline(g, cfg, ExactAlgorithm::MpdpTree, workers, timeout)
}

/// Block-pruned dynamic programming for arbitrary (connected) graphs.
pub fn mpdp(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    workers: usize,
    timeout: Duration,
) -> Result<OptimizerResult> {
    level_pipeline(g, cfg, ExactAlgorithm::Mpdp, workers, timeout)
}

/// `mpdp` over a graph whose leaves stand for already-built subplans: leaf
/// `v` starts out charged `leaf_costs[v]` instead of zero, so accumulated
/// costs account for the work buried inside each composite.
pub(crate) fn mpdp_seeded(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    workers: usize,
    timeout: Duration,
    leaf_costs: &[f64],
) -> Result<OptimizerResult> {
    assert_eq!(leaf_costs.len(), g.n());
    run_pipeline(
        g,
        cfg,
        ExactAlgorithm::Mpdp,
        workers,
        timeout,
        EnumerationFault::None,
        Some(leaf_costs),
    )
}

#[doc(hidden)]
pub fn mpdp_with_fault(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    workers: usize,
    timeout: Duration,
    fault: EnumerationFault,
) -> Result<OptimizerResult> {
    run_pipeline(g, cfg, ExactAlgorithm::Mpdp, workers, timeout, fault, None)
}

/// Shared level-synchronous driver.
///
/// Per level `i`: (unrank) all `C(n,i)` candidate ranks are claimed in
/// contiguous work items from a shared counter; (filter) disconnected sets
/// are dropped; (evaluate+prune) each worker reduces its sets to one best
/// plan each; (scatter) the driver merges worker buffers into the memo and
/// freezes the level. The timeout is checked between work items and between
/// levels; a timed-out run discards the partial memo and reports the
/// counters accumulated so far.
pub fn level_pipeline(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    algo: ExactAlgorithm,
    workers: usize,
    timeout: Duration,
) -> Result<OptimizerResult> {
    run_pipeline(g, cfg, algo, workers, timeout, EnumerationFault::None, None)
}

fn run_pipeline(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    algo: ExactAlgorithm,
    workers: usize,
    timeout: Duration,
    fault: EnumerationFault,
    leaf_costs: Option<&[f64]>,
) -> Result<OptimizerResult> {
    let n = g.n();
    if n > MAX_EXACT_RELS {
        return Err(Error::TooLarge { n, max: MAX_EXACT_RELS });
    }
    if algo == ExactAlgorithm::MpdpTree && !g.is_tree() {
        return Err(Error::CyclicInput);
    }
    let workers = workers.max(1);
    let started = Instant::now();
    let deadline = started.checked_add(timeout);

    let mut memo = MemoTable::new(n);
    for v in 0..n {
        let mut leaf = Plan::leaf(v, g);
        if let Some(costs) = leaf_costs {
            leaf.cost = costs[v];
        }
        memo.memo_update(leaf);
    }
    memo.freeze_level(1);

    let mut evaluated = 0u64;
    let mut ccp = 0u64;
    for size in 2..=n {
        let outputs = match algo {
            ExactAlgorithm::DpSize => run_pair_level(g, cfg, size, workers, deadline, &memo),
            _ => run_set_level(g, cfg, algo, fault, size, workers, deadline, &memo),
        };
        let mut timed_out = false;
        for out in &outputs {
            evaluated += out.evaluated;
            ccp += out.ccp;
            timed_out |= out.hit_deadline;
        }
        if timed_out {
            return Err(Error::Timeout {
                stats: RunStats {
                    evaluated_counter: evaluated,
                    ccp_counter: ccp,
                    elapsed: started.elapsed(),
                    timed_out: true,
                },
            });
        }
        for out in outputs {
            for plan in out.plans {
                memo.memo_update(plan);
            }
        }
        memo.freeze_level(size);
    }

    let plan = memo.extract_tree(&g.full_set())?;
    Ok(OptimizerResult {
        plan,
        stats: RunStats {
            evaluated_counter: evaluated,
            ccp_counter: ccp,
            elapsed: started.elapsed(),
            timed_out: false,
        },
    })
}

/// One worker's share of a level: plans for the sets it owned plus its
/// counter increments.
#[derive(Default)]
struct LevelOutput {
    plans: Vec<Plan>,
    evaluated: u64,
    ccp: u64,
    hit_deadline: bool,
}

fn past(deadline: Option<Instant>) -> bool {
    deadline.is_some_and(|d| Instant::now() >= d)
}

fn run_set_level(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    algo: ExactAlgorithm,
    fault: EnumerationFault,
    size: usize,
    workers: usize,
    deadline: Option<Instant>,
    memo: &MemoTable,
) -> Vec<LevelOutput> {
    let total = binomial(g.n(), size);
    let next_rank = AtomicU64::new(0);
    let stop = AtomicBool::new(false);
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let (next_rank, stop) = (&next_rank, &stop);
                scope.spawn(move || {
                    set_worker(g, cfg, algo, fault, size, total, next_rank, stop, deadline, memo)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("optimizer worker panicked")).collect()
    })
}

#[allow(clippy::too_many_arguments)]
fn set_worker(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    algo: ExactAlgorithm,
    fault: EnumerationFault,
    size: usize,
    total: u64,
    next_rank: &AtomicU64,
    stop: &AtomicBool,
    deadline: Option<Instant>,
    memo: &MemoTable,
) -> LevelOutput {
    let n = g.n();
    let mut out = LevelOutput::default();
    loop {
        if stop.load(Ordering::Acquire) || past(deadline) {
            stop.store(true, Ordering::Release);
            out.hit_deadline = true;
            return out;
        }
        let start = next_rank.fetch_add(CHUNK, Ordering::Relaxed);
        if start >= total {
            return out;
        }
        let end = (start + CHUNK).min(total);
        let mut word = unrank_combination(start, size, n).as_words()[0];
        for rank in start..end {
            let s = RelSet::from_word(n, word);
            if is_connected(&s, g) {
                evaluate_set(&s, g, cfg, algo, fault, memo, &mut out);
            }
            if rank + 1 < end {
                word = next_combination_word(word);
            }
        }
    }
}

/// Reduces one connected set to its best plan under the chosen enumeration.
fn evaluate_set(
    s: &RelSet,
    g: &QueryGraph,
    cfg: &CostModelConfig,
    algo: ExactAlgorithm,
    fault: EnumerationFault,
    memo: &MemoTable,
    out: &mut LevelOutput,
) {
    // The joint cardinality is a property of the set, computed once so every
    // split of this set prices its output identically.
    let joint = estimate_cardinality(s, g);
    let mut best: Option<Plan> = None;
    let mut consider = |left: &RelSet, right: &RelSet| {
        let l = memo.get(left).expect("left split is a memoized connected set");
        let r = memo.get(right).expect("right split is a memoized connected set");
        let cost = join_cost_given(l, r, joint, cfg);
        let candidate = Plan::join_parts(Arc::clone(l), Arc::clone(r), joint, cost);
        if best.as_ref().is_none_or(|b| candidate_beats(&candidate, b)) {
            best = Some(candidate);
        }
    };
    let (evaluated, ccp) = match algo {
        ExactAlgorithm::DpSub => for_each_subset_split(s, g, &mut consider),
        ExactAlgorithm::Mpdp => for_each_block_split(s, g, fault, &mut consider),
        ExactAlgorithm::MpdpTree => for_each_tree_split(s, g, &mut consider),
        ExactAlgorithm::DpSize => unreachable!("the pair-based driver handles dpsize"),
    };
    out.evaluated += evaluated;
    out.ccp += ccp;
    out.plans.push(best.expect("every connected set of size >= 2 has a valid split"));
}

/// Subset-driven enumeration of one connected set: all masks `1..=2^|S|−1`.
/// Every mask counts as evaluated; the full mask always fails (empty
/// complement). Calls `on_pair` for each ordered valid pair and returns
/// `(evaluated, valid)` counts.
pub(crate) fn for_each_subset_split(
    s: &RelSet,
    g: &QueryGraph,
    on_pair: &mut impl FnMut(&RelSet, &RelSet),
) -> (u64, u64) {
    let m = s.cardinality();
    let full: u64 = if m >= 64 { u64::MAX } else { (1u64 << m) - 1 };
    let mut evaluated = 0u64;
    let mut valid = 0u64;
    for mask in 1..=full {
        evaluated += 1;
        let left = deposit_subset(mask, s);
        let right = s.difference(&left);
        if right.is_empty()
            || !is_connected(&left, g)
            || !is_connected(&right, g)
            || !has_cross_edge(&left, &right, g)
        {
            continue;
        }
        valid += 1;
        on_pair(&left, &right);
    }
    (evaluated, valid)
}

/// Block-pruned enumeration of one connected set: masks are proper nonempty
/// subsets of each biconnected block; a passing in-block pair is grown back
/// to the unique full split of `s` it represents.
pub(crate) fn for_each_block_split(
    s: &RelSet,
    g: &QueryGraph,
    fault: EnumerationFault,
    on_pair: &mut impl FnMut(&RelSet, &RelSet),
) -> (u64, u64) {
    let blocks = find_blocks(s, g).blocks;
    let used = match fault {
        EnumerationFault::SkipLastBlock if blocks.len() > 1 => &blocks[..blocks.len() - 1],
        _ => &blocks[..],
    };
    let mut evaluated = 0u64;
    let mut valid = 0u64;
    for block in used {
        let b = block.cardinality();
        debug_assert!(b >= 2, "blocks of a multi-vertex connected set span an edge");
        let full: u64 = if b >= 64 { u64::MAX } else { (1u64 << b) - 1 };
        for mask in 1..full {
            evaluated += 1;
            let lb = deposit_subset(mask, block);
            let rb = block.difference(&lb);
            if !is_connected(&lb, g) || !is_connected(&rb, g) || !has_cross_edge(&lb, &rb, g) {
                continue;
            }
            valid += 1;
            let s_left = grow(&lb, &s.difference(&rb), g);
            let s_right = s.difference(&s_left);
            on_pair(&s_left, &s_right);
        }
    }
    (evaluated, valid)
}

/// Tree enumeration of one connected set: removing each induced edge yields
/// one split, emitted in both orientations. Evaluated always equals valid.
pub(crate) fn for_each_tree_split(
    s: &RelSet,
    g: &QueryGraph,
    on_pair: &mut impl FnMut(&RelSet, &RelSet),
) -> (u64, u64) {
    let n = g.n();
    let mut pairs = 0u64;
    for e in g.edges() {
        if !(s.contains(e.u) && s.contains(e.v)) {
            continue;
        }
        let seed = RelSet::singleton(n, e.u);
        let mut without_right = s.clone();
        without_right.remove(e.v);
        let left_side = grow(&seed, &without_right, g);
        let right_side = s.difference(&left_side);
        pairs += 2;
        on_pair(&left_side, &right_side);
        on_pair(&right_side, &left_side);
    }
    (pairs, pairs)
}

fn run_pair_level(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    size: usize,
    workers: usize,
    deadline: Option<Instant>,
    memo: &MemoTable,
) -> Vec<LevelOutput> {
    // Flatten the left side of all (l, size−l) pairings into one claimable
    // index space: slot → (left entry, the opposite level to pair with).
    let segments: Vec<(usize, &[(RelSet, Arc<Plan>)])> =
        (1..size).map(|l| (l, memo.entries_of_size(l))).collect();
    let mut offsets = Vec::with_capacity(segments.len() + 1);
    offsets.push(0u64);
    for (_, entries) in &segments {
        offsets.push(offsets.last().unwrap() + entries.len() as u64);
    }
    let total = *offsets.last().unwrap();
    let next_slot = AtomicU64::new(0);
    let stop = AtomicBool::new(false);
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let (segments, offsets, next_slot, stop) = (&segments, &offsets, &next_slot, &stop);
                scope.spawn(move || {
                    pair_worker(g, cfg, size, segments, offsets, total, next_slot, stop, deadline, memo)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("optimizer worker panicked")).collect()
    })
}

#[allow(clippy::too_many_arguments)]
fn pair_worker(
    g: &QueryGraph,
    cfg: &CostModelConfig,
    size: usize,
    segments: &[(usize, &[(RelSet, Arc<Plan>)])],
    offsets: &[u64],
    total: u64,
    next_slot: &AtomicU64,
    stop: &AtomicBool,
    deadline: Option<Instant>,
    memo: &MemoTable,
) -> LevelOutput {
    let mut out = LevelOutput::default();
    let mut joint_cards: HashMap<RelSet, f64> = HashMap::new();
    let mut best: HashMap<RelSet, Plan> = HashMap::new();
    loop {
        if stop.load(Ordering::Acquire) || past(deadline) {
            stop.store(true, Ordering::Release);
            out.hit_deadline = true;
            break;
        }
        let start = next_slot.fetch_add(PAIR_CHUNK, Ordering::Relaxed);
        if start >= total {
            break;
        }
        let end = (start + PAIR_CHUNK).min(total);
        for slot in start..end {
            let seg = offsets.partition_point(|&o| o <= slot) - 1;
            let (left_size, lefts) = segments[seg];
            let (left_set, left_plan) = &lefts[(slot - offsets[seg]) as usize];
            for (right_set, right_plan) in memo.entries_of_size(size - left_size) {
                out.evaluated += 1;
                if !left_set.is_disjoint(right_set) || !has_cross_edge(left_set, right_set, g) {
                    continue;
                }
                out.ccp += 1;
                let union = left_set.union(right_set);
                let joint = *joint_cards
                    .entry(union.clone())
                    .or_insert_with(|| estimate_cardinality(&union, g));
                let cost = join_cost_given(left_plan, right_plan, joint, cfg);
                let candidate =
                    Plan::join_parts(Arc::clone(left_plan), Arc::clone(right_plan), joint, cost);
                match best.entry(union) {
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(candidate);
                    }
                    std::collections::hash_map::Entry::Occupied(mut e) => {
                        if candidate_beats(&candidate, e.get()) {
                            e.insert(candidate);
                        }
                    }
                }
            }
        }
    }
    out.plans = best.into_values().collect();
    out
}

// ---------------------------------------------------------------------------
// Brute-force oracles.
//
// Deliberately independent machinery: raw adjacency words built straight
// from the edge list, a full connectivity table, and positional submask
// walks — none of the unrank/deposit/grow/block code above.
// ---------------------------------------------------------------------------

fn oracle_adjacency(g: &QueryGraph) -> Vec<u64> {
    let mut adj = vec![0u64; g.n()];
    for e in g.edges() {
        adj[e.u] |= 1 << e.v;
        adj[e.v] |= 1 << e.u;
    }
    adj
}

/// Frontier expansion over adjacency words; `mask` must be nonempty.
fn word_connected(mask: u64, adj: &[u64]) -> bool {
    let mut reached = mask & mask.wrapping_neg();
    let mut frontier = reached;
    while frontier != 0 {
        let mut expand = 0u64;
        let mut f = frontier;
        while f != 0 {
            expand |= adj[f.trailing_zeros() as usize];
            f &= f - 1;
        }
        frontier = expand & mask & !reached;
        reached |= frontier;
    }
    reached == mask
}

fn words_cross(a: u64, b: u64, adj: &[u64]) -> bool {
    let mut f = a;
    while f != 0 {
        if adj[f.trailing_zeros() as usize] & b != 0 {
            return true;
        }
        f &= f - 1;
    }
    false
}

/// Provably optimal reference plan by exhaustive split enumeration over
/// every connected subset, with the same tie-break rule as the optimizers.
pub fn oracle_optimal(g: &QueryGraph, cfg: &CostModelConfig) -> Result<Arc<Plan>> {
    let n = g.n();
    if n > MAX_ORACLE_RELS {
        return Err(Error::TooLarge { n, max: MAX_ORACLE_RELS });
    }
    let adj = oracle_adjacency(g);
    let full: usize = (1 << n) - 1;
    let mut best: Vec<Option<Arc<Plan>>> = vec![None; full + 1];
    for v in 0..n {
        best[1 << v] = Some(Arc::new(Plan::leaf(v, g)));
    }
    // Every proper submask is numerically smaller, so ascending mask order
    // visits children before parents.
    for mask in 1..=full {
        if best[mask].is_some() || !word_connected(mask as u64, &adj) {
            continue;
        }
        let set = RelSet::from_word(n, mask as u64);
        let joint = estimate_cardinality(&set, g);
        let mut winner: Option<Plan> = None;
        let mut sub = (mask - 1) & mask;
        while sub != 0 {
            let comp = mask ^ sub;
            if word_connected(sub as u64, &adj)
                && word_connected(comp as u64, &adj)
                && words_cross(sub as u64, comp as u64, &adj)
            {
                let left = best[sub].clone().expect("connected submask already solved");
                let right = best[comp].clone().expect("connected submask already solved");
                let cost = join_cost_given(&left, &right, joint, cfg);
                let candidate = Plan::join_parts(left, right, joint, cost);
                if winner.as_ref().is_none_or(|w| candidate_beats(&candidate, w)) {
                    winner = Some(candidate);
                }
            }
            sub = (sub - 1) & mask;
        }
        best[mask] = Some(Arc::new(winner.expect("a connected set always has a valid split")));
    }
    Ok(best[full].clone().expect("query graphs are connected"))
}

/// Ordered valid-pair count by definition: all `(A, B)` with `A`, `B`
/// nonempty, disjoint, each connected, and some edge between them.
pub fn oracle_ccp_count(g: &QueryGraph) -> Result<u64> {
    let n = g.n();
    if n > MAX_ORACLE_RELS {
        return Err(Error::TooLarge { n, max: MAX_ORACLE_RELS });
    }
    let adj = oracle_adjacency(g);
    let full: usize = (1 << n) - 1;
    let conn: Vec<bool> =
        (0..=full).map(|m| m != 0 && word_connected(m as u64, &adj)).collect();
    let mut count = 0u64;
    for a in 1..=full {
        if !conn[a] {
            continue;
        }
        let space = full ^ a;
        let mut b = space;
        while b != 0 {
            if conn[b] && words_cross(a as u64, b as u64, &adj) {
                count += 1;
            }
            b = (b - 1) & space;
        }
    }
    Ok(count)
}

// ---------------------------------------------------------------------------
// Counting mode: the enumeration arithmetic without plans or costing.
// ---------------------------------------------------------------------------

/// Replays `(evaluated, valid)` counters for one algorithm without building
/// plans, in a single pass over all subsets. Matches the live counters
/// exactly; usable far beyond practical optimization sizes.
pub fn count_pairs(g: &QueryGraph, algo: ExactAlgorithm) -> Result<(u64, u64)> {
    let n = g.n();
    if n > MAX_COUNTING_RELS {
        return Err(Error::TooLarge { n, max: MAX_COUNTING_RELS });
    }
    if algo == ExactAlgorithm::MpdpTree && !g.is_tree() {
        return Err(Error::CyclicInput);
    }
    let adj = oracle_adjacency(g);
    let tree = g.is_tree();
    let full: u64 = (1u64 << n) - 1;
    let mut connected_of_size = vec![0u64; n + 1];
    let mut evaluated = 0u64;
    let mut valid = 0u64;
    for mask in 1..=full {
        if !word_connected(mask, &adj) {
            continue;
        }
        let m = mask.count_ones() as usize;
        connected_of_size[m] += 1;
        if m < 2 {
            continue;
        }
        match algo {
            ExactAlgorithm::DpSize => {
                valid += set_valid_pairs(mask, m, tree, g);
            }
            ExactAlgorithm::DpSub => {
                evaluated += (1u64 << m) - 1;
                valid += set_valid_pairs(mask, m, tree, g);
            }
            ExactAlgorithm::Mpdp => {
                if tree {
                    evaluated += 2 * (m as u64 - 1);
                    valid += 2 * (m as u64 - 1);
                } else {
                    let set = RelSet::from_word(n, mask);
                    for block in find_blocks(&set, g).blocks {
                        let b = block.cardinality();
                        evaluated += (1u64 << b) - 2;
                        valid += block_valid_pairs(&block, g);
                    }
                }
            }
            ExactAlgorithm::MpdpTree => {
                evaluated += 2 * (m as u64 - 1);
                valid += 2 * (m as u64 - 1);
            }
        }
    }
    if algo == ExactAlgorithm::DpSize {
        // Level s considers all ordered (size-l, size-(s−l)) entry pairs.
        for s in 2..=n {
            for l in 1..s {
                evaluated += connected_of_size[l] * connected_of_size[s - l];
            }
        }
    }
    Ok((evaluated, valid))
}

/// Ordered valid pairs splitting one connected set, summed over its blocks
/// (each split is generated by exactly one in-block pair).
fn set_valid_pairs(mask: u64, m: usize, tree: bool, g: &QueryGraph) -> u64 {
    if tree {
        return 2 * (m as u64 - 1);
    }
    let set = RelSet::from_word(g.n(), mask);
    find_blocks(&set, g).blocks.iter().map(|b| block_valid_pairs(b, g)).sum()
}

/// Ordered in-block pairs `(lb, rb)` with both sides connected. No edge test
/// is needed: a block is connected, so if both sides of a partition are
/// connected but no edge crossed them, the block itself would be
/// disconnected.
fn block_valid_pairs(block: &RelSet, g: &QueryGraph) -> u64 {
    let b = block.cardinality();
    if b == 2 {
        return 2;
    }
    if is_complete(block, g) {
        return (1u64 << b) - 2;
    }
    let full = (1u64 << b) - 1;
    let mut count = 0;
    for mask in 1..full {
        let lb = deposit_subset(mask, block);
        let rb = block.difference(&lb);
        if is_connected(&lb, g) && is_connected(&rb, g) {
            count += 1;
        }
    }
    count
}

fn is_complete(block: &RelSet, g: &QueryGraph) -> bool {
    block.iter().all(|v| {
        let mut others = block.clone();
        others.remove(v);
        others.is_subset(g.adjacency(v))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::CostKind;
    use crate::fixtures;

    const LONG: Duration = Duration::from_secs(600);

    fn run(g: &QueryGraph, algo: ExactAlgorithm, workers: usize) -> OptimizerResult {
        level_pipeline(g, &CostModelConfig::default(), algo, workers, LONG).unwrap()
    }

    #[test]
    fn oracle_counts_match_hand_enumerations() {
        assert_eq!(oracle_ccp_count(&fixtures::chain(3)).unwrap(), 8);
        assert_eq!(oracle_ccp_count(&fixtures::star(4)).unwrap(), 24);
        assert_eq!(oracle_ccp_count(&fixtures::clique(3)).unwrap(), 12);
    }

    #[test]
    fn oracle_counts_match_closed_forms() {
        for n in 2..=8u32 {
            let star = 2 * (n as u64 - 1) * (1u64 << (n - 2));
            assert_eq!(oracle_ccp_count(&fixtures::star(n as usize)).unwrap(), star, "star-{n}");
            let clique = 3u64.pow(n) - (1u64 << (n + 1)) + 1;
            assert_eq!(
                oracle_ccp_count(&fixtures::clique(n as usize)).unwrap(),
                clique,
                "clique-{n}"
            );
            let chain = (n as u64 * (n as u64 * n as u64 - 1)) / 3;
            assert_eq!(oracle_ccp_count(&fixtures::chain(n as usize)).unwrap(), chain, "chain-{n}");
        }
    }

    #[test]
    fn oracle_refuses_oversized_queries() {
        let g = fixtures::chain(15);
        assert!(matches!(
            oracle_optimal(&g, &CostModelConfig::default()),
            Err(Error::TooLarge { n: 15, max: 14 })
        ));
        assert!(matches!(oracle_ccp_count(&g), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn oracle_two_relations_is_the_single_join() {
        let g = fixtures::chain(2);
        for kind in [CostKind::COut, CostKind::HashJoin] {
            let cfg = CostModelConfig::new(kind);
            let plan = oracle_optimal(&g, &cfg).unwrap();
            assert_eq!(plan.leaf_count(), 2);
            let l = Arc::new(Plan::leaf(0, &g));
            let r = Arc::new(Plan::leaf(1, &g));
            assert_eq!(plan.cost, Plan::join(l, r, &g, &cfg).cost);
        }
    }

    #[test]
    fn oracle_chain5_matches_independent_interval_recursion() {
        // On a chain, every cross-product-free tree splits an interval into
        // two adjacent intervals; minimize over all Catalan(4) = 14 shapes.
        let g = fixtures::chain(5);
        let cfg = CostModelConfig::c_out();
        fn interval_min(i: usize, j: usize, g: &QueryGraph, cfg: &CostModelConfig) -> f64 {
            if i == j {
                return 0.0;
            }
            let out = estimate_cardinality(&RelSet::from_indices(g.n(), &(i..=j).collect::<Vec<_>>()), g);
            (i..j)
                .map(|k| (interval_min(i, k, g, cfg) + interval_min(k + 1, j, g, cfg)) + out)
                .fold(f64::INFINITY, f64::min)
        }
        let plan = oracle_optimal(&g, &cfg).unwrap();
        assert_eq!(plan.cost, interval_min(0, 4, &g, &cfg));
    }

    #[test]
    fn two_relation_counters_pin_the_conventions() {
        let g = fixtures::chain(2);
        let cases = [
            (ExactAlgorithm::DpSize, 4, 2),
            (ExactAlgorithm::DpSub, 3, 2),
            (ExactAlgorithm::Mpdp, 2, 2),
            (ExactAlgorithm::MpdpTree, 2, 2),
        ];
        for (algo, evaluated, ccp) in cases {
            let r = run(&g, algo, 1);
            assert_eq!(r.stats.evaluated_counter, evaluated, "{}", algo.name());
            assert_eq!(r.stats.ccp_counter, ccp, "{}", algo.name());
            assert_eq!(r.plan.leaf_count(), 2);
        }
    }

    #[test]
    fn dpsub_star4_counters() {
        // Connected sets: 3 pairs, 3 triples, the full set; masks per set of
        // size m are 2^m − 1, so 3·3 + 3·7 + 15 = 45 evaluated; 24 valid.
        let r = run(&fixtures::star(4), ExactAlgorithm::DpSub, 1);
        assert_eq!(r.stats.evaluated_counter, 45);
        assert_eq!(r.stats.ccp_counter, 24);
    }

    #[test]
    fn dpsub_chain3_ccp_counter() {
        let r = run(&fixtures::chain(3), ExactAlgorithm::DpSub, 1);
        assert_eq!(r.stats.ccp_counter, 8);
    }

    #[test]
    fn exact_algorithms_agree_with_the_oracle_on_fixtures() {
        let graphs = [
            fixtures::chain(5),
            fixtures::star(5),
            fixtures::cycle(6),
            fixtures::clique(5),
            fixtures::bridged_cycles(),
            fixtures::branching_tree(),
        ];
        for g in &graphs {
            for kind in [CostKind::COut, CostKind::HashJoin] {
                let cfg = CostModelConfig::new(kind);
                let reference = oracle_optimal(g, &cfg).unwrap();
                let expected_ccp = oracle_ccp_count(g).unwrap();
                let mut algos = vec![ExactAlgorithm::DpSize, ExactAlgorithm::DpSub, ExactAlgorithm::Mpdp];
                if g.is_tree() {
                    algos.push(ExactAlgorithm::MpdpTree);
                }
                let mut evaluated = HashMap::new();
                for algo in algos {
                    let r = level_pipeline(g, &cfg, algo, 2, LONG).unwrap();
                    assert_eq!(r.plan.cost, reference.cost, "{} cost", algo.name());
                    assert_eq!(r.stats.ccp_counter, expected_ccp, "{} ccp", algo.name());
                    assert_eq!(r.plan.leaf_count(), g.n());
                    r.plan.validate(g, &cfg).unwrap();
                    evaluated.insert(algo, r.stats.evaluated_counter);
                }
                assert!(
                    evaluated[&ExactAlgorithm::Mpdp] <= evaluated[&ExactAlgorithm::DpSub],
                    "block pruning may never evaluate more than subset-driven"
                );
            }
        }
    }

    #[test]
    fn mpdp_tree_rejects_cyclic_input() {
        let g = fixtures::cycle(4);
        let r = mpdp_tree(&g, &CostModelConfig::default(), 1, LONG);
        assert!(matches!(r, Err(Error::CyclicInput)));
    }

    #[test]
    fn tree_splits_remove_each_induced_edge() {
        // Connected subtree {0,1,3,4,5} of the branching-tree fixture has 4
        // induced edges, hence 8 ordered splits; cutting (3,4) separates
        // {0,1,3} from {4,5}.
        let g = fixtures::branching_tree();
        let s = RelSet::from_indices(8, &[0, 1, 3, 4, 5]);
        let mut splits = Vec::new();
        for_each_tree_split(&s, &g, &mut |l, r| splits.push((l.clone(), r.clone())));
        assert_eq!(splits.len(), 8);
        let a = RelSet::from_indices(8, &[0, 1, 3]);
        let b = RelSet::from_indices(8, &[4, 5]);
        assert!(splits.contains(&(a.clone(), b.clone())));
        assert!(splits.contains(&(b, a)));
    }

    #[test]
    fn block_splits_match_subset_splits_per_set() {
        // The block-pruned enumeration must produce exactly the set of
        // ordered splits the subset-driven one finds — no duplicates, no
        // misses — for every connected subset.
        for g in [fixtures::bridged_cycles(), fixtures::cycle(6), fixtures::clique(5)] {
            let n = g.n();
            for mask in 1u64..(1 << n) {
                let s = RelSet::from_word(n, mask);
                if s.cardinality() < 2 || !is_connected(&s, &g) {
                    continue;
                }
                let mut from_blocks = Vec::new();
                for_each_block_split(&s, &g, EnumerationFault::None, &mut |l, r| {
                    from_blocks.push((l.clone(), r.clone()));
                });
                let mut from_subsets = Vec::new();
                for_each_subset_split(&s, &g, &mut |l, r| {
                    from_subsets.push((l.clone(), r.clone()));
                });
                let deduped: std::collections::HashSet<_> = from_blocks.iter().cloned().collect();
                assert_eq!(deduped.len(), from_blocks.len(), "duplicate split for {s:?}");
                let expected: std::collections::HashSet<_> = from_subsets.into_iter().collect();
                assert_eq!(deduped, expected, "split mismatch for {s:?}");
            }
        }
    }

    #[test]
    fn trees_and_cliques_waste_no_evaluations() {
        let mut graphs = vec![fixtures::branching_tree()];
        for n in 2..=8 {
            graphs.push(fixtures::star(n));
            graphs.push(fixtures::chain(n));
            graphs.push(fixtures::clique(n));
        }
        for g in &graphs {
            let r = run(g, ExactAlgorithm::Mpdp, 1);
            assert_eq!(r.stats.evaluated_counter, r.stats.ccp_counter);
        }
    }

    #[test]
    fn pipeline_is_worker_count_invariant() {
        for g in [fixtures::bridged_cycles(), fixtures::star(10)] {
            let baseline = run(&g, ExactAlgorithm::Mpdp, 1);
            for workers in [2, 4, 8] {
                let r = run(&g, ExactAlgorithm::Mpdp, workers);
                assert_eq!(r.plan.cost.to_bits(), baseline.plan.cost.to_bits());
                assert_eq!(r.stats.evaluated_counter, baseline.stats.evaluated_counter);
                assert_eq!(r.stats.ccp_counter, baseline.stats.ccp_counter);
                assert_eq!(r.plan.expr(&g), baseline.plan.expr(&g));
            }
        }
    }

    #[test]
    fn zero_budget_times_out_without_a_plan() {
        let g = fixtures::clique(16);
        let r = dpsub(&g, &CostModelConfig::default(), 2, Duration::ZERO);
        match r {
            Err(Error::Timeout { stats }) => assert!(stats.timed_out),
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn single_relation_needs_no_joins() {
        let g = fixtures::chain(1);
        for algo in ExactAlgorithm::ALL {
            let r = run(&g, algo, 1);
            assert_eq!(r.stats.evaluated_counter, 0);
            assert_eq!(r.stats.ccp_counter, 0);
            assert_eq!(r.plan.leaf_count(), 1);
            assert_eq!(r.plan.cost, 0.0);
        }
    }

    #[test]
    fn counting_mode_matches_live_counters() {
        let graphs = [
            fixtures::star(6),
            fixtures::chain(6),
            fixtures::cycle(6),
            fixtures::clique(6),
            fixtures::bridged_cycles(),
            fixtures::branching_tree(),
        ];
        for g in &graphs {
            for algo in ExactAlgorithm::ALL {
                if algo == ExactAlgorithm::MpdpTree && !g.is_tree() {
                    assert!(matches!(count_pairs(g, algo), Err(Error::CyclicInput)));
                    continue;
                }
                let (evaluated, valid) = count_pairs(g, algo).unwrap();
                let r = run(g, algo, 1);
                assert_eq!(evaluated, r.stats.evaluated_counter, "{} evaluated", algo.name());
                assert_eq!(valid, r.stats.ccp_counter, "{} valid", algo.name());
            }
        }
    }

    #[test]
    fn counting_mode_handles_large_stars_quickly() {
        // The subset-driven evaluated count on a star grows as Σ C(n−1,m−1)
        // (2^m − 1), while valid pairs stay at 2(n−1)·2^(n−2): the gap is
        // what makes block pruning matter.
        let g = fixtures::star(20);
        let (evaluated, valid) = count_pairs(&g, ExactAlgorithm::DpSub).unwrap();
        assert_eq!(valid, 2 * 19 * (1u64 << 18));
        assert!(evaluated > valid * 100);
        let (mpdp_eval, mpdp_valid) = count_pairs(&g, ExactAlgorithm::Mpdp).unwrap();
        assert_eq!(mpdp_eval, mpdp_valid);
        assert_eq!(mpdp_valid, valid);
    }

    #[test]
    fn counting_mode_refuses_oversized_queries() {
        assert!(matches!(
            count_pairs(&fixtures::chain(31), ExactAlgorithm::DpSub),
            Err(Error::TooLarge { n: 31, max: 30 })
        ));
    }

    #[test]
    fn faulty_enumeration_is_observably_wrong() {
        // Skipping a block must surface in the counters on a multi-block
        // graph — this is what the verification harness relies on.
        let g = fixtures::bridged_cycles();
        let cfg = CostModelConfig::default();
        let good = mpdp(&g, &cfg, 1, LONG).unwrap();
        let bad = mpdp_with_fault(&g, &cfg, 1, LONG, EnumerationFault::SkipLastBlock).unwrap();
        assert!(bad.stats.ccp_counter < good.stats.ccp_counter);
    }
}
