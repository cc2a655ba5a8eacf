//! Join trees, the dynamic-programming memo table, and run statistics.
//!
//! A [`Plan`] is an immutable binary join tree; children are shared through
//! `Arc`, so memo entries of completed levels can be referenced concurrently
//! by later levels without copying. The [`MemoTable`] keeps one map per set
//! size: once a level is complete it is frozen (sorted for deterministic
//! iteration) and never touched again, which is what lets workers of the next
//! level read it without synchronization.
//!
//! Candidate replacement uses one global tie-break rule — lower cost wins,
//! exact ties fall back to the smaller left child set, then the smaller right
//! child set — so the surviving plan for a set is independent of the order in
//! which candidates arrive (and therefore of worker count).

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use crate::costmodel::{estimate_cardinality, join_cost, CostModelConfig};
use crate::error::Error;
use crate::querygraph::QueryGraph;
use crate::relset::RelSet;

/// A join-tree node: which relations it covers, the estimated output size,
/// the accumulated cost, and the operator shape.
#[derive(Debug, Clone)]
pub struct Plan {
    pub set: RelSet,
    pub cardinality: f64,
    pub cost: f64,
    pub node: PlanNode,
}

#[derive(Debug, Clone)]
pub enum PlanNode {
    /// A base-relation scan.
    Leaf(usize),
    /// An inner join of two disjoint subplans.
    Join { left: Arc<Plan>, right: Arc<Plan> },
}

impl Plan {
    /// Scan of one base relation: cost 0, cardinality after selections.
    pub fn leaf(relation: usize, g: &QueryGraph) -> Plan {
        let set = RelSet::singleton(g.n(), relation);
        let cardinality = estimate_cardinality(&set, g);
        Plan { set, cardinality, cost: 0.0, node: PlanNode::Leaf(relation) }
    }

    /// Join of two disjoint subplans with canonically computed cardinality
    /// and cost.
    pub fn join(left: Arc<Plan>, right: Arc<Plan>, g: &QueryGraph, cfg: &CostModelConfig) -> Plan {
        let set = left.set.union(&right.set);
        let cardinality = estimate_cardinality(&set, g);
        let cost = join_cost(&left, &right, g, cfg);
        Plan { set, cardinality, cost, node: PlanNode::Join { left, right } }
    }

    /// Join with precomputed values; the enumerators use this to avoid
    /// re-deriving the joint cardinality per split.
    pub(crate) fn join_parts(
        left: Arc<Plan>,
        right: Arc<Plan>,
        cardinality: f64,
        cost: f64,
    ) -> Plan {
        let set = left.set.union(&right.set);
        Plan { set, cardinality, cost, node: PlanNode::Join { left, right } }
    }

    pub fn leaf_count(&self) -> usize {
        match &self.node {
            PlanNode::Leaf(_) => 1,
            PlanNode::Join { left, right } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn join_count(&self) -> usize {
        match &self.node {
            PlanNode::Leaf(_) => 0,
            PlanNode::Join { left, right } => 1 + left.join_count() + right.join_count(),
        }
    }

    /// Nested parenthesized form, e.g. `((R0 ⋈ R2) ⋈ R1)`.
    pub fn expr(&self, g: &QueryGraph) -> String {
        match &self.node {
            PlanNode::Leaf(i) => g.relations()[*i].name.clone(),
            PlanNode::Join { left, right } => {
                format!("({} ⋈ {})", left.expr(g), right.expr(g))
            }
        }
    }

    /// Recomputes the tree bottom-up and checks every structural invariant:
    /// leaves are zero-cost singletons, joins cover disjoint valid join
    /// pairs, and stored cardinalities and costs equal the canonical
    /// recomputation bit for bit. Returns the first violation found.
    pub fn validate(&self, g: &QueryGraph, cfg: &CostModelConfig) -> Result<(), String> {
        match &self.node {
            PlanNode::Leaf(i) => {
                if self.set != RelSet::singleton(g.n(), *i) {
                    return Err(format!("leaf {i} carries set {:?}", self.set));
                }
                if self.cost != 0.0 {
                    return Err(format!("leaf {i} has nonzero cost {}", self.cost));
                }
                let want = estimate_cardinality(&self.set, g);
                if self.cardinality.to_bits() != want.to_bits() {
                    return Err(format!(
                        "leaf {i} cardinality {} != estimated {want}",
                        self.cardinality
                    ));
                }
            }
            PlanNode::Join { left, right } => {
                left.validate(g, cfg)?;
                right.validate(g, cfg)?;
                if !left.set.is_disjoint(&right.set) {
                    return Err(format!(
                        "join operands overlap: {:?} vs {:?}",
                        left.set, right.set
                    ));
                }
                if self.set != left.set.union(&right.set) {
                    return Err(format!("join set {:?} is not the union of its children", self.set));
                }
                if !crate::querygraph::is_ccp_pair(&left.set, &right.set, g) {
                    return Err(format!(
                        "join ({:?}, {:?}) is not a valid join pair",
                        left.set, right.set
                    ));
                }
                let want_card = estimate_cardinality(&self.set, g);
                if self.cardinality.to_bits() != want_card.to_bits() {
                    return Err(format!(
                        "join {:?} cardinality {} != estimated {want_card}",
                        self.set, self.cardinality
                    ));
                }
                let want_cost = join_cost(left, right, g, cfg);
                if self.cost.to_bits() != want_cost.to_bits() {
                    return Err(format!(
                        "join {:?} cost {} != recomputed {want_cost}",
                        self.set, self.cost
                    ));
                }
            }
        }
        Ok(())
    }
}

/// True when `candidate` wins over `incumbent` under the global tie-break
/// rule: lower cost, then smaller left child set, then smaller right child
/// set. The rule is a total order over distinct candidates for the same set,
/// so the winner does not depend on arrival order.
pub fn candidate_beats(candidate: &Plan, incumbent: &Plan) -> bool {
    if candidate.cost != incumbent.cost {
        return candidate.cost < incumbent.cost;
    }
    fn children(p: &Plan) -> Option<(&RelSet, &RelSet)> {
        match &p.node {
            PlanNode::Leaf(_) => None,
            PlanNode::Join { left, right } => Some((&left.set, &right.set)),
        }
    }
    match (children(candidate), children(incumbent)) {
        (Some((cl, cr)), Some((il, ir))) => (cl, cr) < (il, ir),
        // A leaf only ever competes with itself (singleton sets have exactly
        // one plan), so nothing to replace.
        _ => false,
    }
}

/// Counters and timing for one optimizer run.
///
/// `evaluated_counter` counts every enumerated candidate join pair;
/// `ccp_counter` counts the subset that passed all validity checks, which is
/// a property of the query alone and therefore identical across algorithms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub evaluated_counter: u64,
    pub ccp_counter: u64,
    pub elapsed: Duration,
    pub timed_out: bool,
}

/// Best-plan-per-set table, organized one map per set size.
///
/// Levels are frozen as they complete: `entries_of_size` exposes a sorted,
/// immutable snapshot that later levels iterate deterministically.
pub struct MemoTable {
    maps: Vec<HashMap<RelSet, Arc<Plan>>>,
    sorted: Vec<Vec<(RelSet, Arc<Plan>)>>,
}

impl MemoTable {
    /// An empty table for queries over `n` relations (levels `1..=n`).
    pub fn new(n: usize) -> Self {
        MemoTable {
            maps: (0..=n).map(|_| HashMap::new()).collect(),
            sorted: (0..=n).map(|_| Vec::new()).collect(),
        }
    }

    /// Best known plan for exactly the set `s`.
    pub fn get(&self, s: &RelSet) -> Option<&Arc<Plan>> {
        self.maps.get(s.cardinality()).and_then(|m| m.get(s))
    }

    /// Installs `candidate` if it beats the incumbent for its set (or there
    /// is none); returns whether the entry changed.
    pub fn memo_update(&mut self, candidate: Plan) -> bool {
        let size = candidate.set.cardinality();
        debug_assert!(size >= 1 && size < self.maps.len());
        match self.maps[size].entry(candidate.set.clone()) {
            std::collections::hash_map::Entry::Vacant(slot) => {
                slot.insert(Arc::new(candidate));
                true
            }
            std::collections::hash_map::Entry::Occupied(mut slot) => {
                if candidate_beats(&candidate, slot.get()) {
                    slot.insert(Arc::new(candidate));
                    true
                } else {
                    false
                }
            }
        }
    }

    /// Freezes a completed level into a sorted snapshot.
    pub fn freeze_level(&mut self, size: usize) {
        let mut entries: Vec<(RelSet, Arc<Plan>)> =
            self.maps[size].iter().map(|(k, v)| (k.clone(), Arc::clone(v))).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        self.sorted[size] = entries;
    }

    /// Sorted snapshot of a frozen level (empty if the level was never
    /// frozen or has no entries).
    pub fn entries_of_size(&self, size: usize) -> &[(RelSet, Arc<Plan>)] {
        &self.sorted[size]
    }

    /// Number of memoized sets across all levels.
    pub fn len(&self) -> usize {
        self.maps.iter().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the full join tree for `s`.
    ///
    /// Children are embedded in each entry when it is inserted, so the
    /// returned tree is exactly the chain of memo entries that produced it;
    /// a miss means the dynamic program never completed this set.
    pub fn extract_tree(&self, s: &RelSet) -> Result<Arc<Plan>, Error> {
        self.get(s).cloned().ok_or_else(|| Error::MissingSubplan { set: format!("{s:?}") })
    }
}
