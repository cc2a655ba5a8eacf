//! Query join-graph representation and the graph primitives every enumerator
//! relies on: neighborhoods, reachability (`grow`), connectivity, valid
//! join-pair checks, and biconnected-component decomposition.
//!
//! A query is an undirected graph whose vertices are base relations and whose
//! edges are inner-join predicates with selectivities. Graphs are validated
//! and immutable after construction: adjacency is symmetric, edges are stored
//! sorted with `u < v`, and the whole graph must be connected (queries with
//! cross products are rejected at load).

use crate::error::Error;
use crate::relset::RelSet;

/// One base relation: a name, its row count, and the combined selectivity of
/// any single-relation predicates applied to it (1.0 when none).
#[derive(Debug, Clone, PartialEq)]
pub struct RelationInfo {
    pub name: String,
    pub base_cardinality: f64,
    pub selection_factor: f64,
}

/// One join predicate between relations `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeInfo {
    pub u: usize,
    pub v: usize,
    pub selectivity: f64,
}

/// The biconnected components (blocks) of an induced subgraph.
///
/// Every induced edge lies in exactly one block; two blocks overlap in at most
/// one vertex (a cut vertex). Blocks are listed in discovery order of the
/// depth-first search, which is deterministic for a given set.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockList {
    pub blocks: Vec<RelSet>,
}

/// An immutable, validated, connected query join graph.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGraph {
    relations: Vec<RelationInfo>,
    edges: Vec<EdgeInfo>,
    adjacency: Vec<RelSet>,
}

impl QueryGraph {
    /// Validates and builds a graph.
    ///
    /// Rejects: empty relation lists, cardinalities below 1, selection
    /// factors or selectivities outside `(0, 1]`, self-loops, edges with
    /// `u >= v` or out-of-range endpoints, duplicate edges, and disconnected
    /// graphs. Edges are stored sorted by `(u, v)`; that order is the
    /// canonical one used by cardinality estimation.
    pub fn new(relations: Vec<RelationInfo>, edges: Vec<EdgeInfo>) -> Result<Self, Error> {
        Self::build(relations, edges, 1.0)
    }

    /// Constructor for internally derived graphs (contracted composites),
    /// whose node cardinalities are intermediate-result estimates and may
    /// legitimately fall below one row.
    pub(crate) fn composite(
        relations: Vec<RelationInfo>,
        edges: Vec<EdgeInfo>,
    ) -> Result<Self, Error> {
        Self::build(relations, edges, f64::MIN_POSITIVE)
    }

    fn build(
        relations: Vec<RelationInfo>,
        mut edges: Vec<EdgeInfo>,
        min_cardinality: f64,
    ) -> Result<Self, Error> {
        if relations.is_empty() {
            return Err(Error::InvalidQuery("relations: must be nonempty".into()));
        }
        let n = relations.len();
        for (i, r) in relations.iter().enumerate() {
            if !(r.base_cardinality >= min_cardinality && r.base_cardinality.is_finite()) {
                return Err(Error::InvalidQuery(format!(
                    "relations[{i}].cardinality: must be a finite number >= {min_cardinality}, got {}",
                    r.base_cardinality
                )));
            }
            if !(r.selection_factor > 0.0 && r.selection_factor <= 1.0) {
                return Err(Error::InvalidQuery(format!(
                    "relations[{i}].selectivity: must lie in (0, 1], got {}",
                    r.selection_factor
                )));
            }
        }
        edges.sort_by_key(|e| (e.u, e.v));
        for (i, e) in edges.iter().enumerate() {
            if e.u >= e.v {
                return Err(Error::InvalidQuery(format!(
                    "edges[{i}]: requires left < right, got ({}, {})",
                    e.u, e.v
                )));
            }
            if e.v >= n {
                return Err(Error::InvalidQuery(format!(
                    "edges[{i}]: endpoint {} out of range for {n} relations",
                    e.v
                )));
            }
            if !(e.selectivity > 0.0 && e.selectivity <= 1.0) {
                return Err(Error::InvalidQuery(format!(
                    "edges[{i}].selectivity: must lie in (0, 1], got {}",
                    e.selectivity
                )));
            }
            if i > 0 && edges[i - 1].u == e.u && edges[i - 1].v == e.v {
                return Err(Error::InvalidQuery(format!(
                    "edges[{i}]: duplicate edge ({}, {})",
                    e.u, e.v
                )));
            }
        }
        let mut adjacency = vec![RelSet::empty(n); n];
        for e in &edges {
            adjacency[e.u].insert(e.v);
            adjacency[e.v].insert(e.u);
        }
        let g = QueryGraph { relations, edges, adjacency };
        let full = g.full_set();
        if n > 1 && grow(&RelSet::singleton(n, 0), &full, &g) != full {
            return Err(Error::InvalidQuery(
                "graph: must be connected (a query must not require cross products)".into(),
            ));
        }
        Ok(g)
    }

    /// Number of relations.
    pub fn n(&self) -> usize {
        self.relations.len()
    }

    pub fn relations(&self) -> &[RelationInfo] {
        &self.relations
    }

    /// Join edges, sorted by `(u, v)`.
    pub fn edges(&self) -> &[EdgeInfo] {
        &self.edges
    }

    /// Neighbor set of one relation.
    pub fn adjacency(&self, index: usize) -> &RelSet {
        &self.adjacency[index]
    }

    /// The set of all relations.
    pub fn full_set(&self) -> RelSet {
        RelSet::from_indices(self.n(), &(0..self.n()).collect::<Vec<_>>())
    }

    /// True when the graph is acyclic (it is connected by construction).
    pub fn is_tree(&self) -> bool {
        self.edges.len() == self.n() - 1
    }
}

/// Vertices adjacent to `s` but outside it.
pub fn neighbors(s: &RelSet, g: &QueryGraph) -> RelSet {
    let mut out = RelSet::empty(g.n());
    for i in s.iter() {
        out.union_with(g.adjacency(i));
    }
    out.subtract(s);
    out
}

/// All vertices of `restriction` reachable from `source` using only edges
/// whose endpoints both lie inside `restriction`.
///
/// # Panics
///
/// Panics if `source` is empty or not contained in `restriction`.
pub fn grow(source: &RelSet, restriction: &RelSet, g: &QueryGraph) -> RelSet {
    assert!(!source.is_empty(), "grow requires a nonempty source");
    assert!(source.is_subset(restriction), "grow source must lie inside the restriction");
    let mut reach = source.clone();
    let mut frontier = source.clone();
    loop {
        // Expand the frontier one hop, clipped to the restriction.
        let mut next = RelSet::empty(g.n());
        for i in frontier.iter() {
            next.union_with(g.adjacency(i));
        }
        next.intersect_with(restriction);
        next.subtract(&reach);
        if next.is_empty() {
            return reach;
        }
        reach.union_with(&next);
        frontier = next;
    }
}

/// True when the subgraph induced by `s` is connected; the empty set is not
/// connected, singletons are.
///
/// The reachability closure is seeded from the lowest-index vertex of `s` so
/// the check is deterministic.
pub fn is_connected(s: &RelSet, g: &QueryGraph) -> bool {
    match s.min_index() {
        None => false,
        Some(min) => grow(&RelSet::singleton(s.capacity(), min), s, g) == *s,
    }
}

/// True when `(sl, sr)` is a valid join pair: both sides nonempty and
/// connected, disjoint, and linked by at least one join edge.
pub fn is_ccp_pair(sl: &RelSet, sr: &RelSet, g: &QueryGraph) -> bool {
    !sl.is_empty()
        && !sr.is_empty()
        && sl.is_disjoint(sr)
        && has_cross_edge(sl, sr, g)
        && is_connected(sl, g)
        && is_connected(sr, g)
}

/// True when some join edge has one endpoint in `sl` and the other in `sr`.
pub fn has_cross_edge(sl: &RelSet, sr: &RelSet, g: &QueryGraph) -> bool {
    sl.iter().any(|i| g.adjacency(i).intersects(sr))
}

/// Biconnected components of the subgraph induced by `s` (iterative
/// Hopcroft–Tarjan). A singleton set is its own (edgeless) block, so the
/// union of blocks always equals `s`.
///
/// # Panics
///
/// Panics if `s` is empty or the induced subgraph is disconnected.
pub fn find_blocks(s: &RelSet, g: &QueryGraph) -> BlockList {
    let root = s.min_index().expect("find_blocks requires a nonempty set");
    if s.cardinality() == 1 {
        return BlockList { blocks: vec![s.clone()] };
    }

    // Depth-first search with explicit stacks: discovery/low-link numbers per
    // vertex and a stack of tree/back edges; when a finished child subtree
    // cannot reach above its parent, the edges popped down to the tree edge
    // into that child form one block.
    let n = g.n();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0usize;
    let mut blocks = Vec::new();
    let mut edge_stack: Vec<(usize, usize)> = Vec::new();

    struct Frame {
        v: usize,
        parent: usize,
        neighbors: Vec<usize>,
        next: usize,
    }
    let frame = |v: usize, parent: usize| Frame {
        v,
        parent,
        neighbors: g.adjacency(v).intersection(s).iter().collect(),
        next: 0,
    };

    let mut stack = vec![frame(root, usize::MAX)];
    disc[root] = 0;
    low[root] = 0;
    timer += 1;

    while !stack.is_empty() {
        let top = stack.last_mut().unwrap();
        let v = top.v;
        if top.next < top.neighbors.len() {
            let w = top.neighbors[top.next];
            let parent = top.parent;
            top.next += 1;
            if disc[w] == usize::MAX {
                // Tree edge: descend.
                edge_stack.push((v, w));
                disc[w] = timer;
                low[w] = timer;
                timer += 1;
                stack.push(frame(w, v));
            } else if w != parent && disc[w] < disc[v] {
                // Back edge to an ancestor.
                edge_stack.push((v, w));
                if disc[w] < low[v] {
                    low[v] = disc[w];
                }
            }
        } else {
            let done = stack.pop().unwrap();
            if let Some(parent_frame) = stack.last() {
                let (v, w) = (parent_frame.v, done.v);
                if low[w] < low[v] {
                    low[v] = low[w];
                }
                if low[w] >= disc[v] {
                    // v separates w's subtree: everything pushed since the
                    // tree edge (v, w) is one biconnected component.
                    let mut block = RelSet::empty(n);
                    while let Some((a, b)) = edge_stack.pop() {
                        block.insert(a);
                        block.insert(b);
                        if (a, b) == (v, w) {
                            break;
                        }
                    }
                    blocks.push(block);
                }
            }
        }
    }

    let mut covered = RelSet::empty(n);
    for b in &blocks {
        covered.union_with(b);
    }
    assert!(covered == *s, "find_blocks requires a connected set, got {s:?}");
    BlockList { blocks }
}

impl std::fmt::Display for BlockList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{b:?}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn neighbors_on_the_bridged_cycles_fixture() {
        let g = fixtures::bridged_cycles();
        let s = RelSet::singleton(9, 4 - 1);
        let nb = neighbors(&s, &g);
        assert_eq!(nb, RelSet::from_indices(9, &[0, 2, 4])); // labels 1, 3, 5
    }

    #[test]
    fn neighbors_of_empty_and_full_sets_are_empty() {
        let g = fixtures::bridged_cycles();
        assert!(neighbors(&RelSet::empty(9), &g).is_empty());
        assert!(neighbors(&g.full_set(), &g).is_empty());
    }

    #[test]
    fn grow_reaches_the_restricted_component() {
        let g = fixtures::bridged_cycles();
        let source = RelSet::from_indices(9, &[0, 1, 2]); // labels {1,2,3}
        let restriction = RelSet::from_indices(9, &[0, 1, 2, 3, 4, 8]); // {1,2,3,4,5,9}
        assert_eq!(grow(&source, &restriction, &g), restriction);
    }

    #[test]
    fn grow_is_a_fixpoint_on_its_own_set() {
        let g = fixtures::bridged_cycles();
        let s = RelSet::from_indices(9, &[5, 6, 7]); // labels {6,7,8}
        assert_eq!(grow(&s, &s, &g), s);
        assert_eq!(grow(&RelSet::singleton(9, 5), &s, &g), s);
    }

    #[test]
    #[should_panic(expected = "nonempty source")]
    fn grow_rejects_empty_source() {
        let g = fixtures::bridged_cycles();
        grow(&RelSet::empty(9), &g.full_set(), &g);
    }

    #[test]
    fn connectivity_matches_the_tree_fixture() {
        let t = fixtures::branching_tree();
        assert!(is_connected(&RelSet::from_indices(8, &[0, 1, 3]), &t)); // labels {1,2,4}
        assert!(is_connected(&RelSet::singleton(8, 6), &t));
        assert!(!is_connected(&RelSet::empty(8), &t));
        let g = fixtures::bridged_cycles();
        assert!(!is_connected(&RelSet::from_indices(9, &[0, 5]), &g)); // labels {1,6}
    }

    #[test]
    fn ccp_pair_examples_on_the_tree_fixture() {
        let t = fixtures::branching_tree();
        let left = RelSet::from_indices(8, &[0, 1, 3]); // labels {1,2,4}
        let right = RelSet::from_indices(8, &[4, 5]); // labels {5,6}
        assert!(is_ccp_pair(&left, &right, &t));
        let far = RelSet::from_indices(8, &[5, 6, 7]); // labels {6,7,8}
        assert!(!is_ccp_pair(&left, &far, &t), "no edge between the two sets");
        assert!(!is_ccp_pair(&left, &left, &t), "not disjoint");
    }

    #[test]
    fn blocks_of_the_bridged_cycles_fixture() {
        let g = fixtures::bridged_cycles();
        let got = find_blocks(&g.full_set(), &g);
        let expect = [
            RelSet::from_indices(9, &[0, 1, 2, 3]), // labels {1,2,3,4}
            RelSet::from_indices(9, &[3, 4]),       // {4,5}
            RelSet::from_indices(9, &[4, 8]),       // {5,9}
            RelSet::from_indices(9, &[5, 6, 7, 8]), // {6,7,8,9}
        ];
        assert_eq!(got.blocks.len(), 4);
        for b in &expect {
            assert!(got.blocks.contains(b), "missing block {b:?} in {got}");
        }
        // Blocks pairwise share at most one vertex: the cut vertices 4, 5, 9.
        for (i, a) in got.blocks.iter().enumerate() {
            for b in &got.blocks[i + 1..] {
                assert!(a.intersection(b).cardinality() <= 1);
            }
        }
    }

    #[test]
    fn every_tree_edge_is_its_own_block() {
        let t = fixtures::branching_tree();
        let got = find_blocks(&t.full_set(), &t);
        assert_eq!(got.blocks.len(), t.edges().len());
        for b in &got.blocks {
            assert_eq!(b.cardinality(), 2);
        }
    }

    #[test]
    fn a_clique_is_a_single_block() {
        let g = fixtures::clique(6);
        let got = find_blocks(&g.full_set(), &g);
        assert_eq!(got.blocks, vec![g.full_set()]);
    }

    #[test]
    fn singleton_sets_are_their_own_block() {
        let g = fixtures::bridged_cycles();
        let s = RelSet::singleton(9, 3);
        assert_eq!(find_blocks(&s, &g).blocks, vec![s]);
    }

    #[test]
    fn construction_rejects_invalid_inputs() {
        let rel = |name: &str| RelationInfo {
            name: name.into(),
            base_cardinality: 10.0,
            selection_factor: 1.0,
        };
        let err = QueryGraph::new(vec![rel("a"), rel("b")], vec![]).unwrap_err();
        assert!(err.to_string().contains("connected"), "{err}");
        let err = QueryGraph::new(
            vec![rel("a"), rel("b")],
            vec![EdgeInfo { u: 1, v: 1, selectivity: 0.5 }],
        )
        .unwrap_err();
        assert!(err.to_string().contains("left < right"), "{err}");
        let err = QueryGraph::new(
            vec![rel("a"), rel("b")],
            vec![EdgeInfo { u: 0, v: 1, selectivity: 0.0 }],
        )
        .unwrap_err();
        assert!(err.to_string().contains("selectivity"), "{err}");
    }
}
