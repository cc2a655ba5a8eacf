//! Small deterministic graphs used across the test suites and docs.
//!
//! Unless a test needs discriminative costs, relations default to 100 rows
//! with no selection and edges to selectivity 0.1, so structural assertions
//! stay independent of the cost model.

use crate::querygraph::{EdgeInfo, QueryGraph, RelationInfo};

fn relation(i: usize, cardinality: f64, selection: f64) -> RelationInfo {
    RelationInfo {
        name: format!("R{i}"),
        base_cardinality: cardinality,
        selection_factor: selection,
    }
}

/// Builds a graph from `(u, v)` pairs with uniform parameters.
pub fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> QueryGraph {
    let relations = (0..n).map(|i| relation(i, 100.0, 1.0)).collect();
    let edges = edges
        .iter()
        .map(|&(u, v)| EdgeInfo { u: u.min(v), v: u.max(v), selectivity: 0.1 })
        .collect();
    QueryGraph::new(relations, edges).expect("fixture must be a valid graph")
}

/// Builds a graph with explicit cardinalities and per-edge selectivities.
pub fn graph_with_params(
    cards: &[f64],
    selections: &[f64],
    edges: &[(usize, usize, f64)],
) -> QueryGraph {
    let relations = cards
        .iter()
        .zip(selections)
        .enumerate()
        .map(|(i, (&c, &s))| relation(i, c, s))
        .collect();
    let edges = edges
        .iter()
        .map(|&(u, v, sel)| EdgeInfo { u: u.min(v), v: u.max(v), selectivity: sel })
        .collect();
    QueryGraph::new(relations, edges).expect("fixture must be a valid graph")
}

/// Nine relations forming two 4-cycles bridged by a 2-edge path:
/// cycle 1-2-3-4, path 4-5-9, cycle 6-7-8-9 (1-based labels; subtract one for
/// indices). Its blocks are {1,2,3,4}, {4,5}, {5,9}, {6,7,8,9} with cut
/// vertices 4, 5, and 9 — the canonical mixed cyclic/acyclic example.
pub fn bridged_cycles() -> QueryGraph {
    let labeled =
        [(1, 2), (2, 3), (3, 4), (1, 4), (4, 5), (5, 9), (6, 7), (7, 8), (8, 9), (6, 9)];
    let edges: Vec<(usize, usize)> = labeled.iter().map(|&(a, b)| (a - 1, b - 1)).collect();
    graph_from_edges(9, &edges)
}

/// An eight-relation tree: 1-2, 2-3, 2-4, 4-5, 5-6, 6-7, 6-8 (1-based labels).
pub fn branching_tree() -> QueryGraph {
    let labeled = [(1, 2), (2, 3), (2, 4), (4, 5), (5, 6), (6, 7), (6, 8)];
    let edges: Vec<(usize, usize)> = labeled.iter().map(|&(a, b)| (a - 1, b - 1)).collect();
    graph_from_edges(8, &edges)
}

/// Star: relation 0 is the hub, every other relation joins it.
pub fn star(n: usize) -> QueryGraph {
    graph_from_edges(n, &(1..n).map(|i| (0, i)).collect::<Vec<_>>())
}

/// Path 0-1-...-(n-1).
pub fn chain(n: usize) -> QueryGraph {
    graph_from_edges(n, &(1..n).map(|i| (i - 1, i)).collect::<Vec<_>>())
}

/// Complete graph on `n` relations.
pub fn clique(n: usize) -> QueryGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            edges.push((u, v));
        }
    }
    graph_from_edges(n, &edges)
}

/// Cycle 0-1-...-(n-1)-0.
pub fn cycle(n: usize) -> QueryGraph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    edges.push((0, n - 1));
    graph_from_edges(n, &edges)
}
