//! Deterministic synthetic query generators and the on-disk query format.
//!
//! Five topologies: `star` (one fact relation, dimensions joined to it),
//! `snowflake` (dimensions normalized into a balanced tree of bounded
//! depth), `chain`, `clique`, and `randomwalk` (a random walk over a seeded
//! preferential-attachment schema, returning the induced — possibly cyclic —
//! subgraph of the visited relations).
//!
//! Generation is pure in the seed: the same [`GeneratorConfig`] always
//! produces the identical graph, bit for bit, on any platform. Randomness is
//! drawn in one fixed order (structure, then cardinalities by relation
//! index, then selection factors by relation index) from a seeded
//! [`ChaCha8Rng`].
//!
//! Join selectivities are not random: every edge models a PK–FK join and
//! gets selectivity `1 / cardinality(key side)`. Star and snowflake
//! dimension relations additionally carry a selection factor drawn uniformly
//! from `[0.05, 1.0]`, so that different join orders cost differently.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::querygraph::{EdgeInfo, QueryGraph, RelationInfo};
use crate::Result;

/// Query-graph shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    Star,
    Snowflake,
    Chain,
    Clique,
    RandomWalk,
}

impl Topology {
    pub const ALL: [Topology; 5] =
        [Topology::Star, Topology::Snowflake, Topology::Chain, Topology::Clique, Topology::RandomWalk];

    pub fn name(self) -> &'static str {
        match self {
            Topology::Star => "star",
            Topology::Snowflake => "snowflake",
            Topology::Chain => "chain",
            Topology::Clique => "clique",
            Topology::RandomWalk => "randomwalk",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" => Ok(Topology::Star),
            "snowflake" => Ok(Topology::Snowflake),
            "chain" => Ok(Topology::Chain),
            "clique" => Ok(Topology::Clique),
            "randomwalk" => Ok(Topology::RandomWalk),
            other => Err(Error::InvalidConfig(format!(
                "unknown topology {other:?} (expected star, snowflake, chain, clique, or randomwalk)"
            ))),
        }
    }
}

/// Everything that determines a generated graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub topology: Topology,
    pub n_rels: usize,
    /// Maximum dimension-tree depth; snowflake only, must lie in `[2, 4]`.
    pub depth: usize,
    pub seed: u64,
    /// Base cardinalities are drawn log-uniformly from this inclusive range.
    pub cardinality_range: (f64, f64),
    /// Size of the schema graph the random walk runs on; randomwalk only.
    pub schema_size: usize,
}

impl GeneratorConfig {
    pub fn new(topology: Topology, n_rels: usize, seed: u64) -> Self {
        GeneratorConfig {
            topology,
            n_rels,
            depth: 4,
            seed,
            cardinality_range: (10.0, 1_000_000.0),
            schema_size: 56,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_rels < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_rels: need at least 2 relations, got {}",
                self.n_rels
            )));
        }
        if self.topology == Topology::Snowflake && !(2..=4).contains(&self.depth) {
            return Err(Error::InvalidConfig(format!(
                "depth: snowflake depth must lie in [2, 4], got {}",
                self.depth
            )));
        }
        let (low, high) = self.cardinality_range;
        if !(low >= 1.0 && high >= low && high.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cardinality_range: need 1 <= low <= high < inf, got [{low}, {high}]"
            )));
        }
        if self.topology == Topology::RandomWalk {
            if self.schema_size < self.n_rels {
                return Err(Error::InvalidConfig(format!(
                    "schema_size: walk cannot visit {} distinct relations in a schema of {}",
                    self.n_rels, self.schema_size
                )));
            }
            if self.schema_size < 2 {
                return Err(Error::InvalidConfig("schema_size: need at least 2".into()));
            }
        }
        Ok(())
    }
}

/// An edge under construction: endpoints plus which side carries the primary
/// key (its cardinality determines the join selectivity).
struct FkEdge {
    a: usize,
    b: usize,
    key_side: usize,
}

impl FkEdge {
    fn new(a: usize, b: usize, key_side: usize) -> Self {
        debug_assert!(key_side == a || key_side == b);
        FkEdge { a, b, key_side }
    }
}

/// Generates the graph described by `cfg`. Deterministic in the seed.
pub fn generate(cfg: &GeneratorConfig) -> Result<QueryGraph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_rels;
    let edges = match cfg.topology {
        // Dimensions hold the keys the fact relation references.
        Topology::Star => (1..n).map(|i| FkEdge::new(0, i, i)).collect(),
        Topology::Snowflake => snowflake_edges(n, cfg.depth),
        Topology::Chain => (0..n - 1).map(|i| FkEdge::new(i, i + 1, i + 1)).collect(),
        Topology::Clique => {
            let mut e = Vec::with_capacity(n * (n - 1) / 2);
            for u in 0..n {
                for v in u + 1..n {
                    e.push(FkEdge::new(u, v, v));
                }
            }
            e
        }
        Topology::RandomWalk => random_walk_edges(n, cfg.schema_size, &mut rng)?,
    };

    let (low, high) = cfg.cardinality_range;
    let (ln_low, ln_high) = (low.ln(), high.ln());
    let cards: Vec<f64> = (0..n).map(|_| rng.gen_range(ln_low..=ln_high).exp()).collect();

    let with_selections = matches!(cfg.topology, Topology::Star | Topology::Snowflake);
    let relations = (0..n)
        .map(|i| RelationInfo {
            name: format!("R{i}"),
            base_cardinality: cards[i].max(1.0),
            selection_factor: if with_selections && i > 0 { rng.gen_range(0.05..=1.0) } else { 1.0 },
        })
        .collect();

    let edges = edges
        .into_iter()
        .map(|e| EdgeInfo {
            u: e.a.min(e.b),
            v: e.a.max(e.b),
            selectivity: 1.0 / cards[e.key_side].max(1.0),
        })
        .collect();

    QueryGraph::new(relations, edges)
}

/// Root fact relation 0; dimensions assigned breadth-first with the smallest
/// fan-out that fits `n − 1` of them within `depth` levels. Children hold
/// the keys their parents reference.
fn snowflake_edges(n: usize, depth: usize) -> Vec<FkEdge> {
    let need = (n - 1) as u64;
    let mut fanout = 1u64;
    while capacity(fanout, depth) < need {
        fanout += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    let mut queue = std::collections::VecDeque::from([(0usize, 0usize)]);
    let mut next = 1;
    while let Some((parent, level)) = queue.pop_front() {
        if level == depth {
            continue;
        }
        for _ in 0..fanout {
            if next == n {
                return edges;
            }
            edges.push(FkEdge::new(parent, next, next));
            queue.push_back((next, level + 1));
            next += 1;
        }
    }
    debug_assert_eq!(next, n, "fan-out was chosen to fit all relations");
    edges
}

/// Nodes a balanced tree of the given fan-out can hold below its root.
fn capacity(fanout: u64, depth: usize) -> u64 {
    let mut total = 0u64;
    let mut level = 1u64;
    for _ in 0..depth {
        level = level.saturating_mul(fanout);
        total = total.saturating_add(level);
    }
    total
}

/// Builds a seeded preferential-attachment PK–FK schema, walks it until
/// `n` distinct relations have been visited, and returns the induced
/// subgraph with relations renumbered in first-visit order.
fn random_walk_edges(n: usize, schema_size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<FkEdge>> {
    // Schema: each new relation references two distinct existing ones,
    // chosen proportionally to degree (one slot per edge endpoint), which
    // skews degrees the way FK hub tables do.
    let mut schema: Vec<FkEdge> = vec![FkEdge::new(0, 1, 0)];
    let mut endpoint_slots: Vec<usize> = vec![0, 1];
    for t in 2..schema_size {
        let first = endpoint_slots[rng.gen_range(0..endpoint_slots.len())];
        let second = loop {
            let candidate = endpoint_slots[rng.gen_range(0..endpoint_slots.len())];
            if candidate != first {
                break candidate;
            }
        };
        for target in [first, second] {
            schema.push(FkEdge::new(target, t, target));
            endpoint_slots.extend([target, t]);
        }
    }

    let mut adjacency = vec![Vec::new(); schema_size];
    for e in &schema {
        adjacency[e.a].push(e.b);
        adjacency[e.b].push(e.a);
    }

    let mut order = Vec::with_capacity(n);
    let mut index_of = vec![usize::MAX; schema_size];
    let mut current = rng.gen_range(0..schema_size);
    index_of[current] = 0;
    order.push(current);
    // The schema is connected, so the walk visits everything eventually;
    // the step bound only guards against misuse at absurd sizes.
    for _ in 0..50_000_000u64 {
        if order.len() == n {
            let edges = schema
                .iter()
                .filter(|e| index_of[e.a] != usize::MAX && index_of[e.b] != usize::MAX)
                .map(|e| FkEdge::new(index_of[e.a], index_of[e.b], index_of[e.key_side]))
                .collect();
            return Ok(edges);
        }
        current = adjacency[current][rng.gen_range(0..adjacency[current].len())];
        if index_of[current] == usize::MAX {
            index_of[current] = order.len();
            order.push(current);
        }
    }
    Err(Error::InvalidConfig(
        "randomwalk: walk failed to collect the requested relations".into(),
    ))
}

// ---------------------------------------------------------------------------
// On-disk format.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct QueryFile {
    relations: Vec<RelationRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
struct RelationRecord {
    name: String,
    cardinality: f64,
    selectivity: f64,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    left: usize,
    right: usize,
    selectivity: f64,
}

/// Parses and validates a query file from raw bytes.
///
/// Format: UTF-8 JSON, `{"relations": [{"name", "cardinality",
/// "selectivity"}...], "edges": [{"left", "right", "selectivity"}...]}`.
/// Relations are indexed by array position; edges require `left < right`.
pub fn parse_query(bytes: &[u8]) -> Result<QueryGraph> {
    let file: QueryFile = serde_json::from_slice(bytes)?;
    let relations = file
        .relations
        .into_iter()
        .map(|r| RelationInfo {
            name: r.name,
            base_cardinality: r.cardinality,
            selection_factor: r.selectivity,
        })
        .collect();
    let edges = file
        .edges
        .into_iter()
        .map(|e| EdgeInfo { u: e.left, v: e.right, selectivity: e.selectivity })
        .collect();
    QueryGraph::new(relations, edges)
}

/// Reads a query file from disk.
pub fn read_query(path: &Path) -> Result<QueryGraph> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_query(&bytes)
}

/// Serializes a graph to the query-file JSON (pretty-printed, full float
/// precision: reading it back yields a bit-identical graph).
pub fn query_to_json(g: &QueryGraph) -> String {
    let file = QueryFile {
        relations: g
            .relations()
            .iter()
            .map(|r| RelationRecord {
                name: r.name.clone(),
                cardinality: r.base_cardinality,
                selectivity: r.selection_factor,
            })
            .collect(),
        edges: g
            .edges()
            .iter()
            .map(|e| EdgeRecord { left: e.u, right: e.v, selectivity: e.selectivity })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("query files serialize infallibly");
    text.push('\n');
    text
}

/// Writes a query file to disk.
pub fn write_query(g: &QueryGraph, path: &Path) -> Result<()> {
    std::fs::write(path, query_to_json(g)).map_err(|e| Error::io(path, e))
}
