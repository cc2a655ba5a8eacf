//! Fuzzes the query-file JSON parser: arbitrary bytes must either be
//! rejected with an error or produce a validated graph that survives a
//! serialize/parse round trip bit-identically.

#![no_main]

use libfuzzer_sys::fuzz_target;

use joinopt::workload::{parse_query, query_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(graph) = parse_query(data) else { return };
    let rewritten = query_to_json(&graph);
    let reparsed = parse_query(rewritten.as_bytes())
        .expect("serializing an accepted graph must yield an accepted file");
    assert_eq!(graph.n(), reparsed.n());
    assert_eq!(graph.edges().len(), reparsed.edges().len());
    for (a, b) in graph.relations().iter().zip(reparsed.relations()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.base_cardinality.to_bits(), b.base_cardinality.to_bits());
        assert_eq!(a.selection_factor.to_bits(), b.selection_factor.to_bits());
    }
    for (a, b) in graph.edges().iter().zip(reparsed.edges()) {
        assert_eq!((a.u, a.v), (b.u, b.v));
        assert_eq!(a.selectivity.to_bits(), b.selectivity.to_bits());
    }
});
