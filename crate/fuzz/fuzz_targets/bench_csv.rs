//! Fuzzes the benchmark CSV parser: arbitrary bytes must either be rejected
//! with an error or produce rows that survive a write/parse round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;

use joinopt_cli::bench::parse_records;

/// Equal bits, except that every NaN counts as every other NaN: the CSV
/// layer canonicalizes NaN payloads and signs on write.
fn same_float(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fuzz_target!(|data: &[u8]| {
    let Ok(records) = parse_records(data) else { return };
    let mut out = csv::Writer::from_writer(Vec::new());
    for r in &records {
        out.serialize(r).expect("accepted rows must serialize");
    }
    let bytes = out.into_inner().expect("writing to a Vec cannot fail");
    let reparsed =
        parse_records(&bytes).expect("serializing accepted rows must yield an accepted file");
    assert_eq!(records.len(), reparsed.len());
    for (a, b) in records.iter().zip(&reparsed) {
        assert_eq!(a.algo, b.algo);
        assert_eq!(a.query_id, b.query_id);
        assert_eq!(a.n_rels, b.n_rels);
        assert_eq!(a.topology, b.topology);
        assert_eq!(a.workers, b.workers);
        assert_eq!(a.cost_kind, b.cost_kind);
        assert!(same_float(a.opt_time_ms, b.opt_time_ms));
        match (a.plan_cost, b.plan_cost) {
            (None, None) => {}
            (Some(x), Some(y)) => assert!(same_float(x, y)),
            _ => panic!("plan_cost presence changed across the round trip"),
        }
        assert_eq!(a.evaluated_pairs, b.evaluated_pairs);
        assert_eq!(a.ccp_pairs, b.ccp_pairs);
        assert_eq!(a.timed_out, b.timed_out);
    }
});
