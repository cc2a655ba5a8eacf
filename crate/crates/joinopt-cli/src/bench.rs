//! Benchmark rows and the normalized report derived from them.
//!
//! The CSV layer is intentionally dumb: one self-describing row per run,
//! append-safe, re-runnable. All aggregation (per-query normalization,
//! per-algorithm means) happens at read time in [`summarize`], so the raw
//! measurements stay lossless.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// The exact column set of the benchmark CSV, in serialization order.
pub const CSV_HEADER: &str =
    "algo,query_id,n_rels,topology,workers,cost_kind,opt_time_ms,plan_cost,evaluated_pairs,ccp_pairs,timed_out";

/// One optimizer run. `plan_cost` is empty when the run timed out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub algo: String,
    pub query_id: String,
    pub n_rels: usize,
    pub topology: String,
    pub workers: usize,
    pub cost_kind: String,
    pub opt_time_ms: f64,
    pub plan_cost: Option<f64>,
    pub evaluated_pairs: u64,
    pub ccp_pairs: u64,
    pub timed_out: bool,
}

/// Append records, writing the header only when the file is new or empty.
pub fn append_records(path: &Path, records: &[BenchRecord]) -> Result<()> {
    let write_header = match std::fs::metadata(path) {
        Ok(meta) => meta.len() == 0,
        Err(_) => true,
    };
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if write_header {
        out.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a whole benchmark CSV back.
pub fn read_records(path: &Path) -> Result<Vec<BenchRecord>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        bail!("{}: unexpected header {header:?}", path.display());
    }
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// Parse records from raw CSV bytes (the fuzzing entry point for the
/// benchmark format).
pub fn parse_records(bytes: &[u8]) -> Result<Vec<BenchRecord>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// Per-algorithm aggregate over one CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoSummary {
    pub algo: String,
    pub runs: usize,
    pub timeouts: usize,
    /// Mean of `plan_cost / best plan_cost for the same query`; queries where
    /// this algorithm timed out are excluded.
    pub mean_normalized_cost: f64,
    pub mean_opt_time_ms: f64,
}

/// Normalize costs so the best completed plan of each `(query_id, cost_kind)`
/// group counts as 1.0, then average per algorithm. Ordered by mean
/// normalized cost, best first.
pub fn summarize(records: &[BenchRecord]) -> Vec<AlgoSummary> {
    let mut best: HashMap<(&str, &str), f64> = HashMap::new();
    for r in records {
        if let Some(cost) = r.plan_cost {
            let slot = best.entry((&r.query_id, &r.cost_kind)).or_insert(f64::INFINITY);
            *slot = slot.min(cost);
        }
    }
    struct Acc {
        runs: usize,
        timeouts: usize,
        normalized_sum: f64,
        normalized_count: usize,
        time_sum: f64,
    }
    let mut by_algo: HashMap<&str, Acc> = HashMap::new();
    for r in records {
        let acc = by_algo.entry(&r.algo).or_insert(Acc {
            runs: 0,
            timeouts: 0,
            normalized_sum: 0.0,
            normalized_count: 0,
            time_sum: 0.0,
        });
        acc.runs += 1;
        acc.timeouts += r.timed_out as usize;
        acc.time_sum += r.opt_time_ms;
        if let Some(cost) = r.plan_cost {
            let denom = best[&(r.query_id.as_str(), r.cost_kind.as_str())];
            // A zero-cost optimum (single join under c_out with an empty
            // result) would make the ratio meaningless; count it as parity.
            let ratio = if denom > 0.0 { cost / denom } else { 1.0 };
            acc.normalized_sum += ratio;
            acc.normalized_count += 1;
        }
    }
    let mut summaries: Vec<AlgoSummary> = by_algo
        .into_iter()
        .map(|(algo, acc)| AlgoSummary {
            algo: algo.to_string(),
            runs: acc.runs,
            timeouts: acc.timeouts,
            mean_normalized_cost: if acc.normalized_count > 0 {
                acc.normalized_sum / acc.normalized_count as f64
            } else {
                f64::NAN
            },
            mean_opt_time_ms: if acc.runs > 0 { acc.time_sum / acc.runs as f64 } else { f64::NAN },
        })
        .collect();
    summaries.sort_by(|a, b| {
        a.mean_normalized_cost
            .total_cmp(&b.mean_normalized_cost)
            .then_with(|| a.algo.cmp(&b.algo))
    });
    summaries
}

/// Render the summary as an aligned text table.
pub fn render_report(summaries: &[AlgoSummary], out: &mut impl std::io::Write) -> Result<()> {
    writeln!(
        out,
        "{:<10} {:>6} {:>9} {:>16} {:>14}",
        "algo", "runs", "timeouts", "mean_norm_cost", "mean_time_ms"
    )?;
    for s in summaries {
        writeln!(
            out,
            "{:<10} {:>6} {:>9} {:>16.4} {:>14.3}",
            s.algo, s.runs, s.timeouts, s.mean_normalized_cost, s.mean_opt_time_ms
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn record(algo: &str, query: &str, cost: Option<f64>, timed_out: bool) -> BenchRecord {
        BenchRecord {
            algo: algo.into(),
            query_id: query.into(),
            n_rels: 10,
            topology: "star".into(),
            workers: 1,
            cost_kind: "hash_join".into(),
            opt_time_ms: 1.5,
            plan_cost: cost,
            evaluated_pairs: 100,
            ccp_pairs: 50,
            timed_out,
        }
    }

    #[test]
    fn append_then_read_round_trips_and_keeps_one_header() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        let first = vec![record("mpdp", "q0", Some(42.0), false)];
        let second = vec![record("dpsub", "q0", Some(43.0), false), record("dpsub", "q1", None, true)];
        append_records(&path, &first).unwrap();
        append_records(&path, &second).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(text.matches("algo,").count(), 1, "header must appear once");
        assert!(text.contains("dpsub,q1,10,star,1,hash_join,1.5,,100,50,true"));

        let back = read_records(&path).unwrap();
        assert_eq!(back, [first, second].concat());
    }

    #[test]
    fn summary_normalizes_against_the_best_plan_per_query() {
        let records = vec![
            record("mpdp", "q0", Some(10.0), false),
            record("goo", "q0", Some(15.0), false),
            record("mpdp", "q1", Some(4.0), false),
            record("goo", "q1", Some(4.0), false),
        ];
        let summary = summarize(&records);
        assert_eq!(summary[0].algo, "mpdp");
        assert_eq!(summary[0].mean_normalized_cost, 1.0);
        assert_eq!(summary[1].algo, "goo");
        assert_eq!(summary[1].mean_normalized_cost, (1.5 + 1.0) / 2.0);
    }

    #[test]
    fn timed_out_runs_do_not_skew_the_cost_mean() {
        let records = vec![
            record("mpdp", "q0", Some(10.0), false),
            record("dpsub", "q0", None, true),
        ];
        let summary = summarize(&records);
        let dpsub = summary.iter().find(|s| s.algo == "dpsub").unwrap();
        assert_eq!(dpsub.timeouts, 1);
        assert!(dpsub.mean_normalized_cost.is_nan());
    }

    #[test]
    fn malformed_rows_are_rejected() {
        assert!(parse_records(b"algo,nope\nx,1\n").is_err());
        let good = format!("{CSV_HEADER}\nmpdp,q0,10,star,1,hash_join,1.5,42.0,100,50,false\n");
        let rows = parse_records(good.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].plan_cost, Some(42.0));
    }
}
