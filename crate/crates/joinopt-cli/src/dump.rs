//! JSON rendering of optimizer output for the `optimize` subcommand.

use joinopt::planmemo::{Plan, PlanNode, RunStats};
use joinopt::querygraph::QueryGraph;
use serde_json::{json, Value};

/// Nested plan tree: leaves are `{"relation", "cardinality"}`, joins add
/// `"left"`, `"right"`, and `"cost"`.
pub fn plan_json(plan: &Plan, g: &QueryGraph) -> Value {
    match &plan.node {
        PlanNode::Leaf(i) => json!({
            "relation": g.relations()[*i].name,
            "cardinality": plan.cardinality,
        }),
        PlanNode::Join { left, right } => json!({
            "left": plan_json(left, g),
            "right": plan_json(right, g),
            "cardinality": plan.cardinality,
            "cost": plan.cost,
        }),
    }
}

/// The whole `optimize` document. A timed-out run has no plan, cost, or
/// cardinality — only counters and timing.
pub fn optimize_json(outcome: Option<(&Plan, &QueryGraph)>, stats: &RunStats) -> Value {
    let (plan, cost, cardinality, expr) = match outcome {
        Some((plan, g)) => (
            plan_json(plan, g),
            json!(plan.cost),
            json!(plan.cardinality),
            json!(plan.expr(g)),
        ),
        None => (Value::Null, Value::Null, Value::Null, Value::Null),
    };
    json!({
        "plan": plan,
        "expr": expr,
        "cost": cost,
        "cardinality": cardinality,
        "evaluated_pairs": stats.evaluated_counter,
        "ccp_pairs": stats.ccp_counter,
        "opt_time_ms": stats.elapsed.as_secs_f64() * 1e3,
        "timed_out": stats.timed_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use joinopt::costmodel::CostModelConfig;
    use joinopt::dpexact::mpdp;
    use joinopt::fixtures;
    use std::time::Duration;

    #[test]
    fn dump_mirrors_the_plan_tree() {
        let g = fixtures::chain(3);
        let cfg = CostModelConfig::hash_join();
        let result = mpdp(&g, &cfg, 1, Duration::MAX).unwrap();
        let doc = optimize_json(Some((&result.plan, &g)), &result.stats);
        assert_eq!(doc["cost"], json!(result.plan.cost));
        assert_eq!(doc["timed_out"], json!(false));
        assert!(doc["plan"]["left"].is_object());
        assert_eq!(doc["evaluated_pairs"], json!(result.stats.evaluated_counter));
        let rendered = doc["expr"].as_str().unwrap();
        assert_eq!(rendered, result.plan.expr(&g));
    }

    #[test]
    fn timed_out_dump_has_null_plan() {
        let stats = RunStats { timed_out: true, ..RunStats::default() };
        let doc = optimize_json(None, &stats);
        assert!(doc["plan"].is_null());
        assert!(doc["cost"].is_null());
        assert_eq!(doc["timed_out"], json!(true));
    }
}
