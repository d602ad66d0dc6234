mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::{build_dag, dag_seed, node_id, DagSeed};
use proptest::prelude::*;
use serde_json::{json, Value};
use weave_core::artifact::{broker_transform, ArtifactSchema, FieldKind, SchemaRegistry};
use weave_core::runtime::{
    aggregate_signals, record_cost, Behavior, CostLedger, Evidence, EvidenceSignal, ExecutorRegistry, NodeResult, Outcome,
    Runtime, Script, ScriptedExecutor, Severity,
};
use weave_core::task::{Constraints, TaskSpecification};

fn spec_with_budget(budget: Option<i64>) -> TaskSpecification {
    TaskSpecification {
        goal: "g".into(),
        context: String::new(),
        constraints: Constraints { budget, ..Constraints::default() },
        resources: Vec::new(),
    }
}

fn chain(n: usize) -> DagSeed {
    let pairs = n * (n - 1) / 2;
    let mut edge_bits = vec![false; pairs];
    // bit index of (a, a + 1) in row-major upper-triangle order
    let mut bit = 0;
    for a in 0..n {
        for b in a + 1..n {
            edge_bits[bit] = b == a + 1;
            bit += 1;
        }
    }
    DagSeed { nodes: n, edge_bits, tool_counts: vec![0; n] }
}

fn signal_strategy() -> impl Strategy<Value = EvidenceSignal> {
    let node = (0usize..4).prop_map(|i| format!("n{i}"));
    let evidence = prop_oneof![
        prop::option::of(0.0f64..1.0).prop_map(|confidence| Evidence::Output { confidence, note: String::new() }),
        (0u64..20, 0u64..20).prop_map(|(passed, failed)| Evidence::Test { passed, failed, note: String::new() }),
        (0u64..5).prop_map(|errors| Evidence::Tool { errors, message: String::new() }),
        (0u64..200, 1u64..100).prop_map(|(spent, budget)| Evidence::Budget { spent, budget }),
        prop::option::of("[a-c]").prop_map(|upstream| Evidence::Interface {
            upstream,
            schema: "s".into(),
            field: "f".into(),
            reason: "r".into(),
        }),
    ];
    let severity = prop_oneof![Just(Severity::Info), Just(Severity::Warn), Just(Severity::Fail)];
    (node, severity, evidence).prop_map(|(n, s, e)| EvidenceSignal::new(n, s, e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ledger_total_is_the_sum_of_recordings(records in prop::collection::vec((0usize..6, -5i64..1_000_000), 0..60)) {
        let mut ledger = CostLedger::new();
        let mut per_node: BTreeMap<String, u64> = BTreeMap::new();
        let mut total = 0u64;
        for (node, amount) in records {
            let id = format!("n{node}");
            let before = ledger.clone();
            match record_cost(ledger.clone(), &id, amount) {
                Ok(next) => {
                    prop_assert!(amount >= 0);
                    *per_node.entry(id).or_insert(0) += amount as u64;
                    total += amount as u64;
                    ledger = next;
                }
                Err(_) => {
                    prop_assert!(amount < 0);
                    prop_assert_eq!(&ledger, &before);
                }
            }
        }
        prop_assert_eq!(ledger.total, total);
        prop_assert_eq!(ledger.per_node, per_node);
    }

    #[test]
    fn aggregation_matches_a_per_node_scan(signals in prop::collection::vec(signal_strategy(), 0..40)) {
        let summaries = aggregate_signals(&signals);
        for i in 0..4 {
            let id = format!("n{i}");
            let mine: Vec<&EvidenceSignal> = signals.iter().filter(|s| s.node == id).collect();
            let Some(s) = summaries.get(&id) else {
                prop_assert!(mine.is_empty());
                continue;
            };
            let mut tool = 0;
            let mut passed = 0;
            let mut failed = 0;
            let mut violations = 0;
            let mut confidence = None;
            let mut ratio = None;
            for sig in &mine {
                match &sig.evidence {
                    Evidence::Tool { errors, .. } => tool += errors,
                    Evidence::Test { passed: p, failed: f, .. } => { passed += p; failed += f; }
                    Evidence::Interface { .. } if sig.severity == Severity::Fail => violations += 1,
                    Evidence::Output { confidence: Some(c), .. } => confidence = Some(*c),
                    Evidence::Budget { spent, budget } => ratio = Some(*spent as f64 / *budget as f64),
                    _ => {}
                }
            }
            prop_assert_eq!(s.tool_errors, tool);
            prop_assert_eq!((s.tests_passed, s.tests_failed), (passed, failed));
            prop_assert_eq!(s.interface_violations, violations);
            prop_assert_eq!(s.confidence, confidence);
            prop_assert_eq!(s.budget_ratio, ratio);
        }
    }

    #[test]
    fn broker_keeps_every_list_element(genes in prop::collection::vec("[A-Z][A-Z0-9]{1,6}", 0..120)) {
        let mut reg = SchemaRegistry::default();
        reg.insert(ArtifactSchema::new("table", [("genes", FieldKind::List(Box::new(FieldKind::Record)))], ["genes"]).unwrap()).unwrap();
        reg.insert(ArtifactSchema::new("input", [("genes", FieldKind::List(Box::new(FieldKind::Record)))], ["genes"]).unwrap()).unwrap();
        reg.add_rename("gene", "symbol");
        let mapping = reg.mapping("table", "input").unwrap();
        let rows: Vec<Value> = genes.iter().map(|g| json!({ "gene": g, "score": 1.5 })).collect();
        let out = broker_transform(&json!({ "genes": rows }), &mapping, reg.get("input").unwrap()).unwrap();
        let items = out.artifact["genes"].as_array().unwrap();
        prop_assert_eq!(items.len(), genes.len());
        for (item, gene) in items.iter().zip(&genes) {
            prop_assert_eq!(item["symbol"].as_str(), Some(gene.as_str()));
            prop_assert!(item.get("gene").is_none());
        }
        prop_assert_eq!(out.empty_lists.is_empty(), !genes.is_empty());
    }

    #[test]
    fn execution_halts_at_the_first_overflow(costs in prop::collection::vec(0u64..50, 1..12), budget in 1i64..300) {
        let g = build_dag(&chain(costs.len()));
        let mut script = Script::default();
        for (i, c) in costs.iter().enumerate() {
            script = script.node(node_id(i), [Behavior::ok(*c)]);
        }
        let registry = ExecutorRegistry::with_fallback(Arc::new(ScriptedExecutor::new(script)));
        let trace = Runtime::new(&registry).execute(&g, &spec_with_budget(Some(budget))).unwrap();

        let mut spent = 0u64;
        let mut halted_at = None;
        for (i, c) in costs.iter().enumerate() {
            spent += c;
            if spent > budget as u64 {
                halted_at = Some(i);
                break;
            }
        }
        match halted_at {
            Some(i) => {
                prop_assert_eq!(trace.outcome, Outcome::BudgetExhausted);
                prop_assert_eq!(trace.ledger.total, spent);
                prop_assert_eq!(trace.node_results.len(), i + 1);
            }
            None => {
                prop_assert_eq!(trace.outcome, Outcome::Success);
                prop_assert_eq!(trace.ledger.total, costs.iter().sum::<u64>());
            }
        }
        prop_assert_eq!(trace.ledger.total, trace.ledger.per_node.values().sum::<u64>());
    }

    #[test]
    fn messages_follow_stage_order(seed in dag_seed(15)) {
        let g = build_dag(&seed);
        let registry = ExecutorRegistry::with_fallback(Arc::new(ScriptedExecutor::new(Script::default())));
        let trace = Runtime::new(&registry).execute(&g, &spec_with_budget(None)).unwrap();
        prop_assert_eq!(trace.outcome, Outcome::Success);
        prop_assert!(trace.node_results.values().all(NodeResult::is_ok));
        prop_assert_eq!(trace.messages.len(), g.edges.len());
        let stages = weave_core::graph::stage_index(&weave_core::graph::topological_stages(&g).unwrap());
        for pair in trace.messages.windows(2) {
            prop_assert!(stages[&pair[0].receiver] <= stages[&pair[1].receiver]);
        }
        let text = trace.to_canonical();
        prop_assert_eq!(weave_core::runtime::ExecutionTrace::from_json(&text).unwrap().to_canonical(), text);
    }
}
