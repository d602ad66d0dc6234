use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::Value;
use weave_core::graph::{stage_index, topological_stages, Phase, WorkflowGraph};
use weave_core::runtime::{
    ExecutionTrace, ExecutorRegistry, NodeResult, Outcome, Runtime, Script, ScriptedExecutor, SequentialRunner,
};
use weave_core::sandbox::ScriptedBackend;
use weave_core::synthesis::Synthesizer;
use weave_core::task::{parse_task_spec, TaskSpecification};
use weave::runner::ThreadedRunner;
use weave::setup::SetupExecutor;
use weave::store::load_library;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn read(rel: &str) -> String {
    fs::read_to_string(fixture(rel)).unwrap()
}

fn load(scenario: &str) -> (TaskSpecification, WorkflowGraph) {
    let spec = parse_task_spec(&read(&format!("{scenario}/spec.json"))).unwrap();
    let library = load_library(&fixture(&format!("{scenario}/library"))).unwrap();
    let graph = Synthesizer::new(&library).synthesize(&spec).unwrap();
    (spec, graph)
}

fn registry(spec: &TaskSpecification, scenario: &str, backend: ScriptedBackend) -> ExecutorRegistry {
    let script = Script::from_json(&read(&format!("{scenario}/script.json"))).unwrap();
    let mut reg = ExecutorRegistry::with_fallback(Arc::new(ScriptedExecutor::new(script)));
    let setup = Arc::new(SetupExecutor::new(spec, backend, 3));
    for b in SetupExecutor::bindings() {
        reg.bind(b, setup.clone());
    }
    reg
}

fn phases_by_stage(graph: &WorkflowGraph) -> Vec<Vec<Phase>> {
    topological_stages(graph)
        .unwrap()
        .iter()
        .map(|stage| stage.iter().map(|id| graph.node(id).unwrap().phase).collect())
        .collect()
}

#[test]
fn serial_scenario_runs_through_every_phase() {
    let (spec, graph) = load("serial");
    let labels: Vec<&str> = phases_by_stage(&graph).iter().map(|s| s[0].as_str()).collect();
    assert_eq!(
        labels,
        ["profiling", "sandbox", "registration", "execution", "broker", "execution", "integration", "reporting"]
    );
    let reg = registry(&spec, "serial", ScriptedBackend::default());
    let trace = Runtime::new(&reg).execute(&graph, &spec).unwrap();
    assert_eq!(trace.outcome, Outcome::Success);
    let handed = trace.node_results["broker_tissue_agent_gene_agent"].artifact().unwrap();
    assert_eq!(handed["genes"].as_array().unwrap().len(), 53);
}

#[test]
fn parallel_scenario_joins_two_typed_branches() {
    let (spec, graph) = load("parallel");
    let stages = topological_stages(&graph).unwrap();
    let index = stage_index(&stages);
    assert_eq!(index["seurat"], index["signac"]);
    let reg = registry(&spec, "parallel", ScriptedBackend::default());
    let trace = Runtime::new(&reg).execute(&graph, &spec).unwrap();
    assert_eq!(trace.outcome, Outcome::Success);
    let into_join: Vec<&str> =
        trace.messages.iter().filter(|m| m.receiver == "evaluator_3").map(|m| m.sender.as_str()).collect();
    assert_eq!(into_join, ["broker_seurat_evaluator_3", "broker_signac_evaluator_3"]);
}

#[test]
fn threaded_and_sequential_traces_agree() {
    for scenario in ["serial", "parallel"] {
        let (spec, graph) = load(scenario);
        let reg = registry(&spec, scenario, ScriptedBackend::default());
        let threaded = ThreadedRunner::new();
        let a = Runtime::with_runner(&reg, &threaded).execute(&graph, &spec).unwrap();
        let b = Runtime::with_runner(&reg, &SequentialRunner).execute(&graph, &spec).unwrap();
        assert_eq!(a.to_canonical(), b.to_canonical());
        assert_eq!(threaded.stage_timings().len(), topological_stages(&graph).unwrap().len());
    }
}

#[test]
fn setup_chain_reports_the_sandbox_build() {
    let (spec, graph) = load("serial");
    let backend = ScriptedBackend::from_json(&read("sandbox/fail_once.json")).unwrap();
    let reg = registry(&spec, "serial", backend);
    let trace = Runtime::new(&reg).execute(&graph, &spec).unwrap();
    let NodeResult::Ok { artifact } = &trace.node_results["build_sandboxes"] else {
        panic!("sandbox stage failed: {:?}", trace.node_results["build_sandboxes"]);
    };
    let sandboxes = artifact["sandboxes"].as_array().unwrap();
    assert_eq!(sandboxes.len(), 2);
    for s in sandboxes {
        assert_eq!(s["rounds"], 2);
        assert_eq!(s["spec"]["revision"], 1);
        let deps: Vec<&str> = s["spec"]["dependency_list"].as_array().unwrap().iter().map(|d| d.as_str().unwrap()).collect();
        assert!(deps.contains(&"leidenalg"));
    }
    let bindings = trace.node_results["register_agents"].artifact().unwrap();
    let ids: Vec<&Value> = bindings["bindings"].as_array().unwrap().iter().map(|b| &b["binding"]).collect();
    assert_eq!(ids, ["external:tissue_agent", "external:gene_agent"]);
}

#[test]
fn setup_failure_blocks_the_external_nodes() {
    let (spec, graph) = load("serial");
    let backend = ScriptedBackend::from_json(&read("sandbox/always_fail.json")).unwrap();
    let reg = registry(&spec, "serial", backend);
    let trace: ExecutionTrace = Runtime::new(&reg).execute(&graph, &spec).unwrap();
    assert_eq!(trace.outcome, Outcome::Failure);
    assert!(matches!(trace.node_results["build_sandboxes"], NodeResult::Failed { .. }));
    assert!(!trace.node_results.get("tissue_agent").is_some_and(NodeResult::is_ok));
}
