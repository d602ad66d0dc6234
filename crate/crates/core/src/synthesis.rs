//! Task-to-graph synthesis: decomposition, topology, grounding, interfaces.
//!
//! The goal is split into clauses on connectives. Each clause becomes one
//! node: an external node when a repository resource matches it at least as
//! well as any library skill or tool, an evaluator when it starts with an
//! evaluation verb, an agent otherwise. Repositories bring a setup chain
//! (profiling, sandbox construction, registration) in front of the first
//! clauses; several clauses bring an integrator; every graph ends in a
//! reporter. Brokers are inserted wherever adjacent schemas differ.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{
    ArtifactError, SchemaRegistry, EXECUTOR_BINDINGS_SCHEMA, FREE_TEXT_SCHEMA, INTEGRATED_RESULT_SCHEMA,
    REPORT_SCHEMA, REPOSITORY_PROFILES_SCHEMA, SANDBOX_SPECS_SCHEMA,
};
use crate::graph::{validate_graph, Edge, GraphSkeleton, Node, NodeKind, Phase, WorkflowGraph};
use crate::library::{cosine_similarity, EntryKind, Library, LibraryEntry, DEFAULT_TOP_K};
use crate::report::ValidationReport;
use crate::task::{ResourceKind, ResourceRef, TaskSpecification};
use crate::text::{split_clauses, tokens, Connective};

/// Binding of every language-model node; the registry decides what runs it.
pub const AGENT_BINDING: &str = "agent";
/// Brokers run inside the engine and are never resolved.
pub const BROKER_BINDING: &str = "broker";
pub const PROFILE_BINDING: &str = "builtin:profile_repositories";
pub const SANDBOX_BINDING: &str = "builtin:build_sandboxes";
pub const REGISTER_BINDING: &str = "builtin:register_agents";

/// Binding of the external node wrapping repository `resource`.
pub fn external_binding(resource: &str) -> String {
    format!("external:{resource}")
}

const EVALUATION_VERBS: [&str; 5] = ["evaluate", "assess", "compare", "validate", "score"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("NoExecutableTopology: {0}")]
    NoExecutableTopology(String),
    #[error(transparent)]
    Schema(#[from] ArtifactError),
    #[error("MissingReference: reference graph `{0}` was not supplied")]
    MissingReference(String),
    #[error("InvalidGraph: {0}")]
    InvalidGraph(ValidationReport),
}

impl SynthesisError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::NoExecutableTopology(_) => "NoExecutableTopology",
            Self::Schema(ArtifactError::UnmappableSchemas { .. }) => "UnmappableSchemas",
            Self::Schema(ArtifactError::UnknownSchema(_)) => "UnknownSchema",
            Self::Schema(_) => "InvalidSchema",
            Self::MissingReference(_) => "MissingReference",
            Self::InvalidGraph(_) => "InvalidGraph",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgoal {
    /// 1-based position in the goal.
    pub id: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalDecomposition {
    pub subgoals: Vec<Subgoal>,
    /// (earlier, later) pairs.
    pub dependencies: BTreeSet<(usize, usize)>,
}

impl SubgoalDecomposition {
    fn predecessors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.dependencies.iter().filter(move |(_, b)| *b == id).map(|(a, _)| *a)
    }

    fn has_successor(&self, id: usize) -> bool {
        self.dependencies.iter().any(|(a, _)| *a == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Linear,
    Parallel,
    Mixed,
}

/// Split the goal into subgoals. Clauses joined by `and` form a group;
/// `then` or `;` starts a new group that depends on every member of the one
/// before it.
pub fn decompose_goal(spec: &TaskSpecification) -> SubgoalDecomposition {
    let mut out = SubgoalDecomposition::default();
    let mut previous: Vec<usize> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for (i, (connective, text)) in split_clauses(&spec.goal).into_iter().enumerate() {
        let id = i + 1;
        if connective == Connective::Then {
            previous = core::mem::take(&mut current);
        }
        out.dependencies.extend(previous.iter().map(|p| (*p, id)));
        current.push(id);
        out.subgoals.push(Subgoal { id, text });
    }
    if out.subgoals.is_empty() {
        out.subgoals.push(Subgoal { id: 1, text: spec.goal.trim().to_string() });
    }
    out
}

/// Linear when the dependencies order every pair of subgoals, parallel when
/// there are none, mixed otherwise.
pub fn select_topology(decomposition: &SubgoalDecomposition) -> TopologyKind {
    let ids: Vec<usize> = decomposition.subgoals.iter().map(|s| s.id).collect();
    if ids.len() <= 1 {
        return TopologyKind::Linear;
    }
    if decomposition.dependencies.is_empty() {
        return TopologyKind::Parallel;
    }
    let mut reach = decomposition.dependencies.clone();
    loop {
        let extra: Vec<(usize, usize)> = reach
            .iter()
            .flat_map(|(a, b)| reach.iter().filter(move |(c, _)| c == b).map(move |(_, d)| (*a, *d)))
            .filter(|p| !reach.contains(p))
            .collect();
        if extra.is_empty() {
            break;
        }
        reach.extend(extra);
    }
    let total = ids.iter().enumerate().all(|(i, a)| {
        ids[i + 1..].iter().all(|b| reach.contains(&(*a, *b)) || reach.contains(&(*b, *a)))
    });
    if total {
        TopologyKind::Linear
    } else {
        TopologyKind::Mixed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthesisOptions {
    /// Skills and tools attached per node, per kind.
    pub k: usize,
    /// Whether a clause nothing in the library matches may still become a
    /// plain agent node.
    pub allow_default_agent: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { k: DEFAULT_TOP_K, allow_default_agent: true }
    }
}

/// Synthesize with default options and no reference graphs.
pub fn synthesize(spec: &TaskSpecification, library: &Library) -> Result<WorkflowGraph, SynthesisError> {
    Synthesizer::new(library).synthesize(spec)
}

#[derive(Debug, Clone)]
pub struct Synthesizer<'a> {
    library: &'a Library,
    options: SynthesisOptions,
    references: BTreeMap<String, GraphSkeleton>,
}

impl<'a> Synthesizer<'a> {
    pub fn new(library: &'a Library) -> Self {
        Self { library, options: SynthesisOptions::default(), references: BTreeMap::new() }
    }

    pub fn with_options(mut self, options: SynthesisOptions) -> Self {
        self.options = options;
        self
    }

    /// Supply the imported skeleton for the reference-graph resource `id`.
    pub fn with_reference(mut self, id: impl Into<String>, skeleton: GraphSkeleton) -> Self {
        self.references.insert(id.into(), skeleton);
        self
    }

    pub fn synthesize(&self, spec: &TaskSpecification) -> Result<WorkflowGraph, SynthesisError> {
        let registry = self.registry();
        let mut graph = match spec.resources_of(ResourceKind::ReferenceGraph).next() {
            Some(r) => {
                let skeleton = self.references.get(&r.id).ok_or_else(|| SynthesisError::MissingReference(r.id.clone()))?;
                self.skeleton_graph(skeleton)
            }
            None => self.goal_graph(spec)?,
        };
        for s in registry.schemas.values() {
            graph.protocol.schemas.insert(s.id.clone(), s.clone());
        }
        let subgoal_nodes: Vec<String> = graph
            .nodes
            .iter()
            .filter(|n| matches!(n.phase, Phase::Execution | Phase::Evaluation))
            .map(|n| n.id.clone())
            .collect();
        synthesize_interfaces(&mut graph, &registry)?;
        for id in &subgoal_nodes {
            ground_node(&mut graph, id, self.library, self.options.k);
        }
        // only the schemas the graph actually uses
        let used: BTreeSet<String> = graph
            .edges
            .iter()
            .map(|e| e.schema.clone())
            .chain(graph.nodes.iter().flat_map(|n| n.input_schema.iter().chain(n.output_schema.iter()).cloned()))
            .collect();
        graph.protocol.schemas.retain(|id, _| used.contains(id));
        graph.normalize();
        let report = validate_graph(&graph);
        if !report.is_empty() {
            return Err(SynthesisError::InvalidGraph(report));
        }
        Ok(graph)
    }

    /// Builtin schemas overlaid with the library's own.
    fn registry(&self) -> SchemaRegistry {
        let mut reg = SchemaRegistry::with_builtins();
        for s in self.library.schemas.schemas.values() {
            reg.schemas.insert(s.id.clone(), s.clone());
        }
        reg.renames.extend(self.library.schemas.renames.iter().cloned());
        reg
    }

    fn best_score(&self, text: &str, kind: EntryKind) -> f64 {
        self.library.top_k(text, kind, 1).first().map_or(0.0, |h| h.score)
    }

    /// Library entry describing the wrapped form of a repository.
    fn external_entry(&self, resource: &ResourceRef) -> Option<&'a LibraryEntry> {
        self.library
            .of_kind(EntryKind::ExternalAgent)
            .find(|e| e.provenance == resource.locator || e.id == resource.id)
    }

    fn repository_score(&self, clause: &str, resource: &ResourceRef) -> f64 {
        let mut text = format!("{} {}", resource.description, resource.id);
        if let Some(entry) = self.external_entry(resource) {
            text.push(' ');
            text.push_str(&entry.description);
        }
        cosine_similarity(clause, &text)
    }

    /// Input and output schema of an agent, taken from its best tool.
    fn agent_schemas(&self, role: &str) -> (Option<String>, Option<String>, Option<String>) {
        match self.library.top_k(role, EntryKind::Tool, 1).into_iter().find(|h| h.score > 0.0) {
            Some(hit) => {
                let tool = self.library.get(&hit.id).expect("hit comes from the library");
                (tool.input_schema.clone(), tool.output_schema.clone(), Some(tool.id.clone()))
            }
            None => (None, Some(FREE_TEXT_SCHEMA.to_string()), None),
        }
    }

    fn subgoal_node(&self, spec: &TaskSpecification, subgoal: &Subgoal, used: &BTreeSet<String>) -> Result<Node, SynthesisError> {
        let text = subgoal.text.as_str();
        let first_word = tokens(text).into_iter().next().unwrap_or_default();
        let library_score =
            self.best_score(text, EntryKind::Skill).max(self.best_score(text, EntryKind::Tool));
        let repository = spec
            .resources_of(ResourceKind::Repository)
            .map(|r| (self.repository_score(text, r), r))
            .fold(None::<(f64, &ResourceRef)>, |best, (s, r)| match best {
                Some((b, _)) if b >= s => best,
                _ => Some((s, r)),
            })
            .filter(|(s, _)| *s > 0.0 && *s >= library_score);

        let unique = |base: String| if used.contains(&base) { format!("{base}_{}", subgoal.id) } else { base };
        let mut instruction = text.to_string();
        if !spec.context.trim().is_empty() {
            instruction.push_str("\nContext: ");
            instruction.push_str(spec.context.trim());
        }

        if EVALUATION_VERBS.contains(&first_word.as_str()) {
            let (input, output, tool) = self.agent_schemas(text);
            let mut node = Node::new(format!("evaluator_{}", subgoal.id), NodeKind::Evaluator)
                .with_instruction(instruction)
                .with_binding(AGENT_BINDING)
                .with_phase(Phase::Evaluation);
            node.input_schema = input;
            node.output_schema = output;
            node.active_tool = tool;
            return Ok(node);
        }
        if let Some((_, resource)) = repository {
            let entry = self.external_entry(resource);
            let mut node = Node::new(unique(resource.id.clone()), NodeKind::External)
                .with_instruction(instruction)
                .with_binding(external_binding(&resource.id));
            node.input_schema = entry.and_then(|e| e.input_schema.clone());
            node.output_schema =
                entry.and_then(|e| e.output_schema.clone()).or_else(|| Some(FREE_TEXT_SCHEMA.to_string()));
            return Ok(node);
        }
        if library_score <= 0.0 && !self.options.allow_default_agent {
            return Err(SynthesisError::NoExecutableTopology(format!("nothing in the library matches `{text}`")));
        }
        let (input, output, tool) = self.agent_schemas(text);
        let mut node = Node::new(format!("agent_{}", subgoal.id), NodeKind::Agent)
            .with_instruction(instruction)
            .with_binding(AGENT_BINDING);
        node.input_schema = input;
        node.output_schema = output;
        node.active_tool = tool;
        Ok(node)
    }

    fn goal_graph(&self, spec: &TaskSpecification) -> Result<WorkflowGraph, SynthesisError> {
        let decomposition = decompose_goal(spec);
        let mut graph = WorkflowGraph::new();
        let mut used = BTreeSet::new();
        let mut ids: BTreeMap<usize, String> = BTreeMap::new();
        for subgoal in &decomposition.subgoals {
            let node = self.subgoal_node(spec, subgoal, &used)?;
            used.insert(node.id.clone());
            ids.insert(subgoal.id, node.id.clone());
            graph.add_node(node, subgoal.text.clone());
        }
        for (a, b) in &decomposition.dependencies {
            graph.add_edge(&ids[a], &ids[b], "");
        }
        let roots: Vec<&String> =
            decomposition.subgoals.iter().filter(|s| decomposition.predecessors(s.id).next().is_none()).map(|s| &ids[&s.id]).collect();
        let sinks: Vec<&String> =
            decomposition.subgoals.iter().filter(|s| !decomposition.has_successor(s.id)).map(|s| &ids[&s.id]).collect();

        if graph.nodes.iter().any(|n| n.kind == NodeKind::External) {
            let setup = [
                ("profile_repositories", "repository profiling", PROFILE_BINDING, Phase::Profiling, None, REPOSITORY_PROFILES_SCHEMA),
                ("build_sandboxes", "sandbox construction", SANDBOX_BINDING, Phase::SandboxConstruction, Some(REPOSITORY_PROFILES_SCHEMA), SANDBOX_SPECS_SCHEMA),
                ("register_agents", "agent registration", REGISTER_BINDING, Phase::AgentRegistration, Some(SANDBOX_SPECS_SCHEMA), EXECUTOR_BINDINGS_SCHEMA),
            ];
            for (id, role, binding, phase, input, output) in setup {
                let node = Node::new(id, NodeKind::Tool)
                    .with_instruction(role)
                    .with_binding(binding)
                    .with_phase(phase)
                    .with_schemas(input, Some(output));
                graph.add_node(node, role);
            }
            graph.add_edge("profile_repositories", "build_sandboxes", "");
            graph.add_edge("build_sandboxes", "register_agents", "");
            for root in &roots {
                graph.add_edge("register_agents", root, "");
                graph.node_mut(root).expect("root exists").input_schema = None;
            }
        }

        let last = if decomposition.subgoals.len() > 1 {
            let parts: Vec<&str> = sinks.iter().map(|s| s.as_str()).collect();
            let node = Node::new("integrator", NodeKind::Integrator)
                .with_instruction(format!("combine the results of {}", parts.join(", ")))
                .with_binding(AGENT_BINDING)
                .with_phase(Phase::Integration)
                .with_schemas(None, Some(INTEGRATED_RESULT_SCHEMA));
            graph.add_node(node, "result integration");
            for sink in &sinks {
                graph.add_edge(sink, "integrator", "");
            }
            alloc::vec![String::from("integrator")]
        } else {
            sinks.iter().map(|s| (*s).clone()).collect()
        };
        let reporter = Node::new("reporter", NodeKind::Agent)
            .with_instruction(format!("write the final report as {}", spec.constraints.output_format))
            .with_binding(AGENT_BINDING)
            .with_phase(Phase::Reporting)
            .with_schemas(None, Some(REPORT_SCHEMA));
        graph.add_node(reporter, "report writing");
        for id in &last {
            graph.add_edge(id, "reporter", "");
        }
        Ok(graph)
    }

    /// Nodes and edges exactly as the skeleton has them.
    fn skeleton_graph(&self, skeleton: &GraphSkeleton) -> WorkflowGraph {
        let mut graph = WorkflowGraph::new();
        for n in &skeleton.nodes {
            let (input, output, tool) = self.agent_schemas(&n.role);
            let mut node = Node::new(n.id.clone(), n.kind).with_instruction(n.role.clone()).with_binding(AGENT_BINDING);
            node.input_schema = input;
            node.output_schema = output;
            node.active_tool = tool;
            graph.add_node(node, n.role.clone());
        }
        for (a, b) in &skeleton.edges {
            graph.add_edge(a, b, "");
        }
        graph
    }
}

/// Attach the top-`k` skills and tools for `node`, scored against its role
/// text plus the schema ids on its edges. Entries scoring zero are never
/// attached. An active tool outside the top `k` takes the last tool slot.
pub fn ground_node(graph: &mut WorkflowGraph, node: &str, library: &Library, k: usize) {
    let Some(current) = graph.node(node) else {
        return;
    };
    let mut query = graph.role(node).to_string();
    for e in graph.edges.iter().filter(|e| e.from == node || e.to == node) {
        query.push(' ');
        query.push_str(&e.schema);
    }
    let active = current.active_tool.clone();
    let pick = |kind| -> Vec<String> {
        library.top_k(&query, kind, k).into_iter().filter(|h| h.score > 0.0).map(|h| h.id).collect()
    };
    let skills = pick(EntryKind::Skill);
    let mut tools = pick(EntryKind::Tool);
    match &active {
        Some(t) if k > 0 && !tools.contains(t) => {
            if tools.len() == k {
                tools.pop();
            }
            tools.push(t.clone());
        }
        _ => {}
    }
    let slot = graph.node_mut(node).expect("checked above");
    if k == 0 {
        slot.active_tool = None;
    } else if slot.active_tool.is_none() {
        slot.active_tool = tools.first().cloned();
    }
    graph.protocol.tools.extend(tools.iter().cloned());
    graph.attachments.insert(node.to_string(), skills.into_iter().chain(tools).collect());
}

/// Put the producer's output schema on every edge and insert a broker
/// wherever it differs from what the consumer expects.
pub fn synthesize_interfaces(graph: &mut WorkflowGraph, registry: &SchemaRegistry) -> Result<(), SynthesisError> {
    let edges = core::mem::take(&mut graph.edges);
    for edge in edges {
        let producer = graph.node(&edge.from).cloned();
        let consumer = graph.node(&edge.to).cloned();
        let (Some(producer), Some(consumer)) = (producer, consumer) else {
            graph.edges.push(edge);
            continue;
        };
        if producer.kind == NodeKind::Broker || consumer.kind == NodeKind::Broker {
            graph.edges.push(edge);
            continue;
        }
        let source = producer.output_schema.clone().unwrap_or_else(|| FREE_TEXT_SCHEMA.to_string());
        for id in [Some(&source), consumer.input_schema.as_ref()].into_iter().flatten() {
            let schema = registry.get(id).ok_or_else(|| ArtifactError::UnknownSchema(id.clone()))?;
            graph.protocol.schemas.insert(id.clone(), schema.clone());
        }
        match &consumer.input_schema {
            Some(target) if *target != source => {
                let mapping = registry.mapping(&source, target)?;
                let id = format!("broker_{}_{}", producer.id, consumer.id);
                let broker = Node::new(id.clone(), NodeKind::Broker)
                    .with_instruction(format!("validate `{source}` and convert it to `{target}`"))
                    .with_binding(BROKER_BINDING)
                    .with_phase(Phase::BrokerValidation)
                    .with_schemas(Some(&source), Some(target));
                graph.add_node(broker, format!("{source} to {target} conversion"));
                graph.protocol.mappings.insert(id.clone(), mapping);
                graph.edges.push(Edge::new(producer.id.clone(), id.clone(), source));
                graph.edges.push(Edge::new(id, consumer.id.clone(), target.clone()));
            }
            _ => graph.edges.push(Edge::new(edge.from, edge.to, source)),
        }
    }
    graph.normalize();
    Ok(())
}
