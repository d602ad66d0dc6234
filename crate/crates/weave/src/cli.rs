//! The `weave` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use weave_core::graph::{import_reference_graph, validate_graph, WorkflowGraph};
use weave_core::library::EntryKind;
use weave_core::review::{budget_warnings, default_policies, parse_policies, review_with, StopReason, Thresholds};
use weave_core::runtime::{ExecutorRegistry, NodeResult, Outcome, Runtime, Script, ScriptedExecutor};
use weave_core::sandbox::{profile_repository, synthesize_sandbox, SandboxError, ScriptedBackend, DEFAULT_BUILD_ROUNDS};
use weave_core::synthesis::Synthesizer;
use weave_core::task::{parse_task_spec, validate_constraints};
use weave_core::canonical::to_canonical_string;

use crate::remote::{RemoteExecutor, ENDPOINT_ENV};
use crate::report::RunReport;
use crate::runner::ThreadedRunner;
use crate::setup::SetupExecutor;
use crate::store::{add_entry, load_library};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "weave", version, about = "Synthesize, run and repair multi-agent workflow graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a workflow graph from a task specification and a library.
    Synthesize {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reference graph for a task resource, as `ID=PATH`.
        #[arg(long = "reference", value_name = "ID=PATH")]
        references: Vec<String>,
    },
    /// Execute a graph with evidence-guided repair.
    Run(RunArgs),
    /// Check a graph file and print its validation report.
    Validate { graph: PathBuf },
    /// Import an external agent graph as a skeleton.
    Import {
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize a sandbox for a repository from its metadata.
    Wrap {
        metadata: PathBuf,
        /// Scripted build backend; builds succeed at once when omitted.
        #[arg(long)]
        backend: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BUILD_ROUNDS)]
        max_rounds: u32,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Manage a library directory.
    #[command(subcommand)]
    Library(LibraryCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExecutorMode {
    Scripted,
    Remote,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
    /// Executor script keyed by node id (scripted mode).
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ExecutorMode::Scripted)]
    pub executor: ExecutorMode,
    /// Override the task budget (cost units).
    #[arg(long)]
    pub budget: Option<i64>,
    #[arg(long)]
    pub max_repair_rounds: Option<i64>,
    #[arg(long)]
    pub policies: Option<PathBuf>,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long, default_value = "weave-run")]
    pub out_dir: PathBuf,
    /// Seconds to wait for each remote call.
    #[arg(long, default_value_t = 120)]
    pub timeout: u64,
}

#[derive(Debug, Subcommand)]
pub enum LibraryCommand {
    /// Register the entry described by a JSON file.
    Add {
        #[arg(long)]
        library: PathBuf,
        entry: PathBuf,
    },
    /// List entries, optionally of one kind.
    List {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        kind: Option<String>,
    },
}

/// An error that ends the command: exit code plus the line for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("Unreadable: {}: {e}", path.display())))
}

/// Write `text` plus a final newline, creating parent directories.
pub fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::input(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, format!("{text}\n")).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Run one parsed command and return its exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Synthesize { spec, library, out, references } => cmd_synthesize(&spec, &library, &out, &references),
        Command::Run(args) => cmd_run(&args),
        Command::Validate { graph } => cmd_validate(&graph),
        Command::Import { reference, out } => cmd_import(&reference, &out),
        Command::Wrap { metadata, backend, max_rounds, out_dir } => {
            cmd_wrap(&metadata, backend.as_deref(), max_rounds, &out_dir)
        }
        Command::Library(LibraryCommand::Add { library, entry }) => cmd_library_add(&library, &entry),
        Command::Library(LibraryCommand::List { library, kind }) => cmd_library_list(&library, kind.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn cmd_synthesize(spec_path: &Path, library_dir: &Path, out: &Path, references: &[String]) -> Result<i32, Failure> {
    let spec = parse_task_spec(&read(spec_path)?).map_err(|e| Failure::input(e.to_string()))?;
    let report = validate_constraints(&spec.constraints);
    if !report.is_empty() {
        return Err(Failure::input(format!("InvalidConstraint: {}", report.to_string().trim_end())));
    }
    let library = load_library(library_dir).map_err(|e| Failure::input(e.to_string()))?;
    let mut synth = Synthesizer::new(&library);
    for r in references {
        let (id, path) = r
            .split_once('=')
            .ok_or_else(|| Failure::input(format!("MalformedDocument: reference `{r}` is not ID=PATH")))?;
        let skeleton = import_reference_graph(&read(Path::new(path))?).map_err(|e| Failure::input(e.to_string()))?;
        synth = synth.with_reference(id, skeleton);
    }
    let graph = synth.synthesize(&spec).map_err(|e| Failure::input(e.to_string()))?;
    write_file(out, &graph.to_canonical())?;
    println!("wrote {} ({} nodes, {} edges)", out.display(), graph.nodes.len(), graph.edges.len());
    Ok(EXIT_OK)
}

fn cmd_validate(path: &Path) -> Result<i32, Failure> {
    let graph = WorkflowGraph::from_json(&read(path)?).map_err(|e| Failure::input(e.to_string()))?;
    let report = validate_graph(&graph);
    print!("{report}");
    Ok(if report.is_empty() { EXIT_OK } else { EXIT_INPUT })
}

fn cmd_import(reference: &Path, out: &Path) -> Result<i32, Failure> {
    let skeleton = import_reference_graph(&read(reference)?).map_err(|e| Failure::input(e.to_string()))?;
    write_file(out, &skeleton.to_canonical())?;
    println!("wrote {} ({} nodes, {} edges)", out.display(), skeleton.nodes.len(), skeleton.edges.len());
    Ok(EXIT_OK)
}

fn cmd_wrap(metadata: &Path, backend: Option<&Path>, max_rounds: u32, out_dir: &Path) -> Result<i32, Failure> {
    let profile = profile_repository(&read(metadata)?).map_err(|e| Failure::input(e.to_string()))?;
    let mut backend = match backend {
        Some(p) => ScriptedBackend::from_json(&read(p)?).map_err(|e| Failure::input(e.to_string()))?,
        None => ScriptedBackend::default(),
    };
    let (spec, report, code) = match synthesize_sandbox(&profile, &mut backend, max_rounds) {
        Ok((spec, report)) => (spec, report, EXIT_OK),
        Err(SandboxError::BuildExhausted(inner)) => {
            let (spec, report) = *inner;
            (spec, report, EXIT_FAILURE)
        }
        Err(e) => return Err(Failure::input(e.to_string())),
    };
    write_file(&out_dir.join("sandbox.json"), &spec.to_canonical())?;
    write_file(&out_dir.join("build_report.json"), &report.to_canonical())?;
    let outcome = if code == EXIT_OK { "success" } else { "BuildExhausted" };
    println!("{outcome}: rounds={} revision={}", report.rounds.len(), spec.revision);
    Ok(code)
}

fn cmd_library_add(library: &Path, entry: &Path) -> Result<i32, Failure> {
    let id = add_entry(library, entry).map_err(|e| Failure::input(format!("{}: {e}", e.code())))?;
    println!("{id}");
    Ok(EXIT_OK)
}

fn cmd_library_list(library: &Path, kind: Option<&str>) -> Result<i32, Failure> {
    let library = load_library(library).map_err(|e| Failure::input(e.to_string()))?;
    let kind = match kind {
        Some(k) => Some(
            EntryKind::ALL
                .into_iter()
                .find(|e| e.as_str() == k)
                .ok_or_else(|| Failure::input(format!("unknown entry kind `{k}`")))?,
        ),
        None => None,
    };
    for e in library.entries().filter(|e| kind.is_none_or(|k| e.kind == k)) {
        println!("{}\t{}\t{}", e.id, e.kind.as_str(), e.description);
    }
    Ok(EXIT_OK)
}

fn cmd_run(args: &RunArgs) -> Result<i32, Failure> {
    let graph = WorkflowGraph::from_json(&read(&args.graph)?).map_err(|e| Failure::input(e.to_string()))?;
    let report = validate_graph(&graph);
    if !report.is_empty() {
        return Err(Failure::input(format!("InvalidGraph:\n{}", report.to_string().trim_end())));
    }
    let mut spec = parse_task_spec(&read(&args.spec)?).map_err(|e| Failure::input(e.to_string()))?;
    if let Some(b) = args.budget {
        spec.constraints.budget = Some(b);
    }
    if let Some(r) = args.max_repair_rounds {
        spec.constraints.max_repair_rounds = r;
    }
    let report = validate_constraints(&spec.constraints);
    if !report.is_empty() {
        return Err(Failure::input(format!("InvalidConstraint: {}", report.to_string().trim_end())));
    }
    let policies = match &args.policies {
        Some(p) => parse_policies(&read(p)?).map_err(|e| Failure::input(e.to_string()))?,
        None => default_policies(),
    };
    let thresholds = match &args.thresholds {
        Some(p) => Thresholds::from_json(&read(p)?).map_err(|e| Failure::input(e.to_string()))?,
        None => Thresholds::default(),
    };

    let mut registry = match args.executor {
        ExecutorMode::Scripted => {
            let script = match &args.script {
                Some(p) => Script::from_json(&read(p)?)
                    .map_err(|e| Failure::input(format!("MalformedDocument: {}: {e}", p.display())))?,
                None => Script::default(),
            };
            ExecutorRegistry::with_fallback(Arc::new(ScriptedExecutor::new(script)))
        }
        ExecutorMode::Remote => {
            let remote = RemoteExecutor::from_env(Duration::from_secs(args.timeout))
                .ok_or_else(|| Failure::input(format!("{ENDPOINT_ENV} is not set")))?;
            ExecutorRegistry::with_fallback(Arc::new(remote))
        }
    };
    let setup = Arc::new(SetupExecutor::new(&spec, ScriptedBackend::default(), DEFAULT_BUILD_ROUNDS));
    for binding in SetupExecutor::bindings() {
        registry.bind(binding, setup.clone());
    }

    let runner = ThreadedRunner::new();
    let mut runtime = Runtime::with_runner(&registry, &runner);
    let outcome = review_with(&mut runtime, &graph, &spec, &policies, &thresholds)
        .map_err(|e| Failure::input(e.to_string()))?;

    let dir = &args.out_dir;
    let graph_path = dir.join("graph.json");
    let trace_path = dir.join("trace.json");
    let patches_path = dir.join("patches.json");
    write_file(&graph_path, &graph.to_canonical())?;
    write_file(&trace_path, &outcome.final_trace.to_canonical())?;
    write_file(&patches_path, &to_canonical_string(&outcome.patches).expect("patches serialize"))?;
    for (node, result) in &outcome.final_trace.node_results {
        if let NodeResult::Ok { artifact } = result {
            let text = to_canonical_string(artifact).expect("artifacts serialize");
            write_file(&dir.join("artifacts").join(format!("{node}.json")), &text)?;
        }
    }

    let task_id = args.spec.file_stem().map_or_else(|| "task".to_string(), |s| s.to_string_lossy().into_owned());
    let summaries = outcome.final_trace.summaries();
    let run_report = RunReport {
        task_id,
        outcome: outcome.final_trace.outcome,
        stop_reason: outcome.stop_reason,
        rounds_used: outcome.rounds_used,
        total_cost: outcome.final_trace.ledger.total,
        stage_timings: runner.stage_timings(),
        decisions: outcome.decisions.clone(),
        budget_warnings: budget_warnings(&summaries, &thresholds),
        graph_path,
        trace_path,
        patches_path,
    };
    let text = run_report.to_string();
    write_file(&dir.join("report.txt"), text.trim_end())?;
    print!("{text}");

    Ok(match (outcome.stop_reason, outcome.final_trace.outcome) {
        (_, Outcome::BudgetExhausted) => EXIT_BUDGET,
        (StopReason::ValidationSucceeded, Outcome::Success) => EXIT_OK,
        _ => EXIT_FAILURE,
    })
}
