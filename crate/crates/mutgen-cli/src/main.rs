//! Command-line front end for the mutation-guided test generation
//! pipeline: run a corpus end to end, dump a task's mutants, re-minimize a
//! saved suite, or re-render a report.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mutgen::bench::{
    load_corpus, render_report, run_pipeline, write_outputs, BenchmarkTask, CorpusLoad,
    EvaluationReport, RunConfig,
};
use mutgen::gateway::{BackendConfig, Gateway};
use mutgen::minimize::minimize;
use mutgen::mutation::{generate_mutants, run_mutation_testing};
use mutgen::orchestrate::{PipelineConfig, SurvivorPolicy};
use mutgen::prompt::PromptKind;
use mutgen::refine::{extract_suite, AssertionOrigin};
use mutgen::runtime::PythonRuntime;

/// Environment variable holding the bearer token for HTTP backends.
const API_KEY_VAR: &str = "MUTGEN_API_KEY";
/// Environment variable holding the default HTTP endpoint.
const ENDPOINT_VAR: &str = "MUTGEN_ENDPOINT";

#[derive(Parser)]
#[command(
    name = "mutgen",
    about = "Generate, repair, and mutation-harden unit tests for Python programs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline over a corpus and write a report.
    Run(RunArgs),
    /// Generate and print the mutants for one task.
    Mutants(MutantsArgs),
    /// Re-minimize a saved suite against a task's mutants.
    Minimize(MinimizeArgs),
    /// Render an existing report.json as text.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PromptArg {
    /// Instruction + program + test seed.
    ZeroShot,
    /// Two worked demonstrations, then the program.
    FewShot,
}

impl From<PromptArg> for PromptKind {
    fn from(arg: PromptArg) -> Self {
        match arg {
            PromptArg::ZeroShot => PromptKind::ZeroShot,
            PromptArg::FewShot => PromptKind::FewShot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    /// Replay canned completions from fixture files.
    Scripted,
    /// Chat-completions HTTP endpoint.
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// Take survivors in (line, column, operator) order.
    Ordered,
    /// Seeded uniform choice among unused survivors.
    Random,
}

impl From<PolicyArg> for SurvivorPolicy {
    fn from(arg: PolicyArg) -> Self {
        match arg {
            PolicyArg::Ordered => SurvivorPolicy::FirstInOrder,
            PolicyArg::Random => SurvivorPolicy::SeededRandom,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Corpus root: one directory per task.
    #[arg(long)]
    corpus: PathBuf,
    /// Initial prompt shape.
    #[arg(long, value_enum, default_value = "zero-shot")]
    prompt: PromptArg,
    /// Completion backend.
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendArg,
    /// Fixture directory (scripted backend).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Endpoint URL (http backend); defaults to $MUTGEN_ENDPOINT.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to HTTP backends.
    #[arg(long, default_value = "default-model")]
    model: String,
    /// Seed for randomized survivor selection.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// How the next surviving mutant is chosen.
    #[arg(long = "survivor-policy", value_enum, default_value = "ordered")]
    survivor_policy: PolicyArg,
    /// Completions requested per prompt before giving up.
    #[arg(long = "max-attempts", default_value_t = 10)]
    max_attempts: u32,
    /// Wall-clock budget per suite execution, in seconds.
    #[arg(long = "timeout-secs", default_value_t = 5)]
    timeout_secs: u64,
    /// Task-level worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Request ceiling per sliding 60-second window.
    #[arg(long = "requests-per-minute")]
    requests_per_minute: Option<u32>,
    /// Output directory for report.json, report.txt, runs/, suites/.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MutantsArgs {
    /// Corpus root: one directory per task.
    #[arg(long)]
    corpus: PathBuf,
    /// Task id (directory name) to mutate.
    #[arg(long)]
    task: String,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include full mutated sources, not just locations.
    #[arg(long, default_value_t = false)]
    sources: bool,
}

#[derive(Args)]
struct MinimizeArgs {
    /// Corpus root: one directory per task.
    #[arg(long)]
    corpus: PathBuf,
    /// Task id (directory name) the suite belongs to.
    #[arg(long)]
    task: String,
    /// Python file containing the suite (a `test()` function of asserts).
    #[arg(long)]
    suite: PathBuf,
    /// Wall-clock budget per suite execution, in seconds.
    #[arg(long = "timeout-secs", default_value_t = 5)]
    timeout_secs: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Path to a report.json produced by `run`.
    #[arg(long)]
    report: PathBuf,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Mutants(args) => mutants(args),
        Command::Minimize(args) => minimize_suite(args),
        Command::Report(args) => report(args),
    }
}

fn load_task(corpus: &CorpusLoad, task_id: &str) -> anyhow::Result<BenchmarkTask> {
    corpus
        .tasks
        .iter()
        .find(|t| t.task_id == task_id)
        .cloned()
        .ok_or_else(|| anyhow!("task {task_id:?} not found in corpus"))
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let rt = PythonRuntime::discover().context("locating a Python interpreter")?;
    let corpus = load_corpus(&rt, &args.corpus)?;
    for warning in &corpus.warnings {
        eprintln!("warning: {warning}");
    }
    if corpus.tasks.is_empty() {
        bail!("corpus {} contains no usable tasks", args.corpus.display());
    }

    let mut backend_config = match args.backend {
        BackendArg::Scripted => {
            let fixtures = args
                .fixtures
                .ok_or_else(|| anyhow!("--backend scripted requires --fixtures"))?;
            BackendConfig::scripted(fixtures)
        }
        BackendArg::Http => {
            let endpoint = args
                .endpoint
                .or_else(|| std::env::var(ENDPOINT_VAR).ok())
                .ok_or_else(|| anyhow!("--backend http requires --endpoint or ${ENDPOINT_VAR}"))?;
            let mut config = BackendConfig::http(endpoint, args.model.clone());
            config.api_key = std::env::var(API_KEY_VAR).ok();
            config
        }
    };
    backend_config.max_attempts = args.max_attempts;
    backend_config.requests_per_minute = args.requests_per_minute;
    let gateway = Gateway::from_config(&backend_config)?;

    let run_config = RunConfig {
        pipeline: PipelineConfig {
            prompt_kind: args.prompt.into(),
            survivor_policy: args.survivor_policy.into(),
            seed: args.seed,
            exec_timeout: Duration::from_secs(args.timeout_secs),
            demonstrations: None,
        },
        workers: args.workers,
    };

    let output = run_pipeline(&rt, &gateway, &corpus, &run_config);
    write_outputs(&args.out, &output)?;
    print!("{}", render_report(&output.report));
    println!("written: {}", args.out.join("report.json").display());
    Ok(())
}

fn mutants(args: MutantsArgs) -> anyhow::Result<()> {
    let rt = PythonRuntime::discover().context("locating a Python interpreter")?;
    let corpus = load_corpus(&rt, &args.corpus)?;
    let task = load_task(&corpus, &args.task)?;
    let mutants = generate_mutants(&rt, &task.reference)?;

    let listing: Vec<serde_json::Value> = mutants
        .iter()
        .map(|m| {
            let mut entry = serde_json::json!({
                "mutant_id": m.mutant_id,
                "operator": m.operator.code(),
                "line": m.site.line,
                "col": m.site.col,
            });
            if args.sources {
                entry["source"] = serde_json::Value::String(m.source.clone());
            }
            entry
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&serde_json::json!({
        "task_id": task.task_id,
        "total": mutants.len(),
        "mutants": listing,
    }))?;
    text.push('\n');
    match args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn minimize_suite(args: MinimizeArgs) -> anyhow::Result<()> {
    let rt = PythonRuntime::discover().context("locating a Python interpreter")?;
    let corpus = load_corpus(&rt, &args.corpus)?;
    let task = load_task(&corpus, &args.task)?;
    let timeout = Duration::from_secs(args.timeout_secs);

    let text = std::fs::read_to_string(&args.suite)
        .with_context(|| format!("reading {}", args.suite.display()))?;
    let extraction = extract_suite(&rt, &text, &task.reference.entry_name, AssertionOrigin::Initial)?
        .ok_or_else(|| anyhow!("suite file does not parse"))?;
    if extraction.suite.is_empty() {
        bail!("no assertions on {:?} found in suite file", task.reference.entry_name);
    }

    let mut mutants = generate_mutants(&rt, &task.reference)?;
    run_mutation_testing(&rt, &task.reference, &extraction.suite, &mut mutants, timeout)?;
    let minimized = minimize(&rt, &task.reference, &extraction.suite, &mutants, timeout)?;

    eprintln!(
        "kept {} of {} assertions (indices {:?})",
        minimized.suite.len(),
        extraction.suite.len(),
        minimized.kept_indices
    );
    print!("{}", minimized.suite.render());
    Ok(())
}

fn report(args: ReportArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))?;
    let parsed: EvaluationReport = serde_json::from_str(&text)?;
    print!("{}", render_report(&parsed));
    Ok(())
}
