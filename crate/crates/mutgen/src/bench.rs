//! Corpus-level evaluation: load benchmark tasks from disk, run the
//! pipeline over each one, score bug detection against buggy variants, and
//! assemble a deterministic report.
//!
//! Corpus layout on disk:
//!
//! ```text
//! <root>/<task_id>/reference.py     # program under test
//! <root>/<task_id>/buggy/<k>.py     # optional buggy variants
//! <root>/<task_id>/meta.json        # optional {"entry_name", "modules"}
//! ```
//!
//! Malformed tasks are skipped with a warning; an unreadable corpus root is
//! fatal. Report assembly is single-threaded over results sorted by task id
//! and contains no timestamps, so the same corpus, fixtures, and seed yield
//! a byte-identical `report.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::gateway::Gateway;
use crate::mutation::OperatorStats;
use crate::orchestrate::{run_task, PipelineConfig, SurvivorPolicy, TaskOutcome, TaskState};
use crate::prompt::PromptKind;
use crate::refine::TestSuite;
use crate::runtime::{InfraError, PythonRuntime, SubjectProgram};

/// Bumped whenever the shape of [`EvaluationReport`] changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

const REFERENCE_STEM: &str = "reference";
const BUGGY_DIR: &str = "buggy";
const META_FILE: &str = "meta.json";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("corpus root {path}: {source}")]
    CorpusRoot {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Infra(#[from] InfraError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Optional per-task `meta.json` contents.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TaskMeta {
    /// Entry-point function name; defaults to the task's single top-level
    /// function, or the function named like the task id.
    #[serde(default)]
    pub entry_name: Option<String>,
    /// Modules the program imports; their absence is reported as a warning
    /// at load time.
    #[serde(default)]
    pub modules: Vec<String>,
}

/// One buggy variant of a reference program. The variant defines the same
/// entry point; its suite-visible behavior differs by one seeded fault.
#[derive(Debug, Clone, Serialize)]
pub struct BuggyVariant {
    /// File stem under `buggy/`, e.g. `"1"`.
    pub variant_id: String,
    pub program: SubjectProgram,
}

/// A program under test plus everything needed to evaluate it.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkTask {
    pub task_id: String,
    pub reference: SubjectProgram,
    pub buggy_variants: Vec<BuggyVariant>,
    pub metadata: TaskMeta,
}

/// Result of [`load_corpus`]: the usable tasks plus warnings for whatever
/// had to be skipped.
#[derive(Debug)]
pub struct CorpusLoad {
    pub tasks: Vec<BenchmarkTask>,
    pub warnings: Vec<String>,
}

fn read_dir_sorted(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(path)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();
    Ok(entries)
}

/// Natural sort key for variant stems: numeric stems order numerically
/// (`2` before `10`), everything else lexicographically after them.
fn variant_key(stem: &str) -> (u8, u64, String) {
    match stem.parse::<u64>() {
        Ok(n) => (0, n, stem.to_string()),
        Err(_) => (1, 0, stem.to_string()),
    }
}

/// Load every task under `root`, sorted by task id.
///
/// A task directory must contain a parseable `reference.py` defining the
/// entry point at top level; tasks that don't are skipped with a warning.
/// Buggy variants that fail to parse or don't define the entry point are
/// skipped individually. Missing required modules produce warnings but do
/// not skip the task.
pub fn load_corpus(rt: &PythonRuntime, root: &Path) -> Result<CorpusLoad, BenchError> {
    let task_dirs = read_dir_sorted(root).map_err(|source| BenchError::CorpusRoot {
        path: root.to_path_buf(),
        source,
    })?;
    let mut tasks = Vec::new();
    let mut warnings = Vec::new();

    for dir in task_dirs {
        if !dir.is_dir() {
            continue;
        }
        let task_id = match dir.file_name().and_then(|n| n.to_str()) {
            Some(name) => name.to_string(),
            None => {
                warnings.push(format!("skipping {}: non-UTF-8 directory name", dir.display()));
                continue;
            }
        };
        match load_task(rt, &dir, &task_id, &mut warnings)? {
            Some(task) => tasks.push(task),
            None => {}
        }
    }
    tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(CorpusLoad { tasks, warnings })
}

fn load_task(
    rt: &PythonRuntime,
    dir: &Path,
    task_id: &str,
    warnings: &mut Vec<String>,
) -> Result<Option<BenchmarkTask>, BenchError> {
    let reference_path = match read_dir_sorted(dir)?.into_iter().find(|p| {
        p.is_file()
            && p.file_stem().and_then(|s| s.to_str()) == Some(REFERENCE_STEM)
            && p.extension().is_some()
    }) {
        Some(path) => path,
        None => {
            warnings.push(format!("skipping task {task_id}: no reference.<ext> file"));
            return Ok(None);
        }
    };
    let source = match fs::read_to_string(&reference_path) {
        Ok(text) => text,
        Err(err) => {
            warnings.push(format!("skipping task {task_id}: unreadable reference: {err}"));
            return Ok(None);
        }
    };

    let metadata: TaskMeta = match fs::read_to_string(dir.join(META_FILE)) {
        Ok(text) => match serde_json::from_str(&text) {
            Ok(meta) => meta,
            Err(err) => {
                warnings.push(format!("skipping task {task_id}: bad {META_FILE}: {err}"));
                return Ok(None);
            }
        },
        Err(err) if err.kind() == std::io::ErrorKind::NotFound => TaskMeta::default(),
        Err(err) => {
            warnings.push(format!("skipping task {task_id}: unreadable {META_FILE}: {err}"));
            return Ok(None);
        }
    };

    let info = rt.inspect(&source)?;
    if !info.report.ok {
        warnings.push(format!(
            "skipping task {task_id}: reference does not parse (line {})",
            info.report.first_error_line.unwrap_or(1)
        ));
        return Ok(None);
    }
    let entry_name = match &metadata.entry_name {
        Some(name) => {
            if !info.functions.iter().any(|f| f == name) {
                warnings.push(format!(
                    "skipping task {task_id}: entry {name:?} not defined in reference"
                ));
                return Ok(None);
            }
            name.clone()
        }
        None => {
            if info.functions.iter().any(|f| f == task_id) {
                task_id.to_string()
            } else if info.functions.len() == 1 {
                info.functions[0].clone()
            } else {
                warnings.push(format!(
                    "skipping task {task_id}: cannot infer entry point from {} top-level functions",
                    info.functions.len()
                ));
                return Ok(None);
            }
        }
    };

    for module in rt.missing_modules(&metadata.modules)? {
        warnings.push(format!("task {task_id}: required module {module:?} is not importable"));
    }

    let reference = SubjectProgram {
        task_id: task_id.to_string(),
        entry_name: entry_name.clone(),
        source,
    };

    let mut buggy_variants = Vec::new();
    let buggy_dir = dir.join(BUGGY_DIR);
    if buggy_dir.is_dir() {
        let mut files: Vec<PathBuf> = read_dir_sorted(&buggy_dir)?
            .into_iter()
            .filter(|p| p.is_file())
            .collect();
        files.sort_by_key(|p| {
            variant_key(p.file_stem().and_then(|s| s.to_str()).unwrap_or_default())
        });
        for path in files {
            let variant_id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let text = match fs::read_to_string(&path) {
                Ok(text) => text,
                Err(err) => {
                    warnings.push(format!(
                        "task {task_id}: skipping variant {variant_id}: unreadable: {err}"
                    ));
                    continue;
                }
            };
            let info = rt.inspect(&text)?;
            if !info.report.ok {
                warnings.push(format!(
                    "task {task_id}: skipping variant {variant_id}: does not parse"
                ));
                continue;
            }
            if !info.functions.iter().any(|f| f == &entry_name) {
                warnings.push(format!(
                    "task {task_id}: skipping variant {variant_id}: missing entry {entry_name:?}"
                ));
                continue;
            }
            buggy_variants.push(BuggyVariant {
                variant_id,
                program: reference.with_source(text),
            });
        }
    }

    Ok(Some(BenchmarkTask {
        task_id: task_id.to_string(),
        reference,
        buggy_variants,
        metadata,
    }))
}

/// Verdict for one buggy variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantVerdict {
    /// The suite failed on the variant: the seeded fault was caught.
    Detected,
    /// The suite passed on the variant.
    NotDetected,
    /// Execution infrastructure failed; excluded from the detection rate.
    Error(String),
}

/// Bug-detection results for one task's final suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BugDetection {
    /// Whether the suite passed on the reference program. When it did not,
    /// no variants are evaluated: a suite that fails the reference would
    /// "detect" everything.
    pub reference_pass: bool,
    /// Verdict per variant id.
    pub verdicts: BTreeMap<String, VariantVerdict>,
}

impl BugDetection {
    pub fn detected(&self) -> u32 {
        self.verdicts
            .values()
            .filter(|v| **v == VariantVerdict::Detected)
            .count() as u32
    }

    /// Variants that produced a usable verdict (errors excluded).
    pub fn considered(&self) -> u32 {
        self.verdicts
            .values()
            .filter(|v| !matches!(v, VariantVerdict::Error(_)))
            .count() as u32
    }

    pub fn errors(&self) -> u32 {
        self.verdicts
            .values()
            .filter(|v| matches!(v, VariantVerdict::Error(_)))
            .count() as u32
    }
}

/// Run `suite` against the reference and every buggy variant. A variant's
/// fault counts as detected when the suite does not pass on it (assertion
/// failure, crash, or timeout all qualify — the suite observed different
/// behavior). Infrastructure failures mark the variant as an error rather
/// than a detection.
pub fn evaluate_bug_detection(
    rt: &PythonRuntime,
    suite: &TestSuite,
    task: &BenchmarkTask,
    timeout: std::time::Duration,
) -> Result<BugDetection, InfraError> {
    let reference_pass = rt
        .execute_suite(&task.reference, suite, timeout)?
        .is_pass();
    let mut verdicts = BTreeMap::new();
    if !reference_pass {
        return Ok(BugDetection {
            reference_pass,
            verdicts,
        });
    }
    for variant in &task.buggy_variants {
        let verdict = match rt.execute_suite(&variant.program, suite, timeout) {
            Ok(outcome) if outcome.is_pass() => VariantVerdict::NotDetected,
            Ok(_) => VariantVerdict::Detected,
            Err(err) => VariantVerdict::Error(err.to_string()),
        };
        verdicts.insert(variant.variant_id.clone(), verdict);
    }
    Ok(BugDetection {
        reference_pass,
        verdicts,
    })
}

/// Bug-detection summary as it appears in a task row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BugDetectionRow {
    pub detected: u32,
    /// Variants with a usable verdict; errors are excluded.
    pub considered: u32,
    pub errors: u32,
    pub reference_pass: bool,
    pub per_variant: BTreeMap<String, String>,
}

impl BugDetectionRow {
    fn from_detection(detection: &BugDetection) -> Self {
        let per_variant = detection
            .verdicts
            .iter()
            .map(|(id, verdict)| {
                let text = match verdict {
                    VariantVerdict::Detected => "detected".to_string(),
                    VariantVerdict::NotDetected => "not_detected".to_string(),
                    VariantVerdict::Error(detail) => format!("error: {detail}"),
                };
                (id.clone(), text)
            })
            .collect();
        BugDetectionRow {
            detected: detection.detected(),
            considered: detection.considered(),
            errors: detection.errors(),
            reference_pass: detection.reference_pass,
            per_variant,
        }
    }
}

/// One task's line in the evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: String,
    /// Absent when the task failed before producing an outcome.
    pub outcome: Option<TaskOutcome>,
    /// Final (post-augmentation) mutation score; absent for problematic or
    /// failed tasks.
    pub ms_percent: Option<f64>,
    pub mutants_total: u32,
    pub mutants_killed: u32,
    /// Assertions in the repaired initial suite.
    pub assertions_initial: u32,
    /// Assertions in the minimized final suite.
    pub assertions_final: u32,
    /// Augmentation rounds run.
    pub rounds: u32,
    /// Kill statistics per operator code from the final suite's run.
    pub per_operator: BTreeMap<String, OperatorStats>,
    pub bug_detection: Option<BugDetectionRow>,
    /// Pipeline failure message when the task errored out.
    pub error: Option<String>,
}

/// Corpus-wide aggregates. Averages over mutation scores and assertion
/// counts exclude problematic and failed tasks (they have no suite to
/// measure); trivially complete tasks count with a score of 100 and their
/// (empty) minimized suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregates {
    pub tasks: u32,
    pub problematic: u32,
    pub trivially_complete: u32,
    pub failed: u32,
    /// Mean final mutation score over scored tasks.
    pub avg_ms_percent: Option<f64>,
    pub mutants_total: u32,
    pub mutants_killed: u32,
    /// Scored tasks whose final suite killed every mutant.
    pub tasks_full_kill: u32,
    /// Kill statistics per operator code, summed over scored tasks.
    pub per_operator: BTreeMap<String, OperatorStats>,
    pub assertions_min: Option<u32>,
    pub assertions_avg: Option<f64>,
    pub assertions_max: Option<u32>,
    pub bugs_detected: u32,
    pub bugs_considered: u32,
    /// detected / considered, when any variant produced a verdict.
    pub bug_detection_rate: Option<f64>,
}

/// The complete, deterministic evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub backend: String,
    pub prompt_kind: PromptKind,
    pub survivor_policy: SurvivorPolicy,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub tasks: Vec<TaskRow>,
    pub aggregates: Aggregates,
}

/// Everything recorded about one task during a run.
#[derive(Debug, Serialize)]
pub struct TaskRun {
    pub task_id: String,
    /// Pipeline failure, if the task never finished.
    pub error: Option<String>,
    pub bug_detection: Option<BugDetection>,
    /// Full pipeline state; absent when the task errored.
    pub state: Option<TaskState>,
}

/// Output of [`run_pipeline`]: the report plus per-task records.
#[derive(Debug)]
pub struct RunOutput {
    pub report: EvaluationReport,
    pub runs: Vec<TaskRun>,
}

/// Corpus-run configuration on top of the per-task pipeline knobs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    /// Worker threads executing tasks; report assembly stays
    /// single-threaded regardless.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: PipelineConfig::default(),
            workers: 1,
        }
    }
}

/// Run the pipeline over every task and assemble the report.
///
/// Tasks execute on a small worker pool; a panic-free failure in one task
/// is recorded in its row and does not abort the run. Results are assembled
/// in task order, so the report is deterministic for a fixed corpus,
/// backend behavior, and seed.
pub fn run_pipeline(
    rt: &PythonRuntime,
    gateway: &Gateway,
    corpus: &CorpusLoad,
    config: &RunConfig,
) -> RunOutput {
    let tasks = &corpus.tasks;
    let results: Mutex<Vec<Option<TaskRun>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next: AtomicUsize = AtomicUsize::new(0);
    let workers = config.workers.max(1).min(tasks.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= tasks.len() {
                    break;
                }
                let run = run_one(rt, gateway, &tasks[index], &config.pipeline);
                results.lock().expect("results lock")[index] = Some(run);
            });
        }
    });

    let runs: Vec<TaskRun> = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|slot| slot.expect("every task produced a result"))
        .collect();

    let rows: Vec<TaskRow> = runs.iter().map(task_row).collect();
    let report = EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        backend: gateway.backend_name().to_string(),
        prompt_kind: config.pipeline.prompt_kind,
        survivor_policy: config.pipeline.survivor_policy,
        seed: config.pipeline.seed,
        warnings: corpus.warnings.clone(),
        aggregates: aggregate(&rows),
        tasks: rows,
    };
    RunOutput { report, runs }
}

fn run_one(
    rt: &PythonRuntime,
    gateway: &Gateway,
    task: &BenchmarkTask,
    pipeline: &PipelineConfig,
) -> TaskRun {
    let state = match run_task(rt, gateway, &task.reference, pipeline) {
        Ok(state) => state,
        Err(err) => {
            return TaskRun {
                task_id: task.task_id.clone(),
                error: Some(err.to_string()),
                bug_detection: None,
                state: None,
            }
        }
    };
    let bug_detection = if state.outcome == TaskOutcome::Problematic {
        None
    } else {
        match evaluate_bug_detection(rt, &state.fut, task, pipeline.exec_timeout) {
            Ok(detection) => Some(detection),
            Err(err) => {
                return TaskRun {
                    task_id: task.task_id.clone(),
                    error: Some(format!("bug detection failed: {err}")),
                    bug_detection: None,
                    state: Some(state),
                }
            }
        }
    };
    TaskRun {
        task_id: task.task_id.clone(),
        error: None,
        bug_detection,
        state: Some(state),
    }
}

fn task_row(run: &TaskRun) -> TaskRow {
    let mut row = TaskRow {
        task_id: run.task_id.clone(),
        outcome: None,
        ms_percent: None,
        mutants_total: 0,
        mutants_killed: 0,
        assertions_initial: 0,
        assertions_final: 0,
        rounds: 0,
        per_operator: BTreeMap::new(),
        bug_detection: run.bug_detection.as_ref().map(BugDetectionRow::from_detection),
        error: run.error.clone(),
    };
    let Some(state) = &run.state else {
        return row;
    };
    row.outcome = Some(state.outcome);
    row.assertions_initial = state.iut.len() as u32;
    row.assertions_final = state.fut.len() as u32;
    row.rounds = state.rounds.len() as u32;
    if let Some(report) = &state.final_report {
        row.ms_percent = Some(report.ms_percent);
        row.mutants_total = report.total;
        row.mutants_killed = report.killed;
        row.per_operator = report.by_operator.clone();
    }
    row
}

fn aggregate(rows: &[TaskRow]) -> Aggregates {
    let mut agg = Aggregates {
        tasks: rows.len() as u32,
        problematic: 0,
        trivially_complete: 0,
        failed: 0,
        avg_ms_percent: None,
        mutants_total: 0,
        mutants_killed: 0,
        tasks_full_kill: 0,
        per_operator: BTreeMap::new(),
        assertions_min: None,
        assertions_avg: None,
        assertions_max: None,
        bugs_detected: 0,
        bugs_considered: 0,
        bug_detection_rate: None,
    };
    let mut ms_values = Vec::new();
    let mut assertion_counts = Vec::new();
    for row in rows {
        match row.outcome {
            None => {
                agg.failed += 1;
                continue;
            }
            Some(TaskOutcome::Problematic) => {
                agg.problematic += 1;
                continue;
            }
            Some(TaskOutcome::TriviallyComplete) => agg.trivially_complete += 1,
            Some(_) => {}
        }
        let ms = row.ms_percent.unwrap_or(100.0);
        ms_values.push(ms);
        if ms == 100.0 {
            agg.tasks_full_kill += 1;
        }
        agg.mutants_total += row.mutants_total;
        agg.mutants_killed += row.mutants_killed;
        assertion_counts.push(row.assertions_final);
        for (code, stats) in &row.per_operator {
            let entry = agg.per_operator.entry(code.clone()).or_default();
            entry.killed += stats.killed;
            entry.total += stats.total;
        }
        if let Some(bugs) = &row.bug_detection {
            agg.bugs_detected += bugs.detected;
            agg.bugs_considered += bugs.considered;
        }
    }
    if !ms_values.is_empty() {
        agg.avg_ms_percent = Some(ms_values.iter().sum::<f64>() / ms_values.len() as f64);
    }
    if !assertion_counts.is_empty() {
        agg.assertions_min = assertion_counts.iter().min().copied();
        agg.assertions_max = assertion_counts.iter().max().copied();
        agg.assertions_avg = Some(
            f64::from(assertion_counts.iter().sum::<u32>()) / assertion_counts.len() as f64,
        );
    }
    if agg.bugs_considered > 0 {
        agg.bug_detection_rate =
            Some(f64::from(agg.bugs_detected) / f64::from(agg.bugs_considered));
    }
    agg
}

/// Render the report as a human-readable text table.
pub fn render_report(report: &EvaluationReport) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "mutation-guided test generation report (schema v{})",
        report.schema_version
    );
    let _ = writeln!(
        out,
        "backend: {} | prompt: {} | policy: {} | seed: {}",
        report.backend, report.prompt_kind, report.survivor_policy, report.seed
    );
    out.push('\n');

    let _ = writeln!(
        out,
        "{:<24} {:<20} {:>8} {:>9} {:>8} {:>7} {:>8}",
        "task", "outcome", "MS%", "mutants", "asserts", "rounds", "bugs"
    );
    for row in &report.tasks {
        let outcome = match (&row.outcome, &row.error) {
            (Some(outcome), _) => outcome.to_string(),
            (None, Some(_)) => "failed".to_string(),
            (None, None) => "unknown".to_string(),
        };
        let ms = row
            .ms_percent
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-".to_string());
        let bugs = row
            .bug_detection
            .as_ref()
            .map(|b| format!("{}/{}", b.detected, b.considered))
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            out,
            "{:<24} {:<20} {:>8} {:>9} {:>8} {:>7} {:>8}",
            row.task_id,
            outcome,
            ms,
            format!("{}/{}", row.mutants_killed, row.mutants_total),
            row.assertions_final,
            row.rounds,
            bugs
        );
        if let Some(error) = &row.error {
            let _ = writeln!(out, "  error: {error}");
        }
    }

    let agg = &report.aggregates;
    out.push('\n');
    let _ = writeln!(out, "aggregates");
    let _ = writeln!(
        out,
        "  tasks: {} (problematic: {}, trivially complete: {}, failed: {})",
        agg.tasks, agg.problematic, agg.trivially_complete, agg.failed
    );
    if let Some(avg) = agg.avg_ms_percent {
        let _ = writeln!(out, "  avg mutation score: {avg:.2}%");
    }
    let _ = writeln!(
        out,
        "  mutants killed: {}/{}",
        agg.mutants_killed, agg.mutants_total
    );
    let _ = writeln!(out, "  tasks at 100% MS: {}", agg.tasks_full_kill);
    match (agg.assertions_min, agg.assertions_avg, agg.assertions_max) {
        (Some(min), Some(avg), Some(max)) => {
            let _ = writeln!(out, "  final assertions min/avg/max: {min}/{avg:.2}/{max}");
        }
        _ => {}
    }
    if let Some(rate) = agg.bug_detection_rate {
        let _ = writeln!(
            out,
            "  bug detection: {}/{} ({:.2}%)",
            agg.bugs_detected,
            agg.bugs_considered,
            rate * 100.0
        );
    }
    if !agg.per_operator.is_empty() {
        let _ = writeln!(out, "  per-operator kills:");
        for (code, stats) in &agg.per_operator {
            let _ = writeln!(out, "    {:<4} {}/{}", code, stats.killed, stats.total);
        }
    }
    if !report.warnings.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "warnings");
        for warning in &report.warnings {
            let _ = writeln!(out, "  {warning}");
        }
    }
    out
}

/// Persist a run: `report.json`, `report.txt`, one `runs/<task_id>.json`
/// per task, and `suites/<task_id>.py` for every task with a final suite.
pub fn write_outputs(dir: &Path, output: &RunOutput) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    let mut report_json = serde_json::to_string_pretty(&output.report)?;
    report_json.push('\n');
    fs::write(dir.join("report.json"), report_json)?;
    fs::write(dir.join("report.txt"), render_report(&output.report))?;

    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    let suites_dir = dir.join("suites");
    fs::create_dir_all(&suites_dir)?;
    for run in &output.runs {
        let mut run_json = serde_json::to_string_pretty(run)?;
        run_json.push('\n');
        fs::write(runs_dir.join(format!("{}.json", run.task_id)), run_json)?;
        if let Some(state) = &run.state {
            fs::write(
                suites_dir.join(format!("{}.py", run.task_id)),
                state.fut.render(),
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(
        task_id: &str,
        outcome: Option<TaskOutcome>,
        ms: Option<f64>,
        killed: u32,
        total: u32,
        asserts: u32,
        bugs: Option<(u32, u32)>,
    ) -> TaskRow {
        TaskRow {
            task_id: task_id.to_string(),
            outcome,
            ms_percent: ms,
            mutants_total: total,
            mutants_killed: killed,
            assertions_initial: asserts,
            assertions_final: asserts,
            rounds: 0,
            per_operator: BTreeMap::new(),
            bug_detection: bugs.map(|(detected, considered)| BugDetectionRow {
                detected,
                considered,
                errors: 0,
                reference_pass: true,
                per_variant: BTreeMap::new(),
            }),
            error: None,
        }
    }

    #[test]
    fn aggregates_exclude_problematic_and_failed_tasks() {
        let rows = vec![
            row("a", Some(TaskOutcome::CompleteExhausted), Some(90.0), 9, 10, 4, Some((3, 4))),
            row("b", Some(TaskOutcome::Problematic), None, 0, 0, 0, None),
            row("c", None, None, 0, 0, 0, None),
            row("d", Some(TaskOutcome::CompleteFullKill), Some(100.0), 1, 1, 1, Some((1, 1))),
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.tasks, 4);
        assert_eq!(agg.problematic, 1);
        assert_eq!(agg.failed, 1);
        assert_eq!(agg.avg_ms_percent, Some(95.0));
        assert_eq!(agg.mutants_total, 11);
        assert_eq!(agg.mutants_killed, 10);
        assert_eq!(agg.tasks_full_kill, 1);
        assert_eq!(agg.assertions_min, Some(1));
        assert_eq!(agg.assertions_max, Some(4));
        assert_eq!(agg.assertions_avg, Some(2.5));
        assert_eq!(agg.bugs_detected, 4);
        assert_eq!(agg.bugs_considered, 5);
        assert_eq!(agg.bug_detection_rate, Some(0.8));
    }

    #[test]
    fn trivially_complete_counts_as_full_score() {
        let rows = vec![row(
            "only",
            Some(TaskOutcome::TriviallyComplete),
            Some(100.0),
            0,
            0,
            0,
            None,
        )];
        let agg = aggregate(&rows);
        assert_eq!(agg.avg_ms_percent, Some(100.0));
        assert_eq!(agg.tasks_full_kill, 1);
        assert_eq!(agg.trivially_complete, 1);
    }

    #[test]
    fn variant_ordering_is_numeric_first() {
        let mut stems = vec!["10", "2", "1", "alt"];
        stems.sort_by_key(|s| variant_key(s));
        assert_eq!(stems, vec!["1", "2", "10", "alt"]);
    }

    #[test]
    fn render_report_mentions_every_task() {
        let report = EvaluationReport {
            schema_version: REPORT_SCHEMA_VERSION,
            backend: "scripted".to_string(),
            prompt_kind: PromptKind::ZeroShot,
            survivor_policy: SurvivorPolicy::FirstInOrder,
            seed: 0,
            warnings: vec!["something odd".to_string()],
            tasks: vec![
                row("alpha", Some(TaskOutcome::CompleteFullKill), Some(100.0), 2, 2, 1, None),
                row("beta", None, None, 0, 0, 0, None),
            ],
            aggregates: aggregate(&[]),
        };
        let text = render_report(&report);
        assert!(text.contains("alpha"));
        assert!(text.contains("beta"));
        assert!(text.contains("something odd"));
    }
}
