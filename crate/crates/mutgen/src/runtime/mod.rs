//! Sandboxed access to the Python interpreter.
//!
//! Every interpreter interaction — parse checks, suite execution, call
//! evaluation, mutant-site scanning — goes through [`PythonRuntime`]. Each
//! call materializes its inputs in a fresh temporary directory, runs
//! `python -I` with a scrubbed environment, and tears the directory down
//! afterwards, so no state leaks between executions and nothing escapes the
//! sandbox. `PYTHONHASHSEED` is pinned so value reprs (set/dict ordering)
//! are stable across runs.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::refine::TestSuite;

/// Default wall-clock budget for a single interpreter execution.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// Poll interval while waiting for a child interpreter to finish.
const POLL_INTERVAL: Duration = Duration::from_millis(2);

/// Environment variable that overrides interpreter discovery.
pub const PYTHON_ENV_VAR: &str = "MUTGEN_PYTHON";

const PARSE_HELPER: Helper = Helper {
    name: "parse.py",
    source: include_str!("py/parse.py"),
};
const EVAL_HELPER: Helper = Helper {
    name: "eval.py",
    source: include_str!("py/eval.py"),
};
const MODULES_HELPER: Helper = Helper {
    name: "modules.py",
    source: include_str!("py/modules.py"),
};

/// An embedded Python driver script run inside the sandbox.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Helper {
    pub name: &'static str,
    pub source: &'static str,
}

#[derive(Debug, thiserror::Error)]
pub enum InfraError {
    #[error("python interpreter not found (tried $MUTGEN_PYTHON, python3, python)")]
    InterpreterMissing,
    #[error("sandbox i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("interpreter helper `{helper}` misbehaved: {detail}")]
    Helper { helper: String, detail: String },
    #[error("call expression does not parse: {0:?}")]
    InvalidCall(String),
}

impl InfraError {
    fn helper(name: &str, detail: impl Into<String>) -> Self {
        InfraError::Helper {
            helper: name.to_string(),
            detail: detail.into(),
        }
    }
}

/// A program under test: one self-contained Python module with a designated
/// entry-point function that generated assertions will call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectProgram {
    /// Stable identifier (corpus directory name, or caller-chosen).
    pub task_id: String,
    /// Name of the function the generated tests must exercise.
    pub entry_name: String,
    /// Full module source.
    pub source: String,
}

impl SubjectProgram {
    pub fn new(
        task_id: impl Into<String>,
        entry_name: impl Into<String>,
        source: impl Into<String>,
    ) -> Self {
        SubjectProgram {
            task_id: task_id.into(),
            entry_name: entry_name.into(),
            source: source.into(),
        }
    }

    /// The same task with different module source (used for mutants and
    /// buggy variants).
    pub fn with_source(&self, source: impl Into<String>) -> Self {
        SubjectProgram {
            task_id: self.task_id.clone(),
            entry_name: self.entry_name.clone(),
            source: source.into(),
        }
    }
}

/// Result of a syntax check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub ok: bool,
    /// 1-based line of the first syntax error, when `ok` is false.
    pub first_error_line: Option<u32>,
}

impl ParseReport {
    pub const OK: ParseReport = ParseReport {
        ok: true,
        first_error_line: None,
    };
}

/// Parse check plus the structural facts the pipeline keys off.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SourceInfo {
    pub report: ParseReport,
    pub has_assert: bool,
    /// Top-level function names in definition order.
    pub functions: Vec<String>,
}

/// How a suite execution ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    /// Process exited 0: every assertion held.
    Pass,
    /// An `assert` fired.
    AssertionFailure,
    /// Any other uncaught exception.
    RuntimeError,
    /// Uncaught `TypeError` (tracked separately: it usually means the test
    /// called the entry point with arguments of the wrong shape).
    TypeFailure,
    /// Killed after exceeding the wall-clock budget.
    Timeout,
}

/// Outcome of running a test suite against a program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    /// Last diagnostic line from the interpreter, or a synthesized note.
    pub detail: String,
    /// Wall-clock duration of the child process.
    pub elapsed: Duration,
}

impl ExecutionOutcome {
    pub fn is_pass(&self) -> bool {
        self.status == ExecStatus::Pass
    }
}

/// Outcome of evaluating a single call expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalOutcome {
    /// The call produced a value whose repr round-trips as a literal.
    Value { literal: String },
    /// The call produced a value with no literal rendering (object, nan, …).
    NonLiteral { type_name: String },
    /// The call raised `TypeError`.
    TypeFailure { detail: String },
    /// The call (or loading the program module) raised anything else.
    RuntimeError { detail: String },
    /// Evaluation exceeded the budget.
    Timeout,
}

/// Optional comparison performed by the evaluation driver, using native
/// Python equality/truthiness so that e.g. `4 == 4.0` holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum EvalCheck {
    None,
    /// Compare against this expected-value literal.
    Equals(String),
    /// Report the value's truthiness.
    Truthy,
}

/// Evaluation outcome plus the result of the requested check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct CallEvaluation {
    pub outcome: EvalOutcome,
    /// Present for `EvalCheck::Equals` when a value was produced.
    pub equals_expected: Option<bool>,
    /// Present for `EvalCheck::Truthy` when a value was produced.
    pub truthy: Option<bool>,
}

/// Captured output of one child interpreter run.
#[derive(Debug)]
struct ProcOutput {
    code: Option<i32>,
    stdout: String,
    stderr: String,
    timed_out: bool,
    elapsed: Duration,
}

/// Handle to a discovered Python interpreter. Stateless between calls and
/// safe to share across threads.
#[derive(Debug, Clone)]
pub struct PythonRuntime {
    python: PathBuf,
    version: String,
}

impl PythonRuntime {
    /// Locate an interpreter: `$MUTGEN_PYTHON` if set, else `python3`, else
    /// `python`.
    pub fn discover() -> Result<Self, InfraError> {
        let mut candidates: Vec<PathBuf> = Vec::new();
        if let Ok(p) = std::env::var(PYTHON_ENV_VAR) {
            if !p.is_empty() {
                candidates.push(PathBuf::from(p));
            }
        }
        candidates.push(PathBuf::from("python3"));
        candidates.push(PathBuf::from("python"));
        for candidate in candidates {
            if let Some(version) = probe_version(&candidate) {
                return Ok(PythonRuntime {
                    python: candidate,
                    version,
                });
            }
        }
        Err(InfraError::InterpreterMissing)
    }

    /// Version string reported by the interpreter, e.g. `Python 3.10.12`.
    pub fn version(&self) -> &str {
        &self.version
    }

    /// Syntax-check one source.
    pub fn check_syntax(&self, source: &str) -> Result<ParseReport, InfraError> {
        Ok(self.inspect_batch(&[source])?.remove(0).report)
    }

    /// Syntax-check many sources in a single interpreter launch.
    pub fn check_syntax_batch(&self, sources: &[&str]) -> Result<Vec<ParseReport>, InfraError> {
        Ok(self
            .inspect_batch(sources)?
            .into_iter()
            .map(|info| info.report)
            .collect())
    }

    /// Parse check plus structural facts for one source.
    pub(crate) fn inspect(&self, source: &str) -> Result<SourceInfo, InfraError> {
        Ok(self.inspect_batch(&[source])?.remove(0))
    }

    pub(crate) fn inspect_batch(&self, sources: &[&str]) -> Result<Vec<SourceInfo>, InfraError> {
        if sources.is_empty() {
            return Ok(Vec::new());
        }
        let payload = serde_json::json!({ "sources": sources });
        let value = self.run_helper(PARSE_HELPER, &payload, &[], DEFAULT_TIMEOUT)?;
        let records = value
            .as_array()
            .ok_or_else(|| InfraError::helper(PARSE_HELPER.name, "expected a JSON array"))?;
        if records.len() != sources.len() {
            return Err(InfraError::helper(
                PARSE_HELPER.name,
                format!("expected {} records, got {}", sources.len(), records.len()),
            ));
        }
        records
            .iter()
            .map(|record| {
                let ok = record["ok"].as_bool().unwrap_or(false);
                if ok {
                    Ok(SourceInfo {
                        report: ParseReport::OK,
                        has_assert: record["has_assert"].as_bool().unwrap_or(false),
                        functions: record["functions"]
                            .as_array()
                            .map(|names| {
                                names
                                    .iter()
                                    .filter_map(|n| n.as_str().map(str::to_string))
                                    .collect()
                            })
                            .unwrap_or_default(),
                    })
                } else {
                    let line = record["error_line"].as_u64().unwrap_or(1).max(1) as u32;
                    Ok(SourceInfo {
                        report: ParseReport {
                            ok: false,
                            first_error_line: Some(line),
                        },
                        has_assert: false,
                        functions: Vec::new(),
                    })
                }
            })
            .collect()
    }

    /// Run the suite's test function against the program and classify the
    /// result. The child is killed once `timeout` elapses; the recorded
    /// duration therefore never exceeds the budget by more than the kill
    /// latency (well under a second).
    pub fn execute_suite(
        &self,
        program: &SubjectProgram,
        suite: &TestSuite,
        timeout: Duration,
    ) -> Result<ExecutionOutcome, InfraError> {
        let module = format!(
            "{}\n\n{}\n\n{}()\n",
            program.source.trim_end(),
            suite.render().trim_end(),
            TestSuite::FUNCTION_NAME
        );
        let dir = tempfile::tempdir()?;
        std::fs::write(dir.path().join("main.py"), &module)?;
        let out = self.run_python(&["-I", "main.py"], dir.path(), timeout)?;
        Ok(classify_execution(&out))
    }

    /// Evaluate `call` (an expression, typically `entry(args…)`) in the
    /// program's module namespace.
    pub fn eval_call(
        &self,
        program: &SubjectProgram,
        call: &str,
        timeout: Duration,
    ) -> Result<EvalOutcome, InfraError> {
        Ok(self
            .eval_call_checked(program, call, &EvalCheck::None, timeout)?
            .outcome)
    }

    /// Evaluate `call` and additionally run the given comparison inside the
    /// interpreter.
    pub(crate) fn eval_call_checked(
        &self,
        program: &SubjectProgram,
        call: &str,
        check: &EvalCheck,
        timeout: Duration,
    ) -> Result<CallEvaluation, InfraError> {
        let check_json = match check {
            EvalCheck::None => serde_json::json!({ "kind": "none" }),
            EvalCheck::Equals(expected) => {
                serde_json::json!({ "kind": "equals", "expected": expected })
            }
            EvalCheck::Truthy => serde_json::json!({ "kind": "truthy" }),
        };
        let payload = serde_json::json!({
            "call": call,
            "timeout_secs": timeout.as_secs().max(1),
            "check": check_json,
        });
        // The driver enforces the budget with SIGALRM; the process watchdog
        // is a backstop for pathological cases (e.g. blocking in C code).
        let watchdog = timeout + Duration::from_secs(2);
        let value = self.run_helper(
            EVAL_HELPER,
            &payload,
            &[("program.py", &program.source)],
            watchdog,
        )?;
        let status = value["status"].as_str().unwrap_or("");
        let detail = |key: &str| value[key].as_str().unwrap_or("").to_string();
        let outcome = match status {
            "value" => EvalOutcome::Value {
                literal: detail("literal"),
            },
            "non_literal" => EvalOutcome::NonLiteral {
                type_name: detail("detail"),
            },
            "type_failure" => EvalOutcome::TypeFailure {
                detail: detail("detail"),
            },
            "runtime_error" => EvalOutcome::RuntimeError {
                detail: detail("detail"),
            },
            "timeout" => EvalOutcome::Timeout,
            "bad_call" => return Err(InfraError::InvalidCall(call.to_string())),
            other => {
                return Err(InfraError::helper(
                    EVAL_HELPER.name,
                    format!("unknown status {other:?}"),
                ))
            }
        };
        Ok(CallEvaluation {
            outcome,
            equals_expected: value["equals_expected"].as_bool(),
            truthy: value["truthy"].as_bool(),
        })
    }

    /// Which of the requested import modules are unavailable to the sandbox.
    pub fn missing_modules(&self, modules: &[String]) -> Result<Vec<String>, InfraError> {
        if modules.is_empty() {
            return Ok(Vec::new());
        }
        let payload = serde_json::json!({ "modules": modules });
        let value = self.run_helper(MODULES_HELPER, &payload, &[], DEFAULT_TIMEOUT)?;
        Ok(value["missing"]
            .as_array()
            .map(|names| {
                names
                    .iter()
                    .filter_map(|n| n.as_str().map(str::to_string))
                    .collect()
            })
            .unwrap_or_default())
    }

    /// Run an embedded helper script in a fresh sandbox: the script, a
    /// payload.json, and any extra files are written to a temp directory,
    /// and the helper's stdout is parsed as JSON.
    pub(crate) fn run_helper(
        &self,
        helper: Helper,
        payload: &serde_json::Value,
        files: &[(&str, &str)],
        timeout: Duration,
    ) -> Result<serde_json::Value, InfraError> {
        let dir = tempfile::tempdir()?;
        std::fs::write(dir.path().join(helper.name), helper.source)?;
        std::fs::write(
            dir.path().join("payload.json"),
            serde_json::to_vec(payload).expect("payload serializes"),
        )?;
        for (name, content) in files {
            std::fs::write(dir.path().join(name), content)?;
        }
        let out = self.run_python(&["-I", helper.name], dir.path(), timeout)?;
        if out.timed_out {
            return Err(InfraError::helper(
                helper.name,
                format!("timed out after {:?}", timeout),
            ));
        }
        if out.code != Some(0) {
            return Err(InfraError::helper(
                helper.name,
                format!(
                    "exit {:?}: {}",
                    out.code,
                    last_line(&out.stderr).unwrap_or_default()
                ),
            ));
        }
        serde_json::from_str(&out.stdout)
            .map_err(|err| InfraError::helper(helper.name, format!("bad JSON output: {err}")))
    }

    /// Spawn the interpreter with a scrubbed environment and wait for it,
    /// killing it once the deadline passes.
    fn run_python(
        &self,
        args: &[&str],
        cwd: &std::path::Path,
        timeout: Duration,
    ) -> Result<ProcOutput, InfraError> {
        let path_var = std::env::var("PATH").unwrap_or_else(|_| "/usr/bin:/bin".to_string());
        let started = Instant::now();
        let mut child = Command::new(&self.python)
            .args(args)
            .current_dir(cwd)
            .env_clear()
            .env("PATH", path_var)
            .env("HOME", cwd)
            .env("TMPDIR", cwd)
            .env("LANG", "C.UTF-8")
            .env("LC_ALL", "C.UTF-8")
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONIOENCODING", "utf-8")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;

        let stdout = drain_in_background(child.stdout.take());
        let stderr = drain_in_background(child.stderr.take());
        let deadline = started + timeout;
        let (code, timed_out) = loop {
            if let Some(status) = child.try_wait()? {
                break (status.code(), false);
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                break (None, true);
            }
            std::thread::sleep(POLL_INTERVAL);
        };
        let elapsed = started.elapsed();
        Ok(ProcOutput {
            code,
            stdout: stdout.join().unwrap_or_default(),
            stderr: stderr.join().unwrap_or_default(),
            timed_out,
            elapsed,
        })
    }
}

/// Read a child stream to the end on a helper thread so the child can never
/// block on a full pipe while we wait for it.
fn drain_in_background<R: Read + Send + 'static>(
    stream: Option<R>,
) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut stream) = stream {
            let _ = stream.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn probe_version(candidate: &std::path::Path) -> Option<String> {
    let out = Command::new(candidate)
        .arg("--version")
        .stdin(Stdio::null())
        .output()
        .ok()?;
    if !out.status.success() {
        return None;
    }
    // `python --version` may print to stdout or stderr depending on vintage.
    let text = if out.stdout.is_empty() {
        out.stderr
    } else {
        out.stdout
    };
    Some(String::from_utf8_lossy(&text).trim().to_string())
}

fn last_line(text: &str) -> Option<String> {
    text.lines()
        .rev()
        .map(str::trim)
        .find(|line| !line.is_empty())
        .map(str::to_string)
}

/// Map a finished suite process to an outcome. Exit 0 is a pass; otherwise
/// the final traceback line names the exception class.
fn classify_execution(out: &ProcOutput) -> ExecutionOutcome {
    if out.timed_out {
        return ExecutionOutcome {
            status: ExecStatus::Timeout,
            detail: format!("killed after {:.1}s", out.elapsed.as_secs_f64()),
            elapsed: out.elapsed,
        };
    }
    if out.code == Some(0) {
        return ExecutionOutcome {
            status: ExecStatus::Pass,
            detail: String::new(),
            elapsed: out.elapsed,
        };
    }
    let line = last_line(&out.stderr).unwrap_or_else(|| format!("exit code {:?}", out.code));
    let exception = line.split(':').next().unwrap_or("").trim();
    let status = match exception {
        "AssertionError" => ExecStatus::AssertionFailure,
        "TypeError" => ExecStatus::TypeFailure,
        _ => ExecStatus::RuntimeError,
    };
    ExecutionOutcome {
        status,
        detail: line,
        elapsed: out.elapsed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt() -> PythonRuntime {
        PythonRuntime::discover().expect("python available")
    }

    #[test]
    fn empty_source_parses() {
        assert_eq!(rt().check_syntax("").unwrap(), ParseReport::OK);
    }

    #[test]
    fn unclosed_bracket_reports_its_line() {
        let source = "x = 1\ny = 2\nz = [1, 2\n";
        let report = rt().check_syntax(source).unwrap();
        assert!(!report.ok);
        assert_eq!(report.first_error_line, Some(3));
    }

    #[test]
    fn inspect_reports_functions_and_asserts() {
        let info = rt()
            .inspect("def test():\n    assert add(2, 2) == 4\n")
            .unwrap();
        assert!(info.report.ok);
        assert!(info.has_assert);
        assert_eq!(info.functions, vec!["test".to_string()]);
    }

    #[test]
    fn eval_reports_literal_value() {
        let program = SubjectProgram::new("t", "add", "def add(a, b):\n    return a + b\n");
        let outcome = rt()
            .eval_call(&program, "add(2, 2)", DEFAULT_TIMEOUT)
            .unwrap();
        assert_eq!(
            outcome,
            EvalOutcome::Value {
                literal: "4".to_string()
            }
        );
    }

    #[test]
    fn eval_native_equality_accepts_cross_type_match() {
        let program = SubjectProgram::new("t", "add", "def add(a, b):\n    return a + b\n");
        let eval = rt()
            .eval_call_checked(
                &program,
                "add(2, 2)",
                &EvalCheck::Equals("4.0".to_string()),
                DEFAULT_TIMEOUT,
            )
            .unwrap();
        assert_eq!(eval.equals_expected, Some(true));
    }

    #[test]
    fn eval_type_failure_is_distinguished() {
        let program = SubjectProgram::new("t", "add", "def add(a, b):\n    return a + b\n");
        let outcome = rt()
            .eval_call(&program, "add(2, None)", DEFAULT_TIMEOUT)
            .unwrap();
        assert!(matches!(outcome, EvalOutcome::TypeFailure { .. }));
    }

    #[test]
    fn eval_rejects_malformed_call() {
        let program = SubjectProgram::new("t", "add", "def add(a, b):\n    return a + b\n");
        let err = rt()
            .eval_call(&program, "add(2,", DEFAULT_TIMEOUT)
            .unwrap_err();
        assert!(matches!(err, InfraError::InvalidCall(_)));
    }

    #[test]
    fn eval_flags_non_literal_values() {
        let program = SubjectProgram::new("t", "f", "def f():\n    return float('nan')\n");
        let outcome = rt().eval_call(&program, "f()", DEFAULT_TIMEOUT).unwrap();
        assert!(matches!(outcome, EvalOutcome::NonLiteral { .. }));
    }

    #[test]
    fn eval_times_out_on_divergence() {
        let program = SubjectProgram::new(
            "t",
            "spin",
            "def spin():\n    while True:\n        pass\n",
        );
        let outcome = rt()
            .eval_call(&program, "spin()", Duration::from_secs(1))
            .unwrap();
        assert_eq!(outcome, EvalOutcome::Timeout);
    }

    #[test]
    fn missing_modules_are_reported() {
        let missing = rt()
            .missing_modules(&["math".to_string(), "definitely_not_a_module_xyz".to_string()])
            .unwrap();
        assert_eq!(missing, vec!["definitely_not_a_module_xyz".to_string()]);
    }
}
