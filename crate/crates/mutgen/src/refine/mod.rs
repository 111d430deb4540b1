//! Turning raw model output into syntactically valid, behavior-checked
//! assertion suites.
//!
//! Three repairs happen between "the model said something" and "we have a
//! test suite": [`fix_syntax`] makes the text parse (re-prompting the model,
//! then cutting the text back to its longest parseable prefix),
//! [`extract_suite`] pulls out assertions that call the entry point on
//! literal inputs, and [`repair_behavior`] executes each call and rewrites
//! the expected value to whatever the program actually returns — the
//! program under test is the ground truth for its own intended behavior.
//! Calls that raise, diverge, or return unprintable values get their
//! assertions dropped, with the reason recorded rather than silently
//! discarded.

use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError, Transcript};
use crate::prompt::build_syntax_fix;
use crate::runtime::{
    EvalCheck, EvalOutcome, Helper, InfraError, PythonRuntime, SubjectProgram,
};

const EXTRACT_HELPER: Helper = Helper {
    name: "extract.py",
    source: include_str!("py/extract.py"),
};

#[derive(Debug, thiserror::Error)]
pub enum RefineError {
    #[error(transparent)]
    Infra(#[from] InfraError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// How an assertion compares the call result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    /// `assert call == expected`
    Eq,
    /// `assert call`
    IsTrue,
    /// `assert not call`
    IsFalse,
}

/// Where an assertion came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssertionOrigin {
    /// Extracted from the initial prompt's completion.
    Initial,
    /// Added by the numbered augmentation round (1-based).
    Augmentation { round: u32 },
}

/// One test oracle: a call to the entry point plus an expectation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    /// Invocation of the entry function on literal inputs, e.g.
    /// `any_int(5, 2, 7)`.
    pub call_expression: String,
    pub comparator: Comparator,
    /// Expected-value literal; present exactly for `Eq`.
    pub expected_literal: Option<String>,
    pub origin: AssertionOrigin,
    /// True once behavior repair confirmed the assertion against the
    /// program under test.
    pub verified: bool,
}

impl Assertion {
    pub fn eq(
        call: impl Into<String>,
        expected: impl Into<String>,
        origin: AssertionOrigin,
    ) -> Self {
        Assertion {
            call_expression: call.into(),
            comparator: Comparator::Eq,
            expected_literal: Some(expected.into()),
            origin,
            verified: false,
        }
    }

    pub fn is_true(call: impl Into<String>, origin: AssertionOrigin) -> Self {
        Assertion {
            call_expression: call.into(),
            comparator: Comparator::IsTrue,
            expected_literal: None,
            origin,
            verified: false,
        }
    }

    pub fn is_false(call: impl Into<String>, origin: AssertionOrigin) -> Self {
        Assertion {
            call_expression: call.into(),
            comparator: Comparator::IsFalse,
            expected_literal: None,
            origin,
            verified: false,
        }
    }

    /// The assertion as a Python statement (without indentation).
    pub fn render(&self) -> String {
        match self.comparator {
            Comparator::Eq => format!(
                "assert {} == {}",
                self.call_expression,
                self.expected_literal.as_deref().unwrap_or("None")
            ),
            Comparator::IsTrue => format!("assert {}", self.call_expression),
            Comparator::IsFalse => format!("assert not {}", self.call_expression),
        }
    }
}

/// An ordered list of assertions rendered as one `test()` function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub assertions: Vec<Assertion>,
}

impl TestSuite {
    /// Fixed name of the rendered test function.
    pub const FUNCTION_NAME: &'static str = "test";

    pub fn new(assertions: Vec<Assertion>) -> Self {
        TestSuite { assertions }
    }

    pub fn empty() -> Self {
        TestSuite {
            assertions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.assertions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assertions.is_empty()
    }

    /// Render as a Python test function. An empty suite renders a `pass`
    /// body and therefore trivially succeeds.
    pub fn render(&self) -> String {
        let mut out = format!("def {}():\n", TestSuite::FUNCTION_NAME);
        if self.assertions.is_empty() {
            out.push_str("    pass\n");
        } else {
            for assertion in &self.assertions {
                out.push_str("    ");
                out.push_str(&assertion.render());
                out.push('\n');
            }
        }
        out
    }
}

/// Result of pulling assertions out of (parseable) generated code.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub suite: TestSuite,
    /// Assertions present in the text but not extractable (wrong shape,
    /// non-literal inputs, …).
    pub skipped: u32,
}

/// Extract entry-point assertions from generated test code. Returns `None`
/// when the source does not parse. Exact duplicates (same rendered text)
/// keep only their first occurrence.
pub fn extract_suite(
    rt: &PythonRuntime,
    source: &str,
    entry_name: &str,
    origin: AssertionOrigin,
) -> Result<Option<Extraction>, InfraError> {
    let payload = serde_json::json!({ "source": source, "entry": entry_name });
    let value = rt.run_helper(
        EXTRACT_HELPER,
        &payload,
        &[],
        crate::runtime::DEFAULT_TIMEOUT,
    )?;
    if !value["ok"].as_bool().unwrap_or(false) {
        return Ok(None);
    }
    #[derive(Deserialize)]
    struct Record {
        call: String,
        comparator: String,
        expected: Option<String>,
    }
    let records: Vec<Record> =
        serde_json::from_value(value["assertions"].clone()).map_err(|err| {
            InfraError::Helper {
                helper: EXTRACT_HELPER.name.to_string(),
                detail: format!("bad assertion record: {err}"),
            }
        })?;
    let mut skipped = value["skipped"].as_u64().unwrap_or(0) as u32;
    let mut suite = TestSuite::empty();
    let mut seen = std::collections::BTreeSet::new();
    for record in records {
        let comparator = match record.comparator.as_str() {
            "eq" => Comparator::Eq,
            "is_true" => Comparator::IsTrue,
            "is_false" => Comparator::IsFalse,
            other => {
                return Err(InfraError::Helper {
                    helper: EXTRACT_HELPER.name.to_string(),
                    detail: format!("unknown comparator {other:?}"),
                })
            }
        };
        let assertion = Assertion {
            call_expression: record.call,
            comparator,
            expected_literal: record.expected,
            origin,
            verified: false,
        };
        if seen.insert(assertion.render()) {
            suite.assertions.push(assertion);
        } else {
            skipped += 1;
        }
    }
    Ok(Some(Extraction { suite, skipped }))
}

/// Outcome of the syntax-repair pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyntaxFix {
    Valid {
        text: String,
        /// How many fix prompts were sent (0 when the input already parsed).
        llm_attempts: u32,
        /// True when the result came from prefix truncation rather than the
        /// model.
        truncated: bool,
    },
    /// Nothing parseable and non-empty remained.
    Irreparable,
}

/// Make generated code parse. Already-valid input is returned untouched
/// without any backend traffic. Otherwise the model is asked to fix the
/// snippet (up to the gateway's attempt budget); if no attempt parses, the
/// original text is cut back line by line at the first reported error until
/// the remainder parses — the longest error-line-cut prefix — or nothing
/// meaningful remains.
pub fn fix_syntax(
    rt: &PythonRuntime,
    gateway: &Gateway,
    raw: &str,
    transcript: &mut Transcript,
) -> Result<SyntaxFix, RefineError> {
    if rt.check_syntax(raw)?.ok {
        return Ok(SyntaxFix::Valid {
            text: raw.to_string(),
            llm_attempts: 0,
            truncated: false,
        });
    }
    let envelope = build_syntax_fix(raw);
    for attempt in 1..=gateway.max_attempts() {
        let completion = gateway.complete(&envelope, transcript)?;
        // An empty completion technically parses; it is not a fix.
        if !completion.text.trim().is_empty() && rt.check_syntax(&completion.text)?.ok {
            return Ok(SyntaxFix::Valid {
                text: completion.text,
                llm_attempts: attempt,
                truncated: false,
            });
        }
    }
    let llm_attempts = gateway.max_attempts();
    let mut current = raw.to_string();
    loop {
        let report = rt.check_syntax(&current)?;
        if report.ok {
            if current.trim().is_empty() {
                return Ok(SyntaxFix::Irreparable);
            }
            return Ok(SyntaxFix::Valid {
                text: current,
                llm_attempts,
                truncated: true,
            });
        }
        let lines: Vec<&str> = current.lines().collect();
        if lines.is_empty() {
            return Ok(SyntaxFix::Irreparable);
        }
        // Keep the lines before the reported error; always shrink by at
        // least one line so the loop terminates.
        let error_line = report.first_error_line.unwrap_or(1) as usize;
        let keep = error_line.saturating_sub(1).min(lines.len() - 1);
        if keep == 0 {
            return Ok(SyntaxFix::Irreparable);
        }
        current = lines[..keep].join("\n");
        current.push('\n');
    }
}

/// Why an assertion was removed during behavior repair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// The call raised `TypeError` (malformed arguments).
    TypeFailure,
    /// The call raised some other exception.
    RuntimeError,
    /// The call exceeded the evaluation budget.
    Timeout,
    /// The call returned a value with no literal rendering.
    NonLiteralValue,
}

/// An assertion removed by behavior repair, kept for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedAssertion {
    pub assertion: Assertion,
    pub reason: DropReason,
    pub detail: String,
}

/// Result of behavior repair: the surviving suite plus what was changed or
/// removed.
#[derive(Debug, Clone)]
pub struct BehaviorRepair {
    pub suite: TestSuite,
    pub dropped: Vec<DroppedAssertion>,
    /// Count of assertions whose expectation was rewritten.
    pub repaired: u32,
}

/// Evaluate each assertion's call against the program and align the
/// expectation with actual behavior: wrong `==` literals are replaced by
/// the value the program returns (compared with native Python equality),
/// truthiness assertions are flipped to match, and calls that raise, time
/// out, or return non-literal values have their assertions dropped with the
/// reason recorded. Order is preserved; nothing is added.
pub fn repair_behavior(
    rt: &PythonRuntime,
    program: &SubjectProgram,
    suite: TestSuite,
    timeout: std::time::Duration,
) -> Result<BehaviorRepair, InfraError> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut repaired = 0u32;
    for mut assertion in suite.assertions {
        let check = match (&assertion.comparator, &assertion.expected_literal) {
            (Comparator::Eq, Some(expected)) => EvalCheck::Equals(expected.clone()),
            (Comparator::Eq, None) => EvalCheck::None,
            _ => EvalCheck::Truthy,
        };
        let eval = rt.eval_call_checked(program, &assertion.call_expression, &check, timeout)?;
        match eval.outcome {
            EvalOutcome::Value { literal } => {
                match assertion.comparator {
                    Comparator::Eq => {
                        if eval.equals_expected != Some(true) {
                            assertion.expected_literal = Some(literal);
                            repaired += 1;
                        }
                    }
                    Comparator::IsTrue => {
                        if eval.truthy != Some(true) {
                            assertion.comparator = Comparator::IsFalse;
                            repaired += 1;
                        }
                    }
                    Comparator::IsFalse => {
                        if eval.truthy != Some(false) {
                            assertion.comparator = Comparator::IsTrue;
                            repaired += 1;
                        }
                    }
                }
                assertion.verified = true;
                kept.push(assertion);
            }
            EvalOutcome::TypeFailure { detail } => dropped.push(DroppedAssertion {
                assertion,
                reason: DropReason::TypeFailure,
                detail,
            }),
            EvalOutcome::RuntimeError { detail } => dropped.push(DroppedAssertion {
                assertion,
                reason: DropReason::RuntimeError,
                detail,
            }),
            EvalOutcome::Timeout => dropped.push(DroppedAssertion {
                assertion,
                reason: DropReason::Timeout,
                detail: String::new(),
            }),
            EvalOutcome::NonLiteral { type_name } => dropped.push(DroppedAssertion {
                assertion,
                reason: DropReason::NonLiteralValue,
                detail: type_name,
            }),
        }
    }
    Ok(BehaviorRepair {
        suite: TestSuite::new(kept),
        dropped,
        repaired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptedBackend, FALLBACK_KEY};

    fn rt() -> PythonRuntime {
        PythonRuntime::discover().expect("python available")
    }

    fn program() -> SubjectProgram {
        SubjectProgram::new("t", "add", "def add(a, b):\n    return a + b\n")
    }

    #[test]
    fn rendering_covers_all_comparators() {
        let eq = Assertion::eq("add(2, 2)", "4", AssertionOrigin::Initial);
        let yes = Assertion::is_true("add(1, 0)", AssertionOrigin::Initial);
        let no = Assertion::is_false("add(0, 0)", AssertionOrigin::Initial);
        assert_eq!(eq.render(), "assert add(2, 2) == 4");
        assert_eq!(yes.render(), "assert add(1, 0)");
        assert_eq!(no.render(), "assert not add(0, 0)");
        let suite = TestSuite::new(vec![eq, yes, no]);
        let rendered = suite.render();
        assert!(rendered.starts_with("def test():\n"));
        assert_eq!(rendered.lines().count(), 4);
        assert_eq!(TestSuite::empty().render(), "def test():\n    pass\n");
    }

    #[test]
    fn rendered_suites_parse_and_round_trip_through_extraction() {
        let suite = TestSuite::new(vec![
            Assertion::eq("add(2, 2)", "4", AssertionOrigin::Initial),
            Assertion::is_false("add(0, 0)", AssertionOrigin::Initial),
        ]);
        let rendered = suite.render();
        let extraction = extract_suite(&rt(), &rendered, "add", AssertionOrigin::Initial)
            .unwrap()
            .unwrap();
        assert_eq!(extraction.skipped, 0);
        let rendered_again = extraction.suite.render();
        assert_eq!(rendered, rendered_again);
    }

    #[test]
    fn extraction_inlines_literal_temporaries() {
        let source = "\
def test():
    x = 3
    y = 4
    assert add(x, y) == 7
";
        let extraction = extract_suite(&rt(), source, "add", AssertionOrigin::Initial)
            .unwrap()
            .unwrap();
        assert_eq!(extraction.suite.len(), 1);
        assert_eq!(extraction.suite.assertions[0].call_expression, "add(3, 4)");
        assert_eq!(
            extraction.suite.assertions[0].expected_literal.as_deref(),
            Some("7")
        );
    }

    #[test]
    fn extraction_accepts_mirrored_equality_and_bare_lines() {
        let source = "assert 5 == add(2, 3)\nassert add(1, 1) == 2\n";
        let extraction = extract_suite(&rt(), source, "add", AssertionOrigin::Initial)
            .unwrap()
            .unwrap();
        assert_eq!(extraction.suite.len(), 2);
        assert_eq!(extraction.suite.assertions[0].call_expression, "add(2, 3)");
        assert_eq!(
            extraction.suite.assertions[0].expected_literal.as_deref(),
            Some("5")
        );
    }

    #[test]
    fn extraction_skips_foreign_shapes_and_dedupes() {
        let source = "\
def test():
    assert add(1, 2) == 3
    assert add(1, 2) == 3
    assert helper(1) == 1
    assert add(unknown_var, 2) == 4
    assert add(1, 2) < 4
";
        let extraction = extract_suite(&rt(), source, "add", AssertionOrigin::Initial)
            .unwrap()
            .unwrap();
        assert_eq!(extraction.suite.len(), 1);
        assert_eq!(extraction.skipped, 4);
    }

    #[test]
    fn extraction_returns_none_for_unparseable_text() {
        let result = extract_suite(&rt(), "def test(:\n", "add", AssertionOrigin::Initial).unwrap();
        assert!(result.is_none());
    }

    fn failing_fix_gateway() -> Gateway {
        // Whatever the fix prompt is, the "model" answers with junk.
        Gateway::with_backend(
            Box::new(ScriptedBackend::from_entries([(
                FALLBACK_KEY.to_string(),
                vec!["still ( broken".to_string()],
            )])),
            10,
        )
    }

    #[test]
    fn fix_syntax_passes_valid_input_through_without_backend_calls() {
        let mut transcript = Transcript::new();
        let text = "def test():\n    assert add(1, 1) == 2\n";
        let outcome = fix_syntax(&rt(), &failing_fix_gateway(), text, &mut transcript).unwrap();
        assert_eq!(
            outcome,
            SyntaxFix::Valid {
                text: text.to_string(),
                llm_attempts: 0,
                truncated: false,
            }
        );
        assert!(transcript.is_empty());
    }

    #[test]
    fn fix_syntax_uses_model_fix_when_it_parses() {
        let broken = "def test():\n    assert add(1, 1 == 2\n";
        let fixed = "def test():\n    assert add(1, 1) == 2\n";
        let envelope = build_syntax_fix(broken);
        let gateway = Gateway::with_backend(
            Box::new(ScriptedBackend::from_entries([(
                envelope.key(),
                vec!["nope (".to_string(), fixed.to_string()],
            )])),
            10,
        );
        let mut transcript = Transcript::new();
        let outcome = fix_syntax(&rt(), &gateway, broken, &mut transcript).unwrap();
        assert_eq!(
            outcome,
            SyntaxFix::Valid {
                text: fixed.to_string(),
                llm_attempts: 2,
                truncated: false,
            }
        );
        assert_eq!(transcript.len(), 2);
    }

    #[test]
    fn fix_syntax_falls_back_to_longest_parseable_prefix() {
        let broken = "def test():\n    assert add(1, 1) == 2\n    assert add(2, 2 == \n";
        let mut transcript = Transcript::new();
        let outcome = fix_syntax(&rt(), &failing_fix_gateway(), broken, &mut transcript).unwrap();
        match outcome {
            SyntaxFix::Valid {
                text,
                llm_attempts,
                truncated,
            } => {
                assert_eq!(text, "def test():\n    assert add(1, 1) == 2\n");
                assert_eq!(llm_attempts, 10);
                assert!(truncated);
            }
            SyntaxFix::Irreparable => panic!("prefix exists"),
        }
        // Ten fix prompts were sent before truncation.
        assert_eq!(transcript.len(), 10);
    }

    #[test]
    fn fix_syntax_reports_irreparable_when_nothing_remains() {
        let mut transcript = Transcript::new();
        let outcome =
            fix_syntax(&rt(), &failing_fix_gateway(), "def (broken\n", &mut transcript).unwrap();
        assert_eq!(outcome, SyntaxFix::Irreparable);
    }

    #[test]
    fn repair_rewrites_wrong_expectations() {
        let suite = TestSuite::new(vec![
            Assertion::eq("add(2, 2)", "5", AssertionOrigin::Initial),
            Assertion::eq("add(1, 1)", "2", AssertionOrigin::Initial),
        ]);
        let repair = repair_behavior(&rt(), &program(), suite, crate::runtime::DEFAULT_TIMEOUT)
            .unwrap();
        assert_eq!(repair.repaired, 1);
        assert!(repair.dropped.is_empty());
        assert_eq!(repair.suite.assertions[0].expected_literal.as_deref(), Some("4"));
        assert!(repair.suite.assertions.iter().all(|a| a.verified));
    }

    #[test]
    fn repair_flips_truthiness_to_match_behavior() {
        let suite = TestSuite::new(vec![
            Assertion::is_false("add(2, 2)", AssertionOrigin::Initial),
            Assertion::is_true("add(0, 0)", AssertionOrigin::Initial),
        ]);
        let repair = repair_behavior(&rt(), &program(), suite, crate::runtime::DEFAULT_TIMEOUT)
            .unwrap();
        assert_eq!(repair.repaired, 2);
        assert_eq!(repair.suite.assertions[0].comparator, Comparator::IsTrue);
        assert_eq!(repair.suite.assertions[1].comparator, Comparator::IsFalse);
    }

    #[test]
    fn repair_drops_raising_calls_with_reasons() {
        let suite = TestSuite::new(vec![
            Assertion::eq("add(2, None)", "2", AssertionOrigin::Initial),
            Assertion::eq("add(1, 1)", "2", AssertionOrigin::Initial),
        ]);
        let repair = repair_behavior(&rt(), &program(), suite, crate::runtime::DEFAULT_TIMEOUT)
            .unwrap();
        assert_eq!(repair.suite.len(), 1);
        assert_eq!(repair.dropped.len(), 1);
        assert_eq!(repair.dropped[0].reason, DropReason::TypeFailure);
        assert_eq!(
            repair.dropped[0].assertion.call_expression,
            "add(2, None)"
        );
    }
}
