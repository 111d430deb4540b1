//! Mutation-guided unit-test generation for Python programs.
//!
//! The pipeline prompts a large-language-model backend for an initial unit
//! test of a program under test, repairs the output until it parses and its
//! assertions agree with the program's actual behavior, then measures the
//! repaired suite with mutation testing. Surviving mutants are fed back into
//! follow-up prompts until every mutant is killed or every survivor has been
//! tried, and the final suite is greedily reduced to an irredundant core.
//!
//! Modules mirror the pipeline stages:
//!
//! * [`runtime`] — sandboxed access to the Python interpreter (parsing,
//!   suite execution, expression evaluation).
//! * [`mutation`] — first-order mutant generation and mutation scoring.
//! * [`prompt`] — prompt assembly for the four prompt shapes.
//! * [`gateway`] — LLM backend abstraction (HTTP or scripted replay) with
//!   retry and rate limiting.
//! * [`refine`] — turning raw completions into syntactically valid,
//!   behavior-checked assertion suites.
//! * [`orchestrate`] — the per-task feedback loop.
//! * [`minimize`] — greedy reduction of the final suite.
//! * [`bench`] — benchmark corpus loading, end-to-end runs, and reporting.

pub mod bench;
pub mod gateway;
pub mod minimize;
pub mod mutation;
pub mod orchestrate;
pub mod prompt;
pub mod refine;
pub mod runtime;

/// Lowercase hex encoding of a byte slice (used for content hashes).
pub(crate) fn hex_encode(bytes: &[u8]) -> String {
    use std::fmt::Write;
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}
