//! Shared helpers for integration tests: fixture paths, a scriptable
//! sequenced backend, and the canned responses that drive the demo corpus.
//!
//! Each integration-test binary compiles its own copy of this module and
//! uses a different subset of the helpers, so unused-item lints are off.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::Mutex;

use mutgen::gateway::{Backend, Gateway, GatewayError, RawResponse};
use mutgen::orchestrate::{run_task, PipelineConfig, TaskState};
use mutgen::prompt::{PromptEnvelope, PromptKind};
use mutgen::runtime::{PythonRuntime, SubjectProgram};

pub fn rt() -> PythonRuntime {
    PythonRuntime::discover().expect("python interpreter available")
}

pub fn fixtures_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("fixtures")
}

pub fn corpus_dir() -> PathBuf {
    fixtures_root().join("corpus")
}

pub fn responses_dir() -> PathBuf {
    fixtures_root().join("responses")
}

/// Test backend that answers by prompt kind from fixed queues, independent
/// of prompt content. The last response of a queue repeats once the queue
/// drains, mirroring the scripted backend's cursor behavior.
pub struct SequencedBackend {
    initial: Mutex<VecDeque<String>>,
    augmented: Mutex<VecDeque<String>>,
    fixes: Mutex<VecDeque<String>>,
}

impl SequencedBackend {
    pub fn new(
        initial: Vec<&str>,
        augmented: Vec<&str>,
        fixes: Vec<&str>,
    ) -> Self {
        let q = |items: Vec<&str>| Mutex::new(items.into_iter().map(String::from).collect());
        SequencedBackend {
            initial: q(initial),
            augmented: q(augmented),
            fixes: q(fixes),
        }
    }
}

impl Backend for SequencedBackend {
    fn complete_once(&self, envelope: &PromptEnvelope) -> Result<RawResponse, GatewayError> {
        let queue = match envelope.kind {
            PromptKind::ZeroShot | PromptKind::FewShot => &self.initial,
            PromptKind::Augmented => &self.augmented,
            PromptKind::SyntaxFix => &self.fixes,
        };
        let mut queue = queue.lock().expect("queue lock");
        let text = if queue.len() > 1 {
            queue.pop_front().unwrap()
        } else {
            queue
                .front()
                .cloned()
                .ok_or_else(|| GatewayError::Protocol(format!("no canned {} response", envelope.kind)))?
        };
        Ok(RawResponse {
            text,
            request: envelope.to_wire_json("sequenced"),
        })
    }

    fn name(&self) -> &'static str {
        "sequenced"
    }
}

/// Walkthrough responses: an initial three-assertion test, a first
/// augmentation that kills three of the four survivors, and a second that
/// adds a true-but-useless assertion.
pub const ANY_INT_INITIAL: &str = "any_int(5, 2, 7) == True\n    assert any_int(3, -2, 1) == True\n    assert any_int(2.5, 2.5, 5) == False\n";
pub const ANY_INT_ROUND_1: &str =
    "any_int(2, 5, 3) == True\n    assert any_int(4, 2, 3) == False\n";
pub const ANY_INT_ROUND_2: &str = "any_int(1, 2, 4) == False\n";
/// Deliberately wrong expectation; behavior repair rewrites it to 4.
pub const ADD_TWO_INITIAL: &str = "add_two(2, 2) == 5\n";
pub const CONST_FIVE_INITIAL: &str = "const_five() == 5\n";

/// Canned response queues per task, in the order the pipeline asks.
pub fn canned_responses(task_id: &str) -> (Vec<&'static str>, Vec<&'static str>) {
    match task_id {
        "any_int" => (
            vec![ANY_INT_INITIAL],
            vec![ANY_INT_ROUND_1, ANY_INT_ROUND_2],
        ),
        "add_two" => (vec![ADD_TWO_INITIAL], vec![]),
        "const_five" => (vec![CONST_FIVE_INITIAL], vec![]),
        other => panic!("no canned responses for task {other:?}"),
    }
}

/// Run one task against its canned responses and return the state.
pub fn run_with_canned_responses(
    rt: &PythonRuntime,
    program: &SubjectProgram,
    config: &PipelineConfig,
) -> TaskState {
    let (initial, augmented) = canned_responses(&program.task_id);
    let backend = SequencedBackend::new(initial, augmented, vec![]);
    let gateway = Gateway::with_backend(Box::new(backend), 10);
    run_task(rt, &gateway, program, config).expect("pipeline run succeeds")
}

/// Scripted-backend fixture files derived from canned-response runs: one
/// `(file_name, contents)` per prompt key, in deterministic order.
pub fn scripted_fixture_entries(rt: &PythonRuntime) -> Vec<(String, serde_json::Value)> {
    let corpus = mutgen::bench::load_corpus(rt, &corpus_dir()).expect("corpus loads");
    assert!(
        corpus.warnings.is_empty(),
        "fixture corpus should be clean: {:?}",
        corpus.warnings
    );
    let mut entries = Vec::new();
    for task in &corpus.tasks {
        let state = run_with_canned_responses(rt, &task.reference, &PipelineConfig::default());
        // Group responses by key, preserving per-key request order.
        let mut by_key: BTreeMap<String, (usize, PromptKind, Vec<String>)> = BTreeMap::new();
        for (position, exchange) in state.transcript.iter().enumerate() {
            let slot = by_key
                .entry(exchange.key.clone())
                .or_insert((position, exchange.kind, Vec::new()));
            slot.2.push(exchange.response.clone());
        }
        let mut ordered: Vec<(String, (usize, PromptKind, Vec<String>))> =
            by_key.into_iter().collect();
        ordered.sort_by_key(|(_, (position, _, _))| *position);
        for (index, (key, (_, kind, responses))) in ordered.into_iter().enumerate() {
            let name = format!("{}-{:02}-{}.json", task.task_id, index, kind);
            let contents = serde_json::json!({
                "key": key,
                "responses": responses,
            });
            entries.push((name, contents));
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}
