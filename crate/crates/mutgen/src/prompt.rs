//! Prompt assembly for the LLM backend.
//!
//! Four prompt shapes exist: an initial zero-shot prompt, an initial
//! few-shot prompt built from two demonstration pairs, a syntax-fix prompt
//! for broken completions, and an augmented prompt that replays the initial
//! prompt as dialog history and asks for a test that distinguishes one
//! surviving mutant. The exact instruction strings, decode parameters, and
//! the `# test cases` completion seed are pinned here as constants; fixture
//! replay and the acceptance checks depend on them byte for byte.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::mutation::{Mutant, MutantStatus};
use crate::refine::TestSuite;
use crate::runtime::SubjectProgram;

/// Instruction opening the initial prompts.
pub const INSTRUCTION_GENERATE: &str = "Generate test case for the following code";

/// Instruction for the syntax-fix prompt.
pub const INSTRUCTION_FIX: &str = "Fix the syntax errors in the following code snippet";

/// First instruction of the augmentation turn (followed by the mutant).
pub const INSTRUCTION_UNDETECTED: &str =
    "The test function, test(), cannot detect the fault in the following code";

/// Second instruction of the augmentation turn (after the mutant).
pub const INSTRUCTION_NEW_TEST: &str =
    "Provide a new test case to detect the fault in prior code";

/// System message sent with every prompt.
pub const SYSTEM_MESSAGE: &str =
    "You are a Python coding assistant. Always answer with Python code.";

/// Seed the model is asked to continue from; prepended to completions before
/// refinement so the assembled text is a test-function prefix.
pub const COMPLETION_SEED: &str = "# test cases\ndef test():\n    assert ";

/// Decode defaults: generation prompts.
pub const GENERATION_TEMPERATURE: f64 = 0.8;
pub const GENERATION_MAX_TOKENS: u32 = 250;
/// Decode defaults: syntax-fix prompts.
pub const FIX_MAX_TOKENS: u32 = 20;
/// Stop sequences. Zero-shot stops at a quote; few-shot at the closing tag.
pub const ZERO_SHOT_STOP: &str = "\"";
pub const FEW_SHOT_STOP: &str = "</test>";

/// Number of demonstration pairs a few-shot prompt must carry.
pub const DEMONSTRATION_COUNT: usize = 2;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("program source is empty")]
    EmptySource,
    #[error("few-shot prompts need exactly {DEMONSTRATION_COUNT} demonstrations, got {0}")]
    WrongDemonstrationCount(usize),
    #[error("augmented prompts must start from an initial prompt, not {0}")]
    NotAnInitialPrompt(PromptKind),
    #[error("mutant {0} is not a surviving mutant")]
    MutantNotSurviving(String),
}

/// Which prompt shape an envelope carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    ZeroShot,
    FewShot,
    SyntaxFix,
    Augmented,
}

impl std::fmt::Display for PromptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PromptKind::ZeroShot => "zero_shot",
            PromptKind::FewShot => "few_shot",
            PromptKind::SyntaxFix => "syntax_fix",
            PromptKind::Augmented => "augmented",
        };
        f.write_str(name)
    }
}

/// Dialog role of one prompt segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One dialog turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub role: Role,
    pub content: String,
}

impl Segment {
    fn new(role: Role, content: impl Into<String>) -> Self {
        Segment {
            role,
            content: content.into(),
        }
    }
}

/// Decoding parameters sent to the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Generation halts when this sequence appears; the gateway also trims
    /// anything from the first occurrence onward.
    pub stop: Option<String>,
}

/// A fully assembled prompt: dialog segments plus decode parameters, tagged
/// with the shape it was built as.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEnvelope {
    pub kind: PromptKind,
    pub segments: Vec<Segment>,
    pub decode: DecodeParams,
    /// Text the completion is understood to continue from. Empty for
    /// few-shot and syntax-fix prompts.
    pub seed: String,
}

impl PromptEnvelope {
    /// Stable identity of this prompt: shape tag plus a content hash over
    /// the role-tagged segments. Scripted fixtures are keyed by this.
    pub fn key(&self) -> String {
        let mut hasher = Sha256::new();
        for segment in &self.segments {
            hasher.update(segment.role.as_str().as_bytes());
            hasher.update([0u8]);
            hasher.update(segment.content.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        format!("{}:{}", self.kind, &crate::hex_encode(&digest)[..16])
    }

    /// Join the seed with a completion: the text the refiner sees.
    pub fn assemble(&self, completion: &str) -> String {
        format!("{}{}", self.seed, completion)
    }

    /// Wire representation used by HTTP backends and the audit trail.
    pub fn to_wire_json(&self, model: &str) -> serde_json::Value {
        let messages: Vec<serde_json::Value> = self
            .segments
            .iter()
            .map(|segment| {
                serde_json::json!({
                    "role": segment.role.as_str(),
                    "content": segment.content,
                })
            })
            .collect();
        let mut body = serde_json::json!({
            "model": model,
            "messages": messages,
            "temperature": self.decode.temperature,
            "max_tokens": self.decode.max_tokens,
        });
        if let Some(stop) = &self.decode.stop {
            body["stop"] = serde_json::json!([stop]);
        }
        body
    }
}

/// One worked example for few-shot prompting: a method and its unit test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemonstrationPair {
    pub program: String,
    pub test: String,
}

/// The two demonstrations shipped with the pipeline.
pub fn default_demonstrations() -> Vec<DemonstrationPair> {
    vec![
        DemonstrationPair {
            program: "def add(a, b):\n    return a + b".to_string(),
            test: "def test():\n    assert add(2, 3) == 5\n    assert add(-1, 1) == 0".to_string(),
        },
        DemonstrationPair {
            program: "def is_even(n):\n    return n % 2 == 0".to_string(),
            test: "def test():\n    assert is_even(4) == True\n    assert is_even(7) == False"
                .to_string(),
        },
    ]
}

fn generation_decode(stop: &str) -> DecodeParams {
    DecodeParams {
        temperature: GENERATION_TEMPERATURE,
        max_tokens: GENERATION_MAX_TOKENS,
        stop: Some(stop.to_string()),
    }
}

/// Initial zero-shot prompt: instruction, program, completion seed.
pub fn build_zero_shot(program: &SubjectProgram) -> Result<PromptEnvelope, PromptError> {
    if program.source.trim().is_empty() {
        return Err(PromptError::EmptySource);
    }
    let content = format!(
        "{}\n{}\n{}",
        INSTRUCTION_GENERATE,
        program.source.trim_end(),
        COMPLETION_SEED
    );
    Ok(PromptEnvelope {
        kind: PromptKind::ZeroShot,
        segments: vec![
            Segment::new(Role::System, SYSTEM_MESSAGE),
            Segment::new(Role::User, content),
        ],
        decode: generation_decode(ZERO_SHOT_STOP),
        seed: COMPLETION_SEED.to_string(),
    })
}

/// Initial few-shot prompt: two tagged method/test demonstrations followed
/// by the program and an open `<test>` tag.
pub fn build_few_shot(
    program: &SubjectProgram,
    demonstrations: &[DemonstrationPair],
) -> Result<PromptEnvelope, PromptError> {
    if program.source.trim().is_empty() {
        return Err(PromptError::EmptySource);
    }
    if demonstrations.len() != DEMONSTRATION_COUNT {
        return Err(PromptError::WrongDemonstrationCount(demonstrations.len()));
    }
    let mut content = String::new();
    for demo in demonstrations {
        content.push_str(&format!(
            "<code>{}</code>\n<test>{}</test>\n",
            demo.program.trim_end(),
            demo.test.trim_end()
        ));
    }
    content.push_str(&format!("<code>{}</code>\n<test>", program.source.trim_end()));
    Ok(PromptEnvelope {
        kind: PromptKind::FewShot,
        segments: vec![
            Segment::new(Role::System, SYSTEM_MESSAGE),
            Segment::new(Role::User, content),
        ],
        decode: generation_decode(FEW_SHOT_STOP),
        seed: String::new(),
    })
}

/// Syntax-fix prompt for a completion that does not parse.
pub fn build_syntax_fix(broken: &str) -> PromptEnvelope {
    let content = format!("{}\n{}", INSTRUCTION_FIX, broken.trim_end());
    PromptEnvelope {
        kind: PromptKind::SyntaxFix,
        segments: vec![
            Segment::new(Role::System, SYSTEM_MESSAGE),
            Segment::new(Role::User, content),
        ],
        decode: DecodeParams {
            temperature: GENERATION_TEMPERATURE,
            max_tokens: FIX_MAX_TOKENS,
            stop: None,
        },
        seed: String::new(),
    }
}

/// Augmented prompt: the initial request and the current test suite as
/// dialog history, then one surviving mutant and a request for a test that
/// detects it. Decode parameters and the seed convention are inherited from
/// the initial prompt.
pub fn build_augmented(
    initial: &PromptEnvelope,
    current_suite: &TestSuite,
    survivor: &Mutant,
) -> Result<PromptEnvelope, PromptError> {
    if !matches!(initial.kind, PromptKind::ZeroShot | PromptKind::FewShot) {
        return Err(PromptError::NotAnInitialPrompt(initial.kind));
    }
    if survivor.status != MutantStatus::Surviving {
        return Err(PromptError::MutantNotSurviving(survivor.mutant_id.clone()));
    }
    let history: Vec<String> = initial
        .segments
        .iter()
        .filter(|segment| segment.role == Role::User)
        .map(|segment| segment.content.clone())
        .collect();
    let mut request = format!(
        "{}\n{}\n{}",
        INSTRUCTION_UNDETECTED,
        survivor.source.trim_end(),
        INSTRUCTION_NEW_TEST
    );
    if !initial.seed.is_empty() {
        request.push('\n');
        request.push_str(&initial.seed);
    }
    Ok(PromptEnvelope {
        kind: PromptKind::Augmented,
        segments: vec![
            Segment::new(Role::System, SYSTEM_MESSAGE),
            Segment::new(Role::User, history.join("\n")),
            Segment::new(Role::Assistant, current_suite.render().trim_end().to_string()),
            Segment::new(Role::User, request),
        ],
        decode: initial.decode.clone(),
        seed: initial.seed.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutation::{MutationOperator, MutationSite};
    use crate::refine::{Assertion, AssertionOrigin};

    fn program() -> SubjectProgram {
        SubjectProgram::new("t", "add", "def add(a, b):\n    return a + b\n")
    }

    #[test]
    fn zero_shot_layout_is_instruction_program_seed() {
        let envelope = build_zero_shot(&program()).unwrap();
        assert_eq!(envelope.kind, PromptKind::ZeroShot);
        assert_eq!(envelope.segments.len(), 2);
        assert_eq!(envelope.segments[0].role, Role::System);
        let user = &envelope.segments[1].content;
        assert!(user.starts_with(INSTRUCTION_GENERATE));
        assert!(user.contains("def add(a, b):"));
        assert!(user.ends_with(COMPLETION_SEED));
        assert_eq!(envelope.decode.stop.as_deref(), Some(ZERO_SHOT_STOP));
        assert_eq!(envelope.decode.max_tokens, GENERATION_MAX_TOKENS);
    }

    #[test]
    fn few_shot_layout_alternates_code_and_test_tags() {
        let envelope = build_few_shot(&program(), &default_demonstrations()).unwrap();
        let user = &envelope.segments[1].content;
        assert_eq!(user.matches("<code>").count(), 3);
        assert_eq!(user.matches("</code>").count(), 3);
        assert_eq!(user.matches("<test>").count(), 3);
        // The final test tag is left open for the model to complete.
        assert_eq!(user.matches("</test>").count(), 2);
        assert!(user.ends_with("<test>"));
        assert_eq!(envelope.decode.stop.as_deref(), Some(FEW_SHOT_STOP));
        assert!(envelope.seed.is_empty());
    }

    #[test]
    fn few_shot_requires_exactly_two_demonstrations() {
        let one = vec![default_demonstrations().remove(0)];
        let err = build_few_shot(&program(), &one).unwrap_err();
        assert_eq!(err, PromptError::WrongDemonstrationCount(1));
    }

    #[test]
    fn syntax_fix_uses_short_budget_and_no_stop() {
        let envelope = build_syntax_fix("def test(:\n    assert add(1");
        assert_eq!(envelope.kind, PromptKind::SyntaxFix);
        assert!(envelope.segments[1].content.starts_with(INSTRUCTION_FIX));
        assert_eq!(envelope.decode.max_tokens, FIX_MAX_TOKENS);
        assert_eq!(envelope.decode.stop, None);
    }

    #[test]
    fn augmented_replays_history_and_requests_detection() {
        let initial = build_zero_shot(&program()).unwrap();
        let suite = TestSuite::new(vec![Assertion::eq(
            "add(2, 2)",
            "4",
            AssertionOrigin::Initial,
        )]);
        let survivor = Mutant {
            mutant_id: "m1".to_string(),
            operator: MutationOperator::AOR,
            site: MutationSite { line: 2, col: 13 },
            source: "def add(a, b):\n    return a - b\n".to_string(),
            status: MutantStatus::Surviving,
            used_in_augmentation: false,
        };
        let envelope = build_augmented(&initial, &suite, &survivor).unwrap();
        assert_eq!(envelope.kind, PromptKind::Augmented);
        let roles: Vec<Role> = envelope.segments.iter().map(|s| s.role).collect();
        assert_eq!(roles, vec![Role::System, Role::User, Role::Assistant, Role::User]);
        assert!(envelope.segments[2].content.contains("assert add(2, 2) == 4"));
        let request = &envelope.segments[3].content;
        assert!(request.starts_with(INSTRUCTION_UNDETECTED));
        assert!(request.contains("return a - b"));
        assert!(request.contains(INSTRUCTION_NEW_TEST));
        assert!(request.ends_with(COMPLETION_SEED));
        assert_eq!(envelope.decode.stop.as_deref(), Some(ZERO_SHOT_STOP));
    }

    #[test]
    fn augmented_rejects_killed_mutants() {
        let initial = build_zero_shot(&program()).unwrap();
        let suite = TestSuite::new(vec![Assertion::eq(
            "add(2, 2)",
            "4",
            AssertionOrigin::Initial,
        )]);
        let mut mutant = Mutant {
            mutant_id: "m1".to_string(),
            operator: MutationOperator::AOR,
            site: MutationSite { line: 2, col: 13 },
            source: String::new(),
            status: MutantStatus::Killed,
            used_in_augmentation: false,
        };
        mutant.status = MutantStatus::Killed;
        let err = build_augmented(&initial, &suite, &mutant).unwrap_err();
        assert_eq!(err, PromptError::MutantNotSurviving("m1".to_string()));
    }

    #[test]
    fn keys_distinguish_content_and_collide_for_equal_prompts() {
        let a = build_zero_shot(&program()).unwrap();
        let b = build_zero_shot(&program()).unwrap();
        let c = build_zero_shot(&SubjectProgram::new(
            "t",
            "sub",
            "def sub(a, b):\n    return a - b\n",
        ))
        .unwrap();
        assert_eq!(a.key(), b.key());
        assert_ne!(a.key(), c.key());
        assert!(a.key().starts_with("zero_shot:"));
    }

    #[test]
    fn assemble_prepends_seed() {
        let envelope = build_zero_shot(&program()).unwrap();
        let text = envelope.assemble("add(1, 2) == 3\n");
        assert!(text.starts_with("# test cases\ndef test():\n    assert add(1, 2) == 3"));
    }
}
