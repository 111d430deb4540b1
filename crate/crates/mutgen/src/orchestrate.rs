//! The per-task feedback loop: prompt, repair, score, re-prompt with
//! surviving mutants, minimize.
//!
//! Loop shape: an accepted initial completion becomes the repaired initial
//! suite; while mutants survive and unprompted survivors remain, one
//! survivor is embedded in an augmented prompt and any new verified
//! assertions are appended (exact duplicates skipped) before re-scoring.
//! Each survivor is prompted at most once, and the surviving set can only
//! shrink as the suite grows, so the loop runs at most once per initial
//! survivor. A round that yields nothing usable still consumes its survivor
//! and is recorded.

use std::collections::BTreeSet;
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{AcceptanceOutcome, Gateway, GatewayError, Transcript};
use crate::minimize::minimize_with_matrix;
use crate::mutation::{
    generate_mutants, kill_matrix, run_mutation_testing, Mutant, MutantStatus, MutationError,
    MutationReport,
};
use crate::prompt::{
    build_few_shot, build_zero_shot, default_demonstrations, DemonstrationPair, PromptError,
    PromptKind,
};
use crate::refine::{
    extract_suite, fix_syntax, repair_behavior, AssertionOrigin, DroppedAssertion, RefineError,
    SyntaxFix, TestSuite,
};
use crate::runtime::{InfraError, PythonRuntime, SubjectProgram};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Infra(#[from] InfraError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Mutation(#[from] MutationError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid task input: {0}")]
    InvalidTask(String),
}

impl From<RefineError> for PipelineError {
    fn from(err: RefineError) -> Self {
        match err {
            RefineError::Infra(e) => PipelineError::Infra(e),
            RefineError::Gateway(e) => PipelineError::Gateway(e),
        }
    }
}

/// How the next surviving mutant is chosen for augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivorPolicy {
    /// Lowest (line, column, operator) first.
    FirstInOrder,
    /// Uniform choice among unused survivors, deterministic per
    /// (seed, round).
    SeededRandom,
}

impl std::fmt::Display for SurvivorPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SurvivorPolicy::FirstInOrder => "first_in_order",
            SurvivorPolicy::SeededRandom => "seeded_random",
        })
    }
}

/// Terminal state of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOutcome {
    /// Every mutant killed.
    CompleteFullKill,
    /// Mutants survive but every survivor has been prompted.
    CompleteExhausted,
    /// No syntactically valid, behavior-consistent suite could be produced.
    Problematic,
    /// The program yields no mutants; nothing to measure against.
    TriviallyComplete,
}

impl std::fmt::Display for TaskOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskOutcome::CompleteFullKill => "complete_full_kill",
            TaskOutcome::CompleteExhausted => "complete_exhausted",
            TaskOutcome::Problematic => "problematic",
            TaskOutcome::TriviallyComplete => "trivially_complete",
        })
    }
}

/// Pipeline knobs. `seed` only matters for [`SurvivorPolicy::SeededRandom`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub prompt_kind: PromptKind,
    pub survivor_policy: SurvivorPolicy,
    pub seed: u64,
    /// Wall-clock budget per suite execution / call evaluation.
    pub exec_timeout: Duration,
    /// Demonstrations for few-shot prompts; `None` uses the built-in pair.
    pub demonstrations: Option<Vec<DemonstrationPair>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            prompt_kind: PromptKind::ZeroShot,
            survivor_policy: SurvivorPolicy::FirstInOrder,
            seed: 0,
            exec_timeout: crate::runtime::DEFAULT_TIMEOUT,
            demonstrations: None,
        }
    }
}

/// What happened in one augmentation round.
#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: u32,
    pub survivor_id: String,
    pub survivor_operator: String,
    pub prompt_key: String,
    /// Accepted completion text, when one was produced.
    pub completion: Option<String>,
    pub assertions_added: u32,
    /// Assertions from this round removed by behavior repair.
    pub dropped: Vec<DroppedAssertion>,
    /// Assertions in the completion that were not extractable.
    pub skipped: u32,
    pub ms_before: f64,
    pub ms_after: f64,
    /// Why the round added nothing, when applicable.
    pub note: Option<String>,
}

/// Full record of one task run.
#[derive(Debug, Clone, Serialize)]
pub struct TaskState {
    pub program: SubjectProgram,
    pub prompt_kind: PromptKind,
    pub outcome: TaskOutcome,
    /// Repaired initial suite.
    pub iut: TestSuite,
    /// Final suite after augmentation, before minimization.
    pub aut: TestSuite,
    /// Minimized final suite.
    pub fut: TestSuite,
    pub mutants: Vec<Mutant>,
    /// Survivor ids in the order they were prompted.
    pub used_survivors: Vec<String>,
    pub rounds: Vec<RoundRecord>,
    /// Mutation report for the initial suite (absent for problematic or
    /// trivially complete tasks).
    pub initial_report: Option<MutationReport>,
    /// Mutation report for the final augmented suite.
    pub final_report: Option<MutationReport>,
    /// Mutation report re-measured on the minimized suite.
    pub fut_report: Option<MutationReport>,
    /// Acceptance attempt that produced the initial completion.
    pub initial_attempts: u32,
    /// Fix prompts spent on the initial completion.
    pub syntax_fix_attempts: u32,
    /// Whether the initial completion needed prefix truncation.
    pub syntax_truncated: bool,
    /// Assertions dropped while repairing the initial completion.
    pub initial_dropped: Vec<DroppedAssertion>,
    /// Assertions in the initial completion that were not extractable.
    pub initial_skipped: u32,
    /// Reason for a problematic outcome.
    pub problem: Option<String>,
    /// Every backend exchange, in order.
    pub transcript: Transcript,
}

/// The acceptance predicate applied to assembled completions: the text must
/// contain an `assert` and mention the entry point.
pub fn acceptable_completion(text: &str, entry_name: &str) -> bool {
    text.contains("assert") && text.contains(entry_name)
}

/// Choose the next survivor to embed in an augmented prompt, skipping ones
/// already used. Returns `None` when every survivor has been prompted.
pub fn pick_survivor<'a>(
    mutants: &'a [Mutant],
    used: &BTreeSet<String>,
    policy: SurvivorPolicy,
    seed: u64,
    round: u32,
) -> Option<&'a Mutant> {
    let unused: Vec<&Mutant> = mutants
        .iter()
        .filter(|m| m.status == MutantStatus::Surviving && !used.contains(&m.mutant_id))
        .collect();
    if unused.is_empty() {
        return None;
    }
    match policy {
        SurvivorPolicy::FirstInOrder => Some(unused[0]),
        SurvivorPolicy::SeededRandom => {
            // Independent stream per round so selection depends only on
            // (seed, round, candidate set), not on call history.
            let stream = seed ^ u64::from(round).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            Some(unused[rng.gen_range(0..unused.len())])
        }
    }
}

struct TaskStateBuilder {
    program: SubjectProgram,
    prompt_kind: PromptKind,
    mutants: Vec<Mutant>,
    transcript: Transcript,
}

impl TaskStateBuilder {
    fn problematic(self, reason: impl Into<String>, initial_attempts: u32) -> TaskState {
        TaskState {
            program: self.program,
            prompt_kind: self.prompt_kind,
            outcome: TaskOutcome::Problematic,
            iut: TestSuite::empty(),
            aut: TestSuite::empty(),
            fut: TestSuite::empty(),
            mutants: self.mutants,
            used_survivors: Vec::new(),
            rounds: Vec::new(),
            initial_report: None,
            final_report: None,
            fut_report: None,
            initial_attempts,
            syntax_fix_attempts: 0,
            syntax_truncated: false,
            initial_dropped: Vec::new(),
            initial_skipped: 0,
            problem: Some(reason.into()),
            transcript: self.transcript,
        }
    }
}

/// Run the complete pipeline for one program.
pub fn run_task(
    rt: &PythonRuntime,
    gateway: &Gateway,
    program: &SubjectProgram,
    config: &PipelineConfig,
) -> Result<TaskState, PipelineError> {
    let info = rt.inspect(&program.source)?;
    if !info.report.ok {
        return Err(PipelineError::InvalidTask(format!(
            "program source does not parse (line {})",
            info.report.first_error_line.unwrap_or(1)
        )));
    }
    if !info.functions.iter().any(|f| f == &program.entry_name) {
        return Err(PipelineError::InvalidTask(format!(
            "entry function {:?} is not defined at top level",
            program.entry_name
        )));
    }

    let initial_envelope = match config.prompt_kind {
        PromptKind::ZeroShot => build_zero_shot(program)?,
        PromptKind::FewShot => {
            let default_demos;
            let demos = match &config.demonstrations {
                Some(demos) => demos.as_slice(),
                None => {
                    default_demos = default_demonstrations();
                    default_demos.as_slice()
                }
            };
            build_few_shot(program, demos)?
        }
        other => {
            return Err(PipelineError::InvalidTask(format!(
                "{other} is not an initial prompt kind"
            )))
        }
    };

    let mut mutants = generate_mutants(rt, program)?;
    let mut transcript = Transcript::new();
    let accept = |text: &str| acceptable_completion(text, &program.entry_name);

    // Initial completion, with the acceptance retry budget.
    let initial_completion =
        match gateway.complete_until_acceptable(&initial_envelope, &accept, &mut transcript)? {
            AcceptanceOutcome::Accepted(completion) => completion,
            AcceptanceOutcome::Exhausted { attempts } => {
                let builder = TaskStateBuilder {
                    program: program.clone(),
                    prompt_kind: config.prompt_kind,
                    mutants,
                    transcript,
                };
                return Ok(builder.problematic(
                    format!("no acceptable initial completion in {attempts} attempts"),
                    attempts,
                ));
            }
        };
    let initial_attempts = initial_completion.attempt;
    let raw = initial_envelope.assemble(&initial_completion.text);

    // Syntax repair, then extraction, then behavior repair.
    let (valid_text, syntax_fix_attempts, syntax_truncated) =
        match fix_syntax(rt, gateway, &raw, &mut transcript)? {
            SyntaxFix::Valid {
                text,
                llm_attempts,
                truncated,
            } => (text, llm_attempts, truncated),
            SyntaxFix::Irreparable => {
                let builder = TaskStateBuilder {
                    program: program.clone(),
                    prompt_kind: config.prompt_kind,
                    mutants,
                    transcript,
                };
                return Ok(
                    builder.problematic("initial completion is syntactically irreparable", initial_attempts)
                );
            }
        };
    let extraction = match extract_suite(rt, &valid_text, &program.entry_name, AssertionOrigin::Initial)? {
        Some(extraction) => extraction,
        None => {
            let builder = TaskStateBuilder {
                program: program.clone(),
                prompt_kind: config.prompt_kind,
                mutants,
                transcript,
            };
            return Ok(builder.problematic(
                "syntax-repaired completion no longer parses",
                initial_attempts,
            ));
        }
    };
    let initial_skipped = extraction.skipped;
    let repair = repair_behavior(rt, program, extraction.suite, config.exec_timeout)?;
    let iut = repair.suite;
    let initial_dropped = repair.dropped;
    if iut.is_empty() {
        let builder = TaskStateBuilder {
            program: program.clone(),
            prompt_kind: config.prompt_kind,
            mutants,
            transcript,
        };
        let mut state = builder.problematic(
            "no usable assertions survived extraction and repair",
            initial_attempts,
        );
        state.syntax_fix_attempts = syntax_fix_attempts;
        state.syntax_truncated = syntax_truncated;
        state.initial_dropped = initial_dropped;
        state.initial_skipped = initial_skipped;
        return Ok(state);
    }

    // A program with no mutants has nothing to measure or augment.
    if mutants.is_empty() {
        let empty_report = MutationReport::from_mutants(&[])?;
        let minimized = minimize_with_matrix(&iut, &vec![BTreeSet::new(); iut.len()]);
        return Ok(TaskState {
            program: program.clone(),
            prompt_kind: config.prompt_kind,
            outcome: TaskOutcome::TriviallyComplete,
            aut: iut.clone(),
            fut: minimized.suite,
            iut,
            mutants,
            used_survivors: Vec::new(),
            rounds: Vec::new(),
            initial_report: Some(empty_report.clone()),
            final_report: Some(empty_report.clone()),
            fut_report: Some(empty_report),
            initial_attempts,
            syntax_fix_attempts,
            syntax_truncated,
            initial_dropped,
            initial_skipped,
            problem: None,
            transcript,
        });
    }

    let initial_report = run_mutation_testing(rt, program, &iut, &mut mutants, config.exec_timeout)?;
    let mut aut = iut.clone();
    let mut current_report = initial_report.clone();
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut used_survivors: Vec<String> = Vec::new();
    let mut rounds: Vec<RoundRecord> = Vec::new();

    while !current_report.surviving_ids.is_empty() {
        let round_no = rounds.len() as u32 + 1;
        let survivor = match pick_survivor(
            &mutants,
            &used,
            config.survivor_policy,
            config.seed,
            round_no,
        ) {
            Some(mutant) => mutant.clone(),
            None => break, // every survivor prompted: exhausted
        };
        used.insert(survivor.mutant_id.clone());
        used_survivors.push(survivor.mutant_id.clone());
        if let Some(mutant) = mutants
            .iter_mut()
            .find(|m| m.mutant_id == survivor.mutant_id)
        {
            mutant.used_in_augmentation = true;
        }

        let envelope = crate::prompt::build_augmented(&initial_envelope, &aut, &survivor)?;
        let mut record = RoundRecord {
            round: round_no,
            survivor_id: survivor.mutant_id.clone(),
            survivor_operator: survivor.operator.code().to_string(),
            prompt_key: envelope.key(),
            completion: None,
            assertions_added: 0,
            dropped: Vec::new(),
            skipped: 0,
            ms_before: current_report.ms_percent,
            ms_after: current_report.ms_percent,
            note: None,
        };

        let completion =
            match gateway.complete_until_acceptable(&envelope, &accept, &mut transcript)? {
                AcceptanceOutcome::Accepted(completion) => completion,
                AcceptanceOutcome::Exhausted { attempts } => {
                    record.note = Some(format!("no acceptable completion in {attempts} attempts"));
                    rounds.push(record);
                    continue;
                }
            };
        record.completion = Some(completion.text.clone());
        let raw = envelope.assemble(&completion.text);
        let text = match fix_syntax(rt, gateway, &raw, &mut transcript)? {
            SyntaxFix::Valid { text, .. } => text,
            SyntaxFix::Irreparable => {
                record.note = Some("completion is syntactically irreparable".to_string());
                rounds.push(record);
                continue;
            }
        };
        let extraction = match extract_suite(
            rt,
            &text,
            &program.entry_name,
            AssertionOrigin::Augmentation { round: round_no },
        )? {
            Some(extraction) => extraction,
            None => {
                record.note = Some("syntax-repaired completion no longer parses".to_string());
                rounds.push(record);
                continue;
            }
        };
        record.skipped = extraction.skipped;
        let repair = repair_behavior(rt, program, extraction.suite, config.exec_timeout)?;
        record.dropped = repair.dropped;

        let existing: BTreeSet<String> = aut.assertions.iter().map(|a| a.render()).collect();
        let mut added = 0u32;
        for assertion in repair.suite.assertions {
            if !existing.contains(&assertion.render()) {
                aut.assertions.push(assertion);
                added += 1;
            }
        }
        record.assertions_added = added;
        if added > 0 {
            current_report =
                run_mutation_testing(rt, program, &aut, &mut mutants, config.exec_timeout)?;
        } else if record.note.is_none() {
            record.note = Some("no new assertions extracted".to_string());
        }
        record.ms_after = current_report.ms_percent;
        rounds.push(record);
    }

    let outcome = if current_report.surviving_ids.is_empty() {
        TaskOutcome::CompleteFullKill
    } else {
        TaskOutcome::CompleteExhausted
    };

    // Minimize against the per-assertion kill matrix, then re-measure the
    // reduced suite honestly on a fresh mutant population.
    let matrix = kill_matrix(rt, program, &aut, &mutants, config.exec_timeout)?;
    let minimized = minimize_with_matrix(&aut, &matrix);
    let fut = minimized.suite;
    let mut fut_mutants = mutants.clone();
    let fut_report = run_mutation_testing(rt, program, &fut, &mut fut_mutants, config.exec_timeout)?;

    Ok(TaskState {
        program: program.clone(),
        prompt_kind: config.prompt_kind,
        outcome,
        iut,
        aut,
        fut,
        mutants,
        used_survivors,
        rounds,
        initial_report: Some(initial_report),
        final_report: Some(current_report),
        fut_report: Some(fut_report),
        initial_attempts,
        syntax_fix_attempts,
        syntax_truncated,
        initial_dropped,
        initial_skipped,
        problem: None,
        transcript,
    })
}
