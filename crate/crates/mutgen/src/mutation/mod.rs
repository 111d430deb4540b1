//! First-order mutant generation and mutation scoring.
//!
//! Eleven mutation operators are supported (the classic MutPy set minus the
//! categories that need runtime type information). Sites are discovered by
//! walking the program's AST in an interpreter sandbox; each site yields
//! exactly one mutant via byte-precise text surgery, so mutants differ from
//! the original in a single operator occurrence and everything else —
//! formatting, comments — survives verbatim. Mutants are ordered by
//! (line, column, operator code) and identified by a content hash.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::refine::TestSuite;
use crate::runtime::{Helper, InfraError, PythonRuntime, SubjectProgram};

const SITES_HELPER: Helper = Helper {
    name: "sites.py",
    source: include_str!("py/sites.py"),
};

#[derive(Debug, thiserror::Error)]
pub enum MutationError {
    #[error(transparent)]
    Infra(#[from] InfraError),
    #[error("program does not parse; nothing to mutate")]
    UnparseableProgram,
    #[error("mutant {0} has not been executed yet")]
    UntestedMutant(String),
}

/// The supported mutation operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MutationOperator {
    /// Arithmetic operator deletion: drop a unary `+`/`-`.
    AOD,
    /// Arithmetic operator replacement: swap a binary arithmetic operator.
    AOR,
    /// Assignment operator replacement: swap an augmented assignment.
    ASR,
    /// Break/continue replacement.
    BCR,
    /// Conditional operator deletion: drop a `not`.
    COD,
    /// Conditional operator insertion: negate an `if`/`while` test.
    COI,
    /// Exception handler deletion: handler body becomes `raise`.
    EHD,
    /// Exception swallowing: handler body becomes `pass`.
    EXS,
    /// Logical connector replacement: flip `and`/`or`.
    LCR,
    /// Relational operator replacement: swap a comparison.
    ROR,
    /// Slice index removal: a subscript slice becomes `[:]`.
    SIR,
}

impl MutationOperator {
    pub const ALL: [MutationOperator; 11] = [
        MutationOperator::AOD,
        MutationOperator::AOR,
        MutationOperator::ASR,
        MutationOperator::BCR,
        MutationOperator::COD,
        MutationOperator::COI,
        MutationOperator::EHD,
        MutationOperator::EXS,
        MutationOperator::LCR,
        MutationOperator::ROR,
        MutationOperator::SIR,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            MutationOperator::AOD => "AOD",
            MutationOperator::AOR => "AOR",
            MutationOperator::ASR => "ASR",
            MutationOperator::BCR => "BCR",
            MutationOperator::COD => "COD",
            MutationOperator::COI => "COI",
            MutationOperator::EHD => "EHD",
            MutationOperator::EXS => "EXS",
            MutationOperator::LCR => "LCR",
            MutationOperator::ROR => "ROR",
            MutationOperator::SIR => "SIR",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        MutationOperator::ALL
            .into_iter()
            .find(|op| op.code() == code)
    }
}

impl std::fmt::Display for MutationOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Where a mutation was applied: 1-based line, 0-based byte column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MutationSite {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutantStatus {
    /// Not yet executed against any suite.
    Untested,
    /// At least one assertion failed (or the mutant crashed/timed out).
    Killed,
    /// The full suite passed on this mutant.
    Surviving,
}

/// One first-order mutant of the program under test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutant {
    /// Content hash over (operator, site, mutated source); stable across
    /// runs and processes.
    pub mutant_id: String,
    pub operator: MutationOperator,
    pub site: MutationSite,
    /// Full mutated module source.
    pub source: String,
    pub status: MutantStatus,
    /// Set once this mutant has been embedded in an augmented prompt.
    pub used_in_augmentation: bool,
}

#[derive(Debug, Deserialize)]
struct RawEdit {
    start: usize,
    end: usize,
    text: String,
}

#[derive(Debug, Deserialize)]
struct RawSite {
    op: String,
    line: u32,
    col: u32,
    edits: Vec<RawEdit>,
}

/// Splice a set of non-overlapping byte edits into the source.
fn apply_edits(source: &str, edits: &[RawEdit]) -> Option<String> {
    let bytes = source.as_bytes();
    let mut sorted: Vec<&RawEdit> = edits.iter().collect();
    sorted.sort_by_key(|edit| (edit.start, edit.end));
    let mut out: Vec<u8> = Vec::with_capacity(bytes.len() + 16);
    let mut cursor = 0usize;
    for edit in sorted {
        if edit.start < cursor || edit.end < edit.start || edit.end > bytes.len() {
            return None;
        }
        out.extend_from_slice(&bytes[cursor..edit.start]);
        out.extend_from_slice(edit.text.as_bytes());
        cursor = edit.end;
    }
    out.extend_from_slice(&bytes[cursor..]);
    String::from_utf8(out).ok()
}

/// Generate every first-order mutant of the program, ordered by
/// (line, column, operator code). Candidates that fail to parse or that
/// reproduce the original source are discarded.
pub fn generate_mutants(
    rt: &PythonRuntime,
    program: &SubjectProgram,
) -> Result<Vec<Mutant>, MutationError> {
    let payload = serde_json::json!({ "source": program.source });
    let value = rt.run_helper(SITES_HELPER, &payload, &[], crate::runtime::DEFAULT_TIMEOUT)?;
    if !value["ok"].as_bool().unwrap_or(false) {
        return Err(MutationError::UnparseableProgram);
    }
    let mut sites: Vec<RawSite> = serde_json::from_value(value["sites"].clone())
        .map_err(|err| InfraError::Helper {
            helper: SITES_HELPER.name.to_string(),
            detail: format!("bad site record: {err}"),
        })?;
    sites.sort_by(|a, b| {
        (a.line, a.col, a.op.as_str()).cmp(&(b.line, b.col, b.op.as_str()))
    });

    let mut candidates: Vec<(MutationOperator, MutationSite, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for site in &sites {
        let operator = match MutationOperator::from_code(&site.op) {
            Some(op) => op,
            None => {
                return Err(MutationError::Infra(InfraError::Helper {
                    helper: SITES_HELPER.name.to_string(),
                    detail: format!("unknown operator code {:?}", site.op),
                }))
            }
        };
        let mutated = match apply_edits(&program.source, &site.edits) {
            Some(text) if text != program.source => text,
            _ => continue,
        };
        if !seen.insert((site.line, site.col, operator)) {
            continue; // duplicate site; keep the first occurrence
        }
        candidates.push((
            operator,
            MutationSite {
                line: site.line,
                col: site.col,
            },
            mutated,
        ));
    }

    // Batch-validate: a mutant must still parse.
    let sources: Vec<&str> = candidates.iter().map(|(_, _, src)| src.as_str()).collect();
    let reports = rt.check_syntax_batch(&sources)?;
    Ok(candidates
        .into_iter()
        .zip(reports)
        .filter(|(_, report)| report.ok)
        .map(|((operator, site, source), _)| {
            let mut hasher = Sha256::new();
            hasher.update(operator.code().as_bytes());
            hasher.update(format!(":{}:{}:", site.line, site.col).as_bytes());
            hasher.update(source.as_bytes());
            let digest = hasher.finalize();
            Mutant {
                mutant_id: format!("m{}", &crate::hex_encode(&digest)[..12]),
                operator,
                site,
                source,
                status: MutantStatus::Untested,
                used_in_augmentation: false,
            }
        })
        .collect())
}

/// Per-operator kill statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorStats {
    pub killed: u32,
    pub total: u32,
}

/// Result of running a suite against a mutant population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationReport {
    pub total: u32,
    pub killed: u32,
    /// Mutation score in percent; 100.0 for an empty population (nothing
    /// left alive).
    pub ms_percent: f64,
    /// Ids of surviving mutants, in mutant order.
    pub surviving_ids: Vec<String>,
    /// Kill statistics keyed by operator code.
    pub by_operator: BTreeMap<String, OperatorStats>,
}

impl MutationReport {
    pub fn score(killed: u32, total: u32) -> f64 {
        if total == 0 {
            100.0
        } else {
            100.0 * f64::from(killed) / f64::from(total)
        }
    }

    /// Build a report from mutants whose status is already decided.
    pub fn from_mutants(mutants: &[Mutant]) -> Result<Self, MutationError> {
        let mut killed = 0u32;
        let mut surviving_ids = Vec::new();
        let mut by_operator: BTreeMap<String, OperatorStats> = BTreeMap::new();
        for mutant in mutants {
            let stats = by_operator
                .entry(mutant.operator.code().to_string())
                .or_default();
            stats.total += 1;
            match mutant.status {
                MutantStatus::Killed => {
                    killed += 1;
                    stats.killed += 1;
                }
                MutantStatus::Surviving => surviving_ids.push(mutant.mutant_id.clone()),
                MutantStatus::Untested => {
                    return Err(MutationError::UntestedMutant(mutant.mutant_id.clone()))
                }
            }
        }
        let total = mutants.len() as u32;
        Ok(MutationReport {
            total,
            killed,
            ms_percent: MutationReport::score(killed, total),
            surviving_ids,
            by_operator,
        })
    }
}

/// Execute the suite once per mutant, update each mutant's status, and
/// summarize. A mutant is killed when the suite does not pass on it.
pub fn run_mutation_testing(
    rt: &PythonRuntime,
    program: &SubjectProgram,
    suite: &TestSuite,
    mutants: &mut [Mutant],
    timeout: Duration,
) -> Result<MutationReport, MutationError> {
    for mutant in mutants.iter_mut() {
        let variant = program.with_source(mutant.source.clone());
        let outcome = rt.execute_suite(&variant, suite, timeout)?;
        mutant.status = if outcome.is_pass() {
            MutantStatus::Surviving
        } else {
            MutantStatus::Killed
        };
    }
    MutationReport::from_mutants(mutants)
}

/// For each assertion, the set of mutant ids it kills on its own.
/// Computed by running singleton suites; position i corresponds to
/// `suite.assertions[i]`.
pub fn kill_matrix(
    rt: &PythonRuntime,
    program: &SubjectProgram,
    suite: &TestSuite,
    mutants: &[Mutant],
    timeout: Duration,
) -> Result<Vec<BTreeSet<String>>, MutationError> {
    let mut matrix = Vec::with_capacity(suite.assertions.len());
    for assertion in &suite.assertions {
        let singleton = TestSuite::new(vec![assertion.clone()]);
        let mut kills = BTreeSet::new();
        for mutant in mutants {
            let variant = program.with_source(mutant.source.clone());
            let outcome = rt.execute_suite(&variant, &singleton, timeout)?;
            if !outcome.is_pass() {
                kills.insert(mutant.mutant_id.clone());
            }
        }
        matrix.push(kills);
    }
    Ok(matrix)
}
