//! Greedy reduction of a test suite to an irredundant core.
//!
//! Assertions are ranked by how many mutants each kills on its own and
//! admitted greedily while cumulative coverage still grows; a final prune
//! removes any keeper whose kills are covered by the rest. The pruned set
//! kills exactly the same mutants as the input suite (greedy admission
//! preserves the union, pruning never removes a uniquely-covering member),
//! so the mutation score is unchanged while redundant oracles disappear.

use std::collections::BTreeSet;
use std::time::Duration;

use crate::mutation::{kill_matrix, Mutant, MutationError};
use crate::refine::TestSuite;
use crate::runtime::{PythonRuntime, SubjectProgram};

/// A reduced suite plus which input positions were kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minimized {
    pub suite: TestSuite,
    /// Indices into the input suite, ascending.
    pub kept_indices: Vec<usize>,
}

/// Reduce a suite given each assertion's individual kill set
/// (`kills[i]` belongs to `suite.assertions[i]`). Output order follows the
/// input suite.
pub fn minimize_with_matrix(suite: &TestSuite, kills: &[BTreeSet<String>]) -> Minimized {
    assert_eq!(
        suite.assertions.len(),
        kills.len(),
        "one kill set per assertion"
    );
    // Greedy admission: strongest assertion first (ties: input order),
    // keep it only if it covers something new.
    let mut order: Vec<usize> = (0..kills.len()).collect();
    order.sort_by(|&a, &b| kills[b].len().cmp(&kills[a].len()).then(a.cmp(&b)));
    let mut covered: BTreeSet<&String> = BTreeSet::new();
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        if kills[idx].iter().any(|id| !covered.contains(id)) {
            covered.extend(kills[idx].iter());
            kept.push(idx);
        }
    }
    // Prune: greedy admission alone can retain an assertion whose kills are
    // jointly covered by later admissions. Check the weakest keepers first;
    // removals only shrink the others' union, so one pass reaches a
    // fixpoint and the result is irredundant.
    let mut prune_order = kept.clone();
    prune_order.sort_by(|&a, &b| kills[a].len().cmp(&kills[b].len()).then(a.cmp(&b)));
    for candidate in prune_order {
        let others: BTreeSet<&String> = kept
            .iter()
            .filter(|&&idx| idx != candidate)
            .flat_map(|&idx| kills[idx].iter())
            .collect();
        if kills[candidate].iter().all(|id| others.contains(id)) {
            kept.retain(|&idx| idx != candidate);
        }
    }
    kept.sort_unstable();
    Minimized {
        suite: TestSuite::new(
            kept.iter()
                .map(|&idx| suite.assertions[idx].clone())
                .collect(),
        ),
        kept_indices: kept,
    }
}

/// Compute the kill matrix by executing singleton suites, then reduce.
pub fn minimize(
    rt: &PythonRuntime,
    program: &SubjectProgram,
    suite: &TestSuite,
    mutants: &[Mutant],
    timeout: Duration,
) -> Result<Minimized, MutationError> {
    let matrix = kill_matrix(rt, program, suite, mutants, timeout)?;
    Ok(minimize_with_matrix(suite, &matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refine::{Assertion, AssertionOrigin};

    fn suite_of(n: usize) -> TestSuite {
        TestSuite::new(
            (0..n)
                .map(|i| {
                    Assertion::eq(format!("f({i})"), i.to_string(), AssertionOrigin::Initial)
                })
                .collect(),
        )
    }

    fn sets(raw: &[&[u32]]) -> Vec<BTreeSet<String>> {
        raw.iter()
            .map(|ids| ids.iter().map(|id| format!("m{id}")).collect())
            .collect()
    }

    fn union(kills: &[BTreeSet<String>], indices: &[usize]) -> BTreeSet<String> {
        indices
            .iter()
            .flat_map(|&i| kills[i].iter().cloned())
            .collect()
    }

    #[test]
    fn drops_assertions_that_add_no_coverage() {
        let kills = sets(&[&[1, 2, 3], &[1, 2], &[4]]);
        let minimized = minimize_with_matrix(&suite_of(3), &kills);
        assert_eq!(minimized.kept_indices, vec![0, 2]);
        assert_eq!(minimized.suite.len(), 2);
    }

    #[test]
    fn prune_removes_greedy_leftovers() {
        // Greedy keeps all three ({1,2} first, then {1,3} adds 3, {2,4}
        // adds 4) but {1,2} is covered by the other two.
        let kills = sets(&[&[1, 2], &[1, 3], &[2, 4]]);
        let minimized = minimize_with_matrix(&suite_of(3), &kills);
        assert_eq!(minimized.kept_indices, vec![1, 2]);
        assert_eq!(
            union(&kills, &minimized.kept_indices),
            union(&kills, &[0, 1, 2])
        );
    }

    #[test]
    fn coverage_union_is_preserved() {
        let kills = sets(&[&[1], &[2, 3], &[3], &[4, 1], &[]]);
        let minimized = minimize_with_matrix(&suite_of(5), &kills);
        assert_eq!(
            union(&kills, &minimized.kept_indices),
            union(&kills, &[0, 1, 2, 3, 4])
        );
        // no kept assertion is redundant
        for &kept in &minimized.kept_indices {
            let others: Vec<usize> = minimized
                .kept_indices
                .iter()
                .copied()
                .filter(|&i| i != kept)
                .collect();
            let other_union = union(&kills, &others);
            assert!(
                !kills[kept].iter().all(|id| other_union.contains(id)),
                "assertion {kept} is redundant"
            );
        }
    }

    #[test]
    fn all_empty_kill_sets_minimize_to_nothing() {
        let kills = sets(&[&[], &[], &[]]);
        let minimized = minimize_with_matrix(&suite_of(3), &kills);
        assert!(minimized.suite.is_empty());
        assert!(minimized.kept_indices.is_empty());
    }

    #[test]
    fn output_preserves_input_order() {
        let kills = sets(&[&[9], &[1, 2, 3], &[7]]);
        let minimized = minimize_with_matrix(&suite_of(3), &kills);
        assert_eq!(minimized.kept_indices, vec![0, 1, 2]);
        let calls: Vec<&str> = minimized
            .suite
            .assertions
            .iter()
            .map(|a| a.call_expression.as_str())
            .collect();
        assert_eq!(calls, vec!["f(0)", "f(1)", "f(2)"]);
    }
}
