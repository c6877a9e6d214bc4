//! Executed ground truth: per-test line coverage on the original program and
//! the kill matrix over covering (mutant, test) pairs.
//!
//! Only tests whose coverage includes a mutant's line are run against it. A
//! test that never executes a line cannot observe a change on that line, so
//! uncovered pairs are always undetected and are left out of the matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::minilang::{parse, run_test, ParseError, Program, RunError, TestStatus};
use crate::mutation::{apply_mutant, Mutant, MutationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Detected,
    Undetected,
}

impl Verdict {
    pub fn from_detected(detected: bool) -> Self {
        if detected {
            Verdict::Detected
        } else {
            Verdict::Undetected
        }
    }

    pub fn is_detected(self) -> bool {
        self == Verdict::Detected
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Detected => "detected",
            Verdict::Undetected => "undetected",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GroundTruthError {
    #[error("test suite is red on the original program; failing tests: {}", .0.join(", "))]
    RedSuite(Vec<String>),
    #[error(transparent)]
    Mutation(#[from] MutationError),
    #[error("mutant {id} does not parse: {source}")]
    MutantParse { id: String, source: ParseError },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("mutant {0} has no covering tests")]
    Uncovered(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCoverage {
    pub lines: BTreeSet<u32>,
    pub cost_steps: u64,
}

/// Per-test covered lines and baseline step cost, in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverageMap {
    tests: IndexMap<String, TestCoverage>,
}

impl CoverageMap {
    pub fn get(&self, test: &str) -> Option<&TestCoverage> {
        self.tests.get(test)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &TestCoverage)> {
        self.tests.iter()
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    pub fn insert(&mut self, test: String, coverage: TestCoverage) {
        self.tests.insert(test, coverage);
    }

    /// Copy with every test id prefixed as `project::test`.
    pub fn qualified(&self, project: &str) -> CoverageMap {
        CoverageMap {
            tests: self.tests.iter().map(|(k, v)| (qualify(project, k), v.clone())).collect(),
        }
    }

    /// Appends another map's tests after this one's.
    pub fn extend(&mut self, other: CoverageMap) {
        self.tests.extend(other.tests);
    }
}

pub fn qualify(project: &str, test: &str) -> String {
    if project.is_empty() {
        test.to_string()
    } else {
        format!("{project}::{test}")
    }
}

/// Runs every test on the unmutated program. All tests must pass.
pub fn build_coverage(program: &Program, budget: u64) -> Result<CoverageMap, GroundTruthError> {
    let outcomes: Vec<_> = program
        .tests
        .par_iter()
        .map(|t| run_test(program, &t.name, budget).map(|o| (t.name.clone(), o)))
        .collect::<Result<_, _>>()?;
    let failing: Vec<String> = outcomes
        .iter()
        .filter(|(_, o)| o.status != TestStatus::Pass)
        .map(|(n, _)| n.clone())
        .collect();
    if !failing.is_empty() {
        return Err(GroundTruthError::RedSuite(failing));
    }
    let mut map = CoverageMap::default();
    for (name, o) in outcomes {
        map.insert(name, TestCoverage { lines: o.covered_lines, cost_steps: o.steps_used });
    }
    Ok(map)
}

/// Tests whose coverage includes the mutant's line, in declaration order.
pub fn covering_tests(mutant: &Mutant, coverage: &CoverageMap) -> Vec<String> {
    coverage
        .iter()
        .filter(|(_, c)| c.lines.contains(&mutant.line))
        .map(|(name, _)| name.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub detected: bool,
    /// Interpreter steps the test took on the mutant.
    pub cost_steps: u64,
}

/// One line of `matrix.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub mutant_id: String,
    pub test_id: String,
    pub detected: bool,
    pub cost_steps: u64,
}

/// Ground-truth outcomes for covering pairs, ordered by (mutant_id, test_id).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KillMatrix {
    entries: BTreeMap<(String, String), MatrixEntry>,
}

impl KillMatrix {
    pub fn insert(&mut self, mutant_id: String, test_id: String, entry: MatrixEntry) {
        self.entries.insert((mutant_id, test_id), entry);
    }

    pub fn get(&self, mutant_id: &str, test_id: &str) -> Option<&MatrixEntry> {
        self.entries.get(&(mutant_id.to_string(), test_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &MatrixEntry)> {
        self.entries.iter().map(|((m, t), e)| (m.as_str(), t.as_str(), e))
    }

    /// Distinct mutant ids, sorted.
    pub fn mutant_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.entries.keys().map(|(m, _)| m.clone()).collect();
        ids.dedup();
        ids
    }

    /// All entries for one mutant.
    pub fn row<'a>(&'a self, mutant_id: &'a str) -> impl Iterator<Item = (&'a str, &'a MatrixEntry)> + 'a {
        let start = (mutant_id.to_string(), String::new());
        self.entries
            .range(start..)
            .take_while(move |((m, _), _)| m == mutant_id)
            .map(|((_, t), e)| (t.as_str(), e))
    }

    /// Rows grouped by mutant, in id order.
    pub fn rows(&self) -> BTreeMap<&str, Vec<(&str, &MatrixEntry)>> {
        let mut out: BTreeMap<&str, Vec<_>> = BTreeMap::new();
        for ((m, t), e) in &self.entries {
            out.entry(m.as_str()).or_default().push((t.as_str(), e));
        }
        out
    }

    /// Copy with every test id prefixed as `project::test`.
    pub fn qualified(&self, project: &str) -> KillMatrix {
        KillMatrix {
            entries: self
                .entries
                .iter()
                .map(|((m, t), e)| ((m.clone(), qualify(project, t)), *e))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: KillMatrix) {
        self.entries.extend(other.entries);
    }

    /// Keeps only the rows of the given mutants.
    pub fn restrict_to(&self, mutants: &BTreeSet<String>) -> KillMatrix {
        KillMatrix {
            entries: self
                .entries
                .iter()
                .filter(|((m, _), _)| mutants.contains(m))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = MatrixRecord> + '_ {
        self.entries.iter().map(|((m, t), e)| MatrixRecord {
            mutant_id: m.clone(),
            test_id: t.clone(),
            detected: e.detected,
            cost_steps: e.cost_steps,
        })
    }

    pub fn from_records(records: impl IntoIterator<Item = MatrixRecord>) -> KillMatrix {
        let mut km = KillMatrix::default();
        for r in records {
            km.insert(r.mutant_id, r.test_id, MatrixEntry { detected: r.detected, cost_steps: r.cost_steps });
        }
        km
    }

    /// Suite verdicts for every mutant in the matrix.
    pub fn suite_verdicts(&self) -> BTreeMap<String, Verdict> {
        self.rows()
            .into_iter()
            .map(|(m, row)| (m.to_string(), Verdict::from_detected(row.iter().any(|(_, e)| e.detected))))
            .collect()
    }
}

/// Runs each mutant's covering tests on the mutated program.
pub fn build_kill_matrix(
    program: &Program,
    mutants: &[Mutant],
    coverage: &CoverageMap,
    budget: u64,
) -> Result<KillMatrix, GroundTruthError> {
    let rows: Vec<Vec<(String, String, MatrixEntry)>> = mutants
        .par_iter()
        .map(|m| mutant_row(program, m, coverage, budget))
        .collect::<Result<_, _>>()?;
    let mut km = KillMatrix::default();
    for (m, t, e) in rows.into_iter().flatten() {
        km.insert(m, t, e);
    }
    Ok(km)
}

fn mutant_row(
    program: &Program,
    mutant: &Mutant,
    coverage: &CoverageMap,
    budget: u64,
) -> Result<Vec<(String, String, MatrixEntry)>, GroundTruthError> {
    let tests = covering_tests(mutant, coverage);
    if tests.is_empty() {
        return Ok(Vec::new());
    }
    let mutated_src = apply_mutant(&program.source_text, mutant)?;
    let mutated = parse(&mutated_src).map_err(|source| GroundTruthError::MutantParse { id: mutant.id.clone(), source })?;
    tests
        .into_iter()
        .map(|t| {
            let o = run_test(&mutated, &t, budget)?;
            let entry = MatrixEntry { detected: o.status.is_failure(), cost_steps: o.steps_used };
            Ok((mutant.id.clone(), t, entry))
        })
        .collect()
}

/// Detected iff any covering test detects the mutant.
pub fn truth_suite_verdict(matrix: &KillMatrix, mutant_id: &str) -> Result<Verdict, GroundTruthError> {
    let mut any = false;
    let mut seen = false;
    for (_, e) in matrix.row(mutant_id) {
        seen = true;
        any |= e.detected;
    }
    if !seen {
        return Err(GroundTruthError::Uncovered(mutant_id.to_string()));
    }
    Ok(Verdict::from_detected(any))
}
