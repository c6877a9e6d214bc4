//! Train/validation/test assignment of mutants.
//!
//! The unit of assignment is a mutant: all of its covering pairs land in the
//! same split. In cross-project mode the unit is a whole project.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            SplitName::Train => "train.jsonl",
            SplitName::Val => "val.jsonl",
            SplitName::Test => "test.jsonl",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split `{other}` (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    SameProject,
    CrossProject,
}

impl std::str::FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "same-project" | "same_project" => Ok(SplitMode::SameProject),
            "cross-project" | "cross_project" => Ok(SplitMode::CrossProject),
            other => Err(format!("unknown split mode `{other}` (expected same-project or cross-project)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Train, validation and test shares.
    pub ratios: [f64; 3],
    /// Cross-project only: fixed project placement. Projects are shuffled
    /// and cut by `ratios` when empty.
    pub assignment: BTreeMap<String, SplitName>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { mode: SplitMode::SameProject, ratios: [0.8, 0.1, 0.1], assignment: BTreeMap::new() }
    }
}

/// Mutant ids per split.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl SplitAssignment {
    pub fn get(&self, name: SplitName) -> &BTreeSet<String> {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    fn get_mut(&mut self, name: SplitName) -> &mut BTreeSet<String> {
        match name {
            SplitName::Train => &mut self.train,
            SplitName::Val => &mut self.val,
            SplitName::Test => &mut self.test,
        }
    }

    pub fn split_of(&self, mutant_id: &str) -> Option<SplitName> {
        SplitName::ALL.into_iter().find(|&s| self.get(s).contains(mutant_id))
    }
}

/// Sizes `(train, val, test)` for `n` units: validation and test are rounded
/// shares, training takes the rest.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> (usize, usize, usize) {
    let val = (ratios[1] * n as f64).round() as usize;
    let test = (ratios[2] * n as f64).round() as usize;
    let val = val.min(n);
    let test = test.min(n - val);
    (n - val - test, val, test)
}

fn check_ratios(r: [f64; 3]) -> Result<(), PipelineError> {
    if r.iter().any(|x| !(*x > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(PipelineError::Split(format!("ratios {r:?} must be positive and sum to 1")));
    }
    Ok(())
}

/// Cuts seeded-shuffled `units` into three parts.
fn cut<T: Clone + Ord>(mut units: Vec<T>, ratios: [f64; 3], seed: u64, what: &str) -> Result<[Vec<T>; 3], PipelineError> {
    units.sort();
    units.dedup();
    let (n_train, n_val, n_test) = split_sizes(units.len(), ratios);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(PipelineError::Split(format!(
            "{} {what} are too few to fill train/val/test with ratios {ratios:?}",
            units.len()
        )));
    }
    units.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = units.split_off(n_train + n_val);
    let val = units.split_off(n_train);
    Ok([units, val, test])
}

/// Assigns each `(mutant_id, project)` unit to a split.
pub fn split(units: &[(String, String)], spec: &SplitSpec, seed: u64) -> Result<SplitAssignment, PipelineError> {
    check_ratios(spec.ratios)?;
    let mut out = SplitAssignment::default();
    match spec.mode {
        SplitMode::SameProject => {
            let ids = units.iter().map(|(m, _)| m.clone()).collect();
            let [train, val, test] = cut(ids, spec.ratios, seed, "mutants")?;
            out.train = train.into_iter().collect();
            out.val = val.into_iter().collect();
            out.test = test.into_iter().collect();
        }
        SplitMode::CrossProject => {
            let projects: BTreeSet<&str> = units.iter().map(|(_, p)| p.as_str()).collect();
            let placement: BTreeMap<String, SplitName> = if spec.assignment.is_empty() {
                let [train, val, test] = cut(projects.iter().map(|p| p.to_string()).collect(), spec.ratios, seed, "projects")?;
                let mut m = BTreeMap::new();
                for (name, ps) in SplitName::ALL.into_iter().zip([train, val, test]) {
                    for p in ps {
                        m.insert(p, name);
                    }
                }
                m
            } else {
                spec.assignment.clone()
            };
            for (m, p) in units {
                let s = placement
                    .get(p)
                    .ok_or_else(|| PipelineError::Split(format!("project `{p}` has no split assignment")))?;
                out.get_mut(*s).insert(m.clone());
            }
            for s in SplitName::ALL {
                if out.get(s).is_empty() {
                    return Err(PipelineError::Split(format!("the {s:?} split received no mutants")));
                }
            }
        }
    }
    Ok(out)
}

/// Checks disjointness, and in cross-project mode that no project straddles
/// two splits.
pub fn check_integrity(a: &SplitAssignment, units: &[(String, String)], mode: SplitMode) -> Result<(), PipelineError> {
    for (x, y) in [(SplitName::Train, SplitName::Val), (SplitName::Train, SplitName::Test), (SplitName::Val, SplitName::Test)] {
        if let Some(m) = a.get(x).intersection(a.get(y)).next() {
            return Err(PipelineError::Split(format!("mutant {m} is in both {x:?} and {y:?}")));
        }
    }
    if mode == SplitMode::CrossProject {
        let mut seen: BTreeMap<&str, SplitName> = BTreeMap::new();
        for (m, p) in units {
            let Some(s) = a.split_of(m) else { continue };
            if let Some(prev) = seen.insert(p, s) {
                if prev != s {
                    return Err(PipelineError::Split(format!("project {p} straddles {prev:?} and {s:?}")));
                }
            }
        }
    }
    Ok(())
}
