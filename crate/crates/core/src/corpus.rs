//! Projects: named MiniLang compilation units, and the bundled tutorial corpus.

use crate::minilang::{parse, ParseError, Program};

/// A named compilation unit. The name qualifies its test ids and mutant ids.
#[derive(Debug, Clone)]
pub struct Project {
    pub name: String,
    pub program: Program,
}

impl Project {
    pub fn parse(name: impl Into<String>, source: &str) -> Result<Project, ParseError> {
        Ok(Project { name: name.into(), program: parse(source)? })
    }

    pub fn source(&self) -> &str {
        &self.program.source_text
    }
}

const TUTORIAL: [(&str, &str); 6] = [
    ("arrays", include_str!("../corpus/arrays.mini")),
    ("bank", include_str!("../corpus/bank.mini")),
    ("calendar", include_str!("../corpus/calendar.mini")),
    ("geometry", include_str!("../corpus/geometry.mini")),
    ("hour", include_str!("../corpus/hour.mini")),
    ("mathutil", include_str!("../corpus/mathutil.mini")),
];

/// `(name, source)` of every tutorial project, sorted by name.
pub fn tutorial_sources() -> &'static [(&'static str, &'static str)] {
    &TUTORIAL
}

/// The tutorial corpus, parsed.
pub fn tutorial() -> Vec<Project> {
    TUTORIAL
        .iter()
        .map(|(name, src)| Project::parse(*name, src).expect("bundled corpus parses"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::build_coverage;
    use crate::minilang::{list_tests, DEFAULT_STEP_BUDGET};

    #[test]
    fn every_tutorial_suite_is_green() {
        for p in tutorial() {
            build_coverage(&p.program, DEFAULT_STEP_BUDGET).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }

    #[test]
    fn hour_declares_its_tests() {
        let hour = tutorial().into_iter().find(|p| p.name == "hour").unwrap();
        assert_eq!(
            list_tests(&hour.program),
            ["testNext", "testNextWrap", "testPrevious", "testHoursBetween", "testBusinessHour"]
        );
    }
}
