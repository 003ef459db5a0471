//! Test-suite directories.
//!
//! A suite is a directory of files paired by name: `<name>.in` holds the raw
//! input bytes, and exactly one criterion file says what a repaired program
//! must do with them. `<name>.out` demands a normal exit with exactly those
//! output bytes; an empty `<name>.crashfree` marker demands only a normal
//! exit. `exploit.in` is required and loads as the exploit test; every other
//! name loads as a regression. Order is deterministic: exploit first, the
//! rest lexicographic.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use crate::fuzz::{TestCase, TestCriterion, TestOrigin};

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("no exploit.in in the suite directory")]
    MissingExploit,
    #[error("test `{name}` has both a .out and a .crashfree file")]
    AmbiguousCriterion { name: String },
    #[error("test `{name}` has an input but no .out or .crashfree file")]
    MissingCriterion { name: String },
    #[error("criterion file for `{name}` has no matching .in file")]
    OrphanCriterion { name: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Default)]
struct RawTest {
    input: Option<Vec<u8>>,
    out: Option<Vec<u8>>,
    crashfree: bool,
}

/// Loads every test in `dir`. Files with other extensions are ignored.
pub fn load_test_suite(dir: &Path) -> Result<Vec<TestCase>, SuiteError> {
    let mut raw: BTreeMap<String, RawTest> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let name = stem.to_string();
        match ext {
            "in" => raw.entry(name).or_default().input = Some(fs::read(&path)?),
            "out" => raw.entry(name).or_default().out = Some(fs::read(&path)?),
            "crashfree" => raw.entry(name).or_default().crashfree = true,
            _ => {}
        }
    }

    let mut exploit = None;
    let mut rest = Vec::with_capacity(raw.len());
    for (name, t) in raw {
        let Some(input) = t.input else {
            return Err(SuiteError::OrphanCriterion { name });
        };
        let criterion = match (t.out, t.crashfree) {
            (Some(_), true) => return Err(SuiteError::AmbiguousCriterion { name }),
            (Some(out), false) => TestCriterion::ExpectedOutput(out),
            (None, true) => TestCriterion::CrashFree,
            (None, false) => return Err(SuiteError::MissingCriterion { name }),
        };
        let origin = if name == "exploit" { TestOrigin::Exploit } else { TestOrigin::Regression };
        let case = TestCase { name, input, criterion, origin };
        if case.origin == TestOrigin::Exploit {
            exploit = Some(case);
        } else {
            rest.push(case);
        }
    }

    let mut suite = vec![exploit.ok_or(SuiteError::MissingExploit)?];
    suite.extend(rest);
    Ok(suite)
}

/// Writes a suite in the directory format [`load_test_suite`] reads.
///
/// Counter-examples keep their force on reload: a kill by output divergence
/// saves the original's output as `.out`, a kill by crash saves a
/// `.crashfree` marker (the two output-pinning criteria accept exactly the
/// same runs).
pub fn save_tests(dir: &Path, tests: &[TestCase]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for t in tests {
        fs::write(dir.join(format!("{}.in", t.name)), &t.input)?;
        match &t.criterion {
            TestCriterion::ExpectedOutput(out) | TestCriterion::CrashFreeAndSameOutput(out) => {
                fs::write(dir.join(format!("{}.out", t.name)), out)?;
            }
            TestCriterion::CrashFree => {
                fs::write(dir.join(format!("{}.crashfree", t.name)), [])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn round_trips_a_suite_exploit_first_then_sorted() {
        let d = dir();
        let tests = vec![
            TestCase {
                name: "t2".into(),
                input: vec![1, 9],
                criterion: TestCriterion::ExpectedOutput(b"81\n".to_vec()),
                origin: TestOrigin::Regression,
            },
            TestCase {
                name: "exploit".into(),
                input: vec![4, 99],
                criterion: TestCriterion::CrashFree,
                origin: TestOrigin::Exploit,
            },
            TestCase {
                name: "ce-0001".into(),
                input: vec![7],
                criterion: TestCriterion::CrashFreeAndSameOutput(b"49\n".to_vec()),
                origin: TestOrigin::CounterExample,
            },
        ];
        save_tests(d.path(), &tests).unwrap();

        let loaded = load_test_suite(d.path()).unwrap();
        let names: Vec<&str> = loaded.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["exploit", "ce-0001", "t2"]);
        assert_eq!(loaded[0].origin, TestOrigin::Exploit);
        assert_eq!(loaded[0].criterion, TestCriterion::CrashFree);
        assert_eq!(loaded[0].input, vec![4, 99]);
        // Output-pinning criteria converge on ExpectedOutput.
        assert_eq!(loaded[1].criterion, TestCriterion::ExpectedOutput(b"49\n".to_vec()));
        assert_eq!(loaded[1].origin, TestOrigin::Regression);
        assert_eq!(loaded[2].criterion, TestCriterion::ExpectedOutput(b"81\n".to_vec()));
    }

    #[test]
    fn missing_exploit_is_an_error() {
        let d = dir();
        fs::write(d.path().join("t1.in"), [1]).unwrap();
        fs::write(d.path().join("t1.out"), "1\n").unwrap();
        assert!(matches!(load_test_suite(d.path()), Err(SuiteError::MissingExploit)));
    }

    #[test]
    fn both_criterion_files_is_ambiguous() {
        let d = dir();
        fs::write(d.path().join("exploit.in"), [0]).unwrap();
        fs::write(d.path().join("exploit.out"), "0\n").unwrap();
        fs::write(d.path().join("exploit.crashfree"), []).unwrap();
        assert!(matches!(
            load_test_suite(d.path()),
            Err(SuiteError::AmbiguousCriterion { name }) if name == "exploit"
        ));
    }

    #[test]
    fn input_without_criterion_is_an_error() {
        let d = dir();
        fs::write(d.path().join("exploit.in"), [0]).unwrap();
        fs::write(d.path().join("exploit.crashfree"), []).unwrap();
        fs::write(d.path().join("t1.in"), [1]).unwrap();
        assert!(matches!(
            load_test_suite(d.path()),
            Err(SuiteError::MissingCriterion { name }) if name == "t1"
        ));
    }

    #[test]
    fn criterion_without_input_is_an_error() {
        let d = dir();
        fs::write(d.path().join("exploit.in"), [0]).unwrap();
        fs::write(d.path().join("exploit.crashfree"), []).unwrap();
        fs::write(d.path().join("ghost.out"), "1\n").unwrap();
        assert!(matches!(
            load_test_suite(d.path()),
            Err(SuiteError::OrphanCriterion { name }) if name == "ghost"
        ));
    }

    #[test]
    fn unrelated_files_are_ignored() {
        let d = dir();
        fs::write(d.path().join("exploit.in"), [0]).unwrap();
        fs::write(d.path().join("exploit.crashfree"), []).unwrap();
        fs::write(d.path().join("README.md"), "notes").unwrap();
        fs::create_dir(d.path().join("old.in")).unwrap();
        let loaded = load_test_suite(d.path()).unwrap();
        assert_eq!(loaded.len(), 1);
    }
}
