//! The test oracle: the set of behavioral requirements a patch must satisfy
//! to be considered plausible, ordered so that validation fails fast.
//!
//! Tests the original program already fails (the exploit, and any test the
//! user added that the bug breaks) are scheduled before tests it passes,
//! because a candidate patch is far more likely to die on those. Counter
//! examples found by the input fuzzer are appended over time; the schedule
//! is re-derived on every append, and tests are never removed.

use crate::exec::{Bytecode, ExecLimits, ExecResult, Vm};
use crate::patch::detour::DetourTable;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TestCriterion {
    /// Must finish normally and print exactly these bytes.
    ExpectedOutput(Vec<u8>),
    /// Must finish normally; output is unconstrained.
    CrashFree,
    /// Must finish normally and print exactly these bytes (derived from the
    /// original program's behavior on a counter-example input).
    CrashFreeAndSameOutput(Vec<u8>),
}

impl TestCriterion {
    pub fn passes(&self, r: &ExecResult) -> bool {
        match self {
            TestCriterion::ExpectedOutput(want) | TestCriterion::CrashFreeAndSameOutput(want) => {
                r.outcome.is_normal() && r.output == *want
            }
            TestCriterion::CrashFree => r.outcome.is_normal(),
        }
    }

    /// The expected output bytes, when the criterion constrains them.
    pub fn expected_output(&self) -> Option<&[u8]> {
        match self {
            TestCriterion::ExpectedOutput(b) | TestCriterion::CrashFreeAndSameOutput(b) => Some(b),
            TestCriterion::CrashFree => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestOrigin {
    Exploit,
    Regression,
    CounterExample,
}

#[derive(Debug, Clone)]
pub struct TestCase {
    pub name: String,
    pub input: Vec<u8>,
    pub criterion: TestCriterion,
    pub origin: TestOrigin,
}

#[derive(Debug, Clone)]
pub struct OracleEntry {
    pub test: TestCase,
    /// Whether the unpatched program satisfies the criterion. Failing tests
    /// are scheduled first and are the ones rule-based queueing tracks.
    pub original_passes: bool,
}

/// Result of validating one patch against the oracle.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// True when every scheduled test passed.
    pub plausible: bool,
    /// Executions performed; short-circuiting stops at the first failure.
    pub runs: u32,
    /// Storage indices of originally-failing tests this patch passed.
    pub failing_passed: Vec<u32>,
}

#[derive(Debug, Clone, Default)]
pub struct TestOracle {
    entries: Vec<OracleEntry>,
    /// Indices into `entries`: failing tests first, insertion order within
    /// each group.
    schedule: Vec<u32>,
}

impl TestOracle {
    pub fn new() -> TestOracle {
        TestOracle::default()
    }

    pub fn push(&mut self, test: TestCase, original_passes: bool) {
        self.entries.push(OracleEntry { test, original_passes });
        self.rebuild_schedule();
    }

    fn rebuild_schedule(&mut self) {
        self.schedule.clear();
        self.schedule.extend(
            (0..self.entries.len() as u32).filter(|&i| !self.entries[i as usize].original_passes),
        );
        self.schedule.extend(
            (0..self.entries.len() as u32).filter(|&i| self.entries[i as usize].original_passes),
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in storage (insertion) order.
    pub fn entries(&self) -> &[OracleEntry] {
        &self.entries
    }

    pub fn entry(&self, ix: u32) -> &OracleEntry {
        &self.entries[ix as usize]
    }

    /// Storage indices in validation order.
    pub fn schedule(&self) -> &[u32] {
        &self.schedule
    }

    pub fn failing_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.original_passes).count()
    }

    /// Validate a patch, stopping at the first failing test. `on_run` sees
    /// every execution result (coverage accounting hooks in here).
    pub fn evaluate_with(
        &self,
        vm: &mut Vm,
        bc: &Bytecode,
        table: &DetourTable,
        limits: ExecLimits,
        mut on_run: impl FnMut(&ExecResult),
    ) -> Evaluation {
        let mut runs = 0;
        let mut failing_passed = Vec::new();
        for &ix in &self.schedule {
            let e = &self.entries[ix as usize];
            let r = vm.run(bc, table, &e.test.input, limits);
            runs += 1;
            on_run(&r);
            if !e.test.criterion.passes(&r) {
                return Evaluation { plausible: false, runs, failing_passed };
            }
            if !e.original_passes {
                failing_passed.push(ix);
            }
        }
        Evaluation { plausible: true, runs, failing_passed }
    }

    pub fn evaluate(
        &self,
        vm: &mut Vm,
        bc: &Bytecode,
        table: &DetourTable,
        limits: ExecLimits,
    ) -> Evaluation {
        self.evaluate_with(vm, bc, table, limits, |_| {})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::compile;
    use crate::lang::{parse_program, refactor_conditionals};

    fn test(name: &str, input: Vec<u8>, criterion: TestCriterion) -> TestCase {
        TestCase { name: name.into(), input, criterion, origin: TestOrigin::Regression }
    }

    #[test]
    fn schedule_puts_failing_tests_first_and_stays_stable() {
        let mut o = TestOracle::new();
        o.push(test("exploit", vec![0], TestCriterion::ExpectedOutput(b"1\n".to_vec())), false);
        o.push(test("t1", vec![1], TestCriterion::ExpectedOutput(b"2\n".to_vec())), true);
        o.push(test("t2", vec![2], TestCriterion::ExpectedOutput(b"3\n".to_vec())), false);
        assert_eq!(o.schedule(), &[0, 2, 1]);

        // A counter-example the original passes goes last; one it fails goes
        // after the existing failing tests but before the passing ones.
        o.push(test("ce1", vec![3], TestCriterion::CrashFreeAndSameOutput(b"x".to_vec())), true);
        o.push(test("ce2", vec![4], TestCriterion::CrashFree), false);
        assert_eq!(o.schedule(), &[0, 2, 4, 1, 3]);
    }

    #[test]
    fn evaluation_short_circuits_on_the_first_failure() {
        let src = "fn main() { print(input()); }";
        let bc = compile(&refactor_conditionals(&parse_program(src).unwrap())).unwrap();
        let mut o = TestOracle::new();
        // Program prints its first input byte; first two tests expect that,
        // third expects something else and must stop the evaluation.
        o.push(test("a", vec![7], TestCriterion::ExpectedOutput(b"7\n".to_vec())), false);
        o.push(test("b", vec![9], TestCriterion::ExpectedOutput(b"9\n".to_vec())), false);
        o.push(test("c", vec![1], TestCriterion::ExpectedOutput(b"2\n".to_vec())), false);
        o.push(test("d", vec![5], TestCriterion::ExpectedOutput(b"5\n".to_vec())), false);

        let mut vm = Vm::new();
        let ev = o.evaluate(&mut vm, &bc, &DetourTable::empty(), ExecLimits::default());
        assert!(!ev.plausible);
        assert_eq!(ev.runs, 3);
        assert_eq!(ev.failing_passed, vec![0, 1]);
    }

    #[test]
    fn plausible_when_every_test_passes() {
        let src = "fn main() { print(input() + 1); }";
        let bc = compile(&refactor_conditionals(&parse_program(src).unwrap())).unwrap();
        let mut o = TestOracle::new();
        o.push(test("a", vec![1], TestCriterion::ExpectedOutput(b"2\n".to_vec())), false);
        o.push(test("b", vec![2], TestCriterion::CrashFree), true);

        let mut vm = Vm::new();
        let ev = o.evaluate(&mut vm, &bc, &DetourTable::empty(), ExecLimits::default());
        assert!(ev.plausible);
        assert_eq!(ev.runs, 2);
        assert_eq!(ev.failing_passed, vec![0]);
    }

    #[test]
    fn crash_free_accepts_any_normal_exit() {
        let src = "fn main() { print(input()); }";
        let bc = compile(&refactor_conditionals(&parse_program(src).unwrap())).unwrap();
        let mut vm = Vm::new();
        let r = vm.run(&bc, &DetourTable::empty(), &[42], ExecLimits::default());
        assert!(TestCriterion::CrashFree.passes(&r));
        assert!(TestCriterion::ExpectedOutput(b"42\n".to_vec()).passes(&r));
        assert!(!TestCriterion::ExpectedOutput(b"41\n".to_vec()).passes(&r));

        let crash = vm.run(
            &compile(&parse_program("fn main() { print(1 / 0); }").unwrap()).unwrap(),
            &DetourTable::empty(),
            &[],
            ExecLimits::default(),
        );
        assert!(!TestCriterion::CrashFree.passes(&crash));
    }
}
