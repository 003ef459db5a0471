//! Input-level fuzzing: hunt for inputs that tell a pooled patch apart from
//! the original program.
//!
//! Every mutated input runs once against the original (for coverage-guided
//! queueing) and once against each pooled patch. A patched run that crashes
//! anywhere the original does not, or that completes with different output
//! while the original completed, disqualifies that patch. A crash with the
//! same kind at the same statement as the original's is not attributed to
//! the patch: the program may have failure modes upstream of every patch
//! site, and no replacement statement could remove those. Each killing input
//! becomes one new oracle test, so the plausibility bar rises as the
//! campaign learns.

use std::collections::HashSet;

use crate::exec::{GlobalCoverage, Outcome};
use crate::fuzz::input_mutate::{det_count, det_mutant, havoc_input};
use crate::fuzz::oracle::{TestCase, TestCriterion, TestOracle, TestOrigin};
use crate::fuzz::patch_fuzzer::{PatchPool, Witness, WitnessKind};
use crate::fuzz::queue::Selector;
use crate::fuzz::FuzzShared;
use crate::patch::detour::DetourTable;
use crate::patch::Digest;

/// Deterministic mutants processed per selection turn, so one long input
/// cannot monopolize the schedule.
const DET_CHUNK: usize = 64;
/// Havoc batch size per selection; doubled for favored entries.
const HAVOC_ENERGY: u32 = 16;

#[derive(Debug)]
struct InputQueueEntry {
    input: Vec<u8>,
    favored: bool,
    /// Resumable cursor into the deterministic stage.
    det_progress: usize,
}

/// Counters for reporting and budget accounting.
#[derive(Debug, Default, Clone, Copy, serde::Serialize)]
pub struct InputStats {
    /// Inputs produced and tried (seeds included).
    pub generated: u64,
    /// Inputs admitted to the mutation queue.
    pub queued: u64,
    /// Pool patches disqualified.
    pub kills: u64,
    /// Oracle tests appended (one per killing input).
    pub counter_examples: u64,
}

/// The input-side fuzzing loop. One [`step`](InputFuzzer::step) selects a
/// queue entry and runs a chunk of its deterministic stage, or a havoc batch
/// once that stage is exhausted.
pub struct InputFuzzer {
    queue: Vec<InputQueueEntry>,
    selector: Selector,
    /// Exact bytes of every queued input.
    seen: HashSet<Vec<u8>>,
    /// Coverage over original-program runs only; patched runs would pollute
    /// novelty with their pseudo edges.
    cov: GlobalCoverage,
    next_counter_example: u32,
    pub stats: InputStats,
}

impl InputFuzzer {
    pub fn new() -> InputFuzzer {
        InputFuzzer {
            queue: Vec::new(),
            selector: Selector::new(),
            seen: HashSet::new(),
            cov: GlobalCoverage::new(),
            next_counter_example: 0,
            stats: InputStats::default(),
        }
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Queue the user-supplied test inputs. Seeds are favored and enter the
    /// queue unconditionally.
    pub fn seed(
        &mut self,
        sh: &mut FuzzShared,
        oracle: &mut TestOracle,
        pool: &mut PatchPool,
        inputs: impl IntoIterator<Item = Vec<u8>>,
    ) {
        for input in inputs {
            self.admit(sh, oracle, pool, input, true);
        }
    }

    /// One scheduling turn. Returns how many counter-example tests were
    /// appended to the oracle, so the caller knows to re-validate the pool.
    pub fn step(
        &mut self,
        sh: &mut FuzzShared,
        oracle: &mut TestOracle,
        pool: &mut PatchPool,
    ) -> u32 {
        let queue = &self.queue;
        let Some(ix) = self.selector.next(queue.len(), |i| queue[i].favored, sh.rng) else {
            return 0;
        };
        let parent = self.queue[ix].input.clone();
        let mut added = 0;

        let total = det_count(parent.len());
        if self.queue[ix].det_progress < total {
            let start = self.queue[ix].det_progress;
            let end = (start + DET_CHUNK).min(total);
            self.queue[ix].det_progress = end;
            for det_ix in start..end {
                let m = det_mutant(&parent, det_ix).expect("index below det_count");
                added += self.admit(sh, oracle, pool, m, false);
            }
        } else {
            let energy = HAVOC_ENERGY << (self.queue[ix].favored as u32);
            for _ in 0..energy {
                let m = havoc_input(&parent, sh.rng);
                added += self.admit(sh, oracle, pool, m, false);
            }
        }
        added
    }

    /// Run one input against the original and every pooled patch, apply any
    /// kills, and queue the input if it earned a slot. Returns the number of
    /// counter-example tests appended (0 or 1).
    fn admit(
        &mut self,
        sh: &mut FuzzShared,
        oracle: &mut TestOracle,
        pool: &mut PatchPool,
        input: Vec<u8>,
        is_seed: bool,
    ) -> u32 {
        self.stats.generated += 1;
        let orig = sh.vm.run(sh.bc, &DetourTable::empty(), &input, sh.limits);
        *sh.executions += 1;
        let novel = self.cov.absorb(&orig.coverage);
        let orig_crash = match orig.outcome {
            Outcome::Crash { kind, at } => Some((kind, at)),
            Outcome::Normal(_) => None,
        };

        let mut kills: Vec<(Digest, WitnessKind)> = Vec::new();
        for entry in pool.entries() {
            let patched = sh.vm.run(sh.bc, &entry.table, &input, sh.limits);
            *sh.executions += 1;
            match patched.outcome {
                Outcome::Crash { kind, at } if orig_crash != Some((kind, at)) => {
                    kills.push((entry.patch.digest(), WitnessKind::Crash));
                }
                Outcome::Normal(_) if orig_crash.is_none() && patched.output != orig.output => {
                    kills.push((entry.patch.digest(), WitnessKind::OutputDiff));
                }
                _ => {}
            }
        }
        let killed_any = !kills.is_empty();
        for (digest, kind) in kills {
            pool.kill(digest, Witness { input: input.clone(), kind }, *sh.executions);
            self.stats.kills += 1;
        }

        let mut added = 0;
        if killed_any {
            let n = self.next_counter_example;
            self.next_counter_example += 1;
            let (criterion, original_passes) = if orig.outcome.is_normal() {
                (TestCriterion::CrashFreeAndSameOutput(orig.output.clone()), true)
            } else {
                (TestCriterion::CrashFree, false)
            };
            oracle.push(
                TestCase {
                    name: format!("ce-{n:04}"),
                    input: input.clone(),
                    criterion,
                    origin: TestOrigin::CounterExample,
                },
                original_passes,
            );
            self.stats.counter_examples += 1;
            added = 1;
        }

        let interesting = is_seed || novel || killed_any;
        if interesting && self.seen.insert(input.clone()) {
            self.queue.push(InputQueueEntry {
                input,
                favored: is_seed || killed_any,
                det_progress: 0,
            });
            self.stats.queued += 1;
        }
        added
    }
}

impl Default for InputFuzzer {
    fn default() -> Self {
        InputFuzzer::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::exec::{compile, Bytecode, ExecLimits, Vm};
    use crate::lang::{parse_program, refactor_conditionals, Program};
    use crate::patch::detour::detour_for;
    use crate::patch::Patch;

    // Overflows at 16 bits once the input byte reaches 182; prints x*x
    // otherwise.
    const SRC: &str = "
        pragma width 16;
        fn main() {
            var x = input();
            var y = x * x;
            print(y);
            return 0;
        }
    ";

    fn setup() -> (Program, Bytecode) {
        let mut p = parse_program(SRC).unwrap();
        refactor_conditionals(&mut p);
        let bc = compile(&p).unwrap();
        (p, bc)
    }

    fn shared<'a>(
        bc: &'a Bytecode,
        vm: &'a mut Vm,
        rng: &'a mut ChaCha8Rng,
        execs: &'a mut u64,
    ) -> FuzzShared<'a> {
        FuzzShared { bc, vm, limits: ExecLimits::default(), rng, executions: execs, jobs: 1 }
    }

    fn patch_from(src_stmt: &str, bc: &Bytecode, id: u32) -> Patch {
        let stmt = crate::lang::parse_stmt(src_stmt).unwrap();
        Patch::new(id, stmt, 0, bc).unwrap()
    }

    #[test]
    fn seeding_queues_inputs_and_tracks_coverage() {
        let (_p, bc) = setup();
        let mut vm = Vm::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut execs = 0u64;
        let mut sh = shared(&bc, &mut vm, &mut rng, &mut execs);
        let mut oracle = TestOracle::new();
        let mut pool = PatchPool::new();
        let mut inf = InputFuzzer::new();

        inf.seed(&mut sh, &mut oracle, &mut pool, vec![vec![3], vec![3], vec![5]]);
        // Exact duplicate bytes queue once.
        assert_eq!(inf.queue_len(), 2);
        assert_eq!(inf.stats.generated, 3);
        assert_eq!(execs, 3);
    }

    #[test]
    fn crash_kill_produces_crash_free_counter_example() {
        let (_p, bc) = setup();
        // `var y = x + x;` avoids the overflow but we patch print instead:
        // replace `print(y)` (stmt 2) with a division that traps on x == 0.
        let bad = patch_from("print(100 / x);", &bc, 2);
        let table = detour_for(&bc, &bad).unwrap();

        let mut vm = Vm::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut execs = 0u64;
        let mut sh = shared(&bc, &mut vm, &mut rng, &mut execs);
        let mut oracle = TestOracle::new();
        let mut pool = PatchPool::new();
        pool.insert(bad.clone(), table, 0);
        let mut inf = InputFuzzer::new();

        // Input [0]: original prints 0 and exits; patch divides by zero.
        let appended = inf.admit(&mut sh, &mut oracle, &mut pool, vec![0], false);
        assert_eq!(appended, 1);
        assert!(pool.is_empty());
        assert_eq!(pool.killed_crash(), 1);
        let killed = &pool.killed()[0];
        assert_eq!(killed.witness.input, vec![0]);
        assert_eq!(killed.witness.kind, WitnessKind::Crash);

        // Original ran normally, so the counter-example pins its output.
        assert_eq!(oracle.len(), 1);
        let e = oracle.entry(0);
        assert!(e.original_passes);
        assert_eq!(e.test.origin, TestOrigin::CounterExample);
        assert_eq!(
            e.test.criterion,
            TestCriterion::CrashFreeAndSameOutput(b"0\n".to_vec())
        );
    }

    #[test]
    fn output_diff_kill_and_crash_site_counter_example() {
        let (_p, bc) = setup();
        // Wrong-constant patch: plausible-looking but prints x*2.
        let diff = patch_from("var y = x * 2;", &bc, 1);
        let table = detour_for(&bc, &diff).unwrap();

        let mut vm = Vm::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut execs = 0u64;
        let mut sh = shared(&bc, &mut vm, &mut rng, &mut execs);
        let mut oracle = TestOracle::new();
        let mut pool = PatchPool::new();
        pool.insert(diff.clone(), table, 0);
        let mut inf = InputFuzzer::new();

        // x = 3: original prints 9, patch prints 6.
        inf.admit(&mut sh, &mut oracle, &mut pool, vec![3], false);
        assert_eq!(pool.killed_diff(), 1);
        assert_eq!(pool.killed()[0].witness.kind, WitnessKind::OutputDiff);

        // An input where the ORIGINAL crashes and a patch survives is not a
        // kill; and if another patch crashes there differently, the
        // counter-example asks only for crash freedom.
        let fix = patch_from("var y = x;", &bc, 1);
        let fix_table = detour_for(&bc, &fix).unwrap();
        pool.insert(fix.clone(), fix_table, 0);
        // x = 200: original overflows (200*200 > 32767), fix prints 200.
        let appended = inf.admit(&mut sh, &mut oracle, &mut pool, vec![200], false);
        assert_eq!(appended, 0, "surviving a crash input is not a kill");
        assert_eq!(pool.len(), 1);

        // Trades the overflow for a division by zero at the same statement:
        // a different crash, so the kill is attributed to the patch.
        let crashy = patch_from("var y = x / (x - 200);", &bc, 1);
        let crashy_table = detour_for(&bc, &crashy).unwrap();
        pool.insert(crashy.clone(), crashy_table, 0);
        let appended = inf.admit(&mut sh, &mut oracle, &mut pool, vec![200, 9], false);
        assert_eq!(appended, 1);
        let last = oracle.entry((oracle.len() - 1) as u32);
        assert_eq!(last.test.criterion, TestCriterion::CrashFree);
        assert!(!last.original_passes, "original crashes on the witness");
        // The surviving fix is still pooled.
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.entries()[0].patch.digest(), fix.digest());
    }

    #[test]
    fn crash_matching_the_original_is_not_attributed_to_the_patch() {
        let (_p, bc) = setup();
        // Detour at print (stmt 2); on x = 200 both runs overflow at stmt 1
        // before the detour ever fires. Killing here would demand a repair
        // no statement replacement at stmt 2 can provide.
        let downstream = patch_from("print(y + 1);", &bc, 2);
        let table = detour_for(&bc, &downstream).unwrap();

        let mut vm = Vm::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut execs = 0u64;
        let mut sh = shared(&bc, &mut vm, &mut rng, &mut execs);
        let mut oracle = TestOracle::new();
        let mut pool = PatchPool::new();
        pool.insert(downstream, table, 0);
        let mut inf = InputFuzzer::new();

        let appended = inf.admit(&mut sh, &mut oracle, &mut pool, vec![200], false);
        assert_eq!(appended, 0);
        assert_eq!(pool.len(), 1, "identical crash spares the patch");
        assert_eq!(oracle.len(), 0, "no kill, no counter-example");
    }

    #[test]
    fn one_counter_example_per_killing_input_even_with_multiple_kills() {
        let (_p, bc) = setup();
        let a = patch_from("var y = x * 2;", &bc, 1);
        let b = patch_from("var y = x + x;", &bc, 1);
        let ta = detour_for(&bc, &a).unwrap();
        let tb = detour_for(&bc, &b).unwrap();

        let mut vm = Vm::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut execs = 0u64;
        let mut sh = shared(&bc, &mut vm, &mut rng, &mut execs);
        let mut oracle = TestOracle::new();
        let mut pool = PatchPool::new();
        pool.insert(a, ta, 0);
        pool.insert(b, tb, 0);
        let mut inf = InputFuzzer::new();

        // x = 3 distinguishes both patches (6 vs 9) in one run.
        let appended = inf.admit(&mut sh, &mut oracle, &mut pool, vec![3], false);
        assert_eq!(appended, 1);
        assert_eq!(oracle.len(), 1);
        assert_eq!(pool.killed_diff(), 2);
        assert_eq!(
            pool.len() as u64 + pool.killed_crash() + pool.killed_diff(),
            pool.insertions()
        );
        // Killer inputs are queued and favored.
        assert_eq!(inf.queue_len(), 1);
    }

    #[test]
    fn det_stage_resumes_across_selections() {
        let (_p, bc) = setup();
        let mut vm = Vm::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut execs = 0u64;
        let mut sh = shared(&bc, &mut vm, &mut rng, &mut execs);
        let mut oracle = TestOracle::new();
        let mut pool = PatchPool::new();
        let mut inf = InputFuzzer::new();

        // 8-byte seed: det_count = 25*8 - 4 = 196, needing four chunks.
        inf.seed(&mut sh, &mut oracle, &mut pool, vec![vec![1, 2, 3, 4, 5, 6, 7, 8]]);
        assert_eq!(det_count(8), 196);
        let gen_before = inf.stats.generated;
        inf.step(&mut sh, &mut oracle, &mut pool);
        // Selection may land on a newly queued entry later, but the first
        // step must process exactly one deterministic chunk of the seed.
        assert_eq!(inf.stats.generated - gen_before, DET_CHUNK as u64);
        assert_eq!(inf.queue[0].det_progress, DET_CHUNK);
    }
}
