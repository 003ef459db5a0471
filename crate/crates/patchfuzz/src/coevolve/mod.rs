//! The repair campaign: co-evolution of patches and inputs.
//!
//! A campaign alternates time slices between the two fuzzers. While the
//! patch pool is below its target size, slices go to the patch fuzzer
//! (breeding candidates); once the pool is full, slices go to the input
//! fuzzer (culling candidates it can tell apart from the original). Each
//! kill appends a counter-example test to the oracle, so later patches must
//! clear a higher bar: the two populations push each other.
//!
//! With an execution budget the whole campaign is a deterministic function
//! of (program, tests, seed), at any `jobs` level. Time budgets trade that
//! reproducibility for wall-clock control.

pub mod rank;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::exec::{compile, Bytecode, CompileError, ExecLimits, Outcome, Vm};
use crate::fuzz::{
    FuzzShared, InputFuzzer, InputStats, PatchFuzzer, PatchPool, PatchStats, TestCase, TestOracle,
    TestOrigin, Witness, WitnessKind,
};
use crate::lang::{parse_program, refactor_conditionals, validate, Program, StmtId, SyntaxError};
use crate::patch::detour::{detour_for, DetourError, DetourTable};
use crate::patch::seeds::{exploit_trace, seed_patches};
use crate::patch::Patch;

/// Campaign stop condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    /// Stop after this much wall-clock time.
    Time(Duration),
    /// Stop after this many program executions. Deterministic.
    Execs(u64),
}

impl std::fmt::Display for Budget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Budget::Time(d) => write!(f, "{}s", d.as_secs()),
            Budget::Execs(n) => write!(f, "{n}x"),
        }
    }
}

impl std::str::FromStr for Budget {
    type Err = String;

    /// `"120s"` is wall time in whole seconds, `"500000x"` an execution
    /// count.
    fn from_str(s: &str) -> Result<Budget, String> {
        let err = || format!("bad budget `{s}`: expected `<seconds>s` or `<executions>x`");
        if let Some(d) = s.strip_suffix('s') {
            d.parse().map(|n| Budget::Time(Duration::from_secs(n))).map_err(|_| err())
        } else if let Some(d) = s.strip_suffix('x') {
            d.parse().map(Budget::Execs).map_err(|_| err())
        } else {
            Err(err())
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoevolveConfig {
    /// Seed for the single campaign RNG.
    pub seed: u64,
    /// Pool size at which slices switch from breeding to culling.
    pub pool_target: usize,
    pub budget: Budget,
    /// Per-run step limit. Also what turns non-termination into a kill.
    pub max_steps: u64,
    /// A slice ends after this many executions...
    pub slice_execs: u64,
    /// ...or this much wall-clock time, whichever comes first. Ignored under
    /// an execution budget to keep campaigns deterministic.
    pub slice_time: Duration,
    /// Patch-validation worker threads.
    pub jobs: usize,
}

impl Default for CoevolveConfig {
    fn default() -> CoevolveConfig {
        CoevolveConfig {
            seed: 0,
            pool_target: 10,
            budget: Budget::Execs(500_000),
            max_steps: 20_000,
            slice_execs: 50_000,
            slice_time: Duration::from_secs(30),
            jobs: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RepairError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("program failed validation:\n{0}")]
    Invalid(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("test suite has no exploit test")]
    MissingExploit,
    #[error("exploit test `{name}` passes on the original program; nothing to repair")]
    ExploitPasses { name: String },
    #[error("no patchable statement on the exploit trace")]
    NothingToPatch,
}

/// Which fuzzer a slice fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    Patch,
    Input,
}

/// One line of the campaign log.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SliceSummary {
    pub slice: u64,
    pub kind: SliceKind,
    /// Cumulative executions at slice end.
    pub executions: u64,
    /// Executions consumed by this slice.
    pub slice_execs: u64,
    pub pool_live: usize,
    pub pool_insertions: u64,
    pub killed_crash: u64,
    pub killed_diff: u64,
    pub oracle_tests: usize,
    pub counter_examples_added: u32,
    pub patch_queue: usize,
    pub input_queue: usize,
    pub plausible_total: u64,
    pub elapsed_ms: u64,
}

/// Everything a running campaign owns. Build with [`RepairState::new`], then
/// either call [`run_campaign`](RepairState::run_campaign) or drive
/// [`run_slice`](RepairState::run_slice) by hand.
pub struct RepairState {
    pub program: Program,
    pub bc: Bytecode,
    /// Patchable statements the exploit input executes on the original, in
    /// first-visit order.
    pub exploit_trace: Vec<StmtId>,
    pub oracle: TestOracle,
    pub pool: PatchPool,
    pub config: CoevolveConfig,
    pub limits: ExecLimits,
    pub executions: u64,
    pub slices: u64,
    crash_site: Option<StmtId>,
    patch_fuzzer: PatchFuzzer,
    input_fuzzer: InputFuzzer,
    vm: Vm,
    rng: ChaCha8Rng,
    started: Instant,
}

impl RepairState {
    /// Parse, validate, compile, check the exploit reproduces, trace it, and
    /// seed both fuzzers. Compiles the program exactly once.
    pub fn new(
        source: &str,
        tests: Vec<TestCase>,
        config: CoevolveConfig,
    ) -> Result<RepairState, RepairError> {
        let parsed = parse_program(source)?;
        let report = validate(&parsed);
        if !report.is_ok() {
            return Err(RepairError::Invalid(report.to_string()));
        }
        let program = refactor_conditionals(&parsed);
        let bc = compile(&program)?;

        let limits = ExecLimits::with_steps(config.max_steps);
        let mut vm = Vm::new();
        let empty = DetourTable::empty();
        let mut executions = 0u64;

        let exploit_input = tests
            .iter()
            .find(|t| t.origin == TestOrigin::Exploit)
            .ok_or(RepairError::MissingExploit)?
            .input
            .clone();

        // Measure each test against the original; the oracle schedules
        // failing tests first.
        let mut oracle = TestOracle::new();
        let mut crash_site = None;
        for t in tests {
            let r = vm.run(&bc, &empty, &t.input, limits);
            executions += 1;
            let passes = t.criterion.passes(&r);
            if t.origin == TestOrigin::Exploit {
                if passes {
                    return Err(RepairError::ExploitPasses { name: t.name });
                }
                if crash_site.is_none() {
                    if let Outcome::Crash { at, .. } = r.outcome {
                        crash_site = Some(at);
                    }
                }
            }
            oracle.push(t, passes);
        }

        let trace = exploit_trace(&bc, &exploit_input, limits);
        executions += 1;
        let seeds = seed_patches(&program, &bc, &trace);
        if seeds.is_empty() {
            return Err(RepairError::NothingToPatch);
        }

        let mut state = RepairState {
            program,
            bc,
            exploit_trace: trace,
            oracle,
            pool: PatchPool::new(),
            config: config.clone(),
            limits,
            executions,
            slices: 0,
            crash_site,
            patch_fuzzer: PatchFuzzer::new(),
            input_fuzzer: InputFuzzer::new(),
            vm,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            started: Instant::now(),
        };

        let mut sh = FuzzShared {
            bc: &state.bc,
            vm: &mut state.vm,
            limits: state.limits,
            rng: &mut state.rng,
            executions: &mut state.executions,
            jobs: state.config.jobs,
        };
        state
            .patch_fuzzer
            .seed(&mut sh, &state.oracle, &mut state.pool, seeds);
        let inputs: Vec<Vec<u8>> = state
            .oracle
            .entries()
            .iter()
            .map(|e| e.test.input.clone())
            .collect();
        state
            .input_fuzzer
            .seed(&mut sh, &mut state.oracle, &mut state.pool, inputs);
        Ok(state)
    }

    /// Statement the exploit crashed at on the original program. `None` when
    /// the exploit fails its criterion without crashing (an output mismatch).
    pub fn crash_site(&self) -> Option<StmtId> {
        self.crash_site
    }

    pub fn patch_stats(&self) -> PatchStats {
        self.patch_fuzzer.stats
    }

    pub fn input_stats(&self) -> InputStats {
        self.input_fuzzer.stats
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    pub fn budget_exhausted(&self) -> bool {
        match self.config.budget {
            Budget::Execs(n) => self.executions >= n,
            Budget::Time(d) => self.started.elapsed() >= d,
        }
    }

    fn deterministic(&self) -> bool {
        matches!(self.config.budget, Budget::Execs(_))
    }

    /// Validate a patch against the current oracle and pool it if plausible.
    /// Returns whether it entered the pool.
    pub fn inject_patch(&mut self, patch: Patch) -> Result<bool, DetourError> {
        let table = detour_for(&self.bc, &patch)?;
        let eval = self
            .oracle
            .evaluate(&mut self.vm, &self.bc, &table, self.limits);
        self.executions += u64::from(eval.runs);
        Ok(eval.plausible && self.pool.insert(patch, table, self.executions))
    }

    /// Run one slice: patch fuzzing while the pool is short of its target,
    /// input fuzzing once it is full. Ends at the slice caps, when the
    /// campaign budget runs out, or as soon as the pool crosses the target
    /// in the direction the other fuzzer handles.
    pub fn run_slice(&mut self) -> SliceSummary {
        let kind = if self.pool.len() < self.config.pool_target {
            SliceKind::Patch
        } else {
            SliceKind::Input
        };
        let start_execs = self.executions;
        let deadline = Instant::now() + self.config.slice_time;
        let mut counter_examples = 0u32;

        while !self.budget_exhausted()
            && self.executions - start_execs < self.config.slice_execs
            && (self.deterministic() || Instant::now() < deadline)
        {
            let before = self.executions;
            let mut sh = FuzzShared {
                bc: &self.bc,
                vm: &mut self.vm,
                limits: self.limits,
                rng: &mut self.rng,
                executions: &mut self.executions,
                jobs: self.config.jobs,
            };
            match kind {
                SliceKind::Patch => {
                    self.patch_fuzzer.step(&mut sh, &self.oracle, &mut self.pool)
                }
                SliceKind::Input => {
                    counter_examples +=
                        self.input_fuzzer
                            .step(&mut sh, &mut self.oracle, &mut self.pool)
                }
            }
            // A step that ran nothing means an empty queue; the slice cannot
            // make progress.
            if self.executions == before {
                break;
            }
            // Hand off as soon as the pool crosses the target: a patch slice
            // that just filled it stops breeding (a full slice could pool
            // hundreds past the target, and every extra entry taxes each
            // later input admission), an input slice that culled below it
            // goes back to breeding.
            let live = self.pool.len();
            match kind {
                SliceKind::Patch if live >= self.config.pool_target => break,
                SliceKind::Input if live < self.config.pool_target => break,
                _ => {}
            }
        }

        if counter_examples > 0 {
            self.filter_pool();
        }
        self.slices += 1;
        SliceSummary {
            slice: self.slices,
            kind,
            executions: self.executions,
            slice_execs: self.executions - start_execs,
            pool_live: self.pool.len(),
            pool_insertions: self.pool.insertions(),
            killed_crash: self.pool.killed_crash(),
            killed_diff: self.pool.killed_diff(),
            oracle_tests: self.oracle.len(),
            counter_examples_added: counter_examples,
            patch_queue: self.patch_fuzzer.queue_len(),
            input_queue: self.input_fuzzer.queue_len(),
            plausible_total: self.patch_fuzzer.stats.plausible,
            elapsed_ms: self.started.elapsed().as_millis() as u64,
        }
    }

    /// Run slices until the budget is exhausted, reporting each to
    /// `on_slice` (e.g. a JSONL log writer).
    pub fn run_campaign(&mut self, mut on_slice: impl FnMut(&SliceSummary)) {
        let mut stalled = 0u32;
        while !self.budget_exhausted() {
            let before = self.executions;
            let summary = self.run_slice();
            on_slice(&summary);
            if self.executions == before {
                stalled += 1;
                // Both queues empty: nothing can consume the budget.
                if stalled >= 2 {
                    break;
                }
            } else {
                stalled = 0;
            }
        }
    }

    /// Re-validate every pooled patch after the oracle grew; drop the ones
    /// the new tests expose, recording the exposing input as their witness.
    fn filter_pool(&mut self) {
        let mut kills: Vec<(crate::patch::Digest, Witness)> = Vec::new();
        'entries: for e in self.pool.entries() {
            for &ix in self.oracle.schedule() {
                let oe = self.oracle.entry(ix);
                let r = self.vm.run(&self.bc, &e.table, &oe.test.input, self.limits);
                self.executions += 1;
                if !oe.test.criterion.passes(&r) {
                    let kind = if r.outcome.is_crash() {
                        WitnessKind::Crash
                    } else {
                        WitnessKind::OutputDiff
                    };
                    kills.push((
                        e.patch.digest(),
                        Witness { input: oe.test.input.clone(), kind },
                    ));
                    continue 'entries;
                }
            }
        }
        let at = self.executions;
        for (digest, witness) in kills {
            self.pool.kill(digest, witness, at);
        }
    }
}
