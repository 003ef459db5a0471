//! The two co-evolving fuzzers.
//!
//! The patch fuzzer mutates candidate repairs and validates them against the
//! test oracle; survivors land in the [`PatchPool`]. The input fuzzer mutates
//! test inputs against the original program and the pooled patches, killing
//! patches it can distinguish from the original and turning each kill into a
//! new oracle test. Both draw from one RNG and charge one execution counter,
//! so a whole campaign is a deterministic function of (program, tests, seed).

pub mod input_fuzzer;
pub mod input_mutate;
pub mod oracle;
pub mod patch_fuzzer;
pub mod queue;

pub use input_fuzzer::{InputFuzzer, InputStats};
pub use oracle::{Evaluation, OracleEntry, TestCase, TestCriterion, TestOracle, TestOrigin};
pub use patch_fuzzer::{KilledPatch, PatchFuzzer, PatchPool, PatchStats, PoolEntry, Witness, WitnessKind};
pub use queue::Selector;

use rand_chacha::ChaCha8Rng;

use crate::exec::{Bytecode, ExecLimits, Vm};

/// Execution context threaded through both fuzzers: the program under repair,
/// a reusable VM, per-run limits, the campaign RNG, and the global execution
/// counter that budgets are charged against.
pub struct FuzzShared<'a> {
    pub bc: &'a Bytecode,
    pub vm: &'a mut Vm,
    pub limits: ExecLimits,
    pub rng: &'a mut ChaCha8Rng,
    pub executions: &'a mut u64,
    /// Patch-validation worker threads; 1 validates inline. Results are
    /// independent of this value.
    pub jobs: usize,
}
