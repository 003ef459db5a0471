//! Patch-level fuzzing: evolve candidate repairs under the test oracle.
//!
//! Every generated mutant is validated; there is no global memory of tried
//! patches. Deduplication happens only at queue insertion, so re-deriving an
//! uninteresting patch costs a (cheap, short-circuited) validation and
//! nothing else. A patch earns a queue slot by being plausible, by passing a
//! failing test no earlier patch passed, or by reaching new coverage. Each
//! patched statement fires a coverage edge of its own, so nearly every
//! distinct mutant reaches "new" coverage once and the queue grows into the
//! hundreds of thousands over a long campaign. That is deliberate: queued
//! mutants are stepping stones (a repair several mutations deep is reached
//! by mutating a queued intermediate), and the selector keeps the flood
//! cheap by skipping most of it — only *favored* entries (seeds, plausible
//! patches, and mutants whose runs reached new coverage in the program
//! itself rather than just their own patch edge) are visited every cycle.
//!
//! Mutants are generated single-threaded (the RNG stream stays stable), then
//! validated either inline or on worker threads, and always merged in
//! submission order. Campaign results are therefore identical at any
//! parallelism level.

use std::collections::HashSet;

use crate::exec::{Bytecode, EdgeSet, ExecLimits, GlobalCoverage, Vm};
use crate::fuzz::oracle::{Evaluation, TestOracle};
use crate::fuzz::queue::Selector;
use crate::fuzz::FuzzShared;
use crate::mutate::{deterministic_mutants, havoc, MutationCx};
use crate::patch::detour::{detour_for, DetourTable};
use crate::patch::{Digest, Patch};

/// Base havoc batch size per selection; doubled for plausible parents and
/// again for coverage-novel parents.
const HAVOC_ENERGY: u32 = 8;
const HAVOC_ENERGY_CAP: u32 = 128;

/// How a pooled patch was disqualified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// The patched program crashed on the witness input.
    Crash,
    /// Both runs completed but outputs differ.
    OutputDiff,
}

/// A replayable counter-example to a pooled patch.
#[derive(Debug, Clone)]
pub struct Witness {
    pub input: Vec<u8>,
    pub kind: WitnessKind,
}

/// A patch the campaign disqualified, kept for reporting and replay.
#[derive(Debug, Clone)]
pub struct KilledPatch {
    pub patch: Patch,
    pub witness: Witness,
    /// Execution-counter reading when the kill happened.
    pub at_exec: u64,
}

/// A plausible patch together with its pre-resolved detour table, so kill
/// checks pay no per-run resolution cost.
#[derive(Debug)]
pub struct PoolEntry {
    pub patch: Patch,
    pub table: DetourTable,
    /// Execution-counter reading when the patch entered the pool.
    pub added_exec: u64,
}

/// The survivors: patches that pass every oracle test so far. Ordered by
/// digest so iteration order is independent of discovery order.
#[derive(Debug, Default)]
pub struct PatchPool {
    entries: Vec<PoolEntry>,
    killed: Vec<KilledPatch>,
    killed_crash: u64,
    killed_diff: u64,
    insertions: u64,
}

impl PatchPool {
    pub fn new() -> PatchPool {
        PatchPool::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, digest: Digest) -> bool {
        self.position(digest).is_some()
    }

    fn position(&self, digest: Digest) -> Option<usize> {
        self.entries.binary_search_by_key(&digest, |e| e.patch.digest()).ok()
    }

    /// Admit a patch unless its digest is already pooled. Returns whether it
    /// was inserted.
    pub fn insert(&mut self, patch: Patch, table: DetourTable, added_exec: u64) -> bool {
        match self.entries.binary_search_by_key(&patch.digest(), |e| e.patch.digest()) {
            Ok(_) => false,
            Err(at) => {
                self.entries.insert(at, PoolEntry { patch, table, added_exec });
                self.insertions += 1;
                true
            }
        }
    }

    /// Remove a patch that a witness input disqualified. Returns the kill
    /// record, or None if the digest is not pooled.
    pub fn kill(&mut self, digest: Digest, witness: Witness, at_exec: u64) -> Option<&KilledPatch> {
        let at = self.position(digest)?;
        let entry = self.entries.remove(at);
        match witness.kind {
            WitnessKind::Crash => self.killed_crash += 1,
            WitnessKind::OutputDiff => self.killed_diff += 1,
        }
        self.killed.push(KilledPatch { patch: entry.patch, witness, at_exec });
        self.killed.last()
    }

    /// Live entries in digest order.
    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn killed(&self) -> &[KilledPatch] {
        &self.killed
    }

    pub fn killed_crash(&self) -> u64 {
        self.killed_crash
    }

    pub fn killed_diff(&self) -> u64 {
        self.killed_diff
    }

    /// Total patches ever admitted. Always equals live + killed.
    pub fn insertions(&self) -> u64 {
        self.insertions
    }
}

#[derive(Debug)]
struct PatchQueueEntry {
    patch: Patch,
    favored: bool,
    plausible: bool,
    novel_cov: bool,
    det_done: bool,
}

/// Counters for reporting and budget accounting.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct PatchStats {
    /// Mutants produced (including re-derivations of known patches).
    pub generated: u64,
    /// Oracle evaluations performed, whether or not they ran to completion.
    pub validated: u64,
    /// Validations that passed every test.
    pub plausible: u64,
    /// Patches admitted to the mutation queue.
    pub queued: u64,
}

/// The result of validating one mutant, possibly on a worker thread. Merging
/// happens on the caller in submission order.
enum Validated {
    Ok {
        table: DetourTable,
        eval: Evaluation,
        /// Per oracle run: its full edge set and the patch pseudo-edge
        /// indices within it, so the merge can score full and native (pseudo
        /// stripped) novelty separately.
        covs: Vec<(EdgeSet, Vec<u16>)>,
    },
    /// The replacement failed to resolve at its location. Mutation operators
    /// only build resolvable statements, so this marks an operator bug; the
    /// mutant is dropped rather than crashing a long campaign.
    BadPatch,
}

fn validate_one(
    vm: &mut Vm,
    bc: &Bytecode,
    oracle: &TestOracle,
    limits: ExecLimits,
    patch: &Patch,
) -> Validated {
    let Ok(table) = detour_for(bc, patch) else {
        debug_assert!(false, "mutant failed to resolve: {patch}");
        return Validated::BadPatch;
    };
    let mut covs = Vec::new();
    let eval = oracle.evaluate_with(vm, bc, &table, limits, |r| {
        covs.push((r.coverage.clone(), r.patch_edges.clone()));
    });
    Validated::Ok { table, eval, covs }
}

/// The patch-side fuzzing loop. One [`step`](PatchFuzzer::step) selects a
/// queue entry and runs its deterministic stage (first selection) or a havoc
/// batch (every later selection).
pub struct PatchFuzzer {
    queue: Vec<PatchQueueEntry>,
    selector: Selector,
    queued_digests: HashSet<Digest>,
    /// Coverage over every validation run, patch pseudo-edges included.
    /// Gaining a bit here is what admits a mutant to the queue.
    cov: GlobalCoverage,
    /// Coverage with pseudo-edges stripped. Gaining a bit here means the
    /// mutant drove the program itself somewhere new, which is rare and
    /// marks the entry favored.
    native_cov: GlobalCoverage,
    /// Storage indices of failing tests some queued patch has passed.
    failing_bits: HashSet<u32>,
    pub stats: PatchStats,
}

impl PatchFuzzer {
    pub fn new() -> PatchFuzzer {
        PatchFuzzer {
            queue: Vec::new(),
            selector: Selector::new(),
            queued_digests: HashSet::new(),
            cov: GlobalCoverage::new(),
            native_cov: GlobalCoverage::new(),
            failing_bits: HashSet::new(),
            stats: PatchStats::default(),
        }
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Digests of every queued patch, in queue order.
    pub fn queue_digests(&self) -> Vec<Digest> {
        self.queue.iter().map(|e| e.patch.digest()).collect()
    }

    /// Evaluate and queue seed patches. Seeds enter the queue even when
    /// uninteresting; mutation needs a base population.
    pub fn seed(
        &mut self,
        sh: &mut FuzzShared,
        oracle: &TestOracle,
        pool: &mut PatchPool,
        seeds: Vec<Patch>,
    ) {
        self.admit_batch(sh, oracle, pool, seeds, true);
    }

    /// One scheduling turn: pick a queue entry, mutate it, validate the
    /// mutants, pool the plausible ones, queue the interesting ones.
    pub fn step(&mut self, sh: &mut FuzzShared, oracle: &TestOracle, pool: &mut PatchPool) {
        let queue = &self.queue;
        let Some(ix) = self.selector.next(queue.len(), |i| queue[i].favored, sh.rng) else {
            return;
        };
        let parent = self.queue[ix].patch.clone();
        let bindings = sh
            .bc
            .bindings_at(parent.loc.stmt_id)
            .expect("queued patches target patchable statements");
        let cx = MutationCx { bindings, width: sh.bc.int_width };

        let batch = if !self.queue[ix].det_done {
            self.queue[ix].det_done = true;
            deterministic_mutants(&parent, &cx, sh.bc)
        } else {
            let e = &self.queue[ix];
            let energy =
                (HAVOC_ENERGY << (e.plausible as u32) << (e.novel_cov as u32)).min(HAVOC_ENERGY_CAP);
            (0..energy).map(|_| havoc(&parent, &cx, sh.bc, sh.rng)).collect()
        };
        self.admit_batch(sh, oracle, pool, batch, false);
    }

    /// Validate a batch of candidates and merge the results in submission
    /// order. With `sh.jobs > 1` validation fans out to worker threads; the
    /// outcome is identical either way.
    fn admit_batch(
        &mut self,
        sh: &mut FuzzShared,
        oracle: &TestOracle,
        pool: &mut PatchPool,
        batch: Vec<Patch>,
        force_queue: bool,
    ) {
        if batch.is_empty() {
            return;
        }
        self.stats.generated += batch.len() as u64;

        let jobs = sh.jobs.clamp(1, batch.len());
        if jobs == 1 {
            for patch in batch {
                let v = validate_one(sh.vm, sh.bc, oracle, sh.limits, &patch);
                self.merge(sh, pool, patch, v, force_queue);
            }
            return;
        }

        let bc = sh.bc;
        let limits = sh.limits;
        let chunk = batch.len().div_ceil(jobs);
        let validated: Vec<Validated> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .chunks(chunk)
                .map(|patches| {
                    scope.spawn(move || {
                        let mut vm = Vm::new();
                        patches
                            .iter()
                            .map(|p| validate_one(&mut vm, bc, oracle, limits, p))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("validation worker panicked"))
                .collect()
        });
        for (patch, v) in batch.into_iter().zip(validated) {
            self.merge(sh, pool, patch, v, force_queue);
        }
    }

    /// Apply one validation result: account executions, absorb coverage,
    /// pool plausible patches, and queue interesting ones. Returns whether
    /// the patch was queued.
    fn merge(
        &mut self,
        sh: &mut FuzzShared,
        pool: &mut PatchPool,
        patch: Patch,
        validated: Validated,
        force_queue: bool,
    ) -> bool {
        let Validated::Ok { table, eval, covs } = validated else {
            return false;
        };
        *sh.executions += u64::from(eval.runs);
        self.stats.validated += 1;

        let mut novel = false;
        let mut native_novel = false;
        for (c, patch_edges) in &covs {
            novel |= self.cov.absorb(c);
            native_novel |= self.native_cov.absorb(&c.without(patch_edges));
        }
        let mut new_failing_bit = false;
        for &ix in &eval.failing_passed {
            new_failing_bit |= self.failing_bits.insert(ix);
        }

        if eval.plausible {
            self.stats.plausible += 1;
            pool.insert(patch.clone(), table, *sh.executions);
        }

        let interesting = force_queue || eval.plausible || new_failing_bit || novel;
        if !interesting || !self.queued_digests.insert(patch.digest()) {
            return false;
        }
        self.queue.push(PatchQueueEntry {
            favored: force_queue || eval.plausible || native_novel,
            plausible: eval.plausible,
            novel_cov: native_novel,
            det_done: false,
            patch,
        });
        self.stats.queued += 1;
        true
    }
}

impl Default for PatchFuzzer {
    fn default() -> Self {
        PatchFuzzer::new()
    }
}
