//! The campaign report: what survived, what died, and where the fix lives.
//!
//! Under an execution budget the report is a deterministic function of
//! (program, tests, seed), byte for byte; wall-clock fields appear only
//! under a time budget. Everything round-trips through JSON losslessly.

use serde::{Deserialize, Serialize};

use crate::coevolve::rank::RankedPatch;
use crate::coevolve::{Budget, RepairState};
use crate::exec::{compile_invocations, source_hash};
use crate::fuzz::WitnessKind;
use crate::lang::StmtId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub program: String,
    /// Structural hash of the compiled program: identical for sources that
    /// differ only in formatting.
    pub source_hash: String,
    pub seed: u64,
    pub budget: String,
    pub executions: u64,
    /// Co-evolution slices driven.
    pub iterations: u64,
    /// Wall-clock fields, present only under a time budget: execution-budget
    /// reports must be byte-identical across runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub elapsed_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub patch_execs_per_sec: Option<f64>,
    /// Statement the exploit crashed at on the original program.
    pub crash_site: Option<StmtId>,
    /// Compiler runs this process has performed; a whole campaign costs one.
    pub compile_invocations: u64,
    /// Oracle tests the original program fails / passes.
    pub tests_crashing: usize,
    pub tests_passing: usize,
    pub counter_examples: u64,
    pub pool_insertions: u64,
    /// Pooled patches later killed by a crash witness.
    pub overfit_crash_count: u64,
    /// Pooled patches later killed by an output-divergence witness.
    pub overfit_diff_count: u64,
    /// Live patches, closest to the original flow first.
    pub plausible: Vec<PlausiblePatch>,
    pub killed: Vec<KilledPatch>,
    pub locations_total: usize,
    /// Fix locations by live patch density.
    pub locations: Vec<Location>,
    /// 1-based rank of the known fix location, when one was supplied and
    /// holds at least one live patch.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub location_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausiblePatch {
    pub rank: usize,
    pub digest: String,
    pub stmt_id: StmtId,
    pub function: String,
    pub lineage: u16,
    pub cf_distance: u64,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KilledPatch {
    pub digest: String,
    pub stmt_id: StmtId,
    pub function: String,
    pub statement: String,
    pub witness_kind: WitnessKind,
    pub witness_input_hex: String,
    pub at_exec: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub rank: usize,
    pub stmt_id: StmtId,
    pub function: String,
    pub live: usize,
}

impl Report {
    /// Snapshots a finished campaign. `ranked` comes from
    /// [`RepairState::rank_patches`]; ranking is the caller's step so its
    /// executions are already in the totals.
    pub fn build(
        st: &RepairState,
        ranked: &[RankedPatch],
        program: &str,
        known_fix_loc: Option<StmtId>,
    ) -> Report {
        let (elapsed_ms, patch_execs_per_sec) = match st.config.budget {
            Budget::Execs(_) => (None, None),
            Budget::Time(_) => {
                let ms = st.elapsed().as_millis() as u64;
                let secs = (ms as f64 / 1000.0).max(1e-3);
                (Some(ms), Some(st.executions as f64 / secs))
            }
        };

        let tests_passing =
            st.oracle.entries().iter().filter(|e| e.original_passes).count();

        let plausible = ranked
            .iter()
            .enumerate()
            .map(|(ix, r)| PlausiblePatch {
                rank: ix + 1,
                digest: r.patch.digest().to_hex(),
                stmt_id: r.patch.loc.stmt_id,
                function: r.patch.loc.function.clone(),
                lineage: r.patch.lineage,
                cf_distance: r.cf_distance,
                statement: r.patch.stmt.to_string(),
            })
            .collect();

        let killed = st
            .pool
            .killed()
            .iter()
            .map(|k| KilledPatch {
                digest: k.patch.digest().to_hex(),
                stmt_id: k.patch.loc.stmt_id,
                function: k.patch.loc.function.clone(),
                statement: k.patch.stmt.to_string(),
                witness_kind: k.witness.kind,
                witness_input_hex: hex(&k.witness.input),
                at_exec: k.at_exec,
            })
            .collect();

        let ranked_locs = st.rank_locations();
        let location_rank = known_fix_loc.and_then(|id| {
            ranked_locs.iter().position(|l| l.stmt_id == id).map(|p| p + 1)
        });
        let locations: Vec<Location> = ranked_locs
            .into_iter()
            .enumerate()
            .map(|(ix, l)| Location {
                rank: ix + 1,
                stmt_id: l.stmt_id,
                function: l.function,
                live: l.live,
            })
            .collect();

        Report {
            program: program.to_string(),
            source_hash: hex(&source_hash(&st.program)),
            seed: st.config.seed,
            budget: st.config.budget.to_string(),
            executions: st.executions,
            iterations: st.slices,
            elapsed_ms,
            patch_execs_per_sec,
            crash_site: st.crash_site(),
            compile_invocations: compile_invocations(),
            tests_crashing: st.oracle.entries().len() - tests_passing,
            tests_passing,
            counter_examples: st.input_stats().counter_examples,
            pool_insertions: st.pool.insertions(),
            overfit_crash_count: st.pool.killed_crash(),
            overfit_diff_count: st.pool.killed_diff(),
            plausible,
            killed,
            locations_total: locations.len(),
            locations,
            location_rank,
        }
    }

    /// Live + killed counts reconcile with total pool insertions.
    pub fn conserves_pool(&self) -> bool {
        self.plausible.len() as u64 + self.overfit_crash_count + self.overfit_diff_count
            == self.pool_insertions
    }
}

fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write as _;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
