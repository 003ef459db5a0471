//! Exhaustive first-generation mutants. When a patch is selected for the
//! first time, every operator is applied at every node with every payload,
//! in a fixed order, and the results are deduplicated by digest. The catalog
//! is the cheap, systematic layer of the search; havoc explores beyond it.

use std::collections::HashSet;

use crate::exec::Bytecode;
use crate::patch::Patch;

use super::ops::{candidates_at, collect_sites, MutationCx, ALL_KINDS};

/// Every single-step mutant of `patch`, deterministically ordered (operator,
/// then site pre-order, then payload), digest-deduplicated, with the patch
/// itself excluded. Lineage increases by one.
pub fn deterministic_mutants(patch: &Patch, cx: &MutationCx, bc: &Bytecode) -> Vec<Patch> {
    let sites = collect_sites(&patch.stmt);
    let mut seen: HashSet<_> = [patch.digest()].into();
    let mut out = Vec::new();
    for kind in ALL_KINDS {
        for site in &sites {
            for stmt in candidates_at(&patch.stmt, site, kind, cx) {
                let mutant = Patch::new(patch.loc.stmt_id, stmt, patch.lineage + 1, bc)
                    .expect("operators preserve well-formedness");
                if seen.insert(mutant.digest()) {
                    out.push(mutant);
                }
            }
        }
    }
    out
}
