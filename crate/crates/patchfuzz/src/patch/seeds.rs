//! Seed patches. A repair campaign starts by tracing the exploit input
//! through the unpatched program and reinstalling every patchable statement
//! it executed, verbatim, as a patch at its own location. These identity
//! patches change nothing behaviorally; they exist so each suspect location
//! enters the patch queue with a live, mutable starting point.

use crate::exec::{Bytecode, ExecLimits, Vm};
use crate::lang::{Program, StmtId};

use super::detour::DetourTable;
use super::Patch;

/// Patchable statements executed by `input`, in first-execution order.
pub fn exploit_trace(bc: &Bytecode, input: &[u8], limits: ExecLimits) -> Vec<StmtId> {
    let mut vm = Vm::new();
    let (_, trace) = vm.run_traced(bc, &DetourTable::empty(), input, limits);
    trace
}

/// The statement at `id`, reinstalled verbatim as a lineage-0 patch.
pub fn identity_patch(program: &Program, bc: &Bytecode, id: StmtId) -> Patch {
    let stmt = program.stmt(id).expect("seed ids name statements of this program").clone();
    Patch::new(id, stmt, 0, bc).expect("original statements are well-bounded at their own location")
}

pub fn seed_patches(program: &Program, bc: &Bytecode, trace: &[StmtId]) -> Vec<Patch> {
    trace.iter().map(|&id| identity_patch(program, bc, id)).collect()
}
