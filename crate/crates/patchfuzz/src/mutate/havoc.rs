//! Stacked random mutation. Havoc applies one to four randomly chosen
//! rewrites in sequence, which is how the search leaves the single-step
//! catalog's neighborhood: each step draws an operator, a node, and a
//! payload at random, retrying a few times when the draw does not apply.

use rand::Rng;

use crate::exec::Bytecode;
use crate::patch::Patch;

use super::ops::{candidates_at, collect_sites, MutationCx, ALL_KINDS};

const MAX_STACK: u16 = 4;
const ATTEMPTS_PER_STEP: u32 = 16;

/// Randomly mutated copy of `patch`, one to four rewrites deep. Lineage
/// grows by the number of rewrites actually applied. If nothing applies
/// (which only happens for degenerate statements), the patch comes back
/// unchanged.
pub fn havoc<R: Rng>(patch: &Patch, cx: &MutationCx, bc: &Bytecode, rng: &mut R) -> Patch {
    let goal = rng.gen_range(1..=MAX_STACK);
    let mut stmt = patch.stmt.clone();
    let mut applied: u16 = 0;
    'steps: for _ in 0..goal {
        let sites = collect_sites(&stmt);
        for _ in 0..ATTEMPTS_PER_STEP {
            let kind = ALL_KINDS[rng.gen_range(0..ALL_KINDS.len())];
            let site = &sites[rng.gen_range(0..sites.len())];
            let mut cands = candidates_at(&stmt, site, kind, cx);
            if cands.is_empty() {
                continue;
            }
            stmt = cands.swap_remove(rng.gen_range(0..cands.len()));
            applied += 1;
            continue 'steps;
        }
        break;
    }
    if applied == 0 {
        return patch.clone();
    }
    Patch::new(patch.loc.stmt_id, stmt, patch.lineage + applied, bc)
        .expect("operators preserve well-formedness")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::exec::compile;
    use crate::lang::{parse_program, refactor_conditionals};
    use crate::patch::detour::detour_for;

    fn setup() -> (Patch, Bytecode) {
        let src = "fn main() {
            var n = input();
            var i = 0;
            var total = 0;
            while (i < n) { total = total + i; i = i + 1; }
            print(total);
        }";
        let program = refactor_conditionals(&parse_program(src).unwrap());
        let bc = compile(&program).unwrap();
        // `total = total + i;`
        let id = 5;
        let stmt = program.stmt(id).unwrap().clone();
        (Patch::new(id, stmt, 0, &bc).unwrap(), bc)
    }

    #[test]
    fn same_seed_same_mutant() {
        let (patch, bc) = setup();
        let cx = MutationCx {
            bindings: bc.bindings_at(patch.loc.stmt_id).unwrap(),
            width: bc.int_width,
        };
        let a = havoc(&patch, &cx, &bc, &mut ChaCha8Rng::seed_from_u64(11));
        let b = havoc(&patch, &cx, &bc, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.lineage, b.lineage);
    }

    #[test]
    fn lineage_counts_applied_steps() {
        let (patch, bc) = setup();
        let cx = MutationCx {
            bindings: bc.bindings_at(patch.loc.stmt_id).unwrap(),
            width: bc.int_width,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let m = havoc(&patch, &cx, &bc, &mut rng);
            assert!((1..=MAX_STACK).contains(&m.lineage), "lineage {}", m.lineage);
        }
    }

    #[test]
    fn every_havoc_mutant_installs_as_a_detour() {
        let (patch, bc) = setup();
        let cx = MutationCx {
            bindings: bc.bindings_at(patch.loc.stmt_id).unwrap(),
            width: bc.int_width,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let m = havoc(&patch, &cx, &bc, &mut rng);
            assert!(detour_for(&bc, &m).is_ok(), "{m}");
        }
    }

    #[test]
    fn havoc_explores_beyond_single_steps() {
        let (patch, bc) = setup();
        let cx = MutationCx {
            bindings: bc.bindings_at(patch.loc.stmt_id).unwrap(),
            width: bc.int_width,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut distinct = std::collections::HashSet::new();
        let mut deep = 0;
        for _ in 0..300 {
            let m = havoc(&patch, &cx, &bc, &mut rng);
            if m.lineage >= 2 {
                deep += 1;
            }
            distinct.insert(m.digest());
        }
        assert!(distinct.len() > 100, "only {} distinct mutants", distinct.len());
        assert!(deep > 50, "only {deep} stacked mutants");
    }
}
