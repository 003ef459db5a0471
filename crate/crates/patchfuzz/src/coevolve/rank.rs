//! Ordering what the campaign produced.
//!
//! Every pooled patch passes the whole oracle, so pass counts cannot
//! separate them. What can: how little each patch disturbs the original
//! control flow on the very runs the oracle pins down. A patch that fixes
//! the crash by skipping half the program passes the same tests as one that
//! nudges a bound, but its edge profile gives it away.
//!
//! The score compares edge sets, not hit counts, and discounts the pseudo
//! edges a detour introduces by construction: a patch that preserves
//! behavior on a test contributes zero for that test.

use std::collections::{BTreeMap, HashMap};

use crate::lang::StmtId;
use crate::patch::detour::DetourTable;
use crate::patch::Patch;

use super::RepairState;

/// A live patch scored by flow deviation. Smaller is closer to the
/// original program.
#[derive(Debug, Clone)]
pub struct RankedPatch {
    pub patch: Patch,
    /// Summed symmetric difference between original and patched edge sets
    /// over every oracle test, detour pseudo edges excluded from both sides.
    pub cf_distance: u64,
}

/// A fix location scored by how many live patches target it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedLocation {
    pub stmt_id: StmtId,
    pub function: String,
    pub live: usize,
}

impl RepairState {
    /// Orders the live pool by control-flow distance to the original,
    /// closest first. Ties fall back to lineage (fewer accumulated
    /// mutations first), then digest.
    ///
    /// Runs the oracle once against the original and once per pooled patch;
    /// those executions are charged to the campaign total.
    pub fn rank_patches(&mut self) -> Vec<RankedPatch> {
        let empty = DetourTable::empty();
        let mut originals = Vec::with_capacity(self.oracle.entries().len());
        for e in self.oracle.entries() {
            let r = self.vm.run(&self.bc, &empty, &e.test.input, self.limits);
            self.executions += 1;
            originals.push(r.coverage.indices().collect::<Vec<u16>>());
        }

        let mut ranked = Vec::with_capacity(self.pool.len());
        for entry in self.pool.entries() {
            let mut cf_distance = 0u64;
            for (orig, e) in originals.iter().zip(self.oracle.entries()) {
                let r = self.vm.run(&self.bc, &entry.table, &e.test.input, self.limits);
                self.executions += 1;
                let patched: Vec<u16> = r.coverage.indices().collect();
                cf_distance += symdiff_excluding(orig, &patched, &r.patch_edges);
            }
            ranked.push(RankedPatch { patch: entry.patch.clone(), cf_distance });
        }
        ranked.sort_by(|a, b| {
            (a.cf_distance, a.patch.lineage, a.patch.digest())
                .cmp(&(b.cf_distance, b.patch.lineage, b.patch.digest()))
        });
        ranked
    }

    /// Orders fix locations by live patch count, densest first. Ties go to
    /// the location visited earlier on the exploit trace; locations off the
    /// trace (reachable only through injected patches) sort last, by id.
    pub fn rank_locations(&self) -> Vec<RankedLocation> {
        let mut per_loc: BTreeMap<StmtId, RankedLocation> = BTreeMap::new();
        for e in self.pool.entries() {
            per_loc
                .entry(e.patch.loc.stmt_id)
                .or_insert_with(|| RankedLocation {
                    stmt_id: e.patch.loc.stmt_id,
                    function: e.patch.loc.function.clone(),
                    live: 0,
                })
                .live += 1;
        }

        let mut first_visit: HashMap<StmtId, usize> = HashMap::new();
        for (ix, &id) in self.exploit_trace.iter().enumerate() {
            first_visit.entry(id).or_insert(ix);
        }
        let off_trace = self.exploit_trace.len();

        let mut ranked: Vec<RankedLocation> = per_loc.into_values().collect();
        ranked.sort_by_key(|r| {
            let visit =
                first_visit.get(&r.stmt_id).copied().unwrap_or(off_trace + r.stmt_id as usize);
            (std::cmp::Reverse(r.live), visit)
        });
        ranked
    }
}

/// `|(a \ skip) Δ (b \ skip)|` over sorted, deduplicated index slices.
fn symdiff_excluding(a: &[u16], b: &[u16], skip: &[u16]) -> u64 {
    let (mut i, mut j, mut k) = (0usize, 0usize, 0usize);
    let mut n = 0u64;
    // Both inputs are consumed in ascending merged order, so one monotone
    // cursor into `skip` suffices.
    let skipped = |x: u16, k: &mut usize| {
        while *k < skip.len() && skip[*k] < x {
            *k += 1;
        }
        *k < skip.len() && skip[*k] == x
    };
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&ai), Some(&bj)) if ai == bj => {
                i += 1;
                j += 1;
                continue;
            }
            (Some(&ai), Some(&bj)) if ai < bj => {
                i += 1;
                ai
            }
            (Some(_), Some(&bj)) => {
                j += 1;
                bj
            }
            (Some(&ai), None) => {
                i += 1;
                ai
            }
            (None, Some(&bj)) => {
                j += 1;
                bj
            }
            (None, None) => unreachable!(),
        };
        if !skipped(x, &mut k) {
            n += 1;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::super::{Budget, CoevolveConfig, RepairState};
    use super::*;
    use crate::fuzz::{TestCase, TestCriterion, TestOrigin, Witness, WitnessKind};
    use crate::lang::parse_stmt;

    #[test]
    fn symdiff_basics() {
        assert_eq!(symdiff_excluding(&[], &[], &[]), 0);
        assert_eq!(symdiff_excluding(&[1, 2, 3], &[1, 2, 3], &[]), 0);
        assert_eq!(symdiff_excluding(&[1, 3], &[2, 4], &[]), 4);
        assert_eq!(symdiff_excluding(&[1, 2, 5], &[2, 3], &[]), 3);
        // Skipped indices vanish from both sides.
        assert_eq!(symdiff_excluding(&[1, 2, 5], &[2, 3], &[3, 5]), 1);
        assert_eq!(symdiff_excluding(&[7], &[], &[7]), 0);
        // Skip entries absent from either input are inert.
        assert_eq!(symdiff_excluding(&[1], &[9], &[0, 4, 200]), 2);
    }

    // Same shape as the campaign tests: squares of n inputs, reduced by a
    // limit, overflowing on four large values.
    const SRC: &str = "
        pragma width 16;
        fn main() {
            var n = input();
            var limit = 100;
            var i = 0;
            var total = 0;
            while (i < n) {
                var v = input() % limit;
                total = total + v * v;
                i = i + 1;
            }
            print(total);
            return 0;
        }
    ";

    fn suite() -> Vec<TestCase> {
        vec![
            TestCase {
                name: "exploit".into(),
                input: vec![4, 99, 99, 99, 99],
                criterion: TestCriterion::CrashFree,
                origin: TestOrigin::Exploit,
            },
            TestCase {
                name: "t1".into(),
                input: vec![2, 3, 4],
                criterion: TestCriterion::ExpectedOutput(b"25\n".to_vec()),
                origin: TestOrigin::Regression,
            },
            TestCase {
                name: "t2".into(),
                input: vec![1, 9],
                criterion: TestCriterion::ExpectedOutput(b"81\n".to_vec()),
                origin: TestOrigin::Regression,
            },
        ]
    }

    fn state() -> RepairState {
        let cfg = CoevolveConfig { budget: Budget::Execs(50_000), ..CoevolveConfig::default() };
        RepairState::new(SRC, suite(), cfg).unwrap()
    }

    fn inject(st: &mut RepairState, stmt_id: StmtId, src: &str) -> Patch {
        let p = Patch::new(stmt_id, parse_stmt(src).unwrap(), 0, &st.bc).unwrap();
        assert!(st.inject_patch(p.clone()).unwrap(), "expected plausible: {src}");
        p
    }

    #[test]
    fn patches_rank_by_flow_deviation() {
        let mut st = state();
        // All three survive the oracle, with different flow footprints:
        // tweaking the limit zeroes the exploit values in place, the modulo
        // guard clamps the sum at the crash site, and reducing n skips the
        // whole loop on the exploit.
        inject(&mut st, 1, "var limit = 99;");
        inject(&mut st, 7, "total = total + v * v % 101;");
        inject(&mut st, 0, "var n = input() % 4;");

        let ranked = st.rank_patches();
        assert_eq!(ranked.len(), 3);
        assert!(ranked.windows(2).all(|w| w[0].cf_distance <= w[1].cf_distance));
        // Surviving the exploit at all means new post-loop edges.
        assert!(ranked.iter().all(|r| r.cf_distance > 0));
        // The loop-skipping patch sheds every loop-body edge on the exploit
        // run: strictly farther from the original than the other two.
        assert_eq!(ranked[2].patch.loc.stmt_id, 0);
        assert!(ranked[1].cf_distance < ranked[2].cf_distance);
        let near: Vec<StmtId> = ranked[..2].iter().map(|r| r.patch.loc.stmt_id).collect();
        assert!(near.contains(&1) && near.contains(&7));
    }

    #[test]
    fn locations_rank_by_live_count_then_trace_order() {
        let mut st = state();
        let a = inject(&mut st, 1, "var limit = 99;");
        inject(&mut st, 1, "var limit = 10;");
        inject(&mut st, 0, "var n = input() % 4;");
        inject(&mut st, 7, "total = total + v * v % 101;");

        let ranked = st.rank_locations();
        let counts: Vec<(StmtId, usize)> = ranked.iter().map(|r| (r.stmt_id, r.live)).collect();
        // Two live patches at the limit declaration put it first; the
        // single-patch locations tie and fall back to trace order.
        assert_eq!(counts, vec![(1, 2), (0, 1), (7, 1)]);
        assert!(ranked.iter().all(|r| r.function == "main"));

        let witness = Witness { input: vec![1, 99], kind: WitnessKind::OutputDiff };
        assert!(st.pool.kill(a.digest(), witness, st.executions).is_some());
        let after: Vec<(StmtId, usize)> =
            st.rank_locations().iter().map(|r| (r.stmt_id, r.live)).collect();
        assert_eq!(after, vec![(0, 1), (1, 1), (7, 1)]);
    }
}
