//! Edge coverage in the AFL style: basic blocks carry 16-bit ids, an edge
//! hashes the previous and current block into a 64k-entry map, and raw hit
//! counts collapse into power-of-two buckets so loop iteration counts don't
//! read as endless novelty.

pub const MAP_SIZE: usize = 65_536;

/// Edge index for a `prev -> cur` block transition.
#[inline]
pub fn edge_index(prev: u16, cur: u16) -> u16 {
    (prev >> 1) ^ cur
}

/// Collapse a raw hit count into its coarse bucket.
/// Buckets: 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+.
#[inline]
pub fn bucketize(raw: u8) -> u8 {
    match raw {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 3,
        4..=7 => 4,
        8..=15 => 8,
        16..=31 => 16,
        32..=127 => 32,
        _ => 128,
    }
}

/// Bit position of a bucket value inside a global-map cell.
#[inline]
fn bucket_bit(bucket: u8) -> u8 {
    match bucket {
        1 => 1 << 0,
        2 => 1 << 1,
        3 => 1 << 2,
        4 => 1 << 3,
        8 => 1 << 4,
        16 => 1 << 5,
        32 => 1 << 6,
        _ => 1 << 7,
    }
}

/// Per-run coverage map with saturating raw hit counts. One instance is
/// meant to be reused across runs: clearing touches only the hit entries.
pub struct CoverageMap {
    raw: Box<[u8; MAP_SIZE]>,
    touched: Vec<u16>,
    pub prev_loc: u16,
}

impl Default for CoverageMap {
    fn default() -> Self {
        Self::new()
    }
}

impl CoverageMap {
    pub fn new() -> CoverageMap {
        CoverageMap { raw: Box::new([0u8; MAP_SIZE]), touched: Vec::with_capacity(256), prev_loc: 0 }
    }

    /// Record the edge into `cur` and advance `prev_loc`.
    #[inline]
    pub fn record(&mut self, cur: u16) {
        self.record_edge(self.prev_loc, cur);
        self.prev_loc = cur;
    }

    /// Record an explicit edge without advancing `prev_loc`. Patch
    /// pseudo-blocks use this so a detour shows up in coverage without
    /// perturbing the native edge stream around it.
    #[inline]
    pub fn record_edge(&mut self, prev: u16, cur: u16) {
        let idx = edge_index(prev, cur);
        let slot = &mut self.raw[idx as usize];
        if *slot == 0 {
            self.touched.push(idx);
        }
        *slot = slot.saturating_add(1);
    }

    pub fn reset(&mut self) {
        for &idx in &self.touched {
            self.raw[idx as usize] = 0;
        }
        self.touched.clear();
        self.prev_loc = 0;
    }

    /// Snapshot the hit edges as sorted `(index, bucket)` pairs.
    pub fn snapshot(&self) -> EdgeSet {
        let mut edges: Vec<(u16, u8)> = self
            .touched
            .iter()
            .map(|&idx| (idx, bucketize(self.raw[idx as usize])))
            .collect();
        edges.sort_unstable_by_key(|&(idx, _)| idx);
        edges.dedup_by_key(|&mut (idx, _)| idx);
        EdgeSet { edges }
    }
}

/// Immutable per-run coverage snapshot: sorted, bucketized edges.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeSet {
    edges: Vec<(u16, u8)>,
}

impl EdgeSet {
    pub fn edges(&self) -> &[(u16, u8)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = u16> + '_ {
        self.edges.iter().map(|&(idx, _)| idx)
    }

    /// Copy minus the given edge indices (unsorted, duplicates allowed).
    pub fn without(&self, skip: &[u16]) -> EdgeSet {
        if skip.is_empty() {
            return self.clone();
        }
        let mut skip = skip.to_vec();
        skip.sort_unstable();
        skip.dedup();
        let edges = self
            .edges
            .iter()
            .filter(|&&(idx, _)| skip.binary_search(&idx).is_err())
            .copied()
            .collect();
        EdgeSet { edges }
    }

    /// Stable content hash, useful as a cheap behavior fingerprint.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the (index, bucket) stream.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &(idx, bucket) in &self.edges {
            for b in idx.to_le_bytes() {
                h = (h ^ b as u64).wrapping_mul(0x1000_0000_01b3);
            }
            h = (h ^ bucket as u64).wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}

/// Accumulated coverage across many runs. Each cell is a bitmask of the
/// bucket values ever observed for that edge; a run is interesting when it
/// sets a bit no previous run set.
pub struct GlobalCoverage {
    bits: Box<[u8; MAP_SIZE]>,
    set_bits: u32,
}

impl Default for GlobalCoverage {
    fn default() -> Self {
        Self::new()
    }
}

impl GlobalCoverage {
    pub fn new() -> GlobalCoverage {
        GlobalCoverage { bits: Box::new([0u8; MAP_SIZE]), set_bits: 0 }
    }

    /// Fold a run into the map; true if any new (edge, bucket) bit appeared.
    pub fn absorb(&mut self, run: &EdgeSet) -> bool {
        let mut novel = false;
        for &(idx, bucket) in &run.edges {
            let bit = bucket_bit(bucket);
            let cell = &mut self.bits[idx as usize];
            if *cell & bit == 0 {
                *cell |= bit;
                self.set_bits += 1;
                novel = true;
            }
        }
        novel
    }

    /// Non-mutating version of [`GlobalCoverage::absorb`].
    pub fn would_gain(&self, run: &EdgeSet) -> bool {
        run.edges
            .iter()
            .any(|&(idx, bucket)| self.bits[idx as usize] & bucket_bit(bucket) == 0)
    }

    /// Total distinct (edge, bucket) bits observed.
    pub fn set_bits(&self) -> u32 {
        self.set_bits
    }
}
