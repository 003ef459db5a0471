//! Queue selection shared by both fuzzers: a round-robin cursor where
//! non-favored entries are probabilistically skipped, so favored entries
//! (the ones that earned their place) get the bulk of the mutation budget
//! without starving the rest.

use rand::Rng;

/// Probability that a non-favored entry is passed over when its turn comes.
const SKIP_NON_FAVORED: f64 = 0.75;

#[derive(Debug, Default)]
pub struct Selector {
    cursor: usize,
}

impl Selector {
    pub fn new() -> Selector {
        Selector::default()
    }

    /// Pick the next queue index. Scans one full cycle from the cursor; if
    /// every entry got skipped, takes the one at the cursor unconditionally.
    pub fn next<R: Rng>(
        &mut self,
        len: usize,
        favored: impl Fn(usize) -> bool,
        rng: &mut R,
    ) -> Option<usize> {
        if len == 0 {
            return None;
        }
        self.cursor %= len;
        for probe in 0..len {
            let ix = (self.cursor + probe) % len;
            if favored(ix) || rng.gen::<f64>() >= SKIP_NON_FAVORED {
                self.cursor = ix + 1;
                return Some(ix);
            }
        }
        let ix = self.cursor % len;
        self.cursor = ix + 1;
        Some(ix)
    }
}
