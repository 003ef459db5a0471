//! Byte-level input mutation. The deterministic stage is index-addressable
//! so a queue entry can resume where it left off across selections; havoc
//! stacks random byte operations.

use rand::Rng;

/// Inputs never grow beyond this.
pub const MAX_INPUT_LEN: usize = 4096;

const INTERESTING_BYTES: [u8; 5] = [0, 1, 127, 128, 255];

/// Number of deterministic mutants for an input of `len` bytes: walking
/// 1/2/4-bit flips over the bit stream, then a +1 pass over each byte.
pub fn det_count(len: usize) -> usize {
    if len == 0 {
        return 0;
    }
    let bits = 8 * len;
    bits + (bits - 1) + (bits - 3) + len
}

/// Flip `width` consecutive bits starting at `bit`, most significant bit of
/// each byte first.
fn flip_bits(data: &mut [u8], bit: usize, width: usize) {
    for b in bit..bit + width {
        data[b / 8] ^= 0x80 >> (b % 8);
    }
}

/// The `index`-th deterministic mutant, or None past the end.
pub fn det_mutant(input: &[u8], index: usize) -> Option<Vec<u8>> {
    if input.is_empty() {
        return None;
    }
    let bits = 8 * input.len();
    let mut ix = index;

    if ix < bits {
        let mut m = input.to_vec();
        flip_bits(&mut m, ix, 1);
        return Some(m);
    }
    ix -= bits;
    if ix < bits - 1 {
        let mut m = input.to_vec();
        flip_bits(&mut m, ix, 2);
        return Some(m);
    }
    ix -= bits - 1;
    if ix < bits - 3 {
        let mut m = input.to_vec();
        flip_bits(&mut m, ix, 4);
        return Some(m);
    }
    ix -= bits - 3;
    if ix < input.len() {
        let mut m = input.to_vec();
        m[ix] = m[ix].wrapping_add(1);
        return Some(m);
    }
    None
}

/// Stacked random byte mutations: one to thirty-two operations drawn from
/// bit flips, byte sets, small arithmetic, interesting constants, block
/// duplication/removal, truncation and extension.
pub fn havoc_input<R: Rng>(input: &[u8], rng: &mut R) -> Vec<u8> {
    let mut data = input.to_vec();
    let ops = rng.gen_range(1..=32);
    for _ in 0..ops {
        match rng.gen_range(0..9) {
            0 => {
                if let Some(bit) = pick_bit(&data, rng) {
                    flip_bits(&mut data, bit, 1);
                }
            }
            1 => {
                if let Some(i) = pick_index(&data, rng) {
                    data[i] = rng.gen();
                }
            }
            2 => {
                if let Some(i) = pick_index(&data, rng) {
                    data[i] = data[i].wrapping_add(rng.gen_range(1..=35));
                }
            }
            3 => {
                if let Some(i) = pick_index(&data, rng) {
                    data[i] = data[i].wrapping_sub(rng.gen_range(1..=35));
                }
            }
            4 => {
                if let Some(i) = pick_index(&data, rng) {
                    data[i] = INTERESTING_BYTES[rng.gen_range(0..INTERESTING_BYTES.len())];
                }
            }
            5 => {
                // Duplicate a block to a random position.
                if !data.is_empty() && data.len() < MAX_INPUT_LEN {
                    let start = rng.gen_range(0..data.len());
                    let max_len = (data.len() - start).min(MAX_INPUT_LEN - data.len());
                    if max_len > 0 {
                        let len = rng.gen_range(1..=max_len);
                        let block: Vec<u8> = data[start..start + len].to_vec();
                        let at = rng.gen_range(0..=data.len());
                        data.splice(at..at, block);
                    }
                }
            }
            6 => {
                // Remove a block.
                if data.len() > 1 {
                    let start = rng.gen_range(0..data.len());
                    let len = rng.gen_range(1..=data.len() - start);
                    data.drain(start..start + len);
                }
            }
            7 => {
                if !data.is_empty() {
                    let keep = rng.gen_range(0..data.len());
                    data.truncate(keep);
                }
            }
            _ => {
                let room = MAX_INPUT_LEN - data.len();
                if room > 0 {
                    let n = rng.gen_range(1..=room.min(16));
                    data.extend((0..n).map(|_| rng.gen::<u8>()));
                }
            }
        }
    }
    data
}

fn pick_index<R: Rng>(data: &[u8], rng: &mut R) -> Option<usize> {
    if data.is_empty() {
        None
    } else {
        Some(rng.gen_range(0..data.len()))
    }
}

fn pick_bit<R: Rng>(data: &[u8], rng: &mut R) -> Option<usize> {
    if data.is_empty() {
        None
    } else {
        Some(rng.gen_range(0..data.len() * 8))
    }
}
