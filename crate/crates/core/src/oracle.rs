//! Reference models written independently of the simulator, for tests.
//!
//! The kernel oracles evaluate each builtin's loop directly on the initial
//! data image, without any schedule, array or cache. The LRU model is a
//! plain set-associative cache working at virtual-line granularity.

use std::collections::HashMap;

use crate::kernel::{AccessPatternSpec, KernelProgram, PatternKind, HASH_K1, HASH_K2};
use crate::metrics::image_digest;
use crate::{Addr, Word};

/// Initial memory image as `(name, base, words)` in region order.
pub fn initial_image(k: &KernelProgram) -> Vec<(String, Addr, Vec<Word>)> {
    k.regions.iter().map(|r| (r.name.clone(), r.base, r.words.clone())).collect()
}

pub fn digest_of(image: &[(String, Addr, Vec<Word>)]) -> String {
    image_digest(image.iter().map(|(n, b, w)| (n.as_str(), *b, w.as_slice())))
}

fn region<'a>(image: &'a mut [(String, Addr, Vec<Word>)], name: &str) -> &'a mut Vec<Word> {
    &mut image.iter_mut().find(|r| r.0 == name).unwrap_or_else(|| panic!("region {name}")).2
}

/// `output[edge_start[e] * F + f] += weight[e] * feature[edge_end[e] * F + f]`.
pub fn gather_image(k: &KernelProgram, feature_len: usize) -> Vec<(String, Addr, Vec<Word>)> {
    let mut img = initial_image(k);
    let es = region(&mut img, "edge_start").clone();
    let ee = region(&mut img, "edge_end").clone();
    let w = region(&mut img, "weight").clone();
    let feat = region(&mut img, "feature").clone();
    let out = region(&mut img, "output");
    for e in 0..es.len() {
        for f in 0..feature_len {
            let o = es[e] as usize * feature_len + f;
            let x = feat[ee[e] as usize * feature_len + f];
            out[o] = out[o].wrapping_add(w[e].wrapping_mul(x));
        }
    }
    img
}

/// `hist[(input[i] >> shift) & mask] += 1`.
pub fn radix_image(k: &KernelProgram, bits: u32, shift: u32) -> Vec<(String, Addr, Vec<Word>)> {
    let mut img = initial_image(k);
    let input = region(&mut img, "input").clone();
    let hist = region(&mut img, "hist");
    for a in input {
        let b = ((a >> shift) & ((1 << bits) - 1)) as usize;
        hist[b] = hist[b].wrapping_add(1);
    }
    img
}

fn hash(x: u32) -> u32 {
    let m1 = x.wrapping_mul(HASH_K1);
    let h1 = m1 ^ (m1 >> 16);
    let m2 = h1.wrapping_mul(HASH_K2);
    m2 ^ (m2 >> 16)
}

/// Addresses loaded by a pattern kernel, in iteration order.
pub fn pattern_addresses(spec: &AccessPatternSpec, len: u64) -> Vec<Addr> {
    let wrap = spec.range_bytes - 1;
    let stride = spec.stride as u32;
    let seed = spec.hash_seed();
    let mut sum = 0u32;
    (0..len as u32)
        .map(|i| {
            let h = hash(i.wrapping_add(seed));
            let off = match spec.kind {
                PatternKind::Constant => 0,
                PatternKind::Linear => i.wrapping_mul(stride) & wrap,
                PatternKind::Strided => (i >> spec.run_log2).wrapping_mul(stride) & wrap,
                PatternKind::RandomUniform => h & (wrap & !3),
                PatternKind::IrregularStep => {
                    sum = sum.wrapping_add((h & ((spec.max_step - 1) << 2)) + 4);
                    sum & wrap
                }
                PatternKind::Mixed => {
                    if i & 1 == 1 {
                        h & (wrap & !3)
                    } else {
                        i.wrapping_mul(stride) & wrap
                    }
                }
            };
            spec.base + off
        })
        .collect()
}

/// Pattern kernel: the result word holds the wrapping sum of loaded values.
pub fn pattern_image(
    k: &KernelProgram,
    streams: &[(&AccessPatternSpec, &str, &str)],
    len: u64,
) -> Vec<(String, Addr, Vec<Word>)> {
    let mut img = initial_image(k);
    for &(spec, data, result) in streams {
        let words = region(&mut img, data).clone();
        let sum = pattern_addresses(spec, len)
            .into_iter()
            .fold(0u32, |acc, a| acc.wrapping_add(words[((a - spec.base) / 4) as usize]));
        region(&mut img, result)[0] = sum;
    }
    img
}

/// Set-associative LRU cache over `line`-byte lines, allocate on every miss.
#[derive(Debug, Clone)]
pub struct RefLru {
    sets: usize,
    ways: usize,
    line: u32,
    /// Per set: line number to last use.
    state: Vec<HashMap<u32, u64>>,
    clock: u64,
}

impl RefLru {
    pub fn new(sets: usize, ways: usize, line: u32) -> Self {
        Self { sets, ways, line, state: vec![HashMap::new(); sets], clock: 0 }
    }

    /// The plain cache equivalent to an L1 of `sets` physical sets with
    /// virtual lines of `2^m` physical lines.
    pub fn virtual_lines(sets: usize, ways: usize, phys_line: u32, m: u32) -> Self {
        Self::new(sets >> m, ways, phys_line << m)
    }

    pub fn access(&mut self, addr: Addr) -> bool {
        self.clock += 1;
        let n = addr / self.line;
        let set = &mut self.state[n as usize % self.sets];
        let hit = set.contains_key(&n);
        if !hit && set.len() == self.ways {
            let (&old, _) = set.iter().min_by_key(|(_, &t)| t).expect("full set");
            set.remove(&old);
        }
        set.insert(n, self.clock);
        hit
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lru_basics() {
        let mut c = RefLru::new(1, 2, 16);
        assert!(!c.access(0));
        assert!(!c.access(16));
        assert!(c.access(4));
        assert!(!c.access(32));
        assert!(!c.access(16));
        assert!(!c.access(0));
        assert!(c.access(16));
    }

    #[test]
    fn deterministic_patterns() {
        let c = AccessPatternSpec::new(PatternKind::Constant, 0x100, 64);
        assert_eq!(pattern_addresses(&c, 5), vec![0x100; 5]);
        let l = AccessPatternSpec::new(PatternKind::Linear, 0, 1024);
        assert_eq!(pattern_addresses(&l, 4), vec![0, 4, 8, 12]);
    }
}
