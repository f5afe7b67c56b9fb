//! Shared L2: set-associative, LRU, write-back with write-allocate. It is
//! non-inclusive, so L1 evictions never look at it and it never back-invalidates.

use super::Backing;
use crate::{Addr, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct L2Stats {
    pub reads: u64,
    pub read_misses: u64,
    pub writes: u64,
    pub write_misses: u64,
    pub backing_reads: u64,
    pub backing_writes: u64,
}

#[derive(Debug, Clone)]
struct Way {
    valid: bool,
    dirty: bool,
    line: u32,
    stamp: u64,
}

#[derive(Debug, Clone)]
pub struct L2Cache {
    sets: usize,
    ways: usize,
    line_bytes: u32,
    meta: Vec<Way>,
    data: Vec<Word>,
    clock: u64,
    pub backing: Backing,
    pub stats: L2Stats,
}

impl L2Cache {
    pub fn new(size: u32, line_bytes: u32, ways: usize, backing: Backing) -> Self {
        let sets = size as usize / (line_bytes as usize * ways);
        Self {
            sets,
            ways,
            line_bytes,
            meta: vec![Way { valid: false, dirty: false, line: 0, stamp: 0 }; sets * ways],
            data: vec![0; sets * ways * (line_bytes as usize / 4)],
            clock: 0,
            backing,
            stats: L2Stats::default(),
        }
    }

    pub fn line_bytes(&self) -> u32 {
        self.line_bytes
    }

    fn words_per_line(&self) -> usize {
        self.line_bytes as usize / 4
    }

    fn find(&self, line: u32) -> Option<usize> {
        let set = line as usize % self.sets;
        (0..self.ways).map(|w| set * self.ways + w).find(|&i| self.meta[i].valid && self.meta[i].line == line)
    }

    /// Brings `line` in, evicting the LRU way. Returns the slot.
    fn allocate(&mut self, line: u32) -> usize {
        let set = line as usize % self.sets;
        let slot = (0..self.ways)
            .map(|w| set * self.ways + w)
            .min_by_key(|&i| (self.meta[i].valid, self.meta[i].stamp))
            .expect("at least one way");
        let wpl = self.words_per_line();
        if self.meta[slot].valid && self.meta[slot].dirty {
            let victim = self.meta[slot].line * self.line_bytes;
            let words = self.data[slot * wpl..(slot + 1) * wpl].to_vec();
            self.backing.write_block(victim, &words);
            self.stats.backing_writes += 1;
        }
        let fresh = self.backing.read_block(line * self.line_bytes, wpl);
        self.stats.backing_reads += 1;
        self.data[slot * wpl..(slot + 1) * wpl].copy_from_slice(&fresh);
        self.meta[slot] = Way { valid: true, dirty: false, line, stamp: 0 };
        slot
    }

    fn touch(&mut self, slot: usize) {
        self.clock += 1;
        self.meta[slot].stamp = self.clock;
    }

    /// Reads `n` words at `addr`, which must not cross an L2 line.
    /// Returns the words and whether the access hit.
    pub fn read(&mut self, addr: Addr, n: usize) -> (Vec<Word>, bool) {
        let line = addr / self.line_bytes;
        debug_assert_eq!((addr + 4 * n as u32 - 1) / self.line_bytes, line);
        self.stats.reads += 1;
        let (slot, hit) = match self.find(line) {
            Some(s) => (s, true),
            None => {
                self.stats.read_misses += 1;
                (self.allocate(line), false)
            }
        };
        self.touch(slot);
        let start = slot * self.words_per_line() + ((addr % self.line_bytes) / 4) as usize;
        (self.data[start..start + n].to_vec(), hit)
    }

    /// Writes words at `addr` (within one line), allocating on a miss.
    pub fn write(&mut self, addr: Addr, words: &[Word]) -> bool {
        let line = addr / self.line_bytes;
        debug_assert_eq!((addr + 4 * words.len() as u32 - 1) / self.line_bytes, line);
        self.stats.writes += 1;
        let (slot, hit) = match self.find(line) {
            Some(s) => (s, true),
            None => {
                self.stats.write_misses += 1;
                (self.allocate(line), false)
            }
        };
        self.touch(slot);
        let start = slot * self.words_per_line() + ((addr % self.line_bytes) / 4) as usize;
        self.data[start..start + words.len()].copy_from_slice(words);
        self.meta[slot].dirty = true;
        hit
    }

    /// Current value of a word, without touching any state.
    pub fn peek(&self, addr: Addr) -> Word {
        let line = addr / self.line_bytes;
        match self.find(line) {
            Some(slot) => self.data[slot * self.words_per_line() + ((addr % self.line_bytes) / 4) as usize],
            None => self.backing.read(addr),
        }
    }
}
