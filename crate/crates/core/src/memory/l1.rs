//! The L1 way pool.
//!
//! All L1 ways of the configuration form one pool of `sets x ways` physical
//! lines. Each way carries a permission register naming the partition that
//! may hit or allocate in it. A partition with virtual line exponent `m`
//! stores a virtual line in the same way of `2^m` consecutive physical sets;
//! the first of those sets is the representative whose LRU stamps decide
//! replacement. Hits are served from the physical line that holds the word.
//!
//! Misses are non-blocking: each partition has its own MSHRs, Load/Store
//! Table and Store Buffer. Lines are allocated when the fill arrives.

use crate::{Addr, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct L1Geometry {
    pub sets: usize,
    pub ways: usize,
    pub phys_line: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct LineMeta {
    valid: bool,
    dirty: bool,
    /// Physical line number (`addr / phys_line`).
    tag: u32,
    stamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MshrEntry {
    pub valid: bool,
    pub block_address: Addr,
    pub issued: bool,
    pub ready_at: u64,
    /// Virtual line contents, captured when the request is issued.
    pub data: Vec<Word>,
    /// Allocated by a runahead prefetch.
    pub by_prefetch: bool,
    /// At least one demand access is waiting on it.
    pub demanded: bool,
    /// Partition has no ways: the line is not installed.
    pub bypass: bool,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpType {
    Lw,
    Sw,
    Prefetch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LstDest {
    Register { request_id: u64 },
    StoreBuffer { slot: usize },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadStoreEntry {
    pub mshr_index: usize,
    pub dest: LstDest,
    pub op_type: OpType,
    /// Byte offset inside the virtual line.
    pub offset: u32,
    pub is_prefetch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreBufferSlot {
    pub address: Addr,
    pub data: Word,
    /// Byte enables, bit `i` for byte `i` of the word.
    pub mask: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Partition {
    m: u32,
    mshr: Vec<MshrEntry>,
    lst: Vec<LoadStoreEntry>,
    sb: Vec<Option<StoreBufferSlot>>,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOutcome {
    /// Load data, or the stored word for a store.
    Hit(Word),
    MissAllocated(usize),
    MissMerged(usize),
    MshrFull,
    StoreBufferFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefetchRequest {
    Issued(usize),
    Present,
    Pending,
    Dropped,
}

/// Base address and words of a dirty line leaving the cache.
pub type DirtyLine = (Addr, Vec<Word>);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FillResult {
    /// `(request_id, word)` for every waiting load.
    pub completions: Vec<(u64, Word)>,
    /// Dirty physical lines pushed out by the allocation.
    pub writebacks: Vec<(Addr, Vec<Word>)>,
    /// Merged line of a bypassing partition that must go to L2.
    pub bypass_write: Option<(Addr, Vec<Word>)>,
    pub block: Addr,
    pub evicted: Option<Addr>,
    pub by_prefetch: bool,
    pub demanded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheUnit {
    geom: L1Geometry,
    meta: Vec<LineMeta>,
    data: Vec<Word>,
    perms: Vec<Option<usize>>,
    parts: Vec<Partition>,
    clock: u64,
    /// Accesses that saw only part of a virtual line present.
    pub partial_observations: u64,
}

impl CacheUnit {
    /// Ways are split evenly between partitions (lower partitions take the
    /// remainder), all starting with virtual line exponent `m`.
    pub fn new(geom: L1Geometry, partitions: usize, m: u32, mshr_entries: usize, sb_slots: usize) -> Self {
        assert!(geom.sets.is_power_of_two() && (1usize << m) <= geom.sets, "bad L1 geometry");
        let mut perms = Vec::with_capacity(geom.ways);
        for p in 0..partitions {
            let share = geom.ways / partitions + usize::from(p < geom.ways % partitions);
            perms.extend(std::iter::repeat_n(Some(p), share));
        }
        let part = Partition {
            m,
            mshr: vec![
                MshrEntry {
                    valid: false,
                    block_address: 0,
                    issued: false,
                    ready_at: 0,
                    data: Vec::new(),
                    by_prefetch: false,
                    demanded: false,
                    bypass: false,
                    seq: 0,
                };
                mshr_entries
            ],
            lst: Vec::new(),
            sb: vec![None; sb_slots],
            seq: 0,
        };
        Self {
            geom,
            meta: vec![LineMeta::default(); geom.sets * geom.ways],
            data: vec![0; geom.sets * geom.ways * (geom.phys_line as usize / 4)],
            perms,
            parts: vec![part; partitions],
            clock: 0,
            partial_observations: 0,
        }
    }

    pub fn geometry(&self) -> L1Geometry {
        self.geom
    }

    pub fn partitions(&self) -> usize {
        self.parts.len()
    }

    pub fn line_exponent(&self, p: usize) -> u32 {
        self.parts[p].m
    }

    pub fn line_bytes(&self, p: usize) -> u32 {
        self.geom.phys_line << self.parts[p].m
    }

    pub fn way_permissions(&self) -> &[Option<usize>] {
        &self.perms
    }

    pub fn ways_of(&self, p: usize) -> usize {
        self.perms.iter().filter(|&&o| o == Some(p)).count()
    }

    pub fn block_of(&self, p: usize, addr: Addr) -> Addr {
        addr & !(self.line_bytes(p) - 1)
    }

    fn slot(&self, set: usize, way: usize) -> usize {
        set * self.geom.ways + way
    }

    fn rep_set(&self, block: Addr) -> usize {
        (block / self.geom.phys_line) as usize % self.geom.sets
    }

    fn permitted(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        self.perms.iter().enumerate().filter(move |(_, o)| **o == Some(p)).map(|(w, _)| w)
    }

    fn word_index(&self, set: usize, way: usize, addr: Addr) -> usize {
        self.slot(set, way) * (self.geom.phys_line as usize / 4) + ((addr % self.geom.phys_line) / 4) as usize
    }

    /// Way holding `addr` for partition `p`, checking that the whole virtual
    /// line is either present or absent.
    pub fn lookup(&mut self, p: usize, addr: Addr) -> Option<usize> {
        let phys = self.geom.phys_line;
        let set = (addr / phys) as usize % self.geom.sets;
        let tag = addr / phys;
        let found = self.permitted(p).find(|&w| {
            let m = self.meta[self.slot(set, w)];
            m.valid && m.tag == tag
        });
        let block = self.block_of(p, addr);
        let rep = self.rep_set(block);
        let span = 1usize << self.parts[p].m;
        let base_tag = block / phys;
        let present = |w: usize| {
            (0..span)
                .filter(|&j| {
                    let m = self.meta[self.slot(rep + j, w)];
                    m.valid && m.tag == base_tag + j as u32
                })
                .count()
        };
        let partial = match found {
            Some(w) => present(w) != span,
            None => self.permitted(p).any(|w| present(w) > 0),
        };
        if partial {
            self.partial_observations += 1;
        }
        found
    }

    fn touch(&mut self, p: usize, addr: Addr, way: usize) {
        self.clock += 1;
        let rep = self.rep_set(self.block_of(p, addr));
        let s = self.slot(rep, way);
        self.meta[s].stamp = self.clock;
    }

    /// Replacement choice for `block`: an invalid permitted way first, else
    /// the least recently used one per the representative set. `None` when
    /// the partition owns no ways.
    pub fn select_victim(&self, p: usize, block: Addr) -> Option<usize> {
        let rep = self.rep_set(block);
        self.permitted(p).min_by_key(|&w| {
            let m = self.meta[self.slot(rep, w)];
            (m.valid, m.stamp)
        })
    }

    /// Installs a virtual line into `way`, returning dirty physical lines
    /// that were displaced and the evicted block, if any.
    fn install(&mut self, p: usize, block: Addr, way: usize, words: &[Word]) -> (Vec<(Addr, Vec<Word>)>, Option<Addr>) {
        let phys = self.geom.phys_line;
        let wpl = phys as usize / 4;
        let rep = self.rep_set(block);
        let span = 1usize << self.parts[p].m;
        let mut writebacks = Vec::new();
        let old = self.meta[self.slot(rep, way)];
        let evicted = old.valid.then_some(old.tag * phys);
        for j in 0..span {
            let s = self.slot(rep + j, way);
            let m = self.meta[s];
            if m.valid && m.dirty {
                writebacks.push((m.tag * phys, self.data[s * wpl..(s + 1) * wpl].to_vec()));
            }
            self.meta[s] = LineMeta { valid: true, dirty: false, tag: block / phys + j as u32, stamp: 0 };
            if !words.is_empty() {
                self.data[s * wpl..(s + 1) * wpl].copy_from_slice(&words[j * wpl..(j + 1) * wpl]);
            }
        }
        self.touch(p, block, way);
        (writebacks, evicted)
    }

    /// Untimed access used by the hit-rate model and the oracle tests:
    /// lookup, and on a miss allocate immediately. Returns whether it hit.
    pub fn functional_access(&mut self, p: usize, addr: Addr, write: bool) -> bool {
        let phys = self.geom.phys_line;
        if let Some(w) = self.lookup(p, addr) {
            self.touch(p, addr, w);
            if write {
                let set = (addr / phys) as usize % self.geom.sets;
                let s = self.slot(set, w);
                self.meta[s].dirty = true;
            }
            return true;
        }
        let block = self.block_of(p, addr);
        if let Some(w) = self.select_victim(p, block) {
            let words = vec![0; self.line_bytes(p) as usize / 4];
            self.install(p, block, w, &words);
            if write {
                let set = (addr / phys) as usize % self.geom.sets;
                let s = self.slot(set, w);
                self.meta[s].dirty = true;
            }
        }
        false
    }

    fn free_sb(&self, p: usize) -> Option<usize> {
        self.parts[p].sb.iter().position(Option::is_none)
    }

    fn pending_mshr(&self, p: usize, block: Addr) -> Option<usize> {
        self.parts[p].mshr.iter().position(|e| e.valid && e.block_address == block)
    }

    /// Timed demand access from partition `p`.
    pub fn access(&mut self, p: usize, op: OpType, addr: Addr, data: Word, request_id: u64) -> AccessOutcome {
        debug_assert!(op != OpType::Prefetch);
        let phys = self.geom.phys_line;
        if let Some(w) = self.lookup(p, addr) {
            self.touch(p, addr, w);
            let set = (addr / phys) as usize % self.geom.sets;
            let i = self.word_index(set, w, addr);
            return match op {
                OpType::Sw => {
                    self.data[i] = data;
                    let s = self.slot(set, w);
                    self.meta[s].dirty = true;
                    AccessOutcome::Hit(data)
                }
                _ => AccessOutcome::Hit(self.data[i]),
            };
        }
        let block = self.block_of(p, addr);
        let offset = addr - block;
        let sb_slot = if op == OpType::Sw {
            match self.free_sb(p) {
                Some(s) => Some(s),
                None => return AccessOutcome::StoreBufferFull,
            }
        } else {
            None
        };
        let (mi, merged) = match self.pending_mshr(p, block) {
            Some(mi) => (mi, true),
            None => {
                let Some(mi) = self.parts[p].mshr.iter().position(|e| !e.valid) else {
                    return AccessOutcome::MshrFull;
                };
                let bypass = self.ways_of(p) == 0;
                let part = &mut self.parts[p];
                part.seq += 1;
                part.mshr[mi] = MshrEntry {
                    valid: true,
                    block_address: block,
                    issued: false,
                    ready_at: 0,
                    data: Vec::new(),
                    by_prefetch: false,
                    demanded: true,
                    bypass,
                    seq: part.seq,
                };
                (mi, false)
            }
        };
        let part = &mut self.parts[p];
        part.mshr[mi].demanded = true;
        let dest = match sb_slot {
            Some(slot) => {
                part.sb[slot] = Some(StoreBufferSlot { address: addr, data, mask: 0xF });
                LstDest::StoreBuffer { slot }
            }
            None => LstDest::Register { request_id },
        };
        part.lst.push(LoadStoreEntry { mshr_index: mi, dest, op_type: op, offset, is_prefetch: false });
        if merged {
            AccessOutcome::MissMerged(mi)
        } else {
            AccessOutcome::MissAllocated(mi)
        }
    }

    /// Load that only succeeds on a hit; misses leave no trace.
    pub fn probe(&mut self, p: usize, addr: Addr) -> Option<Word> {
        let w = self.lookup(p, addr)?;
        self.touch(p, addr, w);
        let set = (addr / self.geom.phys_line) as usize % self.geom.sets;
        Some(self.data[self.word_index(set, w, addr)])
    }

    /// Runahead prefetch of the block holding `addr`. Never waits.
    pub fn prefetch(&mut self, p: usize, addr: Addr) -> PrefetchRequest {
        if self.lookup(p, addr).is_some() {
            return PrefetchRequest::Present;
        }
        let block = self.block_of(p, addr);
        if self.pending_mshr(p, block).is_some() {
            return PrefetchRequest::Pending;
        }
        if self.ways_of(p) == 0 {
            return PrefetchRequest::Dropped;
        }
        let Some(mi) = self.parts[p].mshr.iter().position(|e| !e.valid) else {
            return PrefetchRequest::Dropped;
        };
        let part = &mut self.parts[p];
        part.seq += 1;
        part.mshr[mi] = MshrEntry {
            valid: true,
            block_address: block,
            issued: false,
            ready_at: 0,
            data: Vec::new(),
            by_prefetch: true,
            demanded: false,
            bypass: false,
            seq: part.seq,
        };
        part.lst.push(LoadStoreEntry {
            mshr_index: mi,
            dest: LstDest::None,
            op_type: OpType::Prefetch,
            offset: addr - block,
            is_prefetch: true,
        });
        PrefetchRequest::Issued(mi)
    }

    pub fn mshr(&self, p: usize) -> &[MshrEntry] {
        &self.parts[p].mshr
    }

    pub fn lst(&self, p: usize) -> &[LoadStoreEntry] {
        &self.parts[p].lst
    }

    pub fn store_buffer(&self, p: usize) -> &[Option<StoreBufferSlot>] {
        &self.parts[p].sb
    }

    pub fn outstanding(&self, p: usize) -> usize {
        self.parts[p].mshr.iter().filter(|e| e.valid).count()
    }

    pub fn idle(&self) -> bool {
        (0..self.parts.len()).all(|p| self.outstanding(p) == 0)
    }

    /// Valid but not yet issued MSHRs, oldest first.
    pub fn unissued(&self, p: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.parts[p].mshr.len())
            .filter(|&i| self.parts[p].mshr[i].valid && !self.parts[p].mshr[i].issued)
            .collect();
        v.sort_by_key(|&i| self.parts[p].mshr[i].seq);
        v
    }

    pub fn mark_issued(&mut self, p: usize, mi: usize, ready_at: u64, data: Vec<Word>) {
        let e = &mut self.parts[p].mshr[mi];
        debug_assert!(e.valid && !e.issued);
        e.issued = true;
        e.ready_at = ready_at;
        e.data = data;
    }

    /// Issued MSHRs whose data has arrived by `cycle`, in arrival order.
    pub fn ready(&self, p: usize, cycle: u64) -> Vec<usize> {
        let mshr = &self.parts[p].mshr;
        let mut v: Vec<usize> =
            (0..mshr.len()).filter(|&i| mshr[i].valid && mshr[i].issued && mshr[i].ready_at <= cycle).collect();
        v.sort_by_key(|&i| (mshr[i].ready_at, mshr[i].seq));
        v
    }

    /// Completes MSHR `mi`: merges store-buffer data, extracts load words in
    /// table order, installs the line and frees the entry.
    pub fn fill(&mut self, p: usize, mi: usize) -> FillResult {
        let phys = self.geom.phys_line;
        let entry = std::mem::replace(
            &mut self.parts[p].mshr[mi],
            MshrEntry {
                valid: false,
                block_address: 0,
                issued: false,
                ready_at: 0,
                data: Vec::new(),
                by_prefetch: false,
                demanded: false,
                bypass: false,
                seq: 0,
            },
        );
        assert!(entry.valid && entry.issued, "fill of an idle MSHR");
        let block = entry.block_address;
        let mut data = entry.data;
        let span = 1usize << self.parts[p].m;
        let mut dirty = vec![false; span];
        let mut result =
            FillResult { block, by_prefetch: entry.by_prefetch, demanded: entry.demanded, ..FillResult::default() };
        let part = &mut self.parts[p];
        let (mine, rest): (Vec<_>, Vec<_>) = part.lst.drain(..).partition(|e| e.mshr_index == mi);
        part.lst = rest;
        for e in mine {
            let w = (e.offset / 4) as usize;
            match e.dest {
                LstDest::StoreBuffer { slot } => {
                    let s = part.sb[slot].take().expect("store buffer slot in use");
                    let mut bytes = data[w].to_le_bytes();
                    let new = s.data.to_le_bytes();
                    for b in 0..4 {
                        if s.mask & (1 << b) != 0 {
                            bytes[b] = new[b];
                        }
                    }
                    data[w] = u32::from_le_bytes(bytes);
                    dirty[(e.offset / phys) as usize] = true;
                }
                LstDest::Register { request_id } => result.completions.push((request_id, data[w])),
                LstDest::None => {}
            }
        }
        if entry.bypass {
            if dirty.iter().any(|&d| d) {
                result.bypass_write = Some((block, data));
            }
            return result;
        }
        let way = self.select_victim(p, block).expect("partition owns ways");
        let (writebacks, evicted) = self.install(p, block, way, &data);
        result.writebacks = writebacks;
        result.evicted = evicted;
        let rep = self.rep_set(block);
        for (j, d) in dirty.into_iter().enumerate() {
            if d {
                let s = self.slot(rep + j, way);
                self.meta[s].dirty = true;
            }
        }
        result
    }

    /// Coherent view of a word, if some way holds it.
    pub fn peek(&self, addr: Addr) -> Option<Word> {
        let phys = self.geom.phys_line;
        let set = (addr / phys) as usize % self.geom.sets;
        (0..self.geom.ways).find_map(|w| {
            let m = self.meta[self.slot(set, w)];
            (m.valid && m.tag == addr / phys).then(|| self.data[self.word_index(set, w, addr)])
        })
    }

    fn flush_way(&mut self, way: usize) -> Vec<DirtyLine> {
        let phys = self.geom.phys_line;
        let wpl = phys as usize / 4;
        let mut out = Vec::new();
        for set in 0..self.geom.sets {
            let s = self.slot(set, way);
            let m = self.meta[s];
            if m.valid && m.dirty {
                out.push((m.tag * phys, self.data[s * wpl..(s + 1) * wpl].to_vec()));
            }
            self.meta[s] = LineMeta::default();
        }
        out
    }

    /// Reassigns ways and line sizes. Losing partitions give up their
    /// highest-index ways, gaining partitions take the lowest free ones, and a
    /// partition whose line size changes is flushed. Returns the dirty lines
    /// to write back and the number of ways whose contents were dropped.
    pub fn apply_permissions(&mut self, ways: &[usize], exponents: &[u32]) -> Result<(Vec<DirtyLine>, usize), String> {
        let n = self.parts.len();
        if ways.len() != n || exponents.len() != n {
            return Err(format!("plan covers {} partitions, cache has {n}", ways.len()));
        }
        let total: usize = ways.iter().sum();
        if total > self.geom.ways {
            return Err(format!("plan uses {total} ways, only {} exist", self.geom.ways));
        }
        if let Some(&m) = exponents.iter().find(|&&m| (1usize << m) > self.geom.sets) {
            return Err(format!("line exponent {m} spans more than {} sets", self.geom.sets));
        }
        let mut writebacks = Vec::new();
        let mut dropped = 0;
        for (p, &m) in exponents.iter().enumerate() {
            if m != self.parts[p].m {
                let owned: Vec<usize> = self.permitted(p).collect();
                for w in owned {
                    writebacks.extend(self.flush_way(w));
                    dropped += 1;
                }
                self.parts[p].m = m;
            }
        }
        for (p, &target) in ways.iter().enumerate() {
            let owned: Vec<usize> = self.permitted(p).collect();
            if owned.len() > target {
                for &w in owned.iter().rev().take(owned.len() - target) {
                    if self.meta[w..].iter().step_by(self.geom.ways).any(|m| m.valid) {
                        dropped += 1;
                    }
                    writebacks.extend(self.flush_way(w));
                    self.perms[w] = None;
                }
            }
        }
        for (p, &target) in ways.iter().enumerate() {
            let have = self.ways_of(p);
            for _ in have..target {
                let w = self.perms.iter().position(Option::is_none).expect("budget checked");
                self.perms[w] = Some(p);
            }
        }
        Ok((writebacks, dropped))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(sets: usize, ways: usize, m: u32, mshr: usize) -> CacheUnit {
        CacheUnit::new(L1Geometry { sets, ways, phys_line: 16 }, 1, m, mshr, 4)
    }

    fn issue_all(c: &mut CacheUnit, p: usize, fill_word: Word) {
        for mi in c.unissued(p) {
            let words = c.line_bytes(p) as usize / 4;
            c.mark_issued(p, mi, 0, vec![fill_word; words]);
        }
    }

    #[test]
    fn miss_then_merge() {
        let mut c = unit(4, 2, 0, 4);
        assert_eq!(c.access(0, OpType::Lw, 0x40, 0, 1), AccessOutcome::MissAllocated(0));
        assert_eq!(c.access(0, OpType::Lw, 0x44, 0, 2), AccessOutcome::MissMerged(0));
        assert_eq!(c.lst(0).len(), 2);
    }

    #[test]
    fn mshr_exhaustion() {
        let mut c = unit(16, 2, 0, 4);
        for i in 0..4 {
            assert_eq!(c.access(0, OpType::Lw, i * 0x100, 0, i as u64), AccessOutcome::MissAllocated(i as usize));
        }
        assert_eq!(c.access(0, OpType::Lw, 0x1000, 0, 9), AccessOutcome::MshrFull);
    }

    #[test]
    fn fill_extracts_and_installs() {
        let mut c = unit(4, 2, 0, 4);
        c.access(0, OpType::Lw, 0x48, 0, 7);
        let mi = c.unissued(0)[0];
        c.mark_issued(0, mi, 5, vec![10, 11, 12, 13]);
        assert!(c.ready(0, 4).is_empty());
        let r = c.fill(0, c.ready(0, 5)[0]);
        assert_eq!(r.completions, vec![(7, 12)]);
        assert_eq!(c.access(0, OpType::Lw, 0x4C, 0, 8), AccessOutcome::Hit(13));
        assert!(c.idle());
    }

    #[test]
    fn store_merges_before_later_read() {
        let mut c = unit(4, 2, 0, 4);
        assert_eq!(c.access(0, OpType::Sw, 0x44, 99, 0), AccessOutcome::MissAllocated(0));
        assert_eq!(c.access(0, OpType::Lw, 0x44, 0, 3), AccessOutcome::MissMerged(0));
        issue_all(&mut c, 0, 1);
        let r = c.fill(0, 0);
        assert_eq!(r.completions, vec![(3, 99)]);
        assert!(c.store_buffer(0).iter().all(Option::is_none));
        assert_eq!(c.peek(0x44), Some(99));
        assert_eq!(c.peek(0x40), Some(1));
    }

    #[test]
    fn store_buffer_backpressure() {
        let mut c = CacheUnit::new(L1Geometry { sets: 4, ways: 2, phys_line: 16 }, 1, 0, 8, 2);
        assert!(matches!(c.access(0, OpType::Sw, 0x0, 1, 0), AccessOutcome::MissAllocated(_)));
        assert!(matches!(c.access(0, OpType::Sw, 0x4, 1, 0), AccessOutcome::MissMerged(_)));
        assert_eq!(c.access(0, OpType::Sw, 0x8, 1, 0), AccessOutcome::StoreBufferFull);
    }

    #[test]
    fn prefetch_entries_complete_silently() {
        let mut c = unit(4, 2, 0, 1);
        assert_eq!(c.prefetch(0, 0x80), PrefetchRequest::Issued(0));
        assert_eq!(c.prefetch(0, 0x84), PrefetchRequest::Pending);
        assert_eq!(c.prefetch(0, 0x200), PrefetchRequest::Dropped);
        issue_all(&mut c, 0, 4);
        let r = c.fill(0, 0);
        assert!(r.completions.is_empty());
        assert!(r.by_prefetch && !r.demanded);
        assert_eq!(c.prefetch(0, 0x8C), PrefetchRequest::Present);
    }

    #[test]
    fn lru_victim_and_invalid_first() {
        let mut c = unit(1, 2, 0, 4);
        assert!(!c.functional_access(0, 0x00, false));
        assert!(!c.functional_access(0, 0x10, false));
        assert!(c.functional_access(0, 0x00, false));
        // 0x10 is now least recent.
        assert_eq!(c.select_victim(0, 0x20), Some(1));
        assert!(!c.functional_access(0, 0x20, false));
        assert!(c.functional_access(0, 0x00, false));
        assert!(!c.functional_access(0, 0x10, false));
    }

    #[test]
    fn virtual_line_touch_goes_to_representative() {
        // m = 1: a 32-byte virtual line spans sets 2k and 2k+1.
        let mut c = unit(2, 2, 1, 4);
        c.functional_access(0, 0x00, false);
        c.functional_access(0, 0x20, false);
        // Hit in the second physical set of the first line refreshes it.
        assert!(c.functional_access(0, 0x10, false));
        assert!(!c.functional_access(0, 0x40, false));
        assert!(c.functional_access(0, 0x18, false));
        assert!(!c.functional_access(0, 0x20, false));
        assert_eq!(c.partial_observations, 0);
    }

    #[test]
    fn foreign_ways_never_used() {
        let mut c = CacheUnit::new(L1Geometry { sets: 1, ways: 4, phys_line: 16 }, 2, 0, 4, 4);
        assert_eq!(c.way_permissions(), &[Some(0), Some(0), Some(1), Some(1)]);
        for i in 0..8 {
            c.functional_access(0, i * 16, false);
            let v = c.select_victim(0, 0x1000).unwrap();
            assert!(v < 2);
        }
        assert!(!c.functional_access(1, 0x00, false));
    }

    #[test]
    fn bypass_when_no_ways() {
        let mut c = CacheUnit::new(L1Geometry { sets: 1, ways: 2, phys_line: 16 }, 2, 0, 4, 4);
        c.apply_permissions(&[2, 0], &[0, 0]).unwrap();
        assert!(matches!(c.access(1, OpType::Sw, 0x100, 5, 0), AccessOutcome::MissAllocated(_)));
        issue_all(&mut c, 1, 0);
        let r = c.fill(1, 0);
        assert_eq!(r.bypass_write, Some((0x100, vec![5, 0, 0, 0])));
        assert_eq!(c.peek(0x100), None);
    }

    #[test]
    fn apply_permissions_scope() {
        let mut c = CacheUnit::new(L1Geometry { sets: 2, ways: 4, phys_line: 16 }, 2, 0, 4, 4);
        for a in [0x00, 0x10, 0x20, 0x30] {
            c.functional_access(0, a, true);
            c.functional_access(1, a + 0x1000, false);
        }
        let before = c.clone();
        let (wb, dropped) = c.apply_permissions(&[2, 2], &[0, 0]).unwrap();
        assert!(wb.is_empty() && dropped == 0);
        assert_eq!(c, before);
        let (wb, dropped) = c.apply_permissions(&[1, 3], &[0, 0]).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(wb.len(), 2);
        assert_eq!(c.way_permissions(), &[Some(0), Some(1), Some(1), Some(1)]);
        assert_eq!(c.peek(0x1000), Some(0));
        assert!(c.apply_permissions(&[3, 3], &[0, 0]).is_err());
    }
}
