//! Runahead execution: episode bookkeeping, the temporary store that
//! swallows runahead writes, and classification of the prefetches it issues.
//!
//! An episode starts right after a normal cycle leaves at least one load
//! miss outstanding. The array state is copied to the shadow, the live copy
//! marks the missing destinations dummy and keeps executing. Loads that hit
//! return real data, loads that miss return a dummy and prefetch their line,
//! and stores only land in the temporary store (and prefetch their line).
//! The episode ends once every load outstanding at entry has been filled.

use std::collections::{HashMap, VecDeque};

use crate::memory::{MemorySystem, PrefetchIssue, RaLoad};
use crate::pe_array::{MemKind, MemoryRequest, MemoryResponse, TaggedWord};
use crate::{Addr, Cycle, Word};

/// Small FIFO-evicting map for runahead stores. Nothing stored here ever
/// reaches the memory system.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TempStore {
    capacity: usize,
    order: VecDeque<Addr>,
    values: HashMap<Addr, Word>,
    evicted: HashMap<Addr, ()>,
    /// Loads that missed a value this episode had stored and then evicted.
    pub lost_reads: u64,
}

impl TempStore {
    pub fn new(bytes: u32) -> Self {
        Self { capacity: (bytes / 4).max(1) as usize, ..Self::default() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn insert(&mut self, addr: Addr, value: Word) {
        if self.values.insert(addr, value).is_none() {
            self.order.push_back(addr);
            if self.order.len() > self.capacity {
                let old = self.order.pop_front().expect("non-empty");
                self.values.remove(&old);
                self.evicted.insert(old, ());
            }
        }
    }

    pub fn get(&mut self, addr: Addr) -> Option<Word> {
        let v = self.values.get(&addr).copied();
        if v.is_none() && self.evicted.contains_key(&addr) {
            self.lost_reads += 1;
        }
        v
    }

    pub fn clear(&mut self) {
        self.order.clear();
        self.values.clear();
        self.evicted.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeRecord {
    pub entry_cycle: Cycle,
    pub exit_cycle: Cycle,
    /// Loads outstanding at entry.
    pub triggers: usize,
    pub prefetches: usize,
    /// Runahead loads that read a temp-store value already evicted.
    pub lost_reads: u64,
}

impl EpisodeRecord {
    pub fn cycles(&self) -> Cycle {
        self.exit_cycle - self.entry_cycle
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunaheadEpisode {
    pub entry_cycle: Cycle,
    /// Request ids of the loads whose fills end the episode.
    pub triggers: Vec<u64>,
    pub temp: TempStore,
    /// Blocks prefetched in this episode, as `(partition, block)`.
    pub prefetches: Vec<(usize, Addr)>,
}

impl RunaheadEpisode {
    pub fn new(entry_cycle: Cycle, triggers: Vec<u64>, temp_bytes: u32) -> Self {
        Self { entry_cycle, triggers, temp: TempStore::new(temp_bytes), prefetches: Vec::new() }
    }

    fn note(&mut self, issue: Option<PrefetchIssue>) {
        if let Some(PrefetchIssue::Issued { partition, block }) = issue {
            self.prefetches.push((partition, block));
        }
    }

    /// Serves one request of the live array during runahead.
    pub fn access(&mut self, mem: &mut MemorySystem, req: &MemoryRequest) -> MemoryResponse {
        let addr = req.address;
        match req.kind {
            MemKind::Load => {
                if addr.dummy {
                    return MemoryResponse::Data(TaggedWord::dummy(0));
                }
                if let Some(v) = self.temp.get(addr.value) {
                    return MemoryResponse::Data(TaggedWord::clean(v));
                }
                match mem.runahead_load(addr.value, req.row) {
                    RaLoad::Data(w) => MemoryResponse::Data(TaggedWord::clean(w)),
                    RaLoad::Missed(issue) => {
                        self.note(Some(issue));
                        MemoryResponse::Data(TaggedWord::dummy(0))
                    }
                    RaLoad::Fault => MemoryResponse::Data(TaggedWord::dummy(0)),
                }
            }
            MemKind::Store => {
                if !addr.dummy && !req.data.dummy {
                    self.temp.insert(addr.value, req.data.value);
                    let issue = mem.runahead_store(addr.value, req.row);
                    self.note(issue);
                }
                MemoryResponse::Accepted
            }
        }
    }

    /// Whether every trigger has been filled, given the loads still
    /// outstanding in the snapshot.
    pub fn may_exit(&self, outstanding: &[u64]) -> bool {
        self.triggers.iter().all(|t| !outstanding.contains(t))
    }

    pub fn finish(mut self, exit_cycle: Cycle) -> EpisodeRecord {
        let lost = self.temp.lost_reads;
        self.temp.clear();
        EpisodeRecord {
            entry_cycle: self.entry_cycle,
            exit_cycle,
            triggers: self.triggers.len(),
            prefetches: self.prefetches.len(),
            lost_reads: lost,
        }
    }
}

/// Final class of a prefetched block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrefetchClass {
    /// Demanded while resident or still in flight.
    Used,
    /// Evicted untouched, then demanded.
    Evicted,
    /// Never demanded.
    Useless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PfState {
    InFlight,
    Resident,
    EvictedUntouched,
    Done(PrefetchClass),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrefetchSummary {
    pub issued: u64,
    pub used: u64,
    pub evicted: u64,
    pub useless: u64,
    /// Demand accesses that hit only because of a prefetch.
    pub avoided: u64,
    /// Demand misses that merged into a prefetch still in flight.
    pub late: u64,
    /// Demand misses, late ones included.
    pub demand_misses: u64,
}

impl PrefetchSummary {
    /// `1 - useless / issued`; 1 when nothing was prefetched.
    pub fn accuracy(&self) -> f64 {
        if self.issued == 0 {
            1.0
        } else {
            1.0 - self.useless as f64 / self.issued as f64
        }
    }

    /// Demand misses covered by a prefetch, timely or late, over the misses
    /// that would have happened without prefetching.
    pub fn coverage(&self) -> f64 {
        let total = self.avoided + self.demand_misses;
        if total == 0 {
            0.0
        } else {
            (self.avoided + self.late) as f64 / total as f64
        }
    }

    pub fn useless_fraction(&self) -> f64 {
        if self.issued == 0 {
            0.0
        } else {
            self.useless as f64 / self.issued as f64
        }
    }
}

/// Follows every prefetched block from issue to its first demand or the end
/// of the run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrefetchTracker {
    records: Vec<PfState>,
    /// Record currently in flight or resident per `(partition, block)`.
    live: HashMap<(usize, Addr), usize>,
    /// Records evicted before any demand.
    evicted: HashMap<(usize, Addr), Vec<usize>>,
    avoided: u64,
    late: u64,
    demand_misses: u64,
}

impl PrefetchTracker {
    pub fn issued(&mut self, partition: usize, block: Addr) {
        self.records.push(PfState::InFlight);
        self.live.insert((partition, block), self.records.len() - 1);
    }

    pub fn filled(&mut self, partition: usize, block: Addr) {
        if let Some(&i) = self.live.get(&(partition, block)) {
            if self.records[i] == PfState::InFlight {
                self.records[i] = PfState::Resident;
            }
        }
    }

    pub fn evicted(&mut self, partition: usize, block: Addr) {
        let key = (partition, block);
        if let Some(i) = self.live.remove(&key) {
            if self.records[i] == PfState::Resident {
                self.records[i] = PfState::EvictedUntouched;
                self.evicted.entry(key).or_default().push(i);
            }
        }
    }

    /// A normal-mode demand access to `block`.
    pub fn demand(&mut self, partition: usize, block: Addr, hit: bool) {
        let key = (partition, block);
        if !hit {
            self.demand_misses += 1;
        }
        if let Some(list) = self.evicted.remove(&key) {
            for i in list {
                self.records[i] = PfState::Done(PrefetchClass::Evicted);
            }
        }
        if let Some(i) = self.live.remove(&key) {
            match (hit, self.records[i]) {
                (true, PfState::Resident) => self.avoided += 1,
                (false, PfState::InFlight) => self.late += 1,
                _ => {}
            }
            self.records[i] = PfState::Done(PrefetchClass::Used);
        }
    }

    /// Forgets residency of a partition's blocks, e.g. after its line size
    /// changed. Outstanding records become evicted-untouched.
    pub fn flush_partition(&mut self, partition: usize) {
        let keys: Vec<_> = self.live.keys().filter(|k| k.0 == partition).copied().collect();
        for k in keys {
            self.evicted(k.0, k.1);
            self.live.remove(&k);
        }
    }

    /// Class of every prefetch so far, open ones counted as useless.
    pub fn classes(&self) -> Vec<PrefetchClass> {
        self.records
            .iter()
            .map(|s| match s {
                PfState::Done(c) => *c,
                _ => PrefetchClass::Useless,
            })
            .collect()
    }

    pub fn summary(&self) -> PrefetchSummary {
        let mut s = PrefetchSummary {
            issued: self.records.len() as u64,
            avoided: self.avoided,
            late: self.late,
            demand_misses: self.demand_misses,
            ..PrefetchSummary::default()
        };
        for c in self.classes() {
            match c {
                PrefetchClass::Used => s.used += 1,
                PrefetchClass::Evicted => s.evicted += 1,
                PrefetchClass::Useless => s.useless += 1,
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn temp_store_fifo() {
        let mut t = TempStore::new(8);
        t.insert(0, 1);
        t.insert(4, 2);
        t.insert(0, 3);
        assert_eq!(t.len(), 2);
        t.insert(8, 4);
        assert_eq!(t.get(0), None);
        assert_eq!(t.lost_reads, 1);
        assert_eq!((t.get(4), t.get(8)), (Some(2), Some(4)));
        t.clear();
        assert!(t.is_empty());
    }

    #[test]
    fn classes() {
        let mut t = PrefetchTracker::default();
        t.issued(0, 0x40);
        t.filled(0, 0x40);
        t.demand(0, 0x40, true);
        t.issued(0, 0x80);
        t.filled(0, 0x80);
        t.evicted(0, 0x80);
        t.demand(0, 0x80, false);
        t.issued(0, 0xC0);
        t.demand(0, 0xC0, false);
        t.issued(1, 0x100);
        let s = t.summary();
        assert_eq!((s.issued, s.used, s.evicted, s.useless), (4, 2, 1, 1));
        assert_eq!((s.avoided, s.late, s.demand_misses), (1, 1, 2));
        assert!((s.coverage() - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.accuracy() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn all_used_is_fully_accurate() {
        let mut t = PrefetchTracker::default();
        for b in 0..10 {
            t.issued(0, b * 64);
            t.filled(0, b * 64);
            t.demand(0, b * 64, true);
        }
        let s = t.summary();
        assert_eq!(s.useless_fraction(), 0.0);
        assert_eq!(s.accuracy(), 1.0);
        assert_eq!(s.coverage(), 1.0);
    }

    #[derive(Debug, Clone)]
    enum Ev {
        Issue(u8),
        Fill(u8),
        Evict(u8),
        Demand(u8, bool),
    }

    fn ev() -> impl Strategy<Value = Ev> {
        prop_oneof![
            (0u8..6).prop_map(Ev::Issue),
            (0u8..6).prop_map(Ev::Fill),
            (0u8..6).prop_map(Ev::Evict),
            (0u8..6, any::<bool>()).prop_map(|(b, h)| Ev::Demand(b, h)),
        ]
    }

    proptest! {
        #[test]
        fn tallies_add_up(events in proptest::collection::vec(ev(), 0..200)) {
            let mut t = PrefetchTracker::default();
            for e in events {
                match e {
                    Ev::Issue(b) => t.issued(0, b as Addr * 64),
                    Ev::Fill(b) => t.filled(0, b as Addr * 64),
                    Ev::Evict(b) => t.evicted(0, b as Addr * 64),
                    Ev::Demand(b, h) => t.demand(0, b as Addr * 64, h),
                }
            }
            let s = t.summary();
            prop_assert_eq!(s.used + s.evicted + s.useless, s.issued);
            prop_assert!(s.avoided + s.late <= s.used);
            prop_assert!((0.0..=1.0).contains(&s.coverage()));
        }
    }
}
