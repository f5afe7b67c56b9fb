//! The memory system as seen by the array: routing, SPM, the L1 pool, L2,
//! miss issue and fill delivery.

use thiserror::Error;

use super::{
    crossbar_of_row, AccessOutcome, AddressMap, Backing, CacheUnit, HierarchyConfig, L2Cache, OpType, PrefetchRequest,
    Route,
};
use crate::kernel::KernelProgram;
use crate::pe_array::{MemKind, MemoryRequest, MemoryResponse, TaggedWord};
use crate::reconfig::{SampleWindow, SampledAccess};
use crate::runahead::PrefetchTracker;
use crate::{Addr, Cycle, Word};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemFault {
    #[error("address {0:#x} is outside every region")]
    Unmapped(Addr),
    #[error("crossbar {crossbar} accessed {addr:#x}, which belongs to crossbar {owner}")]
    Foreign { addr: Addr, owner: usize, crossbar: usize },
    #[error("unaligned access at {0:#x}")]
    Unaligned(Addr),
}

/// Which level answered a demand access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessPath {
    Spm,
    L1Hit {
        partition: usize,
    },
    L1Miss {
        partition: usize,
    },
    /// Refused for lack of an MSHR or store-buffer slot.
    L1Busy {
        partition: usize,
    },
    Dram,
}

/// Result of a prefetch attempt made during runahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefetchIssue {
    Issued {
        partition: usize,
        block: Addr,
    },
    AlreadyPresent,
    AlreadyPending,
    Dropped,
    /// SPM-resident address; nothing to fetch.
    NotCacheable,
}

/// Result of a runahead load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaLoad {
    Data(Word),
    Missed(PrefetchIssue),
    Fault,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartitionStats {
    /// Accepted demand accesses.
    pub accesses: u64,
    pub hits: u64,
    /// Demand misses, merged ones included.
    pub demand_misses: u64,
    /// MSHRs allocated by demand misses.
    pub demand_allocations: u64,
    /// MSHRs allocated by runahead prefetches.
    pub prefetch_allocations: u64,
    /// L2 reads issued for this partition's misses.
    pub l2_reads: u64,
    /// Demand accesses refused because the MSHRs were full.
    pub mshr_full: u64,
    pub store_buffer_full: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemStats {
    pub spm_accesses: u64,
    pub partitions: Vec<PartitionStats>,
    /// Accesses made by the DRAM-only port.
    pub dram_port_reads: u64,
    pub dram_port_writes: u64,
    /// L2 writes caused by L1 evictions, bypass fills and reconfiguration.
    pub l2_writebacks: u64,
    pub runahead_loads: u64,
    pub runahead_stores: u64,
}

impl MemStats {
    pub fn l1_accesses(&self) -> u64 {
        self.partitions.iter().map(|p| p.accesses).sum()
    }

    pub fn demand_misses(&self) -> u64 {
        self.partitions.iter().map(|p| p.demand_misses).sum()
    }

    /// Line requests sent from L1 to L2.
    pub fn l1_misses(&self) -> u64 {
        self.partitions.iter().map(|p| p.demand_allocations + p.prefetch_allocations).sum()
    }
}

#[derive(Debug, Clone)]
struct DramPort {
    busy_until: Cycle,
    pending: Option<(u64, Cycle, Word)>,
}

#[derive(Debug, Clone)]
pub struct MemorySystem {
    pub cfg: HierarchyConfig,
    pub map: AddressMap,
    spm: Backing,
    pub l1: CacheUnit,
    pub l2: L2Cache,
    /// Every non-SPM access goes straight to memory through one blocking port.
    dram: Option<DramPort>,
    next_id: u64,
    pub stats: MemStats,
    pub tracker: PrefetchTracker,
    /// Demand accesses are recorded here while sampling is active.
    pub sample: Option<SampleWindow>,
    in_runahead: bool,
}

impl MemorySystem {
    /// Builds the hierarchy and loads the kernel's data image. With
    /// `dram_only`, caches are bypassed entirely.
    pub fn new(k: &KernelProgram, cfg: &HierarchyConfig, dram_only: bool) -> Self {
        let map = AddressMap::new(k, cfg);
        let mut spm = Backing::new();
        let mut backing = Backing::new();
        for r in &k.regions {
            if r.spm {
                spm.write_block(r.base, &r.words);
            } else {
                backing.write_block(r.base, &r.words);
            }
        }
        let partitions = map.partitions();
        let l1 = CacheUnit::new(
            cfg.l1_geometry(),
            partitions,
            cfg.line_exponent(cfg.l1_line),
            cfg.mshr_entries,
            cfg.store_buffer_slots,
        );
        let l2 = L2Cache::new(cfg.l2_size, cfg.l2_line, cfg.l2_ways, backing);
        Self {
            cfg: cfg.clone(),
            map,
            spm,
            l1,
            l2,
            dram: dram_only.then_some(DramPort { busy_until: 0, pending: None }),
            next_id: 0,
            stats: MemStats { partitions: vec![PartitionStats::default(); partitions], ..MemStats::default() },
            tracker: PrefetchTracker::default(),
            sample: None,
            in_runahead: false,
        }
    }

    pub fn set_runahead(&mut self, on: bool) {
        self.in_runahead = on;
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    /// Normal-mode access from an edge PE.
    pub fn demand(&mut self, req: &MemoryRequest, cycle: Cycle) -> Result<(MemoryResponse, AccessPath), MemFault> {
        assert!(!self.in_runahead, "architectural access during runahead");
        debug_assert!(!req.address.dummy && !req.data.dummy, "dummy value in normal mode");
        let addr = req.address.value;
        if !addr.is_multiple_of(4) {
            return Err(MemFault::Unaligned(addr));
        }
        let crossbar = crossbar_of_row(req.row);
        let partition = match self.map.route(addr, crossbar)? {
            Route::Spm { .. } => {
                self.stats.spm_accesses += 1;
                let resp = match req.kind {
                    MemKind::Load => MemoryResponse::Data(TaggedWord::clean(self.spm.read(addr))),
                    MemKind::Store => {
                        self.spm.write(addr, req.data.value);
                        MemoryResponse::Accepted
                    }
                };
                return Ok((resp, AccessPath::Spm));
            }
            Route::Cache { partition } => partition,
        };
        if let Some(port) = self.dram.as_mut() {
            if port.busy_until > cycle || port.pending.is_some() {
                return Ok((MemoryResponse::Retry, AccessPath::Dram));
            }
            port.busy_until = cycle + self.cfg.l2_miss_latency;
            let resp = match req.kind {
                MemKind::Load => {
                    self.stats.dram_port_reads += 1;
                    self.next_id += 1;
                    let id = self.next_id;
                    let port = self.dram.as_mut().expect("dram port");
                    port.pending = Some((id, port.busy_until, self.l2.backing.read(addr)));
                    MemoryResponse::Pending(id)
                }
                MemKind::Store => {
                    self.stats.dram_port_writes += 1;
                    self.l2.backing.write(addr, req.data.value);
                    MemoryResponse::Accepted
                }
            };
            return Ok((resp, AccessPath::Dram));
        }

        let op = match req.kind {
            MemKind::Load => OpType::Lw,
            MemKind::Store => OpType::Sw,
        };
        let id = self.next_id + 1;
        let outcome = self.l1.access(partition, op, addr, req.data.value, id);
        let block = self.l1.block_of(partition, addr);
        let st = &mut self.stats.partitions[partition];
        let (resp, path) = match outcome {
            AccessOutcome::Hit(w) => {
                st.accesses += 1;
                st.hits += 1;
                self.tracker.demand(partition, block, true);
                let resp = match req.kind {
                    MemKind::Load => MemoryResponse::Data(TaggedWord::clean(w)),
                    MemKind::Store => MemoryResponse::Accepted,
                };
                (resp, AccessPath::L1Hit { partition })
            }
            AccessOutcome::MissAllocated(_) | AccessOutcome::MissMerged(_) => {
                st.accesses += 1;
                st.demand_misses += 1;
                if matches!(outcome, AccessOutcome::MissAllocated(_)) {
                    st.demand_allocations += 1;
                }
                self.tracker.demand(partition, block, false);
                let resp = match req.kind {
                    MemKind::Load => MemoryResponse::Pending(self.fresh_id()),
                    MemKind::Store => MemoryResponse::Accepted,
                };
                (resp, AccessPath::L1Miss { partition })
            }
            AccessOutcome::MshrFull => {
                st.mshr_full += 1;
                return Ok((MemoryResponse::Retry, AccessPath::L1Busy { partition }));
            }
            AccessOutcome::StoreBufferFull => {
                st.store_buffer_full += 1;
                return Ok((MemoryResponse::Retry, AccessPath::L1Busy { partition }));
            }
        };
        if let Some(s) = self.sample.as_mut() {
            s.record(partition, SampledAccess { cycle, addr, write: req.kind == MemKind::Store });
        }
        Ok((resp, path))
    }

    fn cache_route(&self, addr: Addr, row: usize) -> Result<Route, MemFault> {
        if !addr.is_multiple_of(4) {
            return Err(MemFault::Unaligned(addr));
        }
        self.map.route(addr, crossbar_of_row(row))
    }

    /// Runahead load with a valid address: served on an SPM or L1 hit,
    /// otherwise turned into a prefetch.
    pub fn runahead_load(&mut self, addr: Addr, row: usize) -> RaLoad {
        self.stats.runahead_loads += 1;
        match self.cache_route(addr, row) {
            Err(_) => RaLoad::Fault,
            Ok(Route::Spm { .. }) => {
                self.stats.spm_accesses += 1;
                RaLoad::Data(self.spm.read(addr))
            }
            Ok(Route::Cache { partition }) => match self.l1.probe(partition, addr) {
                Some(w) => RaLoad::Data(w),
                None => RaLoad::Missed(self.issue_prefetch(partition, addr)),
            },
        }
    }

    /// Runahead store with valid address and data: prefetch the line.
    pub fn runahead_store(&mut self, addr: Addr, row: usize) -> Option<PrefetchIssue> {
        self.stats.runahead_stores += 1;
        match self.cache_route(addr, row) {
            Err(_) => None,
            Ok(Route::Spm { .. }) => Some(PrefetchIssue::NotCacheable),
            Ok(Route::Cache { partition }) => Some(self.issue_prefetch(partition, addr)),
        }
    }

    fn issue_prefetch(&mut self, partition: usize, addr: Addr) -> PrefetchIssue {
        match self.l1.prefetch(partition, addr) {
            PrefetchRequest::Issued(_) => {
                let block = self.l1.block_of(partition, addr);
                self.stats.partitions[partition].prefetch_allocations += 1;
                self.tracker.issued(partition, block);
                PrefetchIssue::Issued { partition, block }
            }
            PrefetchRequest::Present => PrefetchIssue::AlreadyPresent,
            PrefetchRequest::Pending => PrefetchIssue::AlreadyPending,
            PrefetchRequest::Dropped => PrefetchIssue::Dropped,
        }
    }

    /// Sends every newly allocated miss to L2. The L2 is read at issue; the
    /// line arrives after the hit or miss latency.
    pub fn issue(&mut self, cycle: Cycle) {
        for p in 0..self.l1.partitions() {
            for mi in self.l1.unissued(p) {
                let block = self.l1.mshr(p)[mi].block_address;
                let words = self.l1.line_bytes(p) as usize / 4;
                let (data, hit) = self.l2.read(block, words);
                let latency = if hit { self.cfg.l2_hit_latency } else { self.cfg.l2_miss_latency };
                self.stats.partitions[p].l2_reads += 1;
                self.l1.mark_issued(p, mi, cycle + latency, data);
            }
        }
    }

    fn write_back(&mut self, lines: Vec<(Addr, Vec<Word>)>) {
        for (addr, words) in lines {
            self.l2.write(addr, &words);
            self.stats.l2_writebacks += 1;
        }
    }

    /// Completes every miss whose data has arrived. Returns the load
    /// completions `(request_id, word)` in a fixed order.
    pub fn tick_fills(&mut self, cycle: Cycle) -> Vec<(u64, Word)> {
        let mut done = Vec::new();
        if let Some(port) = self.dram.as_mut() {
            if let Some((id, ready, w)) = port.pending {
                if ready <= cycle {
                    port.pending = None;
                    done.push((id, w));
                }
            }
        }
        for p in 0..self.l1.partitions() {
            for mi in self.l1.ready(p, cycle) {
                let r = self.l1.fill(p, mi);
                if let Some(ev) = r.evicted {
                    self.tracker.evicted(p, ev);
                }
                if r.by_prefetch {
                    self.tracker.filled(p, r.block);
                }
                self.write_back(r.writebacks);
                if let Some(line) = r.bypass_write {
                    self.write_back(vec![line]);
                }
                done.extend(r.completions);
            }
        }
        done
    }

    /// No miss in flight anywhere.
    pub fn idle(&self) -> bool {
        self.l1.idle() && self.dram.as_ref().is_none_or(|d| d.pending.is_none())
    }

    /// Applies a way and line-size assignment. Returns the number of dirty
    /// lines written back.
    pub fn reconfigure(&mut self, ways: &[usize], exponents: &[u32]) -> Result<usize, String> {
        assert!(self.l1.idle(), "reconfiguration with misses in flight");
        let before: Vec<(usize, u32)> =
            (0..self.l1.partitions()).map(|p| (self.l1.ways_of(p), self.l1.line_exponent(p))).collect();
        let (lines, _) = self.l1.apply_permissions(ways, exponents)?;
        // Blocks whose line size changed are keyed differently from now on.
        for (p, &(_, m)) in before.iter().enumerate() {
            if m != exponents[p] {
                self.tracker.flush_partition(p);
            }
        }
        let n = lines.len();
        self.write_back(lines);
        Ok(n)
    }

    /// Architectural value of a word, looking through L1 and L2.
    pub fn peek_word(&self, addr: Addr) -> Word {
        if self.map.is_spm(addr) == Some(true) {
            return self.spm.read(addr);
        }
        self.l1.peek(addr).unwrap_or_else(|| self.l2.peek(addr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Dest, Region};
    use crate::memory::Preset;

    fn kernel() -> KernelProgram {
        let mut k = KernelProgram::new(4, 4, 1, 0);
        k.regions = vec![
            Region { name: "s".into(), base: 0x100, words: vec![5; 4], spm: true, crossbar: 0 },
            Region { name: "a".into(), base: 0x1000, words: (0..256).collect(), spm: false, crossbar: 0 },
            Region { name: "b".into(), base: 0x2000, words: vec![0; 64], spm: false, crossbar: 1 },
        ];
        k
    }

    fn load(addr: Addr, row: usize) -> MemoryRequest {
        MemoryRequest {
            kind: MemKind::Load,
            address: TaggedWord::clean(addr),
            data: TaggedWord::default(),
            row,
            col: 0,
            dest: Dest::Out,
            issue_cycle: 0,
        }
    }

    fn store(addr: Addr, v: Word, row: usize) -> MemoryRequest {
        MemoryRequest { kind: MemKind::Store, data: TaggedWord::clean(v), dest: Dest::None, ..load(addr, row) }
    }

    #[test]
    fn spm_is_immediate() {
        let mut m = MemorySystem::new(&kernel(), &Preset::Base.config(), false);
        let (r, path) = m.demand(&load(0x104, 1), 0).unwrap();
        assert_eq!((r, path), (MemoryResponse::Data(TaggedWord::clean(5)), AccessPath::Spm));
        assert!(m.demand(&load(0x2000, 0), 0).is_err());
    }

    #[test]
    fn miss_latency_then_hit() {
        let mut m = MemorySystem::new(&kernel(), &Preset::Base.config(), false);
        let (r, _) = m.demand(&load(0x1008, 0), 0).unwrap();
        let MemoryResponse::Pending(id) = r else { panic!("expected a miss") };
        m.issue(0);
        assert!(m.tick_fills(79).is_empty());
        assert_eq!(m.tick_fills(80), vec![(id, 2)]);
        let (r, path) = m.demand(&load(0x100C, 0), 81).unwrap();
        assert_eq!(r, MemoryResponse::Data(TaggedWord::clean(3)));
        assert_eq!(path, AccessPath::L1Hit { partition: 0 });
        // Evict nothing, but a fresh line in the same L2 line hits in L2.
        let cfg = Preset::Base.config();
        assert_eq!(cfg.l1_line, cfg.l2_line);
    }

    #[test]
    fn store_miss_then_visible() {
        let mut m = MemorySystem::new(&kernel(), &Preset::Base.config(), false);
        assert_eq!(m.demand(&store(0x2004, 77, 2), 0).unwrap().0, MemoryResponse::Accepted);
        assert_eq!(m.peek_word(0x2004), 0);
        m.issue(0);
        m.tick_fills(80);
        assert_eq!(m.peek_word(0x2004), 77);
        assert!(m.idle());
    }

    #[test]
    fn dram_port_serialises() {
        let mut m = MemorySystem::new(&kernel(), &Preset::Base.config(), true);
        let MemoryResponse::Pending(id) = m.demand(&load(0x1004, 0), 0).unwrap().0 else { panic!() };
        assert_eq!(m.demand(&load(0x1008, 0), 0).unwrap().0, MemoryResponse::Retry);
        assert!(m.tick_fills(79).is_empty());
        assert_eq!(m.tick_fills(80), vec![(id, 1)]);
        assert_eq!(m.demand(&store(0x1008, 9, 0), 80).unwrap().0, MemoryResponse::Accepted);
        assert_eq!(m.demand(&load(0x1008, 0), 81).unwrap().0, MemoryResponse::Retry);
        assert_eq!(m.peek_word(0x1008), 9);
        assert_eq!(m.stats.l1_accesses(), 0);
    }

    #[test]
    fn runahead_prefetch_then_used() {
        let mut m = MemorySystem::new(&kernel(), &Preset::Base.config(), false);
        m.set_runahead(true);
        assert!(matches!(m.runahead_load(0x1040, 0), RaLoad::Missed(PrefetchIssue::Issued { .. })));
        assert_eq!(m.runahead_load(0x1044, 0), RaLoad::Missed(PrefetchIssue::AlreadyPending));
        assert_eq!(m.runahead_load(0x2000, 0), RaLoad::Fault);
        m.issue(0);
        assert!(m.tick_fills(80).is_empty());
        assert_eq!(m.runahead_load(0x1044, 0), RaLoad::Data(17));
        m.set_runahead(false);
        let (r, _) = m.demand(&load(0x1048, 0), 90).unwrap();
        assert_eq!(r, MemoryResponse::Data(TaggedWord::clean(18)));
        let s = m.tracker.summary();
        assert_eq!((s.used, s.avoided, s.useless), (1, 1, 0));
    }
}
