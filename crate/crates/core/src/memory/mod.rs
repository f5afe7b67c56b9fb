//! Memory subsystem: per-crossbar SPMs, a way-partitioned non-blocking L1
//! pool, a shared non-inclusive L2 and a flat backing store.
//!
//! Each crossbar serves two edge PEs and owns a disjoint set of regions (its
//! virtual SPM). Cache-backed regions of a crossbar go through that crossbar's
//! L1 partition; since partitions never share data, no coherence protocol is
//! needed.

mod backing;
mod hierarchy;
mod l1;
mod l2;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::kernel::{KernelProgram, PES_PER_CROSSBAR};
use crate::Addr;

pub use backing::Backing;
pub use hierarchy::{AccessPath, MemFault, MemStats, MemorySystem, PartitionStats, PrefetchIssue, RaLoad};
pub use l1::{
    AccessOutcome, CacheUnit, DirtyLine, FillResult, L1Geometry, LoadStoreEntry, LstDest, MshrEntry, OpType,
    PrefetchRequest, StoreBufferSlot,
};
pub use l2::{L2Cache, L2Stats};

/// Line sizes a partition may be configured with, before capping by the L2 line.
pub const VALID_LINE_SIZES: [u32; 4] = [16, 32, 64, 128];
/// L1 hit latency in cycles.
pub const L1_HIT_LATENCY: u64 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{field} = {value} is invalid: {why}")]
    Invalid { field: &'static str, value: u64, why: &'static str },
    #[error("SPM of crossbar {crossbar} needs {needed} bytes but holds {capacity}")]
    SpmOverflow { crossbar: usize, needed: u64, capacity: u32 },
    #[error("regions `{0}` and `{1}` share an L2 line but belong to different crossbars")]
    SharedLine(String, String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Base,
    Runahead,
    Reconfig,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Base, Preset::Runahead, Preset::Reconfig];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Base => "base",
            Preset::Runahead => "runahead",
            Preset::Reconfig => "reconfig",
        }
    }

    /// The three hardware configurations of the evaluation.
    pub fn config(self) -> HierarchyConfig {
        let base = HierarchyConfig {
            spm_size: 512,
            l1_caches: 1,
            l1_size: 4096,
            l1_line: 32,
            l1_phys_line: 16,
            l1_ways: 4,
            mshr_entries: 16,
            store_buffer_slots: 16,
            l2_size: 128 * 1024,
            l2_line: 32,
            l2_ways: 8,
            l2_hit_latency: 8,
            l2_miss_latency: 80,
            temp_store_bytes: 512,
        };
        match self {
            Preset::Base => base,
            Preset::Runahead => HierarchyConfig { l1_line: 64, l2_line: 64, ..base },
            Preset::Reconfig => {
                HierarchyConfig { spm_size: 2048, l1_caches: 4, l1_line: 64, l1_ways: 8, l2_line: 128, ..base }
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| ConfigError::UnknownPreset(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyConfig {
    /// Bytes of SPM per crossbar.
    pub spm_size: u32,
    /// Physical L1 caches; their ways form one pool shared out to partitions.
    pub l1_caches: usize,
    /// Bytes per L1 cache.
    pub l1_size: u32,
    /// Initial (virtual) L1 line size.
    pub l1_line: u32,
    /// Physical line granularity of the L1 arrays.
    pub l1_phys_line: u32,
    /// Ways per L1 cache.
    pub l1_ways: usize,
    /// MSHR entries per partition.
    pub mshr_entries: usize,
    pub store_buffer_slots: usize,
    pub l2_size: u32,
    pub l2_line: u32,
    pub l2_ways: usize,
    pub l2_hit_latency: u64,
    /// Total latency of an L2 miss, backing store included.
    pub l2_miss_latency: u64,
    /// Runahead temporary storage.
    pub temp_store_bytes: u32,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Preset::Base.config()
    }
}

fn invalid(field: &'static str, value: u64, why: &'static str) -> ConfigError {
    ConfigError::Invalid { field, value, why }
}

impl HierarchyConfig {
    pub fn l1_sets(&self) -> usize {
        self.l1_size as usize / (self.l1_phys_line as usize * self.l1_ways.max(1))
    }

    pub fn total_ways(&self) -> usize {
        self.l1_caches * self.l1_ways
    }

    /// Virtual line exponent of a line size.
    pub fn line_exponent(&self, line: u32) -> u32 {
        (line / self.l1_phys_line).trailing_zeros()
    }

    /// Line sizes partitions may use under this configuration.
    pub fn valid_lines(&self) -> Vec<u32> {
        VALID_LINE_SIZES
            .into_iter()
            .filter(|&l| {
                l >= self.l1_phys_line && l <= self.l2_line && (l / self.l1_phys_line) as usize <= self.l1_sets()
            })
            .collect()
    }

    pub fn l1_geometry(&self) -> L1Geometry {
        L1Geometry { sets: self.l1_sets(), ways: self.total_ways(), phys_line: self.l1_phys_line }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pow2 = |field, v: u64| {
            if v == 0 || !v.is_power_of_two() {
                Err(invalid(field, v, "must be a power of two"))
            } else {
                Ok(())
            }
        };
        pow2("l1_size", self.l1_size as u64)?;
        pow2("l1_line", self.l1_line as u64)?;
        pow2("l1_phys_line", self.l1_phys_line as u64)?;
        pow2("l2_size", self.l2_size as u64)?;
        pow2("l2_line", self.l2_line as u64)?;
        if !VALID_LINE_SIZES.contains(&self.l1_phys_line) {
            return Err(invalid("l1_phys_line", self.l1_phys_line as u64, "not in {16,32,64,128}"));
        }
        if !VALID_LINE_SIZES.contains(&self.l1_line) || self.l1_line < self.l1_phys_line {
            return Err(invalid("l1_line", self.l1_line as u64, "not a valid line size"));
        }
        if !VALID_LINE_SIZES.contains(&self.l2_line) || self.l2_line < self.l1_line {
            return Err(invalid("l2_line", self.l2_line as u64, "must be a valid size at least the L1 line"));
        }
        if self.l1_caches == 0 {
            return Err(invalid("l1_caches", 0, "must be positive"));
        }
        if self.l1_ways == 0 {
            return Err(invalid("l1_ways", 0, "must be positive"));
        }
        let sets = self.l1_sets();
        if sets == 0 || !sets.is_power_of_two() {
            return Err(invalid("l1_size", self.l1_size as u64, "gives a non power-of-two set count"));
        }
        if (self.l1_line / self.l1_phys_line) as usize > sets {
            return Err(invalid("l1_line", self.l1_line as u64, "virtual line spans more sets than exist"));
        }
        if self.mshr_entries == 0 {
            return Err(invalid("mshr_entries", 0, "must be positive"));
        }
        if self.store_buffer_slots == 0 {
            return Err(invalid("store_buffer_slots", 0, "must be positive"));
        }
        if self.l2_ways == 0 {
            return Err(invalid("l2_ways", 0, "must be positive"));
        }
        let l2_sets = self.l2_size as usize / (self.l2_line as usize * self.l2_ways);
        if l2_sets == 0 || !l2_sets.is_power_of_two() {
            return Err(invalid("l2_size", self.l2_size as u64, "gives a non power-of-two set count"));
        }
        if self.l2_hit_latency == 0 || self.l2_miss_latency < self.l2_hit_latency {
            return Err(invalid("l2_miss_latency", self.l2_miss_latency, "must be at least the hit latency"));
        }
        if self.temp_store_bytes < 4 {
            return Err(invalid("temp_store_bytes", self.temp_store_bytes as u64, "must hold a word"));
        }
        Ok(())
    }

    /// Checks the kernel's regions against this hierarchy.
    pub fn check_kernel(&self, k: &KernelProgram) -> Result<(), ConfigError> {
        let mut spm_bytes = vec![0u64; k.crossbars()];
        for r in k.regions.iter().filter(|r| r.spm) {
            spm_bytes[r.crossbar] += r.len_bytes();
        }
        for (crossbar, &needed) in spm_bytes.iter().enumerate() {
            if needed > self.spm_size as u64 {
                return Err(ConfigError::SpmOverflow { crossbar, needed, capacity: self.spm_size });
            }
        }
        let line = self.l2_line as u64;
        for (i, a) in k.regions.iter().enumerate() {
            for b in &k.regions[i + 1..] {
                if a.crossbar == b.crossbar || a.spm || b.spm || a.words.is_empty() || b.words.is_empty() {
                    continue;
                }
                let (a0, a1) = (a.base as u64 / line, (a.end() - 1) / line);
                let (b0, b1) = (b.base as u64 / line, (b.end() - 1) / line);
                if a0 <= b1 && b0 <= a1 {
                    return Err(ConfigError::SharedLine(a.name.clone(), b.name.clone()));
                }
            }
        }
        Ok(())
    }

    /// Applies one `key = value` override. Keys are the field names.
    pub fn set(&mut self, key: &str, value: u64) -> Result<(), String> {
        match key {
            "spm_size" => self.spm_size = value as u32,
            "l1_caches" => self.l1_caches = value as usize,
            "l1_size" => self.l1_size = value as u32,
            "l1_line" => self.l1_line = value as u32,
            "l1_phys_line" => self.l1_phys_line = value as u32,
            "l1_ways" => self.l1_ways = value as usize,
            "mshr_entries" => self.mshr_entries = value as usize,
            "store_buffer_slots" => self.store_buffer_slots = value as usize,
            "l2_size" => self.l2_size = value as u32,
            "l2_line" => self.l2_line = value as u32,
            "l2_ways" => self.l2_ways = value as usize,
            "l2_hit_latency" => self.l2_hit_latency = value,
            "l2_miss_latency" => self.l2_miss_latency = value,
            "temp_store_bytes" => self.temp_store_bytes = value as u32,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parses a config file: an optional `preset = NAME` line followed by
    /// `key = value` overrides, `#` comments allowed.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = HierarchyConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ConfigError::Syntax { line, msg: "expected `key = value`".into() })?;
            if key == "preset" {
                cfg = value.parse::<Preset>()?.config();
                continue;
            }
            let v =
                parse_size(value).ok_or_else(|| ConfigError::Syntax { line, msg: format!("bad value `{value}`") })?;
            cfg.set(key, v).map_err(|msg| ConfigError::Syntax { line, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        format!(
            "spm_size = {}\nl1_caches = {}\nl1_size = {}\nl1_line = {}\nl1_phys_line = {}\nl1_ways = {}\n\
             mshr_entries = {}\nstore_buffer_slots = {}\nl2_size = {}\nl2_line = {}\nl2_ways = {}\n\
             l2_hit_latency = {}\nl2_miss_latency = {}\ntemp_store_bytes = {}\n",
            self.spm_size,
            self.l1_caches,
            self.l1_size,
            self.l1_line,
            self.l1_phys_line,
            self.l1_ways,
            self.mshr_entries,
            self.store_buffer_slots,
            self.l2_size,
            self.l2_line,
            self.l2_ways,
            self.l2_hit_latency,
            self.l2_miss_latency,
            self.temp_store_bytes
        )
    }
}

/// Accepts plain numbers, `0x` hex and `K`/`KB` suffixes.
pub fn parse_size(s: &str) -> Option<u64> {
    let s = s.trim();
    let upper = s.to_ascii_uppercase();
    let (digits, mult) = if let Some(d) = upper.strip_suffix("KB").or_else(|| upper.strip_suffix('K')) {
        (d.to_string(), 1024)
    } else {
        (upper.clone(), 1)
    };
    let v = if let Some(hex) = digits.strip_prefix("0X") {
        u64::from_str_radix(hex, 16).ok()?
    } else {
        digits.parse::<u64>().ok()?
    };
    v.checked_mul(mult)
}

/// Crossbar serving a PE row.
pub fn crossbar_of_row(row: usize) -> usize {
    row / PES_PER_CROSSBAR
}

/// L1 partition serving a crossbar: crossbars are spread evenly over
/// `min(l1_caches, crossbars)` partitions.
pub fn partition_of_crossbar(crossbar: usize, crossbars: usize, partitions: usize) -> usize {
    crossbar * partitions / crossbars.max(1)
}

/// Where an address lives, as seen from one crossbar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Spm { crossbar: usize },
    Cache { partition: usize },
}

/// Address map built from a kernel's regions.
#[derive(Debug, Clone)]
pub struct AddressMap {
    /// (base, end, crossbar, spm), sorted by base.
    ranges: Vec<(u64, u64, usize, bool)>,
    crossbars: usize,
    partitions: usize,
}

impl AddressMap {
    pub fn new(k: &KernelProgram, cfg: &HierarchyConfig) -> Self {
        let mut ranges: Vec<_> = k
            .regions
            .iter()
            .filter(|r| !r.words.is_empty())
            .map(|r| (r.base as u64, r.end(), r.crossbar, r.spm))
            .collect();
        ranges.sort_unstable();
        let crossbars = k.crossbars();
        Self { ranges, crossbars, partitions: cfg.l1_caches.min(crossbars).max(1) }
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    pub fn crossbars(&self) -> usize {
        self.crossbars
    }

    pub fn partition_of(&self, crossbar: usize) -> usize {
        partition_of_crossbar(crossbar, self.crossbars, self.partitions)
    }

    /// Whether `addr` is SPM-resident; `None` when unmapped.
    pub fn is_spm(&self, addr: Addr) -> Option<bool> {
        let a = addr as u64;
        let idx = self.ranges.partition_point(|r| r.0 <= a);
        idx.checked_sub(1).map(|i| self.ranges[i]).filter(|r| a < r.1).map(|r| r.3)
    }

    /// Routes an access from `crossbar`. Foreign or unmapped addresses fault.
    pub fn route(&self, addr: Addr, crossbar: usize) -> Result<Route, MemFault> {
        let a = addr as u64;
        let idx = self.ranges.partition_point(|r| r.0 <= a);
        let hit = idx.checked_sub(1).map(|i| self.ranges[i]).filter(|r| a < r.1);
        match hit {
            None => Err(MemFault::Unmapped(addr)),
            Some((_, _, owner, _)) if owner != crossbar => Err(MemFault::Foreign { addr, owner, crossbar }),
            Some((_, _, _, true)) => Ok(Route::Spm { crossbar }),
            Some(_) => Ok(Route::Cache { partition: self.partition_of(crossbar) }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Region;

    #[test]
    fn presets_validate() {
        for p in Preset::ALL {
            p.config().validate().unwrap();
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        let r = Preset::Reconfig.config();
        assert_eq!((r.total_ways(), r.l1_sets(), r.spm_size), (32, 32, 2048));
        assert_eq!(Preset::Base.config().l1_sets(), 64);
    }

    #[test]
    fn valid_lines_capped_by_l2() {
        assert_eq!(Preset::Base.config().valid_lines(), vec![16, 32]);
        assert_eq!(Preset::Reconfig.config().valid_lines(), vec![16, 32, 64, 128]);
    }

    #[test]
    fn config_file_overrides() {
        let cfg = HierarchyConfig::parse("preset = runahead\nl1_ways = 8 # more\nl1_size = 8K\n").unwrap();
        assert_eq!((cfg.l1_ways, cfg.l1_size, cfg.l1_line), (8, 8192, 64));
        assert_eq!(HierarchyConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(matches!(HierarchyConfig::parse("bogus = 1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(HierarchyConfig::parse("l1_line = 256").is_err());
    }

    fn kernel_with(regions: Vec<Region>) -> KernelProgram {
        let mut k = KernelProgram::new(4, 4, 1, 0);
        k.regions = regions;
        k
    }

    fn region(name: &str, base: Addr, words: usize, crossbar: usize, spm: bool) -> Region {
        Region { name: name.into(), base, words: vec![0; words], spm, crossbar }
    }

    #[test]
    fn routing() {
        let k = kernel_with(vec![region("s", 0x100, 4, 0, true), region("c", 0x1000, 64, 1, false)]);
        let cfg = Preset::Reconfig.config();
        let map = AddressMap::new(&k, &cfg);
        assert_eq!(map.route(0x104, 0), Ok(Route::Spm { crossbar: 0 }));
        assert_eq!(map.route(0x1010, 1), Ok(Route::Cache { partition: 1 }));
        assert_eq!(map.route(0x1010, 0), Err(MemFault::Foreign { addr: 0x1010, owner: 1, crossbar: 0 }));
        assert_eq!(map.route(0x110, 0), Err(MemFault::Unmapped(0x110)));
    }

    #[test]
    fn kernel_checks() {
        let cfg = Preset::Base.config();
        let k = kernel_with(vec![region("s", 0x100, 200, 0, true)]);
        assert!(matches!(cfg.check_kernel(&k), Err(ConfigError::SpmOverflow { .. })));
        let k = kernel_with(vec![region("a", 0x100, 1, 0, false), region("b", 0x104, 1, 1, false)]);
        assert!(matches!(cfg.check_kernel(&k), Err(ConfigError::SharedLine(..))));
    }

    #[test]
    fn partition_mapping() {
        assert_eq!((0..2).map(|x| partition_of_crossbar(x, 2, 1)).collect::<Vec<_>>(), vec![0, 0]);
        assert_eq!((0..4).map(|x| partition_of_crossbar(x, 4, 2)).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
        assert_eq!((0..2).map(|x| partition_of_crossbar(x, 2, 2)).collect::<Vec<_>>(), vec![0, 1]);
    }
}
