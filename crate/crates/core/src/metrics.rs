//! Run statistics, memory-image digests and CSV output.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kernel::{emit_kernel, KernelProgram};
use crate::memory::PartitionStats;
use crate::runahead::PrefetchSummary;
use crate::{Addr, Cycle, Word};

/// CSV columns, in output order.
pub const CSV_COLUMNS: [&str; 15] = [
    "run_id",
    "kernel",
    "variant",
    "cycles",
    "utilization",
    "spm_acc",
    "l1_acc",
    "l1_miss",
    "l2_acc",
    "dram_acc",
    "ra_episodes",
    "pf_used",
    "pf_evicted",
    "pf_useless",
    "coverage",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("runs executed different kernels ({0} vs {1})")]
    KernelMismatch(String, String),
    #[error("candidate run has zero cycles")]
    ZeroCycles,
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub run_id: String,
    pub kernel: String,
    pub variant: String,
    /// SHA-256 of the emitted kernel text.
    pub kernel_digest: String,
    /// SHA-256 of the final memory image.
    pub image_digest: String,
    pub total_cycles: Cycle,
    /// Normal-mode cycles in which the array executed its context.
    pub active_cycles: Cycle,
    pub stall_cycles: Cycle,
    pub spm_accesses: u64,
    /// Accepted demand accesses to L1.
    pub l1_accesses: u64,
    /// Line requests from L1 to L2, demand and prefetch.
    pub l1_misses: u64,
    /// Demand accesses that missed in L1.
    pub demand_misses: u64,
    pub l2_accesses: u64,
    pub l2_misses: u64,
    /// Backing-store reads and writes (or DRAM port accesses).
    pub dram_accesses: u64,
    pub partitions: Vec<PartitionStats>,
    pub ra_episodes: u64,
    pub ra_cycles: Cycle,
    pub prefetch: PrefetchSummary,
    pub reconfigs: u64,
    pub reconfig_cycles: Cycle,
    /// Accesses that found a virtual line only partly present.
    pub partial_observations: u64,
}

impl RunStats {
    /// Active cycles over total cycles; 0 for an empty run.
    pub fn utilization(&self) -> f64 {
        if self.total_cycles == 0 {
            0.0
        } else {
            self.active_cycles as f64 / self.total_cycles as f64
        }
    }

    /// Adds the counters of `other` into `self`. Identity fields are kept.
    pub fn merge(&mut self, other: &RunStats) {
        self.total_cycles += other.total_cycles;
        self.active_cycles += other.active_cycles;
        self.stall_cycles += other.stall_cycles;
        self.spm_accesses += other.spm_accesses;
        self.l1_accesses += other.l1_accesses;
        self.l1_misses += other.l1_misses;
        self.demand_misses += other.demand_misses;
        self.l2_accesses += other.l2_accesses;
        self.l2_misses += other.l2_misses;
        self.dram_accesses += other.dram_accesses;
        self.ra_episodes += other.ra_episodes;
        self.ra_cycles += other.ra_cycles;
        self.reconfigs += other.reconfigs;
        self.reconfig_cycles += other.reconfig_cycles;
        self.partial_observations += other.partial_observations;
        let (a, b) = (&mut self.prefetch, &other.prefetch);
        a.issued += b.issued;
        a.used += b.used;
        a.evicted += b.evicted;
        a.useless += b.useless;
        a.avoided += b.avoided;
        a.late += b.late;
        a.demand_misses += b.demand_misses;
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{},{},{},{},{},{},{},{},{},{:.6}",
            self.run_id,
            self.kernel,
            self.variant,
            self.total_cycles,
            self.utilization(),
            self.spm_accesses,
            self.l1_accesses,
            self.l1_misses,
            self.l2_accesses,
            self.dram_accesses,
            self.ra_episodes,
            self.prefetch.used,
            self.prefetch.evicted,
            self.prefetch.useless,
            self.prefetch.coverage()
        )
    }
}

/// `baseline.total_cycles / candidate.total_cycles`, for runs of one kernel.
pub fn speedup(baseline: &RunStats, candidate: &RunStats) -> Result<f64, MetricsError> {
    if baseline.kernel_digest != candidate.kernel_digest {
        return Err(MetricsError::KernelMismatch(baseline.kernel_digest.clone(), candidate.kernel_digest.clone()));
    }
    if candidate.total_cycles == 0 {
        return Err(MetricsError::ZeroCycles);
    }
    Ok(baseline.total_cycles as f64 / candidate.total_cycles as f64)
}

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

pub fn csv_string(stats: &[RunStats]) -> String {
    let mut s = csv_header();
    s.push('\n');
    for r in stats {
        writeln!(s, "{}", r.csv_row()).expect("string write");
    }
    s
}

/// Writes one header line and one row per run.
pub fn emit_csv(stats: &[RunStats], path: &Path) -> Result<(), MetricsError> {
    std::fs::write(path, csv_string(stats))
        .map_err(|source| MetricsError::Io { path: path.display().to_string(), source })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        write!(s, "{b:02x}").expect("string write");
        s
    })
}

/// Digest over `(name, base, words)` triples, in the given order.
pub fn image_digest<'a, I>(regions: I) -> String
where
    I: IntoIterator<Item = (&'a str, Addr, &'a [Word])>,
{
    let mut h = Sha256::new();
    for (name, base, words) in regions {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(base.to_le_bytes());
        h.update((words.len() as u64).to_le_bytes());
        for w in words {
            h.update(w.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

pub fn kernel_digest(k: &KernelProgram) -> String {
    hex(&Sha256::digest(emit_kernel(k).as_bytes()))
}
