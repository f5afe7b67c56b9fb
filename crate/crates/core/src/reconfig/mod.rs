//! Closed-loop L1 reconfiguration.
//!
//! A monitor watches the time miss rate (misses per cycle) over fixed
//! windows. When it exceeds the threshold the next window is sampled: every
//! demand access is recorded per partition. The samples are replayed through
//! a standalone cache model for every way count and line size, the best line
//! size per way count gives the profit `ln(time hit rate)`, and the
//! allocation solver picks way counts under the pool budget.

mod solver;

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

pub use solver::{brute_force_alloc, max_profit, ProfitMatrix};

use crate::memory::{CacheUnit, HierarchyConfig, L1Geometry};
use crate::scalar::{log_rate, RateScalar};
use crate::{Addr, Cycle};

/// Default monitor window in cycles.
pub const DEFAULT_WINDOW: Cycle = 4096;
/// Default time miss rate threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.05;
/// Fixed control cost of applying a plan, in cycles.
pub const RECONFIG_OVERHEAD: Cycle = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReconfigError {
    #[error("observation window must be longer than zero cycles")]
    ZeroWindow,
    #[error("profit rows must have {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("plan uses {used} ways but only {budget} exist")]
    Budget { used: usize, budget: usize },
    #[error("exhaustive search over {n} caches and {t_max} ways is too large")]
    SearchTooLarge { n: usize, t_max: usize },
    #[error("line size {0} is not allowed")]
    InvalidLine(u32),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// Misses per cycle over a window.
pub fn time_miss_rate<T: RateScalar>(misses: u64, window: Cycle) -> Result<T, ReconfigError> {
    if window == 0 {
        return Err(ReconfigError::ZeroWindow);
    }
    Ok(T::from_count(misses) / T::from_count(window))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorSignal {
    Quiet,
    TriggerSampling,
}

/// Fixed-window time miss rate monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitor {
    pub window: Cycle,
    pub threshold: f64,
    start: Cycle,
    base_misses: u64,
    /// Rate of the last completed window.
    pub last_rate: f64,
}

impl Monitor {
    pub fn new(window: Cycle, threshold: f64, start: Cycle, misses: u64) -> Self {
        assert!(window > 0, "monitor window must be positive");
        Self { window, threshold, start, base_misses: misses, last_rate: 0.0 }
    }

    /// Restarts the window at `cycle`.
    pub fn reset(&mut self, cycle: Cycle, misses: u64) {
        self.start = cycle;
        self.base_misses = misses;
    }

    /// Call once per cycle with the running demand miss count. Triggers when
    /// a completed window's rate strictly exceeds the threshold.
    pub fn tick(&mut self, cycle: Cycle, misses: u64) -> MonitorSignal {
        if cycle < self.start + self.window {
            return MonitorSignal::Quiet;
        }
        let rate: f64 = time_miss_rate(misses - self.base_misses, self.window).expect("window > 0");
        self.last_rate = rate;
        self.reset(cycle, misses);
        if exceeds(rate, self.threshold) {
            MonitorSignal::TriggerSampling
        } else {
            MonitorSignal::Quiet
        }
    }
}

/// Strict comparison used by the monitor.
pub fn exceeds(rate: f64, threshold: f64) -> bool {
    rate > threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampledAccess {
    pub cycle: Cycle,
    pub addr: Addr,
    pub write: bool,
}

/// Demand accesses of one observation window, per partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleWindow {
    pub start: Cycle,
    pub length: Cycle,
    pub accesses: Vec<Vec<SampledAccess>>,
}

impl SampleWindow {
    pub fn new(start: Cycle, length: Cycle, partitions: usize) -> Self {
        Self { start, length, accesses: vec![Vec::new(); partitions] }
    }

    pub fn record(&mut self, partition: usize, a: SampledAccess) {
        debug_assert!(a.cycle >= self.start && a.cycle < self.start + self.length);
        self.accesses[partition].push(a);
    }

    pub fn partitions(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_complete(&self, cycle: Cycle) -> bool {
        cycle >= self.start + self.length
    }
}

/// Outcome of replaying one partition's samples through the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelRate<T> {
    pub hits: u64,
    pub misses: u64,
    /// Time hit rate, `1 - misses / window`.
    pub rate: T,
}

/// Replays partition `p`'s samples through a cold single-partition cache of
/// `ways` ways and line size `line`, with the configuration's set count.
/// Zero ways means every access misses.
pub fn model_hit_rates<T: RateScalar>(
    window: &SampleWindow,
    cfg: &HierarchyConfig,
    p: usize,
    ways: usize,
    line: u32,
) -> Result<ModelRate<T>, ReconfigError> {
    if !cfg.valid_lines().contains(&line) {
        return Err(ReconfigError::InvalidLine(line));
    }
    let accesses = &window.accesses[p];
    let hits = if ways == 0 {
        0
    } else {
        let geom = L1Geometry { sets: cfg.l1_sets(), ways, phys_line: cfg.l1_phys_line };
        let mut c = CacheUnit::new(geom, 1, cfg.line_exponent(line), 1, 1);
        accesses.iter().filter(|a| c.functional_access(0, a.addr, a.write)).count() as u64
    };
    let misses = accesses.len() as u64 - hits;
    let rate = T::one() - time_miss_rate::<T>(misses, window.length)?;
    Ok(ModelRate { hits, misses, rate })
}

/// Way count and line size per partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigPlan<T> {
    pub ways: Vec<usize>,
    pub lines: Vec<u32>,
    pub objective: T,
}

impl<T> ReconfigPlan<T> {
    /// One `partition i ways S line L` line per partition.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, (w, l)) in self.ways.iter().zip(&self.lines).enumerate() {
            writeln!(s, "partition {i} ways {w} line {l}").expect("string write");
        }
        s
    }

    pub fn same_layout(&self, ways: &[usize], lines: &[u32]) -> bool {
        self.ways == ways && self.lines == lines
    }
}

/// Parses plan text into `(ways, lines)`, checking the budget.
pub fn parse_plan(text: &str, budget: usize) -> Result<(Vec<usize>, Vec<u32>), ReconfigError> {
    let mut entries: Vec<(usize, usize, u32)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t: Vec<&str> = raw.split_whitespace().collect();
        if t.is_empty() || t[0].starts_with('#') {
            continue;
        }
        let bad = || ReconfigError::Syntax { line, msg: format!("expected `partition I ways S line L`, got `{raw}`") };
        if t.len() != 6 || t[0] != "partition" || t[2] != "ways" || t[4] != "line" {
            return Err(bad());
        }
        let i = t[1].parse().map_err(|_| bad())?;
        let w = t[3].parse().map_err(|_| bad())?;
        let l = t[5].parse().map_err(|_| bad())?;
        entries.push((i, w, l));
    }
    entries.sort_unstable();
    if entries.iter().enumerate().any(|(k, e)| e.0 != k) {
        return Err(ReconfigError::Syntax { line: 0, msg: "partitions must be numbered 0..n once each".into() });
    }
    let used = entries.iter().map(|e| e.1).sum();
    if used > budget {
        return Err(ReconfigError::Budget { used, budget });
    }
    Ok((entries.iter().map(|e| e.1).collect(), entries.iter().map(|e| e.2).collect()))
}

/// Modelled rates for every `(k, L)` of one partition, with the best line
/// per way count. Ties prefer `current_line`, then the smaller line.
fn profile<T: RateScalar + Send + Sync>(
    window: &SampleWindow,
    cfg: &HierarchyConfig,
    p: usize,
    current_line: u32,
) -> Vec<(T, u32)> {
    let lines = cfg.valid_lines();
    let budget = cfg.total_ways();
    let grid: Vec<(usize, u32)> = (0..=budget).flat_map(|k| lines.iter().map(move |&l| (k, l))).collect();
    let rates: Vec<T> = grid
        .par_iter()
        .map(|&(k, l)| model_hit_rates::<T>(window, cfg, p, k, l).expect("line from the valid set").rate)
        .collect();
    (0..=budget)
        .map(|k| {
            let row = &rates[k * lines.len()..(k + 1) * lines.len()];
            let mut best = (row[0], lines[0]);
            for (&r, &l) in row.iter().zip(&lines) {
                if r > best.0 || (r == best.0 && l == current_line) {
                    best = (r, l);
                }
            }
            best
        })
        .collect()
}

/// Builds the allocation for the sampled window. If the current layout is
/// already optimal it is returned unchanged.
pub fn build_plan<T: RateScalar + Send + Sync>(
    window: &SampleWindow,
    cfg: &HierarchyConfig,
    current_ways: &[usize],
    current_lines: &[u32],
) -> Result<ReconfigPlan<T>, ReconfigError> {
    let n = window.partitions();
    if current_ways.len() != n || current_lines.len() != n {
        return Err(ReconfigError::DimensionMismatch { expected: n, found: current_ways.len() });
    }
    let budget = cfg.total_ways();
    let profiles: Vec<Vec<(T, u32)>> =
        (0..n).into_par_iter().map(|p| profile(window, cfg, p, current_lines[p])).collect();
    let h = ProfitMatrix::new(profiles.iter().map(|row| row.iter().map(|&(r, _)| log_rate(r)).collect()).collect())?;
    let (objective, ways) = max_profit(&h, budget)?;
    let current = h.value(current_ways);
    if current >= objective {
        return Ok(ReconfigPlan { ways: current_ways.to_vec(), lines: current_lines.to_vec(), objective: current });
    }
    let lines =
        ways.iter().enumerate().map(|(p, &k)| if k == 0 { current_lines[p] } else { profiles[p][k].1 }).collect();
    Ok(ReconfigPlan { ways, lines, objective })
}
