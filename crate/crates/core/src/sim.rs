//! The engine: one clock driving the array, the memory system, runahead
//! episodes and the reconfiguration loop.
//!
//! Each cycle runs in this order:
//!
//! 1. misses whose data has arrived are filled and their loads completed;
//! 2. a runahead episode whose triggers are all filled ends and the array
//!    state is restored;
//! 3. the array steps, unless it is held for a reconfiguration;
//! 4. a normal cycle that left loads outstanding starts an episode (runahead
//!    variant only);
//! 5. new misses are issued to L2;
//! 6. the reconfiguration monitor advances.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::kernel::{KernelError, KernelProgram};
use crate::memory::{AccessPath, ConfigError, HierarchyConfig, MemFault, MemorySystem};
use crate::metrics::{image_digest, kernel_digest, RunStats};
use crate::pe_array::{MemKind, MemoryPort, MemoryRequest, MemoryResponse, Mode, PeArrayState, StepOutcome};
use crate::reconfig::{
    build_plan, Monitor, MonitorSignal, ReconfigPlan, SampleWindow, DEFAULT_THRESHOLD, DEFAULT_WINDOW,
    RECONFIG_OVERHEAD,
};
use crate::runahead::{EpisodeRecord, RunaheadEpisode};
use crate::{Addr, Cycle, Word};

/// Default cycle cap.
pub const DEFAULT_CYCLES_MAX: Cycle = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// No caches: every non-SPM access goes to memory through one blocking port.
    SpmOnly,
    Cache,
    Runahead,
    Reconfig,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::SpmOnly, Variant::Cache, Variant::Runahead, Variant::Reconfig];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SpmOnly => "spm-only",
            Variant::Cache => "cache",
            Variant::Runahead => "runahead",
            Variant::Reconfig => "reconfig",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("memory fault at cycle {cycle}: {fault}")]
    Fault { cycle: Cycle, fault: MemFault },
    #[error("cycle cap of {0} reached")]
    CycleCap(Cycle),
    #[error("invalid option: {0}")]
    Option(String),
    #[error("reconfiguration failed: {0}")]
    Reconfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub cycles_max: Cycle,
    /// Monitor and sampling window.
    pub window: Cycle,
    /// Time miss rate that triggers sampling.
    pub threshold: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { cycles_max: DEFAULT_CYCLES_MAX, window: DEFAULT_WINDOW, threshold: DEFAULT_THRESHOLD }
    }
}

/// One demand access, as seen by trace hooks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub cycle: Cycle,
    pub row: usize,
    pub col: usize,
    pub kind: MemKind,
    pub addr: Addr,
    pub path: AccessPath,
}

/// A plan applied during the run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigEvent {
    pub cycle: Cycle,
    pub plan: ReconfigPlan<f64>,
    pub writebacks: usize,
}

enum Phase {
    Monitor,
    Sampling,
    Draining(ReconfigPlan<f64>),
    Applying { until: Cycle },
}

type TraceHook<'a> = Box<dyn FnMut(&TraceEvent) + 'a>;

struct Port<'s, 'h> {
    mem: &'s mut MemorySystem,
    episode: Option<&'s mut RunaheadEpisode>,
    cycle: Cycle,
    fault: Option<MemFault>,
    trace: Option<&'s mut TraceHook<'h>>,
}

impl MemoryPort for Port<'_, '_> {
    fn access(&mut self, req: &MemoryRequest) -> MemoryResponse {
        if let Some(ep) = self.episode.as_deref_mut() {
            return ep.access(self.mem, req);
        }
        match self.mem.demand(req, self.cycle) {
            Ok((resp, path)) => {
                if resp != MemoryResponse::Retry {
                    if let Some(hook) = self.trace.as_deref_mut() {
                        hook(&TraceEvent {
                            cycle: self.cycle,
                            row: req.row,
                            col: req.col,
                            kind: req.kind,
                            addr: req.address.value,
                            path,
                        });
                    }
                }
                resp
            }
            Err(f) => {
                self.fault.get_or_insert(f);
                MemoryResponse::Accepted
            }
        }
    }
}

pub struct Simulator<'a> {
    kernel: &'a KernelProgram,
    variant: Variant,
    opts: SimOptions,
    array: PeArrayState,
    mem: MemorySystem,
    cycle: Cycle,
    active: Cycle,
    episode: Option<RunaheadEpisode>,
    pub episodes: Vec<EpisodeRecord>,
    monitor: Monitor,
    phase: Phase,
    pub reconfigs: Vec<ReconfigEvent>,
    reconfig_cycles: Cycle,
    trace: Option<TraceHook<'a>>,
}

impl<'a> Simulator<'a> {
    pub fn new(kernel: &'a KernelProgram, cfg: &HierarchyConfig, variant: Variant) -> Result<Self, SimError> {
        Self::with_options(kernel, cfg, variant, SimOptions::default())
    }

    pub fn with_options(
        kernel: &'a KernelProgram,
        cfg: &HierarchyConfig,
        variant: Variant,
        opts: SimOptions,
    ) -> Result<Self, SimError> {
        kernel.validate()?;
        cfg.validate()?;
        cfg.check_kernel(kernel)?;
        if opts.window == 0 {
            return Err(SimError::Option("window must be positive".into()));
        }
        if !(opts.threshold > 0.0 && opts.threshold < 1.0) {
            return Err(SimError::Option(format!("threshold {} outside (0, 1)", opts.threshold)));
        }
        Ok(Self {
            kernel,
            variant,
            array: PeArrayState::new(kernel),
            mem: MemorySystem::new(kernel, cfg, variant == Variant::SpmOnly),
            cycle: 0,
            active: 0,
            episode: None,
            episodes: Vec::new(),
            monitor: Monitor::new(opts.window, opts.threshold, 0, 0),
            phase: Phase::Monitor,
            reconfigs: Vec::new(),
            reconfig_cycles: 0,
            trace: None,
            opts,
        })
    }

    /// Called for every accepted normal-mode memory access.
    pub fn set_trace(&mut self, hook: impl FnMut(&TraceEvent) + 'a) {
        self.trace = Some(Box::new(hook));
    }

    pub fn memory(&self) -> &MemorySystem {
        &self.mem
    }

    pub fn array(&self) -> &PeArrayState {
        &self.array
    }

    pub fn cycle(&self) -> Cycle {
        self.cycle
    }

    pub fn done(&self) -> bool {
        self.array.mode == Mode::Normal
            && self.array.quiescent()
            && self.mem.idle()
            && matches!(self.phase, Phase::Monitor | Phase::Sampling)
    }

    fn held(&self) -> bool {
        matches!(self.phase, Phase::Draining(_) | Phase::Applying { .. })
    }

    /// Simulates one cycle.
    pub fn step(&mut self) -> Result<(), SimError> {
        let cycle = self.cycle;
        for (id, w) in self.mem.tick_fills(cycle) {
            self.array.fill(id, w).expect("fill for a request the array issued");
        }

        if let Some(ep) = &self.episode {
            let outstanding: Vec<u64> = self.array.outstanding_loads().iter().map(|p| p.request_id).collect();
            if ep.may_exit(&outstanding) {
                self.array.restore_state().expect("runahead mode");
                self.mem.set_runahead(false);
                let ep = self.episode.take().expect("episode");
                self.episodes.push(ep.finish(cycle));
            }
        }

        let mode = self.array.mode;
        let outcome = if self.held() {
            StepOutcome::Stalled
        } else {
            let mut port = Port {
                mem: &mut self.mem,
                episode: self.episode.as_mut(),
                cycle,
                fault: None,
                trace: self.trace.as_mut(),
            };
            let outcome = self.array.step(self.kernel, &mut port, cycle);
            if let Some(fault) = port.fault {
                return Err(SimError::Fault { cycle, fault });
            }
            outcome
        };
        if mode == Mode::Normal && outcome == StepOutcome::Executed {
            self.active += 1;
        }

        if self.variant == Variant::Runahead && self.array.mode == Mode::Normal && self.array.stalled() {
            let triggers = self.array.outstanding_loads().iter().map(|p| p.request_id).collect();
            self.array.save_state().expect("normal mode");
            self.array.poison_outstanding();
            self.mem.set_runahead(true);
            self.episode = Some(RunaheadEpisode::new(cycle + 1, triggers, self.mem.cfg.temp_store_bytes));
        }

        self.mem.issue(cycle);
        if self.variant == Variant::Reconfig {
            self.advance_reconfig(cycle + 1)?;
        }
        self.cycle += 1;
        Ok(())
    }

    /// Reconfiguration state machine, evaluated at the end of a cycle; `now`
    /// is the number of cycles elapsed.
    fn advance_reconfig(&mut self, now: Cycle) -> Result<(), SimError> {
        let misses = self.mem.stats.demand_misses();
        match std::mem::replace(&mut self.phase, Phase::Monitor) {
            Phase::Monitor => {
                if self.monitor.tick(now, misses) == MonitorSignal::TriggerSampling {
                    self.mem.sample = Some(SampleWindow::new(now, self.opts.window, self.mem.l1.partitions()));
                    self.phase = Phase::Sampling;
                }
            }
            Phase::Sampling => {
                let complete = self.mem.sample.as_ref().is_some_and(|s| s.is_complete(now));
                if !complete {
                    self.phase = Phase::Sampling;
                    return Ok(());
                }
                let window = self.mem.sample.take().expect("sampling");
                let parts = self.mem.l1.partitions();
                let ways: Vec<usize> = (0..parts).map(|p| self.mem.l1.ways_of(p)).collect();
                let lines: Vec<u32> = (0..parts).map(|p| self.mem.l1.line_bytes(p)).collect();
                let plan = build_plan::<f64>(&window, &self.mem.cfg, &ways, &lines)
                    .map_err(|e| SimError::Reconfig(e.to_string()))?;
                if plan.same_layout(&ways, &lines) {
                    self.monitor.reset(now, misses);
                } else {
                    self.phase = Phase::Draining(plan);
                }
            }
            Phase::Draining(plan) => {
                if !self.mem.l1.idle() {
                    self.phase = Phase::Draining(plan);
                    return Ok(());
                }
                let exps: Vec<u32> = plan.lines.iter().map(|&l| self.mem.cfg.line_exponent(l)).collect();
                let writebacks = self.mem.reconfigure(&plan.ways, &exps).map_err(SimError::Reconfig)?;
                let cost = RECONFIG_OVERHEAD + writebacks as Cycle;
                self.reconfig_cycles += cost;
                self.reconfigs.push(ReconfigEvent { cycle: now, plan, writebacks });
                self.phase = Phase::Applying { until: now + cost };
            }
            Phase::Applying { until } => {
                if now >= until {
                    self.monitor.reset(now, misses);
                } else {
                    self.phase = Phase::Applying { until };
                }
            }
        }
        Ok(())
    }

    /// Runs to completion or the cycle cap.
    pub fn run(&mut self) -> Result<RunStats, SimError> {
        while !self.done() {
            if self.cycle >= self.opts.cycles_max {
                return Err(SimError::CycleCap(self.opts.cycles_max));
            }
            self.step()?;
        }
        Ok(self.stats())
    }

    /// Current contents of every region.
    pub fn final_image(&self) -> Vec<(String, Addr, Vec<Word>)> {
        self.kernel
            .regions
            .iter()
            .map(|r| {
                let words = (0..r.words.len() as u32).map(|i| self.mem.peek_word(r.base + 4 * i)).collect();
                (r.name.clone(), r.base, words)
            })
            .collect()
    }

    pub fn stats(&self) -> RunStats {
        let image = self.final_image();
        let m = &self.mem.stats;
        let l2 = &self.mem.l2.stats;
        let dram = if self.variant == Variant::SpmOnly {
            m.dram_port_reads + m.dram_port_writes
        } else {
            l2.backing_reads + l2.backing_writes
        };
        RunStats {
            run_id: String::new(),
            kernel: String::new(),
            variant: self.variant.name().to_string(),
            kernel_digest: kernel_digest(self.kernel),
            image_digest: image_digest(image.iter().map(|(n, b, w)| (n.as_str(), *b, w.as_slice()))),
            total_cycles: self.cycle,
            active_cycles: self.active,
            stall_cycles: self.cycle - self.active,
            spm_accesses: m.spm_accesses,
            l1_accesses: m.l1_accesses(),
            l1_misses: m.l1_misses(),
            demand_misses: m.demand_misses(),
            l2_accesses: l2.reads + l2.writes,
            l2_misses: l2.read_misses + l2.write_misses,
            dram_accesses: dram,
            partitions: m.partitions.clone(),
            ra_episodes: self.episodes.len() as u64,
            ra_cycles: self.episodes.iter().map(EpisodeRecord::cycles).sum(),
            prefetch: self.mem.tracker.summary(),
            reconfigs: self.reconfigs.len() as u64,
            reconfig_cycles: self.reconfig_cycles,
            partial_observations: self.mem.l1.partial_observations,
        }
    }
}

/// Convenience wrapper: builds a simulator and runs it.
pub fn simulate(
    kernel: &KernelProgram,
    cfg: &HierarchyConfig,
    variant: Variant,
    opts: SimOptions,
) -> Result<RunStats, SimError> {
    Simulator::with_options(kernel, cfg, variant, opts)?.run()
}
