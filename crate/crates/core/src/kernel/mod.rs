//! Mapped kernel representation.
//!
//! A [`KernelProgram`] is what a CGRA mapper would hand to the array: one
//! configuration per PE and context, a modulo-scheduled loop of
//! `trip_count` iterations, and the initial memory image. Configurations
//! carry a pipeline stage so that software-pipelined loops get their prologue
//! and epilogue by predication (see [`PeConfig::stage`]).

mod format;
mod gen;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::{Addr, Word};

pub use format::{emit_kernel, parse_edge_list, parse_kernel};
pub use gen::{
    gather_kernel_from_edges, gen_dual_pattern_kernel, gen_gather_kernel, gen_multi_random_kernel, gen_pattern_kernel,
    gen_radix_hist_kernel, AccessPatternSpec, GatherParams, PatternKind, RadixParams, HASH_K1, HASH_K2,
};

/// Registers per PE.
pub const REGS_PER_PE: usize = 8;
/// Edge PEs sharing one crossbar (and therefore one virtual SPM).
pub const PES_PER_CROSSBAR: usize = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("PE ({row},{col}) context {ctx}: {msg}")]
    Placement { row: usize, col: usize, ctx: usize, msg: String },
    #[error("regions `{0}` and `{1}` overlap")]
    Overlap(String, String),
    #[error("invalid kernel: {0}")]
    Invalid(String),
    #[error("grid {rows}x{cols} is too small: {msg}")]
    GridTooSmall { rows: usize, cols: usize, msg: String },
    #[error("address overflow: {0}")]
    AddressOverflow(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Lshr,
    Ashr,
    CmpLt,
    Select,
    Const,
    Route,
    Load,
    Store,
    Nop,
}

impl Opcode {
    pub const ALL: [Opcode; 16] = [
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::And,
        Opcode::Or,
        Opcode::Xor,
        Opcode::Shl,
        Opcode::Lshr,
        Opcode::Ashr,
        Opcode::CmpLt,
        Opcode::Select,
        Opcode::Const,
        Opcode::Route,
        Opcode::Load,
        Opcode::Store,
        Opcode::Nop,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Mul => "MUL",
            Opcode::And => "AND",
            Opcode::Or => "OR",
            Opcode::Xor => "XOR",
            Opcode::Shl => "SHL",
            Opcode::Lshr => "LSHR",
            Opcode::Ashr => "ASHR",
            Opcode::CmpLt => "CMP_LT",
            Opcode::Select => "SELECT",
            Opcode::Const => "CONST",
            Opcode::Route => "ROUTE",
            Opcode::Load => "LOAD",
            Opcode::Store => "STORE",
            Opcode::Nop => "NOP",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL.iter().copied().find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }

    pub fn is_memory(self) -> bool {
        matches!(self, Opcode::Load | Opcode::Store)
    }

    /// Number of source operands the op consumes (a, then b, then c).
    pub fn arity(self) -> usize {
        match self {
            Opcode::Const | Opcode::Nop => 0,
            Opcode::Route | Opcode::Load => 1,
            Opcode::Select => 3,
            _ => 2,
        }
    }

    /// Whether the op produces a value written to its destination.
    pub fn writes_result(self) -> bool {
        !matches!(self, Opcode::Store | Opcode::Nop)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    N,
    E,
    S,
    W,
}

impl Dir {
    /// Neighbor coordinates, if inside a `rows` x `cols` grid.
    pub fn neighbor(self, row: usize, col: usize, rows: usize, cols: usize) -> Option<(usize, usize)> {
        match self {
            Dir::N => row.checked_sub(1).map(|r| (r, col)),
            Dir::S => (row + 1 < rows).then_some((row + 1, col)),
            Dir::W => col.checked_sub(1).map(|c| (row, c)),
            Dir::E => (col + 1 < cols).then_some((row, col + 1)),
        }
    }
}

/// Where an operand comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    /// Output register of the neighbor in that direction.
    Neighbor(Dir),
    /// Local register.
    Reg(u8),
    /// Inline immediate.
    Imm(Word),
    /// Unused; reads as a clean zero.
    None,
}

/// Where a result goes. A PE's output register is what neighbors see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Reg(u8),
    Out,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeConfig {
    pub opcode: Opcode,
    pub src_a: Operand,
    pub src_b: Operand,
    pub src_c: Operand,
    pub dest: Dest,
    /// CONST value; address offset for LOAD/STORE; ignored otherwise.
    pub immediate: Word,
    /// Pipeline stage. In loop window `w` the op acts for iteration
    /// `w - stage` and is predicated off unless that lies in `0..trip_count`.
    pub stage: u32,
}

impl PeConfig {
    pub fn nop() -> Self {
        Self {
            opcode: Opcode::Nop,
            src_a: Operand::None,
            src_b: Operand::None,
            src_c: Operand::None,
            dest: Dest::None,
            immediate: 0,
            stage: 0,
        }
    }

    pub fn sources(&self) -> [Operand; 3] {
        [self.src_a, self.src_b, self.src_c]
    }
}

/// A named, contiguous range of words in the simulated address space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    pub base: Addr,
    pub words: Vec<Word>,
    /// Preloaded into the owning crossbar's SPM.
    pub spm: bool,
    /// Virtual SPM (crossbar) owning the region.
    pub crossbar: usize,
}

impl Region {
    pub fn len_bytes(&self) -> u64 {
        self.words.len() as u64 * 4
    }

    pub fn end(&self) -> u64 {
        self.base as u64 + self.len_bytes()
    }

    pub fn contains(&self, addr: Addr) -> bool {
        addr >= self.base && (addr as u64) < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelProgram {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub initiation_interval: usize,
    pub trip_count: u64,
    pub pe_configs: BTreeMap<(usize, usize, usize), PeConfig>,
    /// Initial memory image, one entry per region.
    pub regions: Vec<Region>,
}

/// Only the left edge column talks to memory.
pub fn is_memory_column(col: usize) -> bool {
    col == 0
}

impl KernelProgram {
    pub fn new(grid_rows: usize, grid_cols: usize, initiation_interval: usize, trip_count: u64) -> Self {
        Self { grid_rows, grid_cols, initiation_interval, trip_count, pe_configs: BTreeMap::new(), regions: Vec::new() }
    }

    pub fn config(&self, row: usize, col: usize, ctx: usize) -> Option<&PeConfig> {
        self.pe_configs.get(&(row, col, ctx))
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn region_mut(&mut self, name: &str) -> Option<&mut Region> {
        self.regions.iter_mut().find(|r| r.name == name)
    }

    pub fn region_at(&self, addr: Addr) -> Option<&Region> {
        self.regions.iter().find(|r| r.contains(addr))
    }

    pub fn spm_resident(&self) -> impl Iterator<Item = &str> {
        self.regions.iter().filter(|r| r.spm).map(|r| r.name.as_str())
    }

    /// Number of pipeline stages (1 for unpipelined loops).
    pub fn stages(&self) -> u64 {
        self.pe_configs.values().map(|c| c.stage as u64).max().unwrap_or(0) + 1
    }

    /// Loop windows (passes over all contexts) needed to finish every iteration.
    pub fn windows(&self) -> u64 {
        if self.trip_count == 0 {
            0
        } else {
            self.trip_count + self.stages() - 1
        }
    }

    /// Number of crossbars implied by the grid.
    pub fn crossbars(&self) -> usize {
        self.grid_rows.div_ceil(PES_PER_CROSSBAR)
    }

    /// PEs carrying at least one LOAD or STORE, in row order.
    pub fn memory_pes(&self) -> Vec<(usize, usize)> {
        let mut pes: Vec<(usize, usize)> =
            self.pe_configs.iter().filter(|(_, c)| c.opcode.is_memory()).map(|(&(r, c, _), _)| (r, c)).collect();
        pes.sort_unstable();
        pes.dedup();
        pes
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(KernelError::Invalid("grid dimensions must be positive".into()));
        }
        if self.initiation_interval == 0 {
            return Err(KernelError::Invalid("initiation interval must be positive".into()));
        }
        for (&(row, col, ctx), cfg) in &self.pe_configs {
            let placement = |msg: String| KernelError::Placement { row, col, ctx, msg };
            if row >= self.grid_rows || col >= self.grid_cols || ctx >= self.initiation_interval {
                return Err(placement("outside the grid or context range".into()));
            }
            if cfg.opcode.is_memory() && !is_memory_column(col) {
                return Err(placement(format!("{} on a non-edge PE", cfg.opcode)));
            }
            for src in cfg.sources() {
                match src {
                    Operand::Neighbor(d) => {
                        if d.neighbor(row, col, self.grid_rows, self.grid_cols).is_none() {
                            return Err(placement(format!("no neighbor to the {d:?}")));
                        }
                    }
                    Operand::Reg(r) if r as usize >= REGS_PER_PE => {
                        return Err(placement(format!("register r{r} out of range")));
                    }
                    _ => {}
                }
            }
            if let Dest::Reg(r) = cfg.dest {
                if r as usize >= REGS_PER_PE {
                    return Err(placement(format!("register r{r} out of range")));
                }
            }
        }
        for (i, a) in self.regions.iter().enumerate() {
            if a.base % 4 != 0 {
                return Err(KernelError::Invalid(format!("region `{}` base is not word aligned", a.name)));
            }
            if a.end() > 1u64 << 32 {
                return Err(KernelError::AddressOverflow(format!("region `{}` exceeds 32-bit space", a.name)));
            }
            if a.crossbar >= self.crossbars() {
                return Err(KernelError::Invalid(format!(
                    "region `{}` owned by crossbar {} but the grid has {}",
                    a.name,
                    a.crossbar,
                    self.crossbars()
                )));
            }
            for b in &self.regions[i + 1..] {
                if a.name == b.name {
                    return Err(KernelError::Invalid(format!("duplicate region `{}`", a.name)));
                }
                let disjoint = a.end() <= b.base as u64 || b.end() <= a.base as u64;
                if !disjoint && a.len_bytes() > 0 && b.len_bytes() > 0 {
                    return Err(KernelError::Overlap(a.name.clone(), b.name.clone()));
                }
            }
        }
        Ok(())
    }
}
