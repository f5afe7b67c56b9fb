//! The PE grid.
//!
//! Every cycle all PEs read start-of-cycle state (neighbor output registers
//! and local registers), then results are committed together. Edge-column
//! memory ops are handed to a [`MemoryPort`] in row order. A load that cannot
//! be answered immediately stays pending and freezes the whole array until it
//! is filled; a request the memory refuses (MSHR or store buffer full) is
//! retried on the following cycles before the context advances.

use thiserror::Error;

use crate::kernel::{Dest, KernelProgram, Opcode, Operand, PeConfig, REGS_PER_PE};
use crate::{Cycle, Word};

/// A datapath word plus the runahead "dummy" flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TaggedWord {
    pub value: Word,
    pub dummy: bool,
}

impl TaggedWord {
    pub const fn clean(value: Word) -> Self {
        Self { value, dummy: false }
    }

    pub const fn dummy(value: Word) -> Self {
        Self { value, dummy: true }
    }
}

/// Executes a computational opcode with wrapping 32-bit semantics.
///
/// The dummy flag of the result is the OR of every operand the opcode
/// consumes, including the SELECT condition and shift amounts. `CONST`
/// returns `a`, so callers pass the immediate there.
pub fn alu_exec(op: Opcode, a: TaggedWord, b: TaggedWord, c: TaggedWord) -> TaggedWord {
    let (x, y, z) = (a.value, b.value, c.value);
    let value = match op {
        Opcode::Add => x.wrapping_add(y),
        Opcode::Sub => x.wrapping_sub(y),
        Opcode::Mul => x.wrapping_mul(y),
        Opcode::And => x & y,
        Opcode::Or => x | y,
        Opcode::Xor => x ^ y,
        Opcode::Shl => x << (y & 31),
        Opcode::Lshr => x >> (y & 31),
        Opcode::Ashr => ((x as i32) >> (y & 31)) as u32,
        Opcode::CmpLt => ((x as i32) < (y as i32)) as u32,
        Opcode::Select => {
            if x != 0 {
                y
            } else {
                z
            }
        }
        Opcode::Const | Opcode::Route => x,
        Opcode::Load | Opcode::Store | Opcode::Nop => {
            debug_assert!(false, "{op} is not computational");
            0
        }
    };
    let dummy = match op.arity() {
        0 => false,
        1 => a.dummy,
        2 => a.dummy | b.dummy,
        _ => a.dummy | b.dummy | c.dummy,
    };
    TaggedWord { value, dummy }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemKind {
    Load,
    Store,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryRequest {
    pub kind: MemKind,
    pub address: TaggedWord,
    /// Store data; clean zero for loads.
    pub data: TaggedWord,
    pub row: usize,
    pub col: usize,
    /// Where a load result goes.
    pub dest: Dest,
    pub issue_cycle: Cycle,
}

/// Answer of the memory system to one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryResponse {
    /// Load data, usable from the next cycle.
    Data(TaggedWord),
    /// Store absorbed.
    Accepted,
    /// Load miss; the value arrives later through [`PeArrayState::fill`].
    Pending(u64),
    /// Structural hazard; resend next cycle.
    Retry,
}

pub trait MemoryPort {
    fn access(&mut self, req: &MemoryRequest) -> MemoryResponse;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Normal,
    Runahead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingLoad {
    pub request_id: u64,
    pub row: usize,
    pub col: usize,
    pub dest: Dest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PeState {
    pub regs: [TaggedWord; REGS_PER_PE],
    pub out: TaggedWord,
}

/// Everything that a runahead snapshot captures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayCore {
    pub pes: Vec<PeState>,
    pub context: usize,
    /// Loop window: one pass over all contexts.
    pub window: u64,
    pub pending_loads: Vec<PendingLoad>,
    pub retry: Vec<MemoryRequest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// A context executed.
    Executed,
    /// Waiting on outstanding load misses.
    Stalled,
    /// Only refused requests were resent.
    Retried,
    /// The loop has finished.
    Idle,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PeArrayError {
    #[error("fill for unknown request id {0}")]
    UnknownRequest(u64),
    #[error("cannot save state while already in runahead mode")]
    SaveInRunahead,
    #[error("cannot restore state in normal mode")]
    RestoreInNormal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeArrayState {
    pub rows: usize,
    pub cols: usize,
    pub ii: usize,
    pub trip_count: u64,
    pub windows: u64,
    pub mode: Mode,
    pub core: ArrayCore,
    pub shadow: Option<ArrayCore>,
}

impl PeArrayState {
    pub fn new(k: &KernelProgram) -> Self {
        Self {
            rows: k.grid_rows,
            cols: k.grid_cols,
            ii: k.initiation_interval,
            trip_count: k.trip_count,
            windows: k.windows(),
            mode: Mode::Normal,
            core: ArrayCore {
                pes: vec![PeState::default(); k.grid_rows * k.grid_cols],
                context: 0,
                window: 0,
                pending_loads: Vec::new(),
                retry: Vec::new(),
            },
            shadow: None,
        }
    }

    pub fn pe(&self, row: usize, col: usize) -> &PeState {
        &self.core.pes[row * self.cols + col]
    }

    pub fn loop_done(&self) -> bool {
        self.core.window >= self.windows
    }

    /// Loop finished and no request outstanding.
    pub fn quiescent(&self) -> bool {
        self.loop_done() && self.core.pending_loads.is_empty() && self.core.retry.is_empty()
    }

    pub fn stalled(&self) -> bool {
        !self.core.pending_loads.is_empty()
    }

    fn active(&self, cfg: &PeConfig) -> bool {
        let s = cfg.stage as u64;
        self.core.window >= s && self.core.window - s < self.trip_count
    }

    fn read(&self, row: usize, col: usize, op: Operand) -> TaggedWord {
        match op {
            Operand::Neighbor(d) => match d.neighbor(row, col, self.rows, self.cols) {
                Some((r, c)) => self.pe(r, c).out,
                None => TaggedWord::default(),
            },
            Operand::Reg(r) => self.pe(row, col).regs[r as usize],
            Operand::Imm(v) => TaggedWord::clean(v),
            Operand::None => TaggedWord::default(),
        }
    }

    fn write(core: &mut ArrayCore, cols: usize, row: usize, col: usize, dest: Dest, v: TaggedWord) {
        let pe = &mut core.pes[row * cols + col];
        match dest {
            Dest::Reg(r) => pe.regs[r as usize] = v,
            Dest::Out => pe.out = v,
            Dest::None => {}
        }
    }

    fn advance(&mut self) {
        self.core.context += 1;
        if self.core.context == self.ii {
            self.core.context = 0;
            self.core.window += 1;
        }
    }

    /// Applies a memory answer to `req`; returns false if it must be retried.
    fn settle(&mut self, req: &MemoryRequest, resp: MemoryResponse) -> bool {
        match resp {
            MemoryResponse::Data(v) => {
                Self::write(&mut self.core, self.cols, req.row, req.col, req.dest, v);
                true
            }
            MemoryResponse::Accepted => true,
            MemoryResponse::Pending(id) => {
                self.core.pending_loads.push(PendingLoad {
                    request_id: id,
                    row: req.row,
                    col: req.col,
                    dest: req.dest,
                });
                true
            }
            MemoryResponse::Retry => false,
        }
    }

    /// One clock cycle of the array.
    pub fn step(&mut self, k: &KernelProgram, port: &mut dyn MemoryPort, cycle: Cycle) -> StepOutcome {
        if self.stalled() {
            return StepOutcome::Stalled;
        }
        if !self.core.retry.is_empty() {
            let reqs = std::mem::take(&mut self.core.retry);
            for req in reqs {
                let resp = port.access(&req);
                if !self.settle(&req, resp) {
                    self.core.retry.push(req);
                }
            }
            if self.core.retry.is_empty() {
                self.advance();
            }
            return StepOutcome::Retried;
        }
        if self.loop_done() {
            return StepOutcome::Idle;
        }

        let ctx = self.core.context;
        let mut results: Vec<(usize, usize, Dest, TaggedWord)> = Vec::new();
        let mut requests: Vec<MemoryRequest> = Vec::new();
        for row in 0..self.rows {
            for col in 0..self.cols {
                let Some(cfg) = k.config(row, col, ctx) else { continue };
                if !self.active(cfg) {
                    continue;
                }
                let a = self.read(row, col, cfg.src_a);
                let b = self.read(row, col, cfg.src_b);
                let c = self.read(row, col, cfg.src_c);
                match cfg.opcode {
                    Opcode::Nop => {}
                    Opcode::Load | Opcode::Store => {
                        let address = TaggedWord { value: a.value.wrapping_add(cfg.immediate), dummy: a.dummy };
                        let is_store = cfg.opcode == Opcode::Store;
                        requests.push(MemoryRequest {
                            kind: if is_store { MemKind::Store } else { MemKind::Load },
                            address,
                            data: if is_store { b } else { TaggedWord::default() },
                            row,
                            col,
                            dest: if is_store { Dest::None } else { cfg.dest },
                            issue_cycle: cycle,
                        });
                    }
                    Opcode::Const => {
                        results.push((row, col, cfg.dest, TaggedWord::clean(cfg.immediate)));
                    }
                    op => results.push((row, col, cfg.dest, alu_exec(op, a, b, c))),
                }
            }
        }
        for (row, col, dest, v) in results {
            Self::write(&mut self.core, self.cols, row, col, dest, v);
        }
        for req in requests {
            let resp = port.access(&req);
            if !self.settle(&req, resp) {
                self.core.retry.push(req);
            }
        }
        if self.core.retry.is_empty() {
            self.advance();
        }
        StepOutcome::Executed
    }

    /// Delivers the data of a pending load. In runahead mode the load belongs
    /// to the snapshot, so the shadow copy receives it.
    pub fn fill(&mut self, request_id: u64, value: Word) -> Result<(), PeArrayError> {
        let cols = self.cols;
        let core = match self.mode {
            Mode::Normal => &mut self.core,
            Mode::Runahead => self.shadow.as_mut().ok_or(PeArrayError::RestoreInNormal)?,
        };
        let pos = core
            .pending_loads
            .iter()
            .position(|p| p.request_id == request_id)
            .ok_or(PeArrayError::UnknownRequest(request_id))?;
        let p = core.pending_loads.remove(pos);
        Self::write(core, cols, p.row, p.col, p.dest, TaggedWord::clean(value));
        Ok(())
    }

    /// Pending loads of the snapshot (runahead) or of the live state (normal).
    pub fn outstanding_loads(&self) -> &[PendingLoad] {
        match (&self.mode, &self.shadow) {
            (Mode::Runahead, Some(s)) => &s.pending_loads,
            _ => &self.core.pending_loads,
        }
    }

    pub fn save_state(&mut self) -> Result<(), PeArrayError> {
        if self.mode == Mode::Runahead {
            return Err(PeArrayError::SaveInRunahead);
        }
        self.shadow = Some(self.core.clone());
        self.mode = Mode::Runahead;
        Ok(())
    }

    pub fn restore_state(&mut self) -> Result<(), PeArrayError> {
        if self.mode == Mode::Normal {
            return Err(PeArrayError::RestoreInNormal);
        }
        self.core = self.shadow.take().ok_or(PeArrayError::RestoreInNormal)?;
        self.mode = Mode::Normal;
        Ok(())
    }

    /// Marks every outstanding load destination dummy and drops refused
    /// requests so the live (runahead) state can keep running. Returns the
    /// number of registers poisoned.
    pub fn poison_outstanding(&mut self) -> usize {
        let cols = self.cols;
        let mut poisoned = 0;
        let pending = std::mem::take(&mut self.core.pending_loads);
        for p in &pending {
            Self::write(&mut self.core, cols, p.row, p.col, p.dest, TaggedWord::dummy(0));
            poisoned += (p.dest != Dest::None) as usize;
        }
        let retry = std::mem::take(&mut self.core.retry);
        if !retry.is_empty() {
            for r in retry.iter().filter(|r| r.kind == MemKind::Load) {
                Self::write(&mut self.core, cols, r.row, r.col, r.dest, TaggedWord::dummy(0));
                poisoned += (r.dest != Dest::None) as usize;
            }
            self.advance();
        }
        poisoned
    }

    pub fn any_dummy(&self) -> bool {
        self.core.pes.iter().any(|pe| pe.out.dummy || pe.regs.iter().any(|r| r.dummy))
    }
}
