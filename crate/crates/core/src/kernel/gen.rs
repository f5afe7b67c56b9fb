//! Builtin kernels, mapped by hand onto the array.
//!
//! Every generator places ops by *iteration time* `t`: an op at time `t` runs
//! in context `t % ii` with pipeline stage `t / ii`. Values travel through
//! output registers (read by neighbors one or more cycles later) or local
//! registers, and each schedule below keeps every value alive until its last
//! reader; comments next to each block list the live ranges that matter.

use super::{Dest, Dir, KernelError, KernelProgram, Opcode, Operand, PeConfig, Region};
use crate::rng::{SimRng, Stream};
use crate::{Addr, Word};

/// Multipliers of the 32-bit hash used by the random pattern kernels.
pub const HASH_K1: Word = 0x7feb_352d;
pub const HASH_K2: Word = 0x846c_a68b;

/// Regions are aligned to this so that no cache line (up to 128 bytes) is
/// shared between regions owned by different crossbars.
const REGION_ALIGN: u64 = 256;
const DATA_START: u64 = 0x1000;

const N: Operand = Operand::Neighbor(Dir::N);
const E: Operand = Operand::Neighbor(Dir::E);
const S: Operand = Operand::Neighbor(Dir::S);
const X: Operand = Operand::None;
const O: Dest = Dest::Out;

fn r(n: u8) -> Operand {
    Operand::Reg(n)
}

fn rd(n: u8) -> Dest {
    Dest::Reg(n)
}

fn imm(v: Word) -> Operand {
    Operand::Imm(v)
}

struct Sched {
    k: KernelProgram,
}

impl Sched {
    fn new(rows: usize, cols: usize, ii: usize, trip: u64) -> Self {
        Self { k: KernelProgram::new(rows, cols, ii, trip) }
    }

    #[allow(clippy::too_many_arguments)]
    fn op(
        &mut self,
        pe: (usize, usize),
        t: usize,
        opcode: Opcode,
        a: Operand,
        b: Operand,
        c: Operand,
        dest: Dest,
        immediate: Word,
    ) {
        let ii = self.k.initiation_interval;
        let cfg = PeConfig { opcode, src_a: a, src_b: b, src_c: c, dest, immediate, stage: (t / ii) as u32 };
        let prev = self.k.pe_configs.insert((pe.0, pe.1, t % ii), cfg);
        assert!(prev.is_none(), "schedule conflict at PE {pe:?} time {t}");
    }

    fn alu(&mut self, pe: (usize, usize), t: usize, opcode: Opcode, a: Operand, b: Operand, dest: Dest) {
        self.op(pe, t, opcode, a, b, X, dest, 0);
    }

    fn load(&mut self, pe: (usize, usize), t: usize, addr: Operand, offset: Addr, dest: Dest) {
        self.op(pe, t, Opcode::Load, addr, X, X, dest, offset);
    }

    fn store(&mut self, pe: (usize, usize), t: usize, addr: Operand, data: Operand, offset: Addr) {
        self.op(pe, t, Opcode::Store, addr, data, X, Dest::None, offset);
    }
}

fn align_up(v: u64) -> u64 {
    v.div_ceil(REGION_ALIGN) * REGION_ALIGN
}

/// Lays regions out back to back from `start`, each aligned.
fn layout(k: &mut KernelProgram, start: u64, regions: Vec<(&str, Vec<Word>, usize, bool)>) -> Result<(), KernelError> {
    let mut next = align_up(start);
    for (name, words, crossbar, spm) in regions {
        let end = next + words.len() as u64 * 4;
        if end > 1 << 32 {
            return Err(KernelError::AddressOverflow(format!("region `{name}` does not fit below 4 GiB")));
        }
        k.regions.push(Region { name: name.to_string(), base: next as Addr, words, spm, crossbar });
        next = align_up(end);
    }
    Ok(())
}

fn require_grid(rows: usize, cols: usize, min_rows: usize, min_cols: usize, what: &str) -> Result<(), KernelError> {
    if rows < min_rows || cols < min_cols {
        return Err(KernelError::GridTooSmall {
            rows,
            cols,
            msg: format!("{what} needs at least {min_rows}x{min_cols}"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatherParams {
    pub num_nodes: u32,
    pub num_edges: u32,
    /// Words per node feature vector; must be a power of two.
    pub feature_len: u32,
    pub seed: u64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl Default for GatherParams {
    fn default() -> Self {
        Self { num_nodes: 256, num_edges: 4096, feature_len: 1, seed: 1, grid_rows: 4, grid_cols: 4 }
    }
}

/// Synthetic graph for the gather kernel: endpoints uniform over the nodes,
/// weights and features small so products stay readable.
pub fn gen_gather_kernel(p: &GatherParams) -> Result<KernelProgram, KernelError> {
    if p.num_nodes == 0 {
        return Err(KernelError::Invalid("gather needs at least one node".into()));
    }
    let mut src = SimRng::new(p.seed, Stream::EdgeStart);
    let mut dst = SimRng::new(p.seed, Stream::EdgeEnd);
    let mut wgt = SimRng::new(p.seed, Stream::Weight);
    let edges: Vec<(u32, u32, u32)> = (0..p.num_edges)
        .map(|_| (src.below(p.num_nodes as u64) as u32, dst.below(p.num_nodes as u64) as u32, wgt.below(16) as u32 + 1))
        .collect();
    gather_kernel_from_edges(&edges, p.num_nodes, p.feature_len, p.seed, p.grid_rows, p.grid_cols)
}

/// Gather/aggregate over an explicit edge list:
/// `output[src*F + f] += weight[e] * feature[dst*F + f]` for every edge `e`
/// and feature word `f`, flattened into one loop of `edges * F` iterations.
pub fn gather_kernel_from_edges(
    edges: &[(u32, u32, u32)],
    num_nodes: u32,
    feature_len: u32,
    seed: u64,
    rows: usize,
    cols: usize,
) -> Result<KernelProgram, KernelError> {
    require_grid(rows, cols, 4, 2, "gather")?;
    if feature_len == 0 || !feature_len.is_power_of_two() {
        return Err(KernelError::Invalid(format!("feature length {feature_len} is not a power of two")));
    }
    if let Some(&(s, d, _)) = edges.iter().find(|&&(s, d, _)| s >= num_nodes || d >= num_nodes) {
        return Err(KernelError::Invalid(format!("edge ({s},{d}) references a node >= {num_nodes}")));
    }
    let f = feature_len as u64;
    let feature_words = num_nodes as u64 * f;
    if feature_words * 4 > 1 << 30 || edges.len() as u64 * 4 > 1 << 30 {
        return Err(KernelError::AddressOverflow("gather data exceeds 1 GiB".into()));
    }
    let mut feat = SimRng::new(seed, Stream::Feature);
    let features: Vec<Word> = (0..feature_words).map(|_| feat.below(256) as Word).collect();

    let trip = edges.len() as u64 * f;
    let mut s = Sched::new(rows, cols, 6, trip);
    layout(
        &mut s.k,
        DATA_START,
        vec![
            ("edge_start", edges.iter().map(|e| e.0).collect(), 0, false),
            ("weight", edges.iter().map(|e| e.2).collect(), 0, false),
            ("output", vec![0; feature_words as usize], 0, false),
            ("edge_end", edges.iter().map(|e| e.1).collect(), 1, false),
            ("feature", features, 1, false),
        ],
    )?;
    let base = |name: &str| s.k.region(name).map(|r| r.base).unwrap_or_default();
    let (b_es, b_w, b_o, b_ee, b_f) =
        (base("edge_start"), base("weight"), base("output"), base("edge_end"), base("feature"));

    let k = feature_len.trailing_zeros();
    let sh = k + 2;
    let fmask = 4 * feature_len - 1;
    let (m0, m1, m2, m3) = ((0, 0), (1, 0), (2, 0), (3, 0));
    let (c0, c1, c2, c3) = ((0, 1), (1, 1), (2, 1), (3, 1));
    use Opcode::*;

    // Every counter PE keeps c = 4i in r0. Edge byte offset is
    // (c >> k) & !3 and the feature byte offset is c & (4F - 1).

    // edge_end[e] -> d (M3.out, live t2..t8)
    s.alu(c3, 0, Lshr, r(0), imm(k), rd(1));
    s.alu(c3, 1, And, r(1), imm(!3), O);
    s.alu(c3, 2, Add, r(0), imm(4), rd(0));
    s.load(m3, 2, E, b_ee, O);

    // feature[d*F + f] -> x (M2.out, live t5..t11)
    s.alu(c2, 2, And, r(0), imm(fmask), O);
    s.alu(c2, 3, Add, r(0), imm(4), rd(0));
    s.alu(m2, 3, Shl, S, imm(sh), rd(1));
    s.alu(m2, 4, Add, r(1), E, rd(1));
    s.load(m2, 5, r(1), b_f, O);

    // weight[e] -> w (M1.r1), then p = w * x (M1.out, live t6..t12)
    s.alu(c1, 1, Lshr, r(0), imm(k), rd(1));
    s.alu(c1, 2, And, r(1), imm(!3), O);
    s.alu(c1, 3, Add, r(0), imm(4), rd(0));
    s.load(m1, 3, E, b_w, rd(1));
    s.alu(m1, 6, Mul, S, r(1), O);

    // edge_start[e] -> s, then output[s*F + f] += p. C0.out carries the edge
    // offset until t4 and the feature offset from t4 to t9.
    s.alu(c0, 2, Lshr, r(0), imm(k), rd(1));
    s.alu(c0, 3, And, r(1), imm(!3), O);
    s.alu(c0, 4, And, r(0), imm(fmask), O);
    s.alu(c0, 5, Add, r(0), imm(4), rd(0));
    s.load(m0, 4, E, b_es, rd(1));
    s.alu(m0, 5, Shl, r(1), imm(sh), rd(2));
    s.alu(m0, 6, Add, r(2), E, rd(2));
    s.load(m0, 7, r(2), b_o, rd(3));
    s.alu(m0, 8, Add, r(3), S, rd(3));
    s.store(m0, 9, r(2), r(3), b_o);

    s.k.validate()?;
    Ok(s.k)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadixParams {
    pub len: u32,
    /// log2 of the bucket count.
    pub bits: u32,
    pub shift: u32,
    pub seed: u64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl Default for RadixParams {
    fn default() -> Self {
        Self { len: 4096, bits: 8, shift: 0, seed: 1, grid_rows: 4, grid_cols: 4 }
    }
}

/// Radix histogram: `hist[(a[i] >> shift) & (2^bits - 1)] += 1`.
pub fn gen_radix_hist_kernel(p: &RadixParams) -> Result<KernelProgram, KernelError> {
    require_grid(p.grid_rows, p.grid_cols, 3, 2, "radix-hist")?;
    if p.bits == 0 || p.bits > 16 || p.shift > 31 {
        return Err(KernelError::Invalid(format!("radix bits {} / shift {} out of range", p.bits, p.shift)));
    }
    let mut rng = SimRng::new(p.seed, Stream::Radix);
    let input: Vec<Word> = (0..p.len).map(|_| rng.next_u32()).collect();
    let mut s = Sched::new(p.grid_rows, p.grid_cols, 4, p.len as u64);
    layout(&mut s.k, DATA_START, vec![("input", input, 0, false), ("hist", vec![0; 1 << p.bits], 1, false)])?;
    let b_a = s.k.region("input").map(|r| r.base).unwrap_or_default();
    let b_h = s.k.region("hist").map(|r| r.base).unwrap_or_default();
    let (m0, m1, m2, c) = ((0, 0), (1, 0), (2, 0), (0, 1));
    use Opcode::*;

    s.alu(c, 0, Route, r(0), X, O);
    s.alu(c, 1, Add, r(0), imm(4), rd(0));
    s.load(m0, 1, E, b_a, O);
    // bucket byte offset on M1.out, live t4..t8; the RMW finishes at t7,
    // before the next iteration's load at t9.
    s.alu(m1, 2, Lshr, N, imm(p.shift), rd(1));
    s.alu(m1, 3, And, r(1), imm((1 << p.bits) - 1), rd(1));
    s.alu(m1, 4, Shl, r(1), imm(2), O);
    s.load(m2, 5, N, b_h, rd(1));
    s.alu(m2, 6, Add, r(1), imm(1), rd(1));
    s.store(m2, 7, N, r(1), b_h);

    s.k.validate()?;
    Ok(s.k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    /// Same address every iteration.
    Constant,
    /// `i * stride`.
    Linear,
    /// `(i >> run_log2) * stride`: runs of repeated addresses.
    Strided,
    /// Hash of the iteration number, uniform over the range.
    RandomUniform,
    /// Running sum of random word steps in `1..=max_step`.
    IrregularStep,
    /// Random on odd iterations, linear on even ones.
    Mixed,
}

impl PatternKind {
    pub const ALL: [PatternKind; 6] = [
        PatternKind::Constant,
        PatternKind::Linear,
        PatternKind::Strided,
        PatternKind::RandomUniform,
        PatternKind::IrregularStep,
        PatternKind::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Constant => "constant",
            PatternKind::Linear => "linear",
            PatternKind::Strided => "strided",
            PatternKind::RandomUniform => "random",
            PatternKind::IrregularStep => "irregular",
            PatternKind::Mixed => "mixed",
        }
    }
}

/// A synthetic load stream. Offsets wrap within `range_bytes`, which must be
/// a power of two of at least one word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessPatternSpec {
    pub kind: PatternKind,
    pub base: Addr,
    pub range_bytes: u32,
    /// Bytes per step for linear, strided and mixed; may be negative.
    pub stride: i32,
    pub run_log2: u32,
    /// Largest irregular step in words; a power of two.
    pub max_step: u32,
    pub seed: u64,
}

impl AccessPatternSpec {
    pub fn new(kind: PatternKind, base: Addr, range_bytes: u32) -> Self {
        Self { kind, base, range_bytes, stride: 4, run_log2: 0, max_step: 8, seed: 1 }
    }

    /// 32-bit hash seed derived from `seed`.
    pub fn hash_seed(&self) -> Word {
        SimRng::new(self.seed, Stream::PatternSeed).next_u32()
    }

    fn check(&self) -> Result<(), KernelError> {
        if self.range_bytes < 4 || !self.range_bytes.is_power_of_two() {
            return Err(KernelError::Invalid(format!("range {} is not a power of two >= 4", self.range_bytes)));
        }
        if !self.base.is_multiple_of(4) || self.stride % 4 != 0 {
            return Err(KernelError::Invalid("base and stride must be word multiples".into()));
        }
        if self.kind == PatternKind::IrregularStep && (self.max_step == 0 || !self.max_step.is_power_of_two()) {
            return Err(KernelError::Invalid(format!("max step {} is not a power of two", self.max_step)));
        }
        if self.base as u64 + self.range_bytes as u64 + REGION_ALIGN > 1 << 32 {
            return Err(KernelError::AddressOverflow(format!(
                "pattern range {:#x}+{:#x} leaves no room below 4 GiB",
                self.base, self.range_bytes
            )));
        }
        Ok(())
    }
}

/// Single pattern stream: rows 0-1 load from `data` and accumulate into the
/// SPM-resident `result` word.
pub fn gen_pattern_kernel(
    spec: &AccessPatternSpec,
    len: u64,
    rows: usize,
    cols: usize,
) -> Result<KernelProgram, KernelError> {
    require_grid(rows, cols, 2, 4, "pattern kernel")?;
    spec.check()?;
    let mut s = Sched::new(rows, cols, 4, len);
    place_pattern(&mut s, 0, 0, spec, "data", "result")?;
    s.k.validate()?;
    Ok(s.k)
}

/// Two independent streams, `a` on crossbar 0 (rows 0-1) and `b` on
/// crossbar 1 (rows 2-3).
pub fn gen_dual_pattern_kernel(
    a: &AccessPatternSpec,
    b: &AccessPatternSpec,
    len: u64,
    rows: usize,
    cols: usize,
) -> Result<KernelProgram, KernelError> {
    require_grid(rows, cols, 4, 4, "dual pattern kernel")?;
    a.check()?;
    b.check()?;
    let mut s = Sched::new(rows, cols, 4, len);
    place_pattern(&mut s, 0, 0, a, "data_a", "result_a")?;
    place_pattern(&mut s, 2, 1, b, "data_b", "result_b")?;
    s.k.validate()?;
    Ok(s.k)
}

/// One uniform-random stream per array row, `specs[r]` on row `r`. Every
/// memory PE loads in the same context, so a cold cache sees one miss per
/// stream in the same cycle. Results land in `result_r`.
pub fn gen_multi_random_kernel(
    specs: &[AccessPatternSpec],
    len: u64,
    rows: usize,
    cols: usize,
) -> Result<KernelProgram, KernelError> {
    require_grid(rows, cols, specs.len().max(1), 4, "multi-stream kernel")?;
    if specs.is_empty() {
        return Err(KernelError::Invalid("multi-stream kernel needs at least one stream".into()));
    }
    let mut s = Sched::new(rows, cols, 4, len);
    for (row, spec) in specs.iter().enumerate() {
        if spec.kind != PatternKind::RandomUniform {
            return Err(KernelError::Invalid(format!("stream {row} is {}, expected random", spec.kind.name())));
        }
        spec.check()?;
        place_random_row(&mut s, row, spec, &format!("data_{row}"), &format!("result_{row}"));
    }
    s.k.validate()?;
    Ok(s.k)
}

fn place_random_row(s: &mut Sched, row: usize, spec: &AccessPatternSpec, data: &str, result: &str) {
    let crossbar = row / super::PES_PER_CROSSBAR;
    let mut rng = SimRng::new(spec.seed, Stream::PatternData);
    let words: Vec<Word> = (0..spec.range_bytes / 4).map(|_| rng.below(1000) as Word).collect();
    s.k.regions.push(Region { name: data.into(), base: spec.base, words, spm: false, crossbar });
    let res_base = align_up(spec.base as u64 + spec.range_bytes as u64) as Addr;
    s.k.regions.push(Region { name: result.into(), base: res_base, words: vec![0], spm: true, crossbar });

    let (m, g1, g2, g3) = ((row, 0), (row, 1), (row, 2), (row, 3));
    let seed = spec.hash_seed();
    use Opcode::*;
    s.alu(g3, 0, Add, r(0), imm(seed), rd(1));
    s.alu(g3, 1, Mul, r(1), imm(HASH_K1), O);
    s.alu(g3, 2, Add, r(0), imm(1), rd(0));
    s.alu(g2, 2, Lshr, E, imm(16), rd(1));
    s.alu(g2, 3, Xor, E, r(1), rd(1));
    s.alu(g2, 4, Mul, r(1), imm(HASH_K2), O);
    s.alu(g1, 5, Lshr, E, imm(16), rd(1));
    s.alu(g1, 6, Xor, E, r(1), rd(1));
    s.alu(g1, 7, And, r(1), imm((spec.range_bytes - 1) & !3), O);
    // Load in r2, running sum in r1.
    s.load(m, 8, E, spec.base, rd(2));
    s.alu(m, 9, Add, r(1), r(2), rd(1));
    s.store(m, 10, X, r(1), res_base);
}

fn place_pattern(
    s: &mut Sched,
    top: usize,
    crossbar: usize,
    spec: &AccessPatternSpec,
    data: &str,
    result: &str,
) -> Result<(), KernelError> {
    let mut rng = SimRng::new(spec.seed, Stream::PatternData);
    let words: Vec<Word> = (0..spec.range_bytes / 4).map(|_| rng.below(1000) as Word).collect();
    s.k.regions.push(Region { name: data.into(), base: spec.base, words, spm: false, crossbar });
    let res_base = align_up(spec.base as u64 + spec.range_bytes as u64) as Addr;
    s.k.regions.push(Region { name: result.into(), base: res_base, words: vec![0], spm: true, crossbar });

    let base = spec.base;
    let wrap = spec.range_bytes - 1;
    let stride = spec.stride as Word;
    let seed = spec.hash_seed();
    let (mst, mld) = ((top, 0), (top + 1, 0));
    let (g1, g2, g3) = ((top + 1, 1), (top + 1, 2), (top + 1, 3));
    let (h1, h2) = ((top, 1), (top, 2));
    use Opcode::*;

    // Hash of i + seed; G1 ends up holding h (in r1) at t6.
    let hash = |s: &mut Sched| {
        s.alu(g3, 0, Add, r(0), imm(seed), rd(1));
        s.alu(g3, 1, Mul, r(1), imm(HASH_K1), O);
        s.alu(g3, 2, Add, r(0), imm(1), rd(0));
        s.alu(g2, 2, Lshr, E, imm(16), rd(1));
        s.alu(g2, 3, Xor, E, r(1), rd(1));
        s.alu(g2, 4, Mul, r(1), imm(HASH_K2), O);
        s.alu(g1, 5, Lshr, E, imm(16), rd(1));
        s.alu(g1, 6, Xor, E, r(1), rd(1));
    };
    // Accumulate the loaded value at t and store the running sum at t + 1.
    let accumulate = |s: &mut Sched, t: usize| {
        s.alu(mst, t, Add, r(1), S, rd(1));
        s.store(mst, t + 1, X, r(1), res_base);
    };

    match spec.kind {
        PatternKind::Constant => {
            s.op(g1, 0, Const, X, X, X, O, 0);
            s.load(mld, 1, E, base, O);
            accumulate(s, 2);
        }
        PatternKind::Linear | PatternKind::Strided => {
            let run = if spec.kind == PatternKind::Strided { spec.run_log2 } else { 0 };
            s.alu(g1, 0, Lshr, r(0), imm(run), rd(1));
            s.alu(g1, 1, Mul, r(1), imm(stride), rd(1));
            s.alu(g1, 2, And, r(1), imm(wrap), O);
            s.alu(g1, 3, Add, r(0), imm(1), rd(0));
            s.load(mld, 3, E, base, O);
            accumulate(s, 4);
        }
        PatternKind::RandomUniform => {
            hash(s);
            s.alu(g1, 7, And, r(1), imm(wrap & !3), O);
            s.load(mld, 8, E, base, O);
            accumulate(s, 9);
        }
        PatternKind::IrregularStep => {
            hash(s);
            s.alu(g1, 7, And, r(1), imm((spec.max_step - 1) << 2), rd(1));
            s.alu(g1, 8, Add, r(1), imm(4), O);
            s.alu(mld, 9, Add, r(1), E, rd(1));
            s.alu(mld, 10, And, r(1), imm(wrap), rd(2));
            s.load(mld, 11, r(2), base, O);
            accumulate(s, 12);
        }
        PatternKind::Mixed => {
            hash(s);
            s.alu(g1, 7, And, r(1), imm(wrap & !3), O);
            s.alu(h2, 6, And, r(0), imm(1), O);
            s.alu(h2, 7, Add, r(0), imm(1), rd(0));
            s.alu(h1, 5, Mul, r(0), imm(stride), rd(1));
            s.alu(h1, 6, And, r(1), imm(wrap), rd(1));
            s.alu(h1, 7, Add, r(0), imm(1), rd(0));
            s.op(h1, 8, Select, E, S, r(1), O, 0);
            s.alu(mst, 9, Route, E, X, O);
            s.load(mld, 10, N, base, O);
            accumulate(s, 11);
        }
    }
    Ok(())
}
