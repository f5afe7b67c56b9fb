//! Plain-text kernel files.
//!
//! ```text
//! # comment
//! grid 4 4
//! ii 2
//! trip 16
//! region input 0x1000 16 @0          # name, byte base, length in words, owner
//! region acc 0x2000 1 spm @1         # spm: preloaded into the owner's SPM
//! data input 3 42                    # region, word index, value
//! pe 0 0 1 LOAD e - - o 0x1000 0     # row col ctx op a b c dest imm [stage]
//! ```
//!
//! Operands are `n`/`e`/`s`/`w` (neighbor output), `rK` (local register),
//! `#imm` or `-`. Destinations are `rK`, `o` (output register) or `-`.
//! Numbers may be decimal, negative decimal (two's complement) or `0x` hex.

use std::fmt::Write as _;

use super::{Dest, Dir, KernelError, KernelProgram, Opcode, Operand, PeConfig, Region};
use crate::Word;

fn syntax(line: usize, msg: impl Into<String>) -> KernelError {
    KernelError::Syntax { line, msg: msg.into() }
}

fn parse_u64(tok: &str, line: usize) -> Result<u64, KernelError> {
    let parsed = if let Some(hex) = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16)
    } else {
        tok.parse::<u64>()
    };
    parsed.map_err(|_| syntax(line, format!("bad number `{tok}`")))
}

fn parse_word(tok: &str, line: usize) -> Result<Word, KernelError> {
    if let Some(neg) = tok.strip_prefix('-') {
        let v = parse_u64(neg, line)?;
        if v > 1 << 31 {
            return Err(syntax(line, format!("`{tok}` does not fit in 32 bits")));
        }
        return Ok((v as u32).wrapping_neg());
    }
    let v = parse_u64(tok, line)?;
    u32::try_from(v).map_err(|_| syntax(line, format!("`{tok}` does not fit in 32 bits")))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, KernelError> {
    parse_u64(tok, line).map(|v| v as usize)
}

fn parse_reg(tok: &str, line: usize) -> Result<u8, KernelError> {
    tok[1..].parse::<u8>().map_err(|_| syntax(line, format!("bad register `{tok}`")))
}

fn parse_operand(tok: &str, line: usize) -> Result<Operand, KernelError> {
    Ok(match tok {
        "-" => Operand::None,
        "n" | "N" => Operand::Neighbor(Dir::N),
        "e" | "E" => Operand::Neighbor(Dir::E),
        "s" | "S" => Operand::Neighbor(Dir::S),
        "w" | "W" => Operand::Neighbor(Dir::W),
        t if t.starts_with('#') => Operand::Imm(parse_word(&t[1..], line)?),
        t if t.starts_with('r') => Operand::Reg(parse_reg(t, line)?),
        t => return Err(syntax(line, format!("bad operand `{t}`"))),
    })
}

fn parse_dest(tok: &str, line: usize) -> Result<Dest, KernelError> {
    Ok(match tok {
        "-" => Dest::None,
        "o" => Dest::Out,
        t if t.starts_with('r') => Dest::Reg(parse_reg(t, line)?),
        t => return Err(syntax(line, format!("bad destination `{t}`"))),
    })
}

fn operand_str(op: Operand) -> String {
    match op {
        Operand::None => "-".into(),
        Operand::Neighbor(Dir::N) => "n".into(),
        Operand::Neighbor(Dir::E) => "e".into(),
        Operand::Neighbor(Dir::S) => "s".into(),
        Operand::Neighbor(Dir::W) => "w".into(),
        Operand::Imm(v) => format!("#{v:#x}"),
        Operand::Reg(r) => format!("r{r}"),
    }
}

fn dest_str(d: Dest) -> String {
    match d {
        Dest::None => "-".into(),
        Dest::Out => "o".into(),
        Dest::Reg(r) => format!("r{r}"),
    }
}

/// Parses a kernel file and validates the result.
pub fn parse_kernel(text: &str) -> Result<KernelProgram, KernelError> {
    let mut grid = None;
    let mut ii = None;
    let mut trip = None;
    let mut k = KernelProgram::new(0, 0, 0, 0);

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        let Some(&kw) = toks.first() else { continue };
        let want = |n: std::ops::RangeInclusive<usize>| {
            if n.contains(&toks.len()) {
                Ok(())
            } else {
                Err(syntax(line, format!("`{kw}` takes {}..={} fields", n.start() - 1, n.end() - 1)))
            }
        };
        match kw {
            "grid" => {
                want(3..=3)?;
                grid = Some((parse_usize(toks[1], line)?, parse_usize(toks[2], line)?));
            }
            "ii" => {
                want(2..=2)?;
                ii = Some(parse_usize(toks[1], line)?);
            }
            "trip" => {
                want(2..=2)?;
                trip = Some(parse_u64(toks[1], line)?);
            }
            "region" => {
                want(4..=6)?;
                let base = parse_word(toks[2], line)?;
                let len = parse_usize(toks[3], line)?;
                let mut spm = false;
                let mut crossbar = 0;
                for t in &toks[4..] {
                    if *t == "spm" {
                        spm = true;
                    } else if let Some(x) = t.strip_prefix('@') {
                        crossbar = parse_usize(x, line)?;
                    } else {
                        return Err(syntax(line, format!("bad region flag `{t}`")));
                    }
                }
                if k.region(toks[1]).is_some() {
                    return Err(syntax(line, format!("duplicate region `{}`", toks[1])));
                }
                k.regions.push(Region { name: toks[1].to_string(), base, words: vec![0; len], spm, crossbar });
            }
            "data" => {
                want(4..=4)?;
                let idx = parse_usize(toks[2], line)?;
                let value = parse_word(toks[3], line)?;
                let region =
                    k.region_mut(toks[1]).ok_or_else(|| syntax(line, format!("unknown region `{}`", toks[1])))?;
                let slot = region
                    .words
                    .get_mut(idx)
                    .ok_or_else(|| syntax(line, format!("index {idx} outside region `{}`", toks[1])))?;
                *slot = value;
            }
            "pe" => {
                want(10..=11)?;
                let row = parse_usize(toks[1], line)?;
                let col = parse_usize(toks[2], line)?;
                let ctx = parse_usize(toks[3], line)?;
                let opcode = Opcode::from_mnemonic(toks[4])
                    .ok_or_else(|| syntax(line, format!("unknown opcode `{}`", toks[4])))?;
                let cfg = PeConfig {
                    opcode,
                    src_a: parse_operand(toks[5], line)?,
                    src_b: parse_operand(toks[6], line)?,
                    src_c: parse_operand(toks[7], line)?,
                    dest: parse_dest(toks[8], line)?,
                    immediate: parse_word(toks[9], line)?,
                    stage: match toks.get(10) {
                        Some(t) => parse_u64(t, line)? as u32,
                        None => 0,
                    },
                };
                if k.pe_configs.insert((row, col, ctx), cfg).is_some() {
                    return Err(syntax(line, format!("PE ({row},{col}) context {ctx} configured twice")));
                }
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }

    let (rows, cols) = grid.ok_or_else(|| syntax(0, "missing `grid`"))?;
    k.grid_rows = rows;
    k.grid_cols = cols;
    k.initiation_interval = ii.ok_or_else(|| syntax(0, "missing `ii`"))?;
    k.trip_count = trip.ok_or_else(|| syntax(0, "missing `trip`"))?;
    k.validate()?;
    Ok(k)
}

/// `#` followed by a digit or `-` is an immediate; any other `#` opens a comment.
fn strip_comment(raw: &str) -> &str {
    let bytes = raw.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && !bytes.get(i + 1).is_some_and(|c| c.is_ascii_digit() || *c == b'-') {
            return &raw[..i];
        }
    }
    raw
}

/// Serialises a kernel so that `parse_kernel(&emit_kernel(k)) == k`.
///
/// NOP configurations are written out like any other, and only non-zero data
/// words are listed.
pub fn emit_kernel(k: &KernelProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "grid {} {}", k.grid_rows, k.grid_cols);
    let _ = writeln!(out, "ii {}", k.initiation_interval);
    let _ = writeln!(out, "trip {}", k.trip_count);
    for r in &k.regions {
        let _ = write!(out, "region {} {:#x} {}", r.name, r.base, r.words.len());
        if r.spm {
            out.push_str(" spm");
        }
        let _ = writeln!(out, " @{}", r.crossbar);
    }
    for r in &k.regions {
        for (i, w) in r.words.iter().enumerate().filter(|(_, w)| **w != 0) {
            let _ = writeln!(out, "data {} {} {:#x}", r.name, i, w);
        }
    }
    for (&(row, col, ctx), c) in &k.pe_configs {
        let _ = writeln!(
            out,
            "pe {row} {col} {ctx} {} {} {} {} {} {:#x} {}",
            c.opcode,
            operand_str(c.src_a),
            operand_str(c.src_b),
            operand_str(c.src_c),
            dest_str(c.dest),
            c.immediate,
            c.stage
        );
    }
    out
}

/// Parses `src dst weight` lines (blank lines and `#` comments allowed).
pub fn parse_edge_list(text: &str) -> Result<Vec<(u32, u32, u32)>, KernelError> {
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        match toks.as_slice() {
            [] => continue,
            [s, d, w] => edges.push((parse_word(s, line)?, parse_word(d, line)?, parse_word(w, line)?)),
            _ => return Err(syntax(line, "expected `src dst weight`")),
        }
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sample
grid 2 2
ii 2
trip 3
region input 0x100 4 @0
region acc 0x200 1 spm @0
data input 1 7
data input 3 -1
pe 0 0 0 LOAD e - - o 0x100
pe 0 1 0 ADD r0 #4 - r0 0   # bump
pe 0 1 1 ROUTE r0 - - o 0 1
";

    #[test]
    fn parses_sample() {
        let k = parse_kernel(SAMPLE).unwrap();
        assert_eq!((k.grid_rows, k.grid_cols, k.initiation_interval, k.trip_count), (2, 2, 2, 3));
        assert_eq!(k.region("input").unwrap().words, vec![0, 7, 0, u32::MAX]);
        assert!(k.region("acc").unwrap().spm);
        let add = k.config(0, 1, 0).unwrap();
        assert_eq!(add.src_b, Operand::Imm(4));
        assert_eq!(add.dest, Dest::Reg(0));
        assert_eq!(k.config(0, 1, 1).unwrap().stage, 1);
        assert_eq!(k.stages(), 2);
    }

    #[test]
    fn emit_round_trips() {
        let k = parse_kernel(SAMPLE).unwrap();
        let text = emit_kernel(&k);
        assert_eq!(parse_kernel(&text).unwrap(), k);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "grid 2 2\nii 1\ntrip 1\npe 0 0 0 FROB - - - - 0\n";
        assert!(matches!(parse_kernel(bad), Err(KernelError::Syntax { line: 4, .. })));
        let bad = "grid 2 2\nii 1\ntrip 1\ndata nowhere 0 1\n";
        assert!(matches!(parse_kernel(bad), Err(KernelError::Syntax { line: 4, .. })));
        assert!(matches!(parse_kernel("ii 1\ntrip 1\n"), Err(KernelError::Syntax { .. })));
    }

    #[test]
    fn edge_list() {
        let edges = parse_edge_list("0 1 5\n# c\n\n2 0 0x10\n").unwrap();
        assert_eq!(edges, vec![(0, 1, 5), (2, 0, 16)]);
        assert!(parse_edge_list("1 2\n").is_err());
    }
}
