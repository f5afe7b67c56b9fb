//! Builtin kernels selectable by name, plus loading kernel files.

use std::path::Path;

use anyhow::{bail, Context, Result};
use cgrasim::kernel::{
    gather_kernel_from_edges, gen_dual_pattern_kernel, gen_gather_kernel, gen_multi_random_kernel, gen_pattern_kernel,
    gen_radix_hist_kernel, parse_edge_list, parse_kernel, AccessPatternSpec, GatherParams, PatternKind, RadixParams,
};
use cgrasim::rng::split_seed;
use cgrasim::KernelProgram;
use clap::Args;

pub const NAMES: [&str; 10] =
    ["gather", "radix", "constant", "linear", "strided", "random", "irregular", "mixed", "dual", "multi"];

/// Shape parameters shared by the builtins.
#[derive(Debug, Clone, Args)]
pub struct BuiltinParams {
    /// Edges of the gather graph.
    #[arg(long, default_value_t = 4096)]
    pub edges: u32,
    /// Nodes of the gather graph.
    #[arg(long, default_value_t = 256)]
    pub nodes: u32,
    /// Words per gather feature vector (power of two).
    #[arg(long, default_value_t = 1)]
    pub feature_len: u32,
    /// Edge list (`src dst [weight]` per line) replacing the synthetic graph.
    #[arg(long)]
    pub edge_list: Option<std::path::PathBuf>,
    /// Iterations of the pattern and radix kernels.
    #[arg(long, default_value_t = 4096)]
    pub len: u64,
    /// Bytes covered by each pattern stream (power of two).
    #[arg(long, default_value_t = 16384)]
    pub range: u32,
}

fn pattern_kind(name: &str) -> Option<PatternKind> {
    PatternKind::ALL.into_iter().find(|k| k.name() == name)
}

fn stream(kind: PatternKind, base: u32, range: u32, seed: u64) -> AccessPatternSpec {
    let mut s = AccessPatternSpec::new(kind, base, range);
    s.seed = seed;
    s
}

/// Builds builtin `name` from `seed`. Sub-streams of multi-stream kernels
/// take `split_seed(seed, i)`.
pub fn build(name: &str, p: &BuiltinParams, seed: u64) -> Result<KernelProgram> {
    let k = match name {
        "gather" => match &p.edge_list {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let edges = parse_edge_list(&text)?;
                let nodes = edges.iter().map(|&(s, d, _)| s.max(d) + 1).max().unwrap_or(1).max(p.nodes);
                gather_kernel_from_edges(&edges, nodes, p.feature_len, seed, 4, 4)?
            }
            None => gen_gather_kernel(&GatherParams {
                num_nodes: p.nodes,
                num_edges: p.edges,
                feature_len: p.feature_len,
                seed,
                ..GatherParams::default()
            })?,
        },
        "radix" => {
            let len = u32::try_from(p.len).context("radix length exceeds u32")?;
            gen_radix_hist_kernel(&RadixParams { len, seed, ..RadixParams::default() })?
        }
        "dual" => {
            let a = stream(PatternKind::Linear, 0x4000, p.range.min(4096), split_seed(seed, 0));
            let b_base = 0x4000 + 2 * p.range.max(4096);
            let b = stream(PatternKind::RandomUniform, b_base, p.range, split_seed(seed, 1));
            gen_dual_pattern_kernel(&a, &b, p.len, 4, 4)?
        }
        "multi" => {
            let specs: Vec<_> = (0..4u32)
                .map(|i| {
                    stream(PatternKind::RandomUniform, 0x4000 + 2 * p.range * i, p.range, split_seed(seed, i as u64))
                })
                .collect();
            gen_multi_random_kernel(&specs, p.len, 4, 4)?
        }
        other => match pattern_kind(other) {
            Some(kind) => gen_pattern_kernel(&stream(kind, 0x4000, p.range, seed), p.len, 4, 4)?,
            None => bail!("unknown builtin `{other}` (expected one of {})", NAMES.join(", ")),
        },
    };
    Ok(k)
}

pub fn load(path: &Path) -> Result<KernelProgram> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_kernel(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Marks regions SPM-resident, smallest first (ties in region order), while
/// they fit in their crossbar's SPM next to the regions already placed there.
pub fn fit_spm(k: &mut KernelProgram, spm_size: u32) {
    let mut used = vec![0u64; k.crossbars()];
    for r in k.regions.iter().filter(|r| r.spm) {
        used[r.crossbar] += r.len_bytes();
    }
    let mut order: Vec<usize> = (0..k.regions.len()).filter(|&i| !k.regions[i].spm).collect();
    order.sort_by_key(|&i| k.regions[i].len_bytes());
    for i in order {
        let r = &mut k.regions[i];
        if used[r.crossbar] + r.len_bytes() <= spm_size as u64 {
            used[r.crossbar] += r.len_bytes();
            r.spm = true;
        }
    }
}

/// CSV-safe label for a kernel file.
pub fn file_label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().replace(',', "_")).unwrap_or_else(|| "kernel".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct P {
        #[command(flatten)]
        p: BuiltinParams,
    }

    fn params(len: u64) -> BuiltinParams {
        let mut p = P::parse_from(["x"]).p;
        p.len = len;
        p.edges = 64;
        p
    }

    #[test]
    fn every_builtin_builds() {
        for name in NAMES {
            let k = build(name, &params(64), 7).unwrap();
            k.validate().unwrap();
        }
        assert!(build("nope", &params(64), 7).is_err());
    }

    #[test]
    fn fit_spm_respects_capacity() {
        let mut k = build("gather", &params(64), 1).unwrap();
        fit_spm(&mut k, 1024);
        let cfg = cgrasim::HierarchyConfig { spm_size: 1024, ..cgrasim::Preset::Base.config() };
        cfg.check_kernel(&k).unwrap();
        assert!(k.regions.iter().any(|r| r.spm));
        assert!(k.regions.iter().any(|r| !r.spm));
        fit_spm(&mut k, 1 << 20);
        assert!(k.regions.iter().all(|r| r.spm));
    }

    #[test]
    fn seed_changes_data() {
        let a = build("gather", &params(64), 1).unwrap();
        let b = build("gather", &params(64), 2).unwrap();
        assert_ne!(a.regions, b.regions);
        assert_eq!(a.regions, build("gather", &params(64), 1).unwrap().regions);
    }
}
