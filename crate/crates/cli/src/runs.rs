//! Run plans for the `run`, `sweep` and `compare` subcommands.

use std::fmt::Write as _;
use std::str::FromStr;

use anyhow::{bail, Result};
use cgrasim::metrics::{csv_header, speedup};
use cgrasim::sim::{simulate, SimOptions};
use cgrasim::{HierarchyConfig, KernelProgram, RunStats, Variant};
use rayon::prelude::*;

/// A kernel with the label that goes into the `kernel` column.
#[derive(Clone)]
pub struct NamedKernel {
    pub label: String,
    pub kernel: KernelProgram,
}

/// One independent simulation.
pub struct Job<'a> {
    pub run_id: String,
    pub kernel: &'a NamedKernel,
    pub cfg: HierarchyConfig,
    pub variant: Variant,
}

/// Runs one job. A run that saw a virtual line only partly present fails:
/// lines are filled and evicted whole, so that is a simulator bug.
pub fn execute(job: &Job<'_>, opts: &SimOptions) -> Result<RunStats, String> {
    let mut s = simulate(&job.kernel.kernel, &job.cfg, job.variant, opts.clone()).map_err(|e| e.to_string())?;
    if s.partial_observations > 0 {
        return Err(format!("{} partial virtual-line observations", s.partial_observations));
    }
    s.run_id = job.run_id.clone();
    s.kernel = job.kernel.label.clone();
    Ok(s)
}

/// Runs every job in parallel; results keep the job order.
pub fn execute_all(jobs: &[Job<'_>], opts: &SimOptions) -> Vec<Result<RunStats, String>> {
    jobs.par_iter().map(|j| execute(j, opts)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Assoc,
    Line,
    Size,
    Mshr,
    Spm,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Assoc => "assoc",
            SweepParam::Line => "line",
            SweepParam::Size => "size",
            SweepParam::Mshr => "mshr",
            SweepParam::Spm => "spm",
        }
    }

    pub fn default_values(self) -> Vec<u64> {
        match self {
            SweepParam::Assoc => vec![1, 2, 4, 8, 16],
            SweepParam::Line => vec![16, 32, 64, 128],
            SweepParam::Size => vec![1024, 2048, 4096, 8192, 16384],
            SweepParam::Mshr => vec![1, 2, 4, 8, 16],
            SweepParam::Spm => vec![1024, 2048, 4096, 8192, 16384],
        }
    }

    /// `base` with this parameter set to `value`, validated.
    pub fn apply(self, base: &HierarchyConfig, value: u64) -> Result<HierarchyConfig> {
        let key = match self {
            SweepParam::Assoc => "l1_ways",
            SweepParam::Line => "l1_line",
            SweepParam::Size => "l1_size",
            SweepParam::Mshr => "mshr_entries",
            SweepParam::Spm => "spm_size",
        };
        let mut cfg = base.clone();
        cfg.set(key, value).map_err(anyhow::Error::msg)?;
        // The L1 line may not exceed the L2 line, so long lines widen both.
        if self == SweepParam::Line && value > cfg.l2_line as u64 {
            cfg.set("l2_line", value).map_err(anyhow::Error::msg)?;
        }
        if let Err(e) = cfg.validate() {
            bail!("{} = {value}: {e}", self.name());
        }
        Ok(cfg)
    }
}

/// Comma-separated list parsing for `--values` and similar flags.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("`{v}`: {e}")))
        .collect()
}

/// The standard CSV, with failed runs skipped. Returns the text and the
/// failures as `(run_id, message)`.
pub fn stats_csv(jobs: &[Job<'_>], results: &[Result<RunStats, String>]) -> (String, Vec<(String, String)>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (j, r) in jobs.iter().zip(results) {
        match r {
            Ok(s) => ok.push(s.clone()),
            Err(e) => failed.push((j.run_id.clone(), e.clone())),
        }
    }
    (cgrasim::metrics::csv_string(&ok), failed)
}

/// Comparison table: the standard columns followed by speedups over the
/// spm-only and cache runs of the same kernel and preset, and a status.
/// Failed runs keep their row with empty metrics and `failed: ...` status;
/// speedups that need a failed run stay empty.
pub fn compare_csv(
    jobs: &[Job<'_>],
    results: &[Result<RunStats, String>],
    group: impl Fn(&Job<'_>) -> String,
) -> String {
    let mut out = format!("{},speedup_vs_spm,speedup_vs_cache,status\n", csv_header());
    let baseline = |j: &Job<'_>, v: Variant| {
        jobs.iter()
            .zip(results)
            .find_map(|(b, r)| (b.variant == v && group(b) == group(j)).then_some(r.as_ref().ok()).flatten())
    };
    for (j, r) in jobs.iter().zip(results) {
        match r {
            Ok(s) => {
                let sp =
                    |v| baseline(j, v).and_then(|b| speedup(b, s).ok()).map(|x| format!("{x:.6}")).unwrap_or_default();
                writeln!(out, "{},{},{},ok", s.csv_row(), sp(Variant::SpmOnly), sp(Variant::Cache))
                    .expect("string write");
            }
            Err(e) => {
                let msg = e.replace([',', '\n'], ";");
                let blanks = ",".repeat(12);
                writeln!(out, "{},{},{}{},,,failed: {msg}", j.run_id, j.kernel.label, j.variant, blanks)
                    .expect("string write");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use cgrasim::kernel::{gen_gather_kernel, GatherParams};
    use cgrasim::Preset;

    fn kernel() -> NamedKernel {
        NamedKernel {
            label: "g".into(),
            kernel: gen_gather_kernel(&GatherParams { num_edges: 100, ..Default::default() }).unwrap(),
        }
    }

    #[test]
    fn sweep_values_are_validated() {
        let base = Preset::Base.config();
        assert_eq!(SweepParam::Mshr.apply(&base, 4).unwrap().mshr_entries, 4);
        assert!(SweepParam::Line.apply(&base, 24).is_err());
        let wide = SweepParam::Line.apply(&base, 128).unwrap();
        assert_eq!((wide.l1_line, wide.l2_line), (128, 128));
        assert!(SweepParam::Mshr.apply(&base, 0).is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<u64>("1, 2,4").unwrap(), vec![1, 2, 4]);
        assert!(parse_list::<u64>("1,x").is_err());
        assert!(parse_list::<u64>("").unwrap().is_empty());
    }

    #[test]
    fn compare_rows_and_failures() {
        let k = kernel();
        let jobs: Vec<Job<'_>> = Variant::ALL
            .into_iter()
            .enumerate()
            .map(|(i, v)| Job { run_id: i.to_string(), kernel: &k, cfg: Preset::Base.config(), variant: v })
            .collect();
        let mut results = execute_all(&jobs, &SimOptions::default());
        let csv = compare_csv(&jobs, &results, |_| String::new());
        assert_eq!(csv.lines().count(), 5);
        let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!((first[15], first[17]), ("1.000000", "ok"));
        results[0] = Err("cycle cap".into());
        let csv = compare_csv(&jobs, &results, |_| String::new());
        let cols = csv.lines().next().unwrap().split(',').count();
        for line in csv.lines() {
            assert_eq!(line.split(',').count(), cols, "{line}");
        }
        assert!(csv.lines().nth(1).unwrap().ends_with("failed: cycle cap"));
        // No spm-only baseline left, so that column is empty everywhere.
        assert!(csv.lines().skip(2).all(|l| l.split(',').nth(15) == Some("")));
    }
}
