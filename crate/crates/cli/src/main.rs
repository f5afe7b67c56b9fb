mod builtin;
mod runs;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cgrasim::rng::split_seed;
use cgrasim::sim::SimOptions;
use cgrasim::{HierarchyConfig, Preset, Variant};
use clap::{Args, Parser, Subcommand};

use builtin::BuiltinParams;
use runs::{Job, NamedKernel, SweepParam};

#[derive(Parser)]
#[command(name = "cgrasim", version, about = "Cycle-accurate CGRA memory-subsystem simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one kernel under one variant and emit a CSV row.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "cache")]
        variant: Variant,
        #[command(flatten)]
        common: Common,
    },
    /// Run one kernel once per value of a cache parameter.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values; defaults depend on the parameter.
        #[arg(long)]
        values: Option<String>,
        #[arg(long, default_value = "cache")]
        variant: Variant,
        #[command(flatten)]
        common: Common,
    },
    /// Run every kernel under every variant and report speedups.
    Compare {
        /// Builtins to include; repeatable or comma-separated.
        #[arg(long = "builtin", value_delimiter = ',')]
        builtins: Vec<String>,
        /// Kernel files to include; repeatable.
        #[arg(long = "kernel")]
        kernels: Vec<PathBuf>,
        /// Variants to run, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "spm-only,cache,runahead,reconfig")]
        variants: Vec<Variant>,
        /// Presets to run, comma-separated; overrides `--preset`.
        #[arg(long, value_delimiter = ',')]
        presets: Vec<Preset>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a builtin kernel in the kernel file format.
    Kernel {
        #[arg(long)]
        builtin: String,
        /// Root seed, expanded as for `run`.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        params: BuiltinParams,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Kernel file.
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Builtin kernel name.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "base")]
    preset: Preset,
    /// Configuration file (`preset = NAME` and `key = value` lines); replaces `--preset`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed. Kernel `j` of an invocation is generated from `split_seed(seed, j)`.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100_000_000)]
    cycles_max: u64,
    /// Monitor and sampling window in cycles.
    #[arg(long, default_value_t = cgrasim::reconfig::DEFAULT_WINDOW)]
    window: u64,
    /// Time miss rate above which a reconfiguration is considered.
    #[arg(long, default_value_t = cgrasim::reconfig::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    l1_ways: Option<u64>,
    #[arg(long)]
    l1_line: Option<u64>,
    #[arg(long)]
    l1_size: Option<u64>,
    #[arg(long)]
    mshr: Option<u64>,
    #[arg(long)]
    spm_size: Option<u64>,
    /// Place data regions in SPM while they fit, instead of only those the
    /// kernel marks resident.
    #[arg(long)]
    spm_fit: bool,
    /// Output CSV; defaults to `<out-dir>/<command>.csv`, or stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "CGRASIM_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    params: BuiltinParams,
}

impl Common {
    fn config_for(&self, preset: Preset) -> Result<HierarchyConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                HierarchyConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => preset.config(),
        };
        let overrides = [
            ("l1_ways", self.l1_ways),
            ("l1_line", self.l1_line),
            ("l1_size", self.l1_size),
            ("mshr_entries", self.mshr),
            ("spm_size", self.spm_size),
        ];
        for (key, v) in overrides {
            if let Some(v) = v {
                cfg.set(key, v).map_err(anyhow::Error::msg)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self) -> SimOptions {
        SimOptions { cycles_max: self.cycles_max, window: self.window, threshold: self.threshold }
    }

    fn output(&self, command: &str) -> Option<PathBuf> {
        self.out.clone().or_else(|| self.out_dir.as_ref().map(|d| d.join(format!("{command}.csv"))))
    }

    fn placed(&self, mut k: NamedKernel, cfg: &HierarchyConfig) -> NamedKernel {
        if self.spm_fit {
            builtin::fit_spm(&mut k.kernel, cfg.spm_size);
        }
        k
    }

    fn kernel(&self, source: &Source, index: u64) -> Result<NamedKernel> {
        match (&source.kernel, &source.builtin) {
            (Some(path), _) => Ok(NamedKernel { label: builtin::file_label(path), kernel: builtin::load(path)? }),
            (None, Some(name)) => named_builtin(name, &self.params, split_seed(self.seed, index)),
            (None, None) => bail!("either --kernel or --builtin is required"),
        }
    }
}

fn named_builtin(name: &str, params: &BuiltinParams, seed: u64) -> Result<NamedKernel> {
    Ok(NamedKernel { label: name.to_string(), kernel: builtin::build(name, params, seed)? })
}

/// The line that reproduces a run: root seed, kernel, variant and every
/// configuration field.
fn describe(seed: u64, kernel: &str, variant: Variant, cfg: &HierarchyConfig) -> String {
    let fields: Vec<String> = cfg.to_text().lines().map(|l| l.replace(" = ", "=")).collect();
    format!("# seed={seed} kernel={kernel} variant={variant} {}", fields.join(" "))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing stdout"),
    }
}

fn report_failures(failed: &[(String, String)]) -> bool {
    for (id, msg) in failed {
        eprintln!("run {id} failed: {msg}");
    }
    failed.is_empty()
}

fn run(source: Source, variant: Variant, common: Common) -> Result<bool> {
    let cfg = common.config_for(common.preset)?;
    let k = common.placed(common.kernel(&source, 0)?, &cfg);
    eprintln!("{}", describe(common.seed, &k.label, variant, &cfg));
    let job = Job { run_id: common.seed.to_string(), kernel: &k, cfg, variant };
    let stats = runs::execute(&job, &common.options()).map_err(anyhow::Error::msg)?;
    let header = cgrasim::metrics::csv_header();
    match common.output("run") {
        Some(path) => {
            let existing = std::fs::read_to_string(&path).unwrap_or_default();
            if !existing.is_empty() && existing.lines().next() != Some(header.as_str()) {
                bail!("{} exists with a different header", path.display());
            }
            let mut text = if existing.is_empty() { format!("{header}\n") } else { existing };
            text.push_str(&stats.csv_row());
            text.push('\n');
            write_out(Some(&path), &text)?;
        }
        None => write_out(None, &format!("{header}\n{}\n", stats.csv_row()))?,
    }
    Ok(true)
}

fn sweep(source: Source, param: SweepParam, values: Option<String>, variant: Variant, common: Common) -> Result<bool> {
    let mut values = match values {
        Some(v) => runs::parse_list::<u64>(&v)?,
        None => param.default_values(),
    };
    values.sort_unstable();
    values.dedup();
    let k = common.kernel(&source, 0)?;
    let base = common.config_for(common.preset)?;
    let configs = values.iter().map(|&v| param.apply(&base, v)).collect::<Result<Vec<_>>>()?;
    eprintln!("{}", describe(common.seed, &k.label, variant, &base));
    // Placement depends on the SPM size, so each value gets its own copy.
    let kernels: Vec<NamedKernel> = configs.iter().map(|cfg| common.placed(k.clone(), cfg)).collect();
    let jobs: Vec<Job<'_>> = values
        .iter()
        .zip(configs)
        .zip(&kernels)
        .map(|((v, cfg), k)| Job { run_id: format!("{}={v}", param.name()), kernel: k, cfg, variant })
        .collect();
    let results = runs::execute_all(&jobs, &common.options());
    let (csv, failed) = runs::stats_csv(&jobs, &results);
    write_out(common.output("sweep").as_deref(), &csv)?;
    Ok(report_failures(&failed))
}

fn compare(
    builtins: Vec<String>,
    kernels: Vec<PathBuf>,
    variants: Vec<Variant>,
    presets: Vec<Preset>,
    common: Common,
) -> Result<bool> {
    let presets = if presets.is_empty() { vec![common.preset] } else { presets };
    let mut set = Vec::new();
    for (j, name) in builtins.iter().enumerate() {
        set.push(named_builtin(name, &common.params, split_seed(common.seed, j as u64))?);
    }
    for path in &kernels {
        set.push(NamedKernel { label: builtin::file_label(path), kernel: builtin::load(path)? });
    }
    let configs = presets.iter().map(|&p| common.config_for(p)).collect::<Result<Vec<_>>>()?;
    let placed: Vec<Vec<NamedKernel>> =
        set.iter().map(|k| configs.iter().map(|cfg| common.placed(k.clone(), cfg)).collect()).collect();
    let mut jobs = Vec::new();
    for (ki, per_preset) in placed.iter().enumerate() {
        for ((p, cfg), k) in presets.iter().zip(&configs).zip(per_preset) {
            for &v in &variants {
                eprintln!("{}", describe(common.seed, &k.label, v, cfg));
                jobs.push(Job { run_id: format!("{ki}-{p}"), kernel: k, cfg: cfg.clone(), variant: v });
            }
        }
    }
    let results = runs::execute_all(&jobs, &common.options());
    let csv = runs::compare_csv(&jobs, &results, |j| j.run_id.clone());
    write_out(common.output("compare").as_deref(), &csv)?;
    Ok(results.iter().all(Result::is_ok))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run { source, variant, common } => run(source, variant, common),
        Cmd::Sweep { source, param, values, variant, common } => sweep(source, param, values, variant, common),
        Cmd::Compare { builtins, kernels, variants, presets, common } => {
            compare(builtins, kernels, variants, presets, common)
        }
        Cmd::Kernel { builtin, seed, params, out } => builtin::build(&builtin, &params, split_seed(seed, 0))
            .and_then(|k| write_out(out.as_deref(), &cgrasim::kernel::emit_kernel(&k)))
            .map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
