//! Command-line front end: `simulate`, `analyze-addrs` and `analyze-bench`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::bench_io::{
    analyze_bench, parse_metrics, read_address_log, records_to_entries, render_json, render_text,
    write_address_log, AddressLogEntry, BenchIoError, LogRegion, Metric,
};
use crate::entropy::CpuProfile;
use crate::layout::{
    simulate_batch, EntropyConfig, InstanceConfig, LayoutError, RandomizationPolicy,
};
use crate::stats::{ks_uniform_test, StatsError, TestReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    BenchIo(#[from] BenchIoError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Parser)]
#[command(name = "aslr-sim", version, about = "Unikernel address-randomization simulator and analysis toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate instances and write their address log.
    Simulate(SimulateArgs),
    /// KS uniformity test of one region of an address log.
    AnalyzeAddrs(AnalyzeAddrsArgs),
    /// Per-campaign SD / 95% CI tables and the M vs UM Levene test.
    AnalyzeBench(AnalyzeBenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Hardware,
    Seeded,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    /// CPU advertises rdrand: randomized layout.
    Rdrand,
    /// No hardware entropy: deterministic baseline layout.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    Base,
    Heap,
    Stack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    RunTime,
    BootTime,
    Memory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum FormatArg {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of instances.
    #[arg(long, default_value_t = 303, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Hardware)]
    pub mode: ModeArg,
    /// Base seed for seeded mode; instance i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// 32-bit words replayed by fixed mode (comma-separated, decimal or 0x-hex).
    #[arg(long, value_delimiter = ',', value_parser = parse_u32)]
    pub words: Option<Vec<u32>>,
    #[arg(long, value_enum, default_value_t = ProfileArg::Rdrand)]
    pub profile: ProfileArg,
    /// TOML file overriding policies and instance parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeAddrsArgs {
    /// Address log (`-` for stdin).
    pub log: PathBuf,
    #[arg(long, value_enum, default_value_t = RegionArg::Base)]
    pub region: RegionArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// TOML file overriding the policy bounds.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeBenchArgs {
    /// Metrics file (`-` for stdin).
    pub metrics: PathBuf,
    /// Metric to report; all three when omitted.
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Campaign to report; every campaign when omitted.
    #[arg(long)]
    pub campaign: Option<u32>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let s = s.trim();
    match s.strip_prefix("0x") {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => s.parse(),
    }
    .map_err(|e| format!("`{s}`: {e}"))
}

/// Optional TOML overrides. Top-level keys must precede the policy tables.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub heap_segments: Option<usize>,
    pub stack_size: Option<u64>,
    pub max_retries: Option<u32>,
    pub large_alloc_threshold: Option<u64>,
    pub words: Option<Vec<u32>>,
    pub program_policy: Option<RandomizationPolicy>,
    pub stack_policy: Option<RandomizationPolicy>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_input(path)?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn apply(&self, cfg: &mut InstanceConfig) {
        if let Some(v) = self.heap_segments {
            cfg.n_heap_segments = v;
        }
        if let Some(v) = self.stack_size {
            cfg.stack_size = v;
        }
        if let Some(v) = self.max_retries {
            cfg.max_retries = v;
        }
        if let Some(v) = self.large_alloc_threshold {
            cfg.large_alloc_threshold = v;
        }
        if let Some(p) = self.program_policy {
            cfg.program_policy = p;
        }
        if let Some(p) = self.stack_policy {
            cfg.stack_policy = p;
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    if path == Path::new("-") {
        let mut buf = String::new();
        io::stdin().read_to_string(&mut buf).map_err(io_err(path))?;
        Ok(buf)
    } else {
        fs::read_to_string(path).map_err(io_err(path))
    }
}

fn emit(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(io_err(path)),
        None => stdout.write_all(bytes).map_err(io_err(Path::new("<stdout>"))),
    }
}

/// Resolves simulate flags and the optional config file into an instance
/// configuration.
pub fn instance_config(args: &SimulateArgs) -> Result<InstanceConfig, CliError> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let entropy = match args.mode {
        ModeArg::Hardware | ModeArg::Fixed if args.seed.is_some() => {
            return Err(CliError::Config("--seed only applies to --mode seeded".into()))
        }
        ModeArg::Hardware => EntropyConfig::Hardware,
        ModeArg::Seeded => EntropyConfig::Seeded(
            args.seed
                .ok_or_else(|| CliError::Config("--mode seeded requires --seed".into()))?,
        ),
        ModeArg::Fixed => EntropyConfig::Fixed(
            args.words
                .clone()
                .or_else(|| file.words.clone())
                .ok_or_else(|| {
                    CliError::Config("--mode fixed requires --words or `words` in the config file".into())
                })?,
        ),
    };
    let cpu = match args.profile {
        ProfileArg::Rdrand => CpuProfile::RDRAND,
        ProfileArg::None => CpuProfile::NO_RDRAND,
    };
    let mut cfg = InstanceConfig {
        cpu,
        entropy,
        ..InstanceConfig::default()
    };
    file.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = instance_config(args)?;
    let records = simulate_batch(&cfg, args.n)?;
    let mut buf = Vec::new();
    write_address_log(&records_to_entries(&records), &mut buf)?;
    emit(args.out.as_deref(), &buf, stdout)
}

/// Samples of one region, one value per instance for heap (its lowest
/// segment) and every matching entry otherwise.
pub fn region_samples(entries: &[AddressLogEntry], region: LogRegion) -> Vec<f64> {
    match region {
        LogRegion::Heap => {
            let mut firsts: Vec<(&str, u64)> = Vec::new();
            for e in entries.iter().filter(|e| e.region == LogRegion::Heap) {
                let addr = e.address.value();
                match firsts.iter_mut().find(|(id, _)| *id == e.instance_id) {
                    Some((_, lowest)) => *lowest = (*lowest).min(addr),
                    None => firsts.push((&e.instance_id, addr)),
                }
            }
            firsts.into_iter().map(|(_, a)| a as f64).collect()
        }
        _ => entries
            .iter()
            .filter(|e| e.region == region)
            .map(|e| e.address.value() as f64)
            .collect(),
    }
}

/// Continuous uniform support used for a region: the policy lattice widened by
/// one stride so every lattice point covers an equal share.
pub fn region_bounds(policy: &RandomizationPolicy) -> (f64, f64) {
    (
        policy.lower_bound() as f64,
        (policy.upper_bound() + policy.stride()) as f64,
    )
}

pub fn analyze_region(
    entries: &[AddressLogEntry],
    region: LogRegion,
    policy: &RandomizationPolicy,
    alpha: f64,
) -> Result<TestReport, StatsError> {
    let samples = region_samples(entries, region);
    let (lo, hi) = region_bounds(policy);
    ks_uniform_test(&samples, lo, hi, alpha)
}

pub fn render_ks_text(region: LogRegion, report: &TestReport) -> String {
    let decision = if report.reject_null {
        "reject H0 (not uniform)"
    } else {
        "fail to reject H0 (consistent with uniform)"
    };
    format!(
        "region: {region}\nn: {}\nD: {:.6}\nD_crit: {:.6}\nalpha: {}\ndecision: {decision}\n",
        report.n[0],
        report.statistic,
        report.threshold.unwrap_or(f64::NAN),
        report.alpha,
    )
}

pub fn cmd_analyze_addrs(args: &AnalyzeAddrsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let region = match args.region {
        RegionArg::Base => LogRegion::Base,
        RegionArg::Heap => LogRegion::Heap,
        RegionArg::Stack => LogRegion::Stack,
    };
    let policy = match region {
        LogRegion::Base | LogRegion::Heap => file.program_policy.unwrap_or(RandomizationPolicy::PROGRAM_BASE),
        LogRegion::Stack => file.stack_policy.unwrap_or(RandomizationPolicy::STACK),
    };
    let entries = read_address_log(&read_input(&args.log)?)?;
    let report = analyze_region(&entries, region, &policy, args.alpha)?;
    let text = match args.format {
        FormatArg::Text => render_ks_text(region, &report),
        FormatArg::Json => {
            let mut s = serde_json::to_string_pretty(&serde_json::json!({
                "region": region,
                "report": report,
            }))
            .expect("report serializes");
            s.push('\n');
            s
        }
    };
    emit(args.out.as_deref(), text.as_bytes(), stdout)
}

pub fn cmd_analyze_bench(args: &AnalyzeBenchArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let samples = parse_metrics(&read_input(&args.metrics)?)?;
    let metrics: Vec<Metric> = match args.metric {
        Some(MetricArg::RunTime) => vec![Metric::RunTime],
        Some(MetricArg::BootTime) => vec![Metric::BootTime],
        Some(MetricArg::Memory) => vec![Metric::Memory],
        None => Metric::ALL.to_vec(),
    };
    let reports = analyze_bench(&samples, &metrics, args.campaign, args.alpha)?;
    let text = match args.format {
        FormatArg::Text => render_text(&reports),
        FormatArg::Json => render_json(&reports),
    };
    emit(args.out.as_deref(), text.as_bytes(), stdout)
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, stdout),
        Command::AnalyzeAddrs(args) => cmd_analyze_addrs(args, stdout),
        Command::AnalyzeBench(args) => cmd_analyze_bench(args, stdout),
    }
}
