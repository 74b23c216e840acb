use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use specforge_core::backend::Derivation;
use specforge_core::{BackendKind, Pipeline, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "specforge", version, about = "Caller-driven specification generation, reasoning and bug validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage not yet completed in the output directory.
    Run(Opts),
    /// Build the layered generation plan.
    Plan(Opts),
    /// Generate specifications from the plan.
    Specgen(Opts),
    /// Check implementations against their specifications.
    Reason(Opts),
    /// Try to confirm potential bugs with system-entry test cases.
    Validate(Opts),
}

#[derive(Args)]
struct Opts {
    /// MiniLang source file, or call-graph manifest with --manifest.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    manifest: bool,
    /// oracle (default), remote or replay.
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_attempts: Option<u32>,
    /// Integer bound for enumeration, values range over [-B, B].
    #[arg(long)]
    bound: Option<i64>,
    #[arg(long)]
    domain_knowledge: Option<PathBuf>,
    /// TOML file of flat key-value overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Correct twin of the input, run alongside it during validation.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Oracle backend only: top-down or implementation-only.
    #[arg(long)]
    derivation: Option<String>,
    /// Record per-stage wall time in the report.
    #[arg(long)]
    timings: bool,
}

fn parse_derivation(s: &str) -> Result<Derivation> {
    match s {
        "top-down" => Ok(Derivation::TopDown),
        "implementation-only" => Ok(Derivation::ImplementationOnly),
        other => bail!("unknown derivation `{other}` (expected top-down or implementation-only)"),
    }
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str().with_context(|| format!("config key `{key}` must be a string"))
}

fn as_uint(key: &str, v: &toml::Value) -> Result<u64> {
    v.as_integer()
        .and_then(|n| u64::try_from(n).ok())
        .with_context(|| format!("config key `{key}` must be a non-negative integer"))
}

/// Paths in the config file are relative to the file itself.
fn apply_config(cfg: &mut RunConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rel = |s: &str| base.join(s);
    for (key, v) in &table {
        let k = key.as_str();
        match k {
            "workers" => cfg.workers = as_uint(k, v)? as usize,
            "batch_size" => cfg.batch_size = as_uint(k, v)? as usize,
            "bound" => cfg.bound = as_uint(k, v)? as i64,
            "domain_knowledge" => cfg.domain_knowledge = Some(rel(as_str(k, v)?)),
            "reference" => cfg.reference = Some(rel(as_str(k, v)?)),
            "derivation" => cfg.derivation = parse_derivation(as_str(k, v)?)?,
            "backend" => cfg.backend = as_str(k, v)?.parse().map_err(anyhow::Error::msg)?,
            "endpoint" => cfg.backend_config.endpoint = as_str(k, v)?.into(),
            "model" => cfg.backend_config.model = as_str(k, v)?.into(),
            "api_key_env" => cfg.backend_config.api_key_env = as_str(k, v)?.into(),
            "backend_batch_size" => cfg.backend_config.batch_size = as_uint(k, v)? as usize,
            "max_concurrent_requests" => cfg.backend_config.max_concurrent_requests = as_uint(k, v)? as usize,
            "request_timeout_secs" => cfg.backend_config.timeout_secs = as_uint(k, v)?,
            "retries" => cfg.backend_config.retries = as_uint(k, v)? as u32,
            "backoff_ms" => cfg.backend_config.backoff_ms = as_uint(k, v)?,
            "cache_dir" => cfg.backend_config.cache_dir = Some(rel(as_str(k, v)?)),
            "run_command" => cfg.harness.run_command = Some(as_str(k, v)?.into()),
            "reference_command" => cfg.harness.reference_command = Some(as_str(k, v)?.into()),
            "timeout_secs" => cfg.harness.timeout_secs = as_uint(k, v)?,
            "max_attempts" => cfg.harness.max_attempts = as_uint(k, v)? as u32,
            "workdir" => cfg.harness.workdir = Some(rel(as_str(k, v)?)),
            "guidance_file" => cfg.harness.guidance_file = Some(rel(as_str(k, v)?)),
            "entry" => cfg.harness.entry = Some(as_str(k, v)?.into()),
            "phases" => {
                let t = v.as_table().context("config key `phases` must be a table of function = phase")?;
                for (f, p) in t {
                    cfg.phase_overrides.insert(f.clone(), as_str(f, p)?.into());
                }
            }
            other => bail!("unknown config key `{other}` in {}", path.display()),
        }
    }
    Ok(())
}

fn build_config(o: &Opts) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(&o.input, &o.out);
    cfg.manifest = o.manifest;
    cfg.phase_overrides = BTreeMap::new();
    if let Some(path) = &o.config {
        apply_config(&mut cfg, path)?;
    }
    // Flags win over the config file.
    if let Some(b) = o.backend {
        cfg.backend = b;
    }
    if let Some(n) = o.batch_size {
        cfg.batch_size = n;
    }
    if let Some(n) = o.workers {
        cfg.workers = n;
    }
    if let Some(n) = o.max_attempts {
        cfg.harness.max_attempts = n;
    }
    if let Some(b) = o.bound {
        cfg.bound = b;
    }
    if let Some(d) = &o.domain_knowledge {
        cfg.domain_knowledge = Some(d.clone());
    }
    if let Some(r) = &o.reference {
        cfg.reference = Some(r.clone());
    }
    if let Some(d) = &o.derivation {
        cfg.derivation = parse_derivation(d)?;
    }
    cfg.timings = o.timings;
    if cfg.batch_size == 0 {
        bail!("--batch-size must be positive");
    }
    if cfg.bound <= 0 {
        bail!("--bound must be positive");
    }
    if cfg.backend == BackendKind::Replay && cfg.backend_config.cache_dir.is_none() {
        bail!("replay needs `cache_dir` in the config file");
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (opts, stage) = match &cli.command {
        Command::Run(o) => (o, None),
        Command::Plan(o) => (o, Some(Stage::Plan)),
        Command::Specgen(o) => (o, Some(Stage::Specgen)),
        Command::Reason(o) => (o, Some(Stage::Reason)),
        Command::Validate(o) => (o, Some(Stage::Validate)),
    };
    match execute(opts, stage) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(opts: &Opts, stage: Option<Stage>) -> Result<String> {
    let cfg = build_config(opts)?;
    let out = cfg.out_dir.clone();
    let pipeline = Pipeline::new(cfg)?;
    let report = match stage {
        None => pipeline.run()?,
        Some(s) => {
            pipeline.run_stage(s)?;
            pipeline.report()?
        }
    };
    Ok(format!("{}report: {}\n", report.summary(), out.join("report.json").display()))
}
