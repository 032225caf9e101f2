//! `landau-res`: resonance, counting and spectral-shift computations from a
//! JSON configuration, written as CSV/JSON artifacts with a run manifest.

pub mod cache;
mod commands;
pub mod error;
pub mod spec;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use landau_core::model::Config;

use crate::cache::{Artifact, Cache, Lookup, RunManifest, MANIFEST_FILE};
use crate::error::CliError;

pub use landau_core::resonance_search::Region;
pub use spec::{parse_cutoff, parse_test_function, Window};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "landau-res", version, about = "Resonances near Landau levels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Neither read nor write the result cache.
    #[arg(long, global = true)]
    pub no_cache: bool,
    /// Chart region: annulus:a:b, sector:r0:r1:t0:t1 or box:x0:x1:y0:y1.
    #[arg(long, global = true, value_name = "SPEC", allow_hyphen_values = true)]
    pub region: Option<String>,
    /// Sample window a:b:n.
    #[arg(long, global = true, value_name = "a:b:n", allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Override the coupling constant.
    #[arg(long, global = true, value_name = "X", allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Also write (k, log|D|, arg D) along the region boundary.
    #[arg(long, global = true, hide = true)]
    pub dump_det: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Eigenvalues of the Landau-level Toeplitz operator and counting functions.
    ToeplitzSpectrum,
    /// Locate resonances in a chart region.
    Resonances,
    /// Zero counts per sector in a region, and dyadic annulus counts.
    Census,
    /// Spectral shift function on an energy window.
    Ssf,
    /// Breit-Wigner decomposition of the SSF derivative on an energy window.
    BwCheck,
    /// Trace formula at one energy scale.
    TraceFormula(TraceArgs),
    /// Fit of the eigenvalue counting law.
    AsymptoticsFit,
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    /// Energy scale r; the scaled variable is (E - 2bq)/r.
    #[arg(long, value_name = "R")]
    pub scale: f64,
    /// gaussian:center:width or constant:value, in the scaled variable.
    #[arg(long, value_name = "SPEC", allow_hyphen_values = true)]
    pub test_function: String,
    /// p0:p1:s0:s1, plateau and support of the cutoff in the scaled variable.
    #[arg(long, value_name = "SPEC", allow_hyphen_values = true)]
    pub cutoff: String,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ToeplitzSpectrum => "toeplitz-spectrum",
            Command::Resonances => "resonances",
            Command::Census => "census",
            Command::Ssf => "ssf",
            Command::BwCheck => "bw-check",
            Command::TraceFormula(_) => "trace-formula",
            Command::AsymptoticsFit => "asymptotics-fit",
        }
    }
}

/// Runs one invocation and returns its exit code: 0 on success, 1 on a
/// validation error, 2 on a numerical failure. Errors are reported as one
/// JSON line on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let err = CliError::validation("arguments", format!("{msg}: {}", detail.trim()));
            eprintln!("{}", err.to_json());
            return 1;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn warn(message: String) {
    eprintln!("{}", serde_json::json!({ "warning": message }));
}

fn load_config(common: &Common) -> Result<Config, CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::validation("config", "--config PATH is required"))?;
    let doc = fs::read_to_string(path)
        .map_err(|e| CliError::validation("config", format!("{}: {e}", path.display())))?;
    let cfg = Config::from_json(&doc)?;
    match common.epsilon {
        None => Ok(cfg),
        Some(x) if x.is_finite() && x >= 0.0 => Ok(cfg.with_epsilon(x)),
        Some(x) => Err(CliError::validation("epsilon", format!("coupling must be nonnegative, got {x}"))),
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let common = &cli.common;
    let out = common
        .out
        .clone()
        .ok_or_else(|| CliError::validation("out", "--out DIR is required"))?;
    let cfg = load_config(common)?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::validation("threads", "need at least one thread"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let job = commands::Job::new(&cli.command, common, cfg)?;
    let started_ms = now_ms();
    let config_hash = cfg.hash();
    let subcommand = cli.command.name().to_string();
    let cache_key = RunManifest::key(&config_hash, &subcommand, &job.parameters, TOOL_VERSION);
    let cache = if common.no_cache { None } else { Cache::from_env() };

    let cached = match &cache {
        Some(c) => match c.lookup(&cache_key, warn) {
            Lookup::Hit { artifacts, .. } => Some(artifacts),
            Lookup::Miss => None,
        },
        None => None,
    };
    let cache_hit = cached.is_some();
    let artifacts = match cached {
        Some(a) => a,
        None => job.run()?,
    };
    let mut manifest = RunManifest {
        config_hash,
        subcommand,
        parameters: job.parameters.clone(),
        tool_version: TOOL_VERSION.to_string(),
        started_ms,
        finished_ms: now_ms(),
        cache_key,
        cache_hit,
        outputs: artifacts.iter().map(|a| a.name.clone()).collect(),
    };
    write_outputs(&out, &manifest, &artifacts)?;
    if let (Some(c), false) = (&cache, cache_hit) {
        manifest.finished_ms = now_ms();
        if let Err(e) = c.store(&manifest, &artifacts) {
            warn(format!("could not store cache entry under {}: {e}", c.root().display()));
        }
    }
    Ok(())
}

fn write_outputs(out: &PathBuf, manifest: &RunManifest, artifacts: &[Artifact]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::validation("out", format!("{}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    for a in artifacts {
        fs::write(out.join(&a.name), &a.bytes).map_err(io)?;
    }
    let body = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    fs::write(out.join(MANIFEST_FILE), body).map_err(io)
}
