//! Command-line harness: reads one JSON experiment config, runs the matching
//! module operation and writes `envelope.json` plus any CSV files.
//!
//! Exit codes: `0` every rule passed, `1` some rule failed, `2` the config is
//! malformed (or names a different subcommand), `3` numeric refusal.

pub mod config;
pub mod envelope;
pub mod tasks;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use config::SchemaError;
use envelope::{blob_hash, canonical, now_ms, sha256_hex, Envelope, Payload, Status, ENVELOPE_VERSION};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_REFUSAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "phjb", version, about = "Path-dependent control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gauge functional bounds, doubling inequality and derivative checks.
    GaugeVerify(RunArgs),
    /// Functional Ito formula residuals and the Ito inequality.
    ItoVerify(RunArgs),
    /// Simulate trajectories to CSV.
    Simulate(RunArgs),
    /// Solve the cost BSDE by regression and/or on the lattice.
    BsdeSolve(RunArgs),
    /// Value estimate over a finite policy class.
    Value(RunArgs),
    /// Dynamic programming consistency.
    DppCheck(RunArgs),
    /// Classical HJB residual of a smooth candidate.
    HjbResidual(RunArgs),
    /// Lattice-certified viscosity sub/supersolution probe.
    ViscosityProbe(RunArgs),
    /// Perturbed maximization on a finite path lattice.
    BpOptimize(RunArgs),
    /// Coefficient stability and value regularity.
    StabilityCheck(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `numerics.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GaugeVerify(_) => "gauge-verify",
            Command::ItoVerify(_) => "ito-verify",
            Command::Simulate(_) => "simulate",
            Command::BsdeSolve(_) => "bsde-solve",
            Command::Value(_) => "value",
            Command::DppCheck(_) => "dpp-check",
            Command::HjbResidual(_) => "hjb-residual",
            Command::ViscosityProbe(_) => "viscosity-probe",
            Command::BpOptimize(_) => "bp-optimize",
            Command::StabilityCheck(_) => "stability-check",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::GaugeVerify(a)
            | Command::ItoVerify(a)
            | Command::Simulate(a)
            | Command::BsdeSolve(a)
            | Command::Value(a)
            | Command::DppCheck(a)
            | Command::HjbResidual(a)
            | Command::ViscosityProbe(a)
            | Command::BpOptimize(a)
            | Command::StabilityCheck(a) => a,
        }
    }
}

/// Errors the kernels raise for numerically unsafe requests rather than bad input.
fn is_refusal(e: &phjb_core::Error) -> bool {
    use phjb_core::Error::*;
    matches!(
        e,
        Refusal(_) | RankDeficient { .. } | PicardContraction(_) | NonContraction(_) | Unsupported(_) | Certificate(_)
    )
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_SCHEMA } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command.name(), cli.command.args()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAIL
        }
    }
}

/// Runs `subcommand` with `args`. I/O failures on the output side surface as `Err`.
pub fn run(subcommand: &str, args: &RunArgs) -> anyhow::Result<i32> {
    let started = now_ms();
    let raw = match std::fs::read(&args.config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return Ok(EXIT_SCHEMA);
        }
    };
    let loaded = match std::str::from_utf8(&raw)
        .map_err(|e| SchemaError {
            pointer: String::new(),
            message: format!("config is not UTF-8: {e}"),
        })
        .and_then(config::parse)
    {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_SCHEMA);
        }
    };
    let mut cfg = loaded.config;
    if let Some(s) = args.seed {
        cfg.numerics.seed = s;
    }
    if cfg.task.op() != subcommand {
        eprintln!(
            "error: {}",
            SchemaError {
                pointer: "/task/op".into(),
                message: format!("task is `{}` but the subcommand is `{subcommand}`", cfg.task.op()),
            }
        );
        return Ok(EXIT_SCHEMA);
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building the worker pool")?;
    let threads = pool.current_num_threads();
    let ctx = tasks::Ctx {
        config: &cfg,
        model: &loaded.model,
        grid: loaded.grid,
    };
    let result = pool.install(|| tasks::run_task(&ctx));

    let config_value = serde_json::to_value(&cfg).context("serializing the resolved config")?;
    let (status, report, rules, files, message) = match result {
        Ok(o) => {
            let status = if o.refusal.is_some() {
                Status::Refused
            } else if o.rules.iter().all(|r| r.passed) {
                Status::Pass
            } else {
                Status::Fail
            };
            (status, o.report, o.rules, o.files, o.refusal)
        }
        Err(e) if is_refusal(&e) => (
            Status::Refused,
            serde_json::json!({ "error": e.to_string() }),
            Vec::new(),
            Vec::new(),
            Some(e.to_string()),
        ),
        Err(e) => {
            eprintln!("error: invalid request: {e}");
            return Ok(EXIT_SCHEMA);
        }
    };
    if let Some(m) = &message {
        eprintln!("refused: {m}");
    }

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut file_hashes = Vec::new();
    for (name, bytes) in &files {
        write(&args.out.join(name), bytes)?;
        file_hashes.push((name.clone(), blob_hash(bytes)));
    }
    let payload = Payload {
        subcommand: subcommand.to_string(),
        status,
        rules,
        report,
        files: files.iter().map(|f| f.0.clone()).collect(),
        config: config_value.clone(),
    };
    let env = Envelope {
        envelope_version: ENVELOPE_VERSION,
        tool: format!("phjb {}", env!("CARGO_PKG_VERSION")),
        config_sha256: sha256_hex(&canonical(&config_value)),
        input_blob_sha256: blob_hash(&raw),
        file_blob_sha256: file_hashes,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        threads,
        payload,
    };
    let text = serde_json::to_vec_pretty(&env).context("serializing the envelope")?;
    write(&args.out.join("envelope.json"), &text)?;
    for r in &env.payload.rules {
        eprintln!("{} {}: {}", if r.passed { "pass" } else { "FAIL" }, r.name, r.detail);
    }
    Ok(match status {
        Status::Pass => EXIT_PASS,
        Status::Fail => EXIT_FAIL,
        Status::Refused => EXIT_REFUSAL,
    })
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
