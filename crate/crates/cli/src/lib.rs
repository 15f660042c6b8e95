//! Command-line experiments: leverage scores, Monte-Carlo inversion bias,
//! solver traces and sketch-size sweeps, written as CSV or JSON tables with
//! a JSON sidecar per run.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

pub use config::Config;
pub use error::{CliError, CliResult};
use output::{render_sidecar, sidecar_path, write_file, Format};

pub const SEED_ENV: &str = "RANDSKEW_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "randskew",
    version,
    about = "Sketching inversion-bias and sub-sampled Newton experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Leverage scores and approximation factors of sampling plans.
    Lev(CommonArgs),
    /// Monte-Carlo inversion bias across schemes, corrections and sketch sizes.
    Bias(CommonArgs),
    /// One solver run with a per-iteration trace.
    Solve(CommonArgs),
    /// Final solver error across a grid of sketch sizes.
    Sweep(CommonArgs),
}

impl Command {
    fn parts(&self) -> (&'static str, &CommonArgs) {
        match self {
            Command::Lev(a) => ("lev", a),
            Command::Bias(a) => ("bias", a),
            Command::Solve(a) => ("solve", a),
            Command::Sweep(a) => ("sweep", a),
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `key = value` config file, or a run sidecar.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; falls back to the config, then to RANDSKEW_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output table path; the table goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    pub format: Option<String>,
    /// Z-score every feature column.
    #[arg(long)]
    pub standardize: bool,
    /// `key=value` overrides of config entries.
    pub overrides: Vec<String>,
}

/// Everything a run produced, already written to disk when `out` was set.
#[derive(Debug, Clone)]
pub struct Report {
    pub table: String,
    pub sidecar: String,
    pub out: Option<PathBuf>,
    pub notes: Vec<String>,
}

/// Parses `args` (including the program name) and runs the command.
/// `env_seed` stands in for the RANDSKEW_SEED variable.
pub fn run<I, T>(args: I, env_seed: Option<String>) -> CliResult<Report>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    execute(&cli, env_seed)
}

pub fn execute(cli: &Cli, env_seed: Option<String>) -> CliResult<Report> {
    let (name, args) = cli.command.parts();
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    cfg.apply_overrides(&args.overrides)?;
    if let Some(s) = args.seed {
        cfg.set("seed", s.to_string());
    }
    if let Some(f) = &args.format {
        cfg.set("format", f.clone());
    }
    if args.standardize {
        cfg.set("standardize", "on".into());
    }
    if let Some(o) = &args.out {
        cfg.set("out", o.display().to_string());
    }
    if !cfg.contains("seed") {
        match env_seed {
            Some(s) => cfg.set("seed", s),
            None => {
                return Err(CliError::Config(format!(
                    "no seed: pass --seed, set `seed` in the config, or set {SEED_ENV}"
                )))
            }
        }
    }
    let seed: u64 = cfg.required("seed")?;
    let format: Format = cfg.or_parse("format", "csv")?;
    let out: Option<PathBuf> = cfg.optional::<String>("out")?.map(PathBuf::from);

    let output = match name {
        "lev" => commands::lev(&mut cfg, seed)?,
        "bias" => commands::bias(&mut cfg, seed)?,
        "solve" => commands::solve(&mut cfg, seed)?,
        _ => commands::sweep(&mut cfg, seed)?,
    };

    let mut meta = output.meta.clone();
    meta.insert("command".into(), json!(name));
    meta.insert("config".into(), json!(cfg.echo()));
    meta.insert("columns".into(), json!(output.table.columns));
    meta.insert(
        "version".into(),
        Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    let table = output.table.render(format, output.meta);
    let sidecar = render_sidecar(&meta);
    if let Some(path) = &out {
        write_file(path, &table)?;
        write_file(&sidecar_path(path), &sidecar)?;
    }
    Ok(Report {
        table,
        sidecar,
        out,
        notes: output.notes,
    })
}
