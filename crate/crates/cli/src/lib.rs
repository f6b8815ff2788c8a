//! Command line driver for `horo-core`: configuration, result records, golden files.

pub mod commands;
pub mod config;
pub mod error;
pub mod golden;
pub mod record;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commands::Ctx;
use config::Params;
use error::{CliError, Result};
use record::{Provenance, ResultRecord};
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "horo", version, about = "Matrix Kloosterman sums and horosphere experiments")]
pub struct Cli {
    /// Seed for every stochastic step; required by sampled checks.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 picks the number of cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Largest enumeration attempted before reporting the request as infeasible.
    #[arg(long, global = true, default_value_t = horo_core::modring::DEFAULT_CAP)]
    pub cap: u128,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    /// Compare against this JSON-lines file (or rewrite it with `--bless`).
    #[arg(long, global = true)]
    pub golden: Option<PathBuf>,
    #[arg(long, global = true, requires = "golden")]
    pub bless: bool,
    /// `key = value` file; command-line options override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Each one is shorthand for `--set <key>=<value>`.
#[derive(Debug, Default, Args)]
pub struct Opts {
    /// Moduli or primes, e.g. `1..100`, `3,5,7` or `2..64:2`.
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub r: Option<String>,
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub b: Option<String>,
    /// Comma-separated checks to run.
    #[arg(long)]
    pub check: Option<String>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    /// Any other parameter, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Matrix Kloosterman sums: bound suites and oracle checks.
    Kloos(Opts),
    /// Primitive matrices: counts and the parametrization.
    Prim(Opts),
    /// Equidistribution error terms.
    Equi(Opts),
    /// Lattices: minima, counts, Phi and Siegel means.
    Gon(Opts),
    /// Rank-restricted counts in boxes modulo a prime.
    Rank(Opts),
    /// Small solutions of linear congruences.
    Small(Opts),
    /// Quick run of every subcommand on small instances.
    Selftest(Opts),
}

impl Command {
    fn opts(&self) -> &Opts {
        match self {
            Command::Kloos(o)
            | Command::Prim(o)
            | Command::Equi(o)
            | Command::Gon(o)
            | Command::Rank(o)
            | Command::Small(o)
            | Command::Selftest(o) => o,
        }
    }
}

/// Merge the configuration file and the command-line options.
pub fn params(cli: &Cli) -> Result<Params> {
    let mut p = match &cli.config {
        Some(path) => Params::new(config::parse_config(&std::fs::read_to_string(path)?)?),
        None => Params::default(),
    };
    let o = cli.command.opts();
    let named = [
        ("q", &o.q),
        ("d", &o.d),
        ("n", &o.n),
        ("r", &o.r),
        ("p", &o.p),
        ("b", &o.b),
        ("check", &o.check),
        ("mode", &o.mode),
        ("samples", &o.samples),
    ];
    for (k, v) in named {
        if let Some(v) = v {
            p.set(k, v.clone());
        }
    }
    for kv in &o.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| error::invalid(format!("--set expects key=value, got {kv:?}")))?;
        p.set(k.trim(), v.trim());
    }
    Ok(p)
}

/// Run the selected subcommand and stamp provenance on its records.
pub fn execute(cli: &Cli) -> Result<Vec<ResultRecord>> {
    let params = params(cli)?;
    let seed = match (cli.seed, params.get_opt::<u64>("seed")?) {
        (Some(s), _) => Some(s),
        (None, s) => s,
    };
    let ctx = Ctx::new(params, seed, cli.cap);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| error::invalid(format!("thread pool: {e}")))?;
    let records = pool.install(|| match &cli.command {
        Command::Kloos(_) => commands::kloos(&ctx),
        Command::Prim(_) => commands::prim(&ctx),
        Command::Equi(_) => commands::equi(&ctx),
        Command::Gon(_) => commands::gon(&ctx),
        Command::Rank(_) => commands::rank(&ctx),
        Command::Small(_) => commands::small(&ctx),
        Command::Selftest(_) => commands::selftest(&ctx),
    })?;
    let prov = Provenance::now(seed);
    Ok(records
        .into_iter()
        .map(|mut r| {
            r.provenance = prov.clone();
            r
        })
        .collect())
}

fn render(records: &[ResultRecord], format: Format) -> Result<String> {
    match format {
        Format::Jsonl => record::to_jsonl(records),
        Format::Csv => Ok(record::to_csv(records)),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn diagnostic(err: &CliError, seed: Option<u64>) -> ResultRecord {
    let kind = if err.is_infeasible() { "infeasible" } else { "invalid" };
    let mut r = ResultRecord::new("error").value("kind", kind).value("message", err.to_string()).with_pass(false);
    r.provenance = Provenance::now(seed);
    r
}

/// Run the program with the given arguments and return the exit code: `0` when every check
/// passes, `1` on a failed check or golden mismatch, `2` on infeasible or invalid input.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(code) => code,
        Err(e @ CliError::GoldenMismatch(_)) => {
            eprintln!("{e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Ok(text) = render(&[diagnostic(&e, cli.seed)], cli.format) {
                let _ = emit(&cli, &text);
            }
            2
        }
    }
}

/// Execute, write the output, and handle the golden file.
pub fn run_cli(cli: &Cli) -> Result<i32> {
    let records = execute(cli)?;
    emit(cli, &render(&records, cli.format)?)?;
    if let Some(path) = &cli.golden {
        if cli.bless {
            std::fs::write(path, record::to_jsonl(&records)?)?;
        } else {
            let golden = record::parse_jsonl(&std::fs::read_to_string(path)?)?;
            let diffs = golden::diff(&records, &golden, &params(cli)?);
            if !diffs.is_empty() {
                return Err(CliError::GoldenMismatch(diffs.join("\n")));
            }
        }
    }
    Ok(if records.iter().all(|r| r.pass != Some(false)) { 0 } else { 1 })
}
