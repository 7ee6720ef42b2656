use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gausshor::report::{emit, execute, NList, RunConfig, Settings, EXIT_INVALID};

#[derive(Parser)]
#[command(name = "gausshor", version, about = "Gauss-sum factoring simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tables of |G|², g(ℓ), |𝒲_n0(ℓ)|² or truncated sums
    GaussTable(Flags),
    /// Branch probabilities, post-QFT spectra, peaks and the factoring driver
    ShorGauss(Flags),
    /// P_B, conditionals, success mass, purity and the sampling driver
    Superposition(Flags),
    Purity(Flags),
    /// Batch summary over a list of semiprimes
    Sweep(Flags),
}

#[derive(Args)]
struct Flags {
    /// One number, or a comma-separated list for sweep
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    q: Option<u32>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// n, unit or factor<f>
    #[arg(long)]
    branch: Option<String>,
    #[arg(long)]
    n0: Option<u64>,
    /// exact|qubit for superposition, qft|direct for shor-gauss
    #[arg(long)]
    mode: Option<String>,
    /// standard|g|w|truncated
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    terms: Option<u64>,
    #[arg(long)]
    ell: Option<u64>,
    /// pb|purity|conditional|success
    #[arg(long)]
    report: Option<String>,
    /// csv|json
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    allow_small_register: bool,
    /// key = value file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

fn settings(command: &str, f: Flags) -> gausshor::Result<Settings> {
    let file = match &f.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let flags = Settings {
        command: Some(command.to_string()),
        n: f.n.map(NList::Text),
        q: f.q,
        trials: f.trials,
        seed: f.seed,
        branch: f.branch,
        n0: f.n0,
        mode: f.mode,
        kind: f.kind,
        terms: f.terms,
        ell: f.ell,
        report: f.report,
        format: f.format,
        output: f.output,
        allow_small_register: f.allow_small_register.then_some(true),
    };
    Ok(file.overridden_by(flags))
}

fn run(cli: Cli) -> Result<i32, String> {
    let (name, flags) = match cli.command {
        Cmd::GaussTable(f) => ("gauss-table", f),
        Cmd::ShorGauss(f) => ("shor-gauss", f),
        Cmd::Superposition(f) => ("superposition", f),
        Cmd::Purity(f) => ("purity", f),
        Cmd::Sweep(f) => ("sweep", f),
    };
    let cfg = settings(name, flags)
        .and_then(RunConfig::resolve)
        .map_err(|e| e.to_string())?;
    let outcome = execute(&cfg).map_err(|e| e.to_string())?;
    for notice in &outcome.notices {
        eprintln!("{notice}");
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match emit(&cfg, &outcome).map_err(|e| e.to_string())? {
        Some(text) => out.write_all(text.as_bytes()),
        None => writeln!(out, "{}", outcome.document.summary),
    }
    .map_err(|e| e.to_string())?;
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID as u8)
        }
    }
}
