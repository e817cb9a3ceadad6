use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crt_cea::commands::{self, CommandOutput, GlobalOptions, Run};
use crt_cea::error::CliResult;

/// Cost-effectiveness analysis for cluster-randomised trials.
#[derive(Parser)]
#[command(name = "crt-cea", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run every task on one thread. Results are identical.
    #[arg(long, global = true)]
    serial: bool,
    /// Abort on the first malformed input row instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Args)]
struct ImputationsArg {
    /// Analyse precomputed imputations from this directory instead of
    /// imputing inline.
    #[arg(long)]
    imputations: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Merge routine, CRF and ward data.
    Ingest,
    /// Profile missing data and fit the missingness models.
    Missing,
    /// Write multiply imputed datasets.
    Impute,
    /// Pooled cost-effectiveness results for the base case.
    Analyze(ImputationsArg),
    /// Bootstrap cost-effectiveness plane and acceptability curve.
    Ceac(ImputationsArg),
    /// Pattern-mixture sensitivity scenarios.
    Mnar(ImputationsArg),
    /// Generate a synthetic trial with known effects.
    Simulate,
    /// Run every stage.
    Report,
}

fn run(cli: &Cli) -> CliResult<CommandOutput> {
    let g = &cli.global;
    let opts = GlobalOptions {
        config: g.config.clone(),
        seed: g.seed,
        out: g.out.clone(),
        serial: g.serial,
        strict: g.strict,
    };
    let run = Run::new(&opts)?;
    match &cli.command {
        Command::Ingest => commands::cmd_ingest(&run),
        Command::Missing => commands::cmd_missing(&run),
        Command::Impute => commands::cmd_impute(&run),
        Command::Analyze(a) => commands::cmd_analyze(&run, a.imputations.as_deref()),
        Command::Ceac(a) => commands::cmd_ceac(&run, a.imputations.as_deref()),
        Command::Mnar(a) => commands::cmd_mnar(&run, a.imputations.as_deref()),
        Command::Simulate => commands::cmd_simulate(&run),
        Command::Report => commands::cmd_report(&run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            for n in &out.notes {
                eprintln!("note: {n}");
            }
            for f in &out.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
