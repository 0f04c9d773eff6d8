use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::ScenarioConfig;
use crate::reproduce::{render, reproduce};
use crate::{cmd_axioms, cmd_run, cmd_sweep, CliError, RunOptions, DEFAULT_DIGITS};

#[derive(Debug, Parser)]
#[command(name = "alloc", version, about = "Risk capital allocation experiments")]
struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output root; scenarios write to `<out>/<name>/`.
    #[arg(long, global = true, env = "ALLOC_OUT", default_value = "out")]
    out: PathBuf,
    /// Decimal places in text output.
    #[arg(long, global = true, default_value_t = DEFAULT_DIGITS)]
    digits: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Risk and allocations with the configured engine.
    Run { config: PathBuf },
    /// Two-asset weight sweep.
    Sweep { config: PathBuf },
    /// Axiom checks on the scenario's discrete joint law.
    Axioms { config: PathBuf },
    /// Runs the bundled scenarios against the reference values.
    Reproduce {
        /// Directory of scenario files to use instead of the bundled ones.
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let opts = RunOptions { seed: cli.seed, out: cli.out, digits: cli.digits };
    match cli.command {
        Command::Run { config } => {
            let (cfg, text) = ScenarioConfig::load(&config)?;
            print!("{}", cmd_run(&cfg, &text, &opts)?.text);
        }
        Command::Sweep { config } => {
            let (cfg, text) = ScenarioConfig::load(&config)?;
            print!("{}", cmd_sweep(&cfg, &text, &opts)?.text);
        }
        Command::Axioms { config } => {
            let (cfg, _) = ScenarioConfig::load(&config)?;
            print!("{}", cmd_axioms(&cfg, &opts)?.1);
        }
        Command::Reproduce { scenarios } => {
            let rows = reproduce(scenarios.as_deref(), &opts)?;
            let text = render(&rows);
            print!("{text}");
            std::fs::create_dir_all(&opts.out)?;
            std::fs::write(opts.out.join("reproduce.txt"), &text)?;
            return Ok(if rows.iter().all(|r| r.pass()) { 0 } else { 1 });
        }
    }
    Ok(0)
}
