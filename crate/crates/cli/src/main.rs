use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vecadvect_cli::suite::{self, SuiteConfig};
use vecadvect_cli::{output, resolve_out, vaf, CliError, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "vecadvect", version, about = "Vector advection experiments: spectral solver, duality checks, stochastic flows")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance battery (built in unless --config is given) and write summary.csv.
    Suite {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print header, per-component statistics and divergence of a field file.
    Inspect { file: PathBuf },
    /// Convert between VAF1 (`.vaf`) and JSON (`.json`) field files.
    Convert { input: PathBuf, output: PathBuf },
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.cmd {
        Cmd::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            let dir = resolve_out(out.as_deref(), cfg.output_dir.as_deref());
            let r = output::run_to_dir(&cfg, &dir)?;
            for c in &r.checks {
                let bound = if c.upper { "<=" } else { ">=" };
                println!("{} {}: {:.6e} {bound} {:.6e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
            }
            println!("artifacts in {}", r.dir.display());
            if !r.passed {
                return Err(CliError::Acceptance(format!("{} experiment", cfg.kind.name())));
            }
        }
        Cmd::Suite { config, seed, out } => {
            let mut s = match &config {
                Some(p) => SuiteConfig::load(p)?,
                None => SuiteConfig::from_json(suite::DEFAULT_SUITE)?,
            };
            if let Some(seed) = seed {
                s.reseed(seed);
            }
            let dir = resolve_out(out.as_deref(), None);
            let rows = suite::run(&s, &dir)?;
            print!("{}", suite::summary_csv(&rows));
            let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::Acceptance(failed.join(", ")));
            }
        }
        Cmd::Inspect { file } => print!("{}", vaf::inspect(&file)?),
        Cmd::Convert { input, output } => vaf::convert(&input, &output)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
