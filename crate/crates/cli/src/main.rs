use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use unipc::harness::{self, ConvergenceStudy, Format, RunOptions};
use unipc::Error;

#[derive(Parser)]
#[command(name = "unipc", version, about = "UniPC convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write its results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Fit convergence orders from a results CSV.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run the coefficient, quadrature and reference cross-checks.
    Selftest,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            out,
            format,
            seed,
            jobs,
        } => {
            let format: Format = format.parse()?;
            let study = ConvergenceStudy::from_json(&fs::read_to_string(&config)?)?;
            let results = harness::run_study(&study, &RunOptions { seed, jobs })?;
            harness::emit(&results, format, &out)?;
            for f in &results.fits {
                match &f.fit {
                    Some(fit) => eprintln!(
                        "{} p={}: order {:.3} (r2 {:.4})",
                        f.solver, f.order, fit.slope, fit.r_squared
                    ),
                    None => eprintln!(
                        "{} p={}: {}",
                        f.solver,
                        f.order,
                        f.failure.as_deref().unwrap_or("no fit")
                    ),
                }
            }
            Ok(())
        }
        Command::Fit { input } => {
            let rows = harness::read_csv(fs::File::open(&input)?)?;
            let mut failed = None;
            for f in harness::fit_csv(&rows) {
                let c = &f.config;
                let id = format!(
                    "solver={} order={} variant={} bh={} prediction={} corrector={}",
                    c.solver, c.order, c.variant, c.bh, c.prediction, c.corrector
                );
                match f.fit {
                    Ok(fit) => println!(
                        "{id} slope={:.4} intercept={:.4} r2={:.6} points={}",
                        fit.slope,
                        fit.intercept,
                        fit.r_squared,
                        fit.used.len()
                    ),
                    Err(e) => {
                        println!("{id} {e}");
                        failed = Some(e);
                    }
                }
            }
            failed.map_or(Ok(()), Err)
        }
        Command::Selftest => {
            let checks = harness::selftest();
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "ok  " } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            match checks.iter().find(|c| !c.passed) {
                Some(c) => Err(Error::Fit(format!("self-test failed: {}", c.name))),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
