use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hklab::counterexample::counterexample_bundle;
use hklab::runner::{exit_code_for, render_catalog, run_path, RunOptions};
use hklab::LabError;

#[derive(Parser)]
#[command(
    name = "hk-lab",
    version,
    about = "Finite-scale heat kernel laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks of a JSON experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for random families (overrides seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print every check with its statement and parameters.
    ListChecks,
    /// Counterexample parameter synthesis and diagnostics.
    Counterexample {
        #[command(subcommand)]
        command: CounterexampleCommand,
    },
}

#[derive(Subcommand)]
enum CounterexampleCommand {
    /// Emit the JSON bundle and the r(t) series as CSV.
    Report {
        #[arg(long)]
        epsilon: f64,
        /// Cantor ratio; defaults to the 1 - 2^-k rule.
        #[arg(long)]
        xi: Option<f64>,
        /// Per-axis Cantor depth of the desk-scale space.
        #[arg(long, default_value_t = 4)]
        levels: u32,
        /// Axis count n' of the desk-scale space.
        #[arg(long, default_value_t = 2)]
        axes: usize,
        #[arg(long, default_value = "hk-lab-counterexample")]
        out: PathBuf,
    },
}

fn fail(err: LabError) -> ExitCode {
    eprintln!("hk-lab: {err}");
    ExitCode::from(exit_code_for(&err) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed } => match run_path(&config, &RunOptions { out, seed }) {
            Ok(outcome) => {
                for c in &outcome.summary.checks {
                    println!("{:<28} {:?} {:.6e}", c.name, c.verdict, c.best_constant);
                }
                println!("reports written to {}", outcome.out_dir.display());
                ExitCode::from(outcome.exit_code() as u8)
            }
            Err(e) => fail(e),
        },
        Command::ListChecks => {
            print!("{}", render_catalog());
            ExitCode::SUCCESS
        }
        Command::Counterexample {
            command:
                CounterexampleCommand::Report {
                    epsilon,
                    xi,
                    levels,
                    axes,
                    out,
                },
        } => {
            let run = || -> hklab::Result<()> {
                let bundle = counterexample_bundle(epsilon, xi, levels, axes)?;
                fs::create_dir_all(&out)?;
                fs::write(
                    out.join("counterexample.json"),
                    serde_json::to_string_pretty(&bundle)? + "\n",
                )?;
                bundle
                    .diagnostic_series
                    .write_csv(fs::File::create(out.join("r_series.csv"))?)?;
                println!(
                    "n = {}, beta2 = {:.6}, gap = {:.6}",
                    bundle.config.n, bundle.config.beta2, bundle.exponents.gap
                );
                for r in &bundle.condition_reports {
                    println!(
                        "{:<28} {:?} {:.6e}",
                        r.condition, r.verdict, r.best_constant
                    );
                }
                println!("{}", bundle.regime_gap);
                Ok(())
            };
            match run() {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
    }
}
