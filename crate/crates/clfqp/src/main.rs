use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clfqp::bench::{self, DEFAULT_SIZES};
use clfqp::{runner, CliError};

#[derive(Parser)]
#[command(name = "clfqp", version, about = "Torque-saturated CLF-QP walking simulations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario and write its log, summary and plots.
    Run { scenario: PathBuf },
    /// Run several scenarios on the same plant and gait and tabulate them.
    Compare {
        #[arg(required = true, num_args = 2..)]
        scenarios: Vec<PathBuf>,
        /// Directory for compare.csv.
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Find a periodic gait for a plant file.
    GaitDesign {
        plant: PathBuf,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Time the QP solver on controller-shaped and random problems.
    BenchQp {
        /// Comma-separated list of hardM, softM or NxC.
        #[arg(long, default_value = DEFAULT_SIZES)]
        sizes: String,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run { scenario } => {
            let r = runner::run(&scenario)?;
            let s = &r.summary;
            println!(
                "{}: {} ({}/{} steps, mean |eta| {:.3e}, {:.1}% optimal) -> {}",
                s.scenario,
                s.outcome,
                s.steps_completed,
                s.steps_attempted,
                s.mean_eta,
                100.0 * (s.frac_optimal + s.frac_closed_form),
                r.output_dir.display()
            );
        }
        Cmd::Compare { scenarios, out } => {
            for row in runner::compare(&scenarios, &out)? {
                println!(
                    "{:<16} {:<8} {:<10} steps {:>3}/{:<3} mean step |eta| {:.3e}",
                    row.scenario, row.saturation, row.outcome, row.steps_completed, row.steps_attempted, row.mean_step_eta
                );
            }
            println!("wrote {}", out.join("compare.csv").display());
        }
        Cmd::GaitDesign { plant, out } => {
            let g = runner::gait_design(&plant, &out)?;
            println!(
                "step period {:.4} s, spectral radius {:.3}, wrote {}",
                g.step_period,
                g.diagnostics.spectral_radius,
                out.display()
            );
        }
        Cmd::BenchQp { sizes, samples, seed } => {
            if samples == 0 {
                return Err(CliError::config("samples", "must be >= 1"));
            }
            let sizes = bench::parse_sizes(&sizes)?;
            println!("size     nv  nc  samples  optimal  median_us  p99_us  max_us");
            for size in sizes {
                let r = bench::bench(size, samples, seed);
                println!(
                    "{:<8} {:>2}  {:>2}  {:>7}  {:>7}  {:>9.2}  {:>6.2}  {:>6.1}",
                    r.size, r.nv, r.nc, r.samples, r.optimal, r.median_us, r.p99_us, r.max_us
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
