use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qmoments_cli::config::{self, Purpose, OUT_DIR_ENV};
use qmoments_cli::{compare, crossval, run, verify, Failure};

#[derive(Parser)]
#[command(name = "qmoments", version, about = "Moment dynamics and Wigner-grid scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trajectory.
    Run { config: PathBuf },
    /// Run the conservative and non-conservative fourth-order systems side by side.
    CompareClosures { config: PathBuf },
    /// Compare grid-measured moments with the moment flow.
    CrossValidate { config: PathBuf },
    /// Check antisymmetry, Leibniz, Jacobi and the Casimirs on random observables.
    VerifyBrackets {
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config } => {
            let cfg = config::load(&config, Purpose::Run)?;
            let s = run::run(&cfg)?;
            println!("{} steps to t = {}", s.steps, s.final_time);
            for (name, d) in &s.drifts {
                println!("max relative drift of {name}: {d:.3e}");
            }
            println!("wrote {}", s.trajectory.display());
            for p in s.plots.iter().chain(&s.snapshots) {
                println!("wrote {}", p.display());
            }
        }
        Command::CompareClosures { config } => {
            let cfg = config::load(&config, Purpose::Compare)?;
            let c = compare::compare_closures(&cfg)?;
            println!("conservative energy drift:     {:.3e} ({} steps)", c.conservative_drift, c.conservative_steps);
            println!(
                "non-conservative energy drift: {:.3e} ({} steps)",
                c.nonconservative_drift, c.nonconservative_steps
            );
            println!("ratio: {:.3e}", c.ratio());
            if let Some(d) = c.max_state_difference {
                println!("max state difference: {d:.3e}");
            }
            println!("wrote {}", cfg.output.path("comparison.csv").display());
        }
        Command::CrossValidate { config } => {
            let cfg = config::load(&config, Purpose::CrossValidate)?;
            let r = crossval::cross_validate(&cfg)?;
            println!("max moment deviation from {}: {:.3e}", r.reference, r.max_deviation);
            if let Some(s) = r.shape_change {
                println!("max change of the co-moving shape: {s:.3e}");
            }
            println!("wrote {}", cfg.output.path("cross_validation.csv").display());
            match r.passed() {
                Some(true) => println!("PASS (tolerance {:.0e})", crossval::QUADRATIC_TOLERANCE),
                Some(false) => {
                    return Err(Failure::Check(format!(
                        "deviation {:.3e} exceeds {:.0e} for a quadratic Hamiltonian",
                        r.max_deviation,
                        crossval::QUADRATIC_TOLERANCE
                    )))
                }
                None if r.shape_change.is_some() => {
                    println!("coherent transport: no pass/fail threshold")
                }
                None => println!("deviation reported as measured closure error"),
            }
        }
        Command::VerifyBrackets { samples, seed } => {
            let reports = verify::run_suites(samples, seed)?;
            let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
            let path = verify::write_reports(&dir, &reports)?;
            std::print!("{}", std::fs::read_to_string(&path)?);
            let failed: Vec<String> =
                reports.iter().filter(|r| !verify::report_passes(r)).map(|r| r.kind.name().to_string()).collect();
            if !failed.is_empty() {
                return Err(Failure::Check(format!("axiom defects too large for: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
