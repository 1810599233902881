use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use splitfeas::harness::io::{read_matrix, read_vector};
use splitfeas::harness::{certify, run_suite, RunConfig, SuiteConfig, EXIT_AUDIT, EXIT_INPUT};
use splitfeas::solver::run;
use splitfeas::Error;

#[derive(Parser)]
#[command(
    name = "splitfeas",
    version,
    about = "Split convex feasibility solver and benchmark runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (instance, config) pair of a suite.
    Run {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve one instance and write its trace.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        x0: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the spectral constants of a matrix file.
    Spectra {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Print the regularity report of one instance.
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Audit failures map to 2, everything else to 3.
fn exit_for(err: &Error) -> u8 {
    match err {
        Error::InstanceInvariant { .. } | Error::SqneViolation { .. } => EXIT_AUDIT as u8,
        _ => EXIT_INPUT as u8,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_for(&err))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            suite,
            out,
            workers,
            seed,
        } => {
            let mut cfg = match SuiteConfig::load(&suite) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", suite.display());
                    return ExitCode::from(EXIT_INPUT as u8);
                }
            };
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let outcome = run_suite(&cfg, &out);
            if let Some(msg) = &outcome.input_error {
                eprintln!("error: {msg}");
            }
            for f in &outcome.failures {
                eprintln!(
                    "audit failed: {} (entry {}): {}",
                    f.audit, f.entry, f.detail
                );
            }
            println!(
                "{} entries, {} audit failures, summary in {}",
                outcome.lines.len(),
                outcome.failures.len(),
                out.join("summary.csv").display()
            );
            ExitCode::from(outcome.exit_code as u8)
        }
        Command::Solve { config, x0, out } => {
            let result = (|| {
                let (g, cfg) = RunConfig::load(&config)?.build()?;
                g.instance.validate()?;
                let x0 = match x0 {
                    Some(path) => read_vector(&path)?,
                    None => g.x0.clone(),
                };
                let trace = run(&g.instance, &cfg, &x0)?;
                std::fs::write(&out, trace.to_csv())?;
                Ok::<_, Error>(trace)
            })();
            match result {
                Ok(trace) => {
                    println!(
                        "iterations: {}\nconverged: {}\nfinal_dist_F: {:.6e}",
                        trace.iterations(),
                        trace.converged,
                        trace.final_dist.unwrap_or(f64::NAN)
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Spectra { matrix } => {
            let result = (|| {
                let a = read_matrix(&matrix)?;
                let report = a.closed_range_identity_check()?;
                Ok::<_, Error>((a, report))
            })();
            match result {
                Ok((a, r)) => {
                    println!("m: {}\nn: {}\nrank: {}", a.rows(), a.cols(), a.rank());
                    println!("op_norm: {:.17e}", a.op_norm());
                    println!("min_pos_sv: {:.17e}", a.min_pos_sv());
                    println!("abs_A: {:.17e}", r.abs_a);
                    println!("abs_A_adjoint: {:.17e}", r.abs_adjoint);
                    println!("sqrt_abs_AAt: {:.17e}", r.sqrt_abs_aat);
                    println!("sqrt_abs_AtA: {:.17e}", r.sqrt_abs_ata);
                    println!("max_rel_deviation: {:.3e}", r.max_rel_deviation);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Certify { config } => {
            let result = (|| {
                let (g, cfg) = RunConfig::load(&config)?.build()?;
                g.instance.validate()?;
                certify(&g, &cfg)
            })();
            match result {
                Ok(est) => {
                    print!("{}", est.to_report());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
