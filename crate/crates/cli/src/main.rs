use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use thermosched_cli::presets;
use thermosched_cli::run::{oracle_gap, solve_scenario, write_artifacts};
use thermosched_cli::{parse_scenario, props, PropsConfig, Scenario};

/// Relative gap above which `compare` reports a disagreement.
const COMPARE_TOL: f64 = 1e-3;

#[derive(Parser)]
#[command(
    name = "thermosched",
    version,
    about = "Throughput-optimal power schedules under a temperature ceiling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario file and write trajectory.csv, summary.json and checks.json.
    Solve {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Grid cells of the dual solver and the oracle.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        /// Also run the oracle and report the gap.
        #[arg(long)]
        oracle: bool,
    },
    /// Reproduce a reference scenario and check its expected values.
    Figure {
        #[arg(value_parser = clap::value_parser!(u8).range(4..=8))]
        number: u8,
        /// Defaults to `figure-<number>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        oracle: bool,
    },
    /// Run seeded random scenarios through the solver and the structural checks.
    Props {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        arrivals: usize,
        /// Check a policy with a negative power jump instead of the optimum.
        #[arg(long)]
        inject_fault: bool,
        /// Where a failing scenario is written.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare the main solver with the oracle.
    Compare {
        scenario: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
}

fn load(path: &Path, grid: Option<usize>, tol: Option<f64>, oracle: bool) -> Result<Scenario> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut doc = parse_scenario(&text)
        .with_context(|| format!("in {}", path.display()))?
        .to_doc();
    doc.solver.grid_n = grid.unwrap_or(doc.solver.grid_n);
    doc.solver.tol = tol.unwrap_or(doc.solver.tol);
    doc.solver.oracle |= oracle;
    Ok(doc.validate()?)
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Solve {
            scenario,
            out,
            grid,
            tol,
            oracle,
        } => {
            let sc = load(&scenario, grid, tol, oracle)?;
            let outcome = solve_scenario(&sc)?;
            write_artifacts(&sc, &outcome, Vec::new(), &out)?;
            let r = &outcome.report;
            println!("solver: {}", outcome.solver);
            println!("regime: {}", r.regime.name());
            println!("throughput: {:.9} bits", r.throughput);
            println!(
                "energy used: {:.9} of {:.9}",
                r.energy_used, r.energy_available
            );
            if let Some(g) = outcome.oracle {
                println!("oracle gap: {:.3e} relative", g.rel_gap);
            }
            println!("max KKT residual: {:.3e}", r.kkt.max_residual());
            for c in outcome.checks.failures() {
                println!("check failed: {} ({})", c.name, c.detail);
            }
            println!("certified: {}", outcome.certified());
            println!("artifacts: {}", out.display());
            Ok(status(outcome.certified()))
        }
        Command::Figure {
            number,
            out,
            oracle,
        } => {
            let mut doc = presets::scenario(number)?.to_doc();
            doc.solver.oracle = oracle;
            let sc = doc.validate()?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("figure-{number}")));
            let outcome = solve_scenario(&sc)?;
            let exp = presets::expectations(number, &sc, &outcome)?;
            let all = exp.iter().all(|e| e.passed);
            for e in &exp {
                let mark = if e.passed { "PASS" } else { "FAIL" };
                println!(
                    "{mark} {}: measured {}, expected {}",
                    e.name, e.measured, e.expected
                );
            }
            write_artifacts(&sc, &outcome, exp, &out)?;
            let path = out.join("scenario.toml");
            fs::write(&path, presets::document(number)?)
                .with_context(|| format!("cannot write {}", path.display()))?;
            println!("artifacts: {}", out.display());
            Ok(status(all))
        }
        Command::Props {
            seed,
            trials,
            arrivals,
            inject_fault,
            out,
        } => {
            anyhow::ensure!(trials >= 1, "--trials must be at least 1");
            anyhow::ensure!(arrivals >= 1, "--arrivals must be at least 1");
            let report = props(&PropsConfig {
                seed,
                trials,
                arrivals,
                inject_fault,
                out_dir: out,
            })?;
            match report.failure {
                None => {
                    println!(
                        "all {} trials passed (seed {seed}, {arrivals} arrival(s))",
                        report.passed
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Some(f) => {
                    for (check, detail) in &f.violations {
                        println!("trial {} failed check {check}: {detail}", f.trial);
                    }
                    println!("reproducer: {}", f.reproducer.display());
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Compare {
            scenario,
            grid,
            tol,
        } => {
            let sc = load(&scenario, grid, tol, false)?;
            let outcome = solve_scenario(&sc)?;
            let g = oracle_gap(&sc, outcome.report.throughput)?;
            println!("solver: {}", outcome.solver);
            println!("throughput: {:.9} bits", g.throughput);
            println!(
                "oracle objective: {:.9} bits (n = {}, {} iterations)",
                g.oracle_objective, g.grid_n, g.oracle_iterations
            );
            println!(
                "gap: {:.3e} absolute, {:.3e} relative",
                g.abs_gap, g.rel_gap
            );
            Ok(status(g.rel_gap <= COMPARE_TOL))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
