use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prehyp_cli::{execute, Command, Study};

#[derive(Parser)]
#[command(name = "prehyp", version, about = "Pre-normally hyperbolic operator pairs on 1+1 spacetimes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `analysis.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check that (P, Q) is a complementary pair and probe the symbols.
    CheckPair(Common),
    /// Solve the Cauchy problem through the second-order reduction.
    Solve(Common),
    /// Compare the reduced solution with a direct first-order solve.
    DirectVsReduced(Common),
    /// Retarded and advanced Green's operators and their identities.
    Greens(Common),
    /// Adjoint pairing of the Green's operators of (P, Q) and (Q*, P*).
    AdjointCheck(Common),
    /// The Dirac sesquilinear form across Cauchy lines.
    Beta(Common),
    /// Round trip between Cauchy lines and the data-space isometry.
    Isometry(Common),
    /// Grid-refinement study of one quantity.
    Convergence {
        #[command(subcommand)]
        study: StudyCmd,
    },
    /// Every applicable check plus every convergence study.
    VerifyAll(Common),
}

#[derive(Subcommand)]
enum StudyCmd {
    Solve(Common),
    DirectVsReduced(Common),
    RoundTrip(Common),
    Greens(Common),
    AdjointCheck(Common),
    Beta(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::CheckPair(c) => (Command::CheckPair, c),
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::DirectVsReduced(c) => (Command::DirectVsReduced, c),
        Cmd::Greens(c) => (Command::Greens, c),
        Cmd::AdjointCheck(c) => (Command::AdjointCheck, c),
        Cmd::Beta(c) => (Command::Beta, c),
        Cmd::Isometry(c) => (Command::Isometry, c),
        Cmd::VerifyAll(c) => (Command::VerifyAll, c),
        Cmd::Convergence { study } => match study {
            StudyCmd::Solve(c) => (Command::Convergence(Study::Solve), c),
            StudyCmd::DirectVsReduced(c) => (Command::Convergence(Study::DirectVsReduced), c),
            StudyCmd::RoundTrip(c) => (Command::Convergence(Study::RoundTrip), c),
            StudyCmd::Greens(c) => (Command::Convergence(Study::Greens), c),
            StudyCmd::AdjointCheck(c) => (Command::Convergence(Study::AdjointCheck), c),
            StudyCmd::Beta(c) => (Command::Convergence(Study::Beta), c),
        },
    };
    match execute(command, &common.config, common.out.as_deref(), common.seed) {
        Ok((outcome, dir)) => {
            for c in &outcome.report.checks {
                println!("{}", c.line());
            }
            for s in &outcome.report.skipped {
                println!("SKIP {}: {}", s.name, s.reason);
            }
            println!(
                "{} {} -> {}",
                if outcome.report.pass { "ok" } else { "FAILED" },
                outcome.report.subcommand,
                dir.join("report.json").display()
            );
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
