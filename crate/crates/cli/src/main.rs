mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use gl2d::Gl2dError;

#[derive(Parser, Debug)]
#[command(name = "gl2d", version, about = "Reduced 2D Ginzburg-Landau laboratory for type-I superconductors")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One-dimensional transition energy over a list of kappa values.
    Profile1d(commands::Profile1dArgs),
    /// Build and audit the lifted building block.
    Block(commands::BlockArgs),
    /// Minimal cell energy under the strip constraints.
    Cell(commands::CellArgs),
    /// Recovery configuration for a polygon file.
    Recovery(commands::RecoveryArgs),
    /// Torus ground state from a snapshot or a recovery configuration.
    Minimize(commands::MinimizeArgs),
    /// Minimize along a list of epsilon values.
    Sweep(commands::SweepArgs),
    /// Nearest admissible epsilon and its flux quantum count.
    SnapEps(commands::SnapArgs),
    /// Reduced parameters of a physical sample.
    Nondim(commands::NondimArgs),
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    // negative values must reach validation, not the flag parser
    let parsed = Cli::command()
        .mut_subcommands(|s| s.allow_negative_numbers(true))
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    let res = match cli.cmd {
        Command::Profile1d(a) => commands::profile1d(a),
        Command::Block(a) => commands::block(a),
        Command::Cell(a) => commands::cell(a),
        Command::Recovery(a) => commands::recovery(a),
        Command::Minimize(a) => commands::minimize(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::SnapEps(a) => commands::snap_eps(a),
        Command::Nondim(a) => commands::nondim(a),
    };
    match res {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::NotConverged(msg)) => fail("non_convergence", &msg, 3),
        Err(e) => {
            let (kind, code) = match &e {
                e if e.is_numerical() => ("numerical", 3),
                Gl2dError::Io(_) => ("io", 2),
                Gl2dError::Parse(_) => ("parse", 2),
                _ => ("validation", 2),
            };
            fail(kind, &e.to_string(), code)
        }
    }
}
