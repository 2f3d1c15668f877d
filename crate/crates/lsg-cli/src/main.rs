use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lsg_cli::{cmd_compare, cmd_export, cmd_query, cmd_run, CliError};

/// Layered-semantic-graph missions, queries and planner studies.
#[derive(Parser)]
#[command(name = "lsg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full explore-inspect mission and write its artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Mission config JSON (defaults apply to missing fields).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Zero wall-clock timing columns for byte-stable outputs.
        #[arg(long)]
        no_timing: bool,
    },
    /// Plan semantic queries against a saved lsg.json.
    Query {
        #[arg(long)]
        lsg: PathBuf,
        /// One query, e.g. "Visit front-bumper-1 in Level-0 of car-1".
        #[arg(long, conflicts_with = "interactive")]
        q: Option<String>,
        /// Read queries line by line from stdin until EOF.
        #[arg(long)]
        interactive: bool,
        /// Scenario file enabling collision-checked legs and grid fallback.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Emit the full plan as JSON instead of a summary.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        no_timing: bool,
    },
    /// Run a mission, then race the hierarchical planner against the grid
    /// baseline on random navigation queries.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of (start, goal) queries.
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_timing: bool,
    },
    /// Export the flattened graph union of a saved lsg.json.
    Export {
        #[arg(long)]
        lsg: PathBuf,
        /// One of: dot, graphml, union-json.
        #[arg(long)]
        format: String,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            config,
            seed,
            out,
            no_timing,
        } => cmd_run(&scenario, config.as_deref(), seed, &out, no_timing).map(|_| ()),
        Command::Query {
            lsg,
            q,
            interactive,
            scenario,
            json,
            no_timing,
        } => cmd_query(
            &lsg,
            q.as_deref(),
            interactive,
            scenario.as_deref(),
            json,
            no_timing,
        ),
        Command::Compare {
            scenario,
            config,
            n,
            seed,
            out,
            no_timing,
        } => cmd_compare(
            &scenario,
            config.as_deref(),
            n,
            seed,
            out.as_deref(),
            no_timing,
        )
        .map(|_| ()),
        Command::Export { lsg, format, out } => cmd_export(&lsg, &format, out.as_deref()),
    }
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes (e.g. `lsg run ... | head`)
    // instead of panicking on EPIPE.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
