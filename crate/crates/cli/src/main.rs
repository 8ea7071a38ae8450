use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use sff_flow_cli::{cmd_check, cmd_derive, cmd_diagnose, cmd_run, CliError, MeshContext};

#[derive(Parser)]
#[command(name = "sffflow", version, about = "Gradient flow of the L² norm of the second fundamental form")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and SFFFLOW_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyze a mesh snapshot and print a JSON report.
    Diagnose {
        mesh: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ambient: Option<String>,
    },
    /// Replay a structural derivation.
    Derive {
        /// evolution, commutator2 or commutator4.
        #[arg(default_value = "evolution")]
        which: String,
        /// Drop every ambient curvature term.
        #[arg(long)]
        flat: bool,
    },
    /// Run the invariant suite on a mesh file.
    Check {
        mesh: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ambient: Option<String>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Spec(format!("--threads: {e}")))?;
    }
    match cli.cmd {
        Cmd::Run { config, out } => {
            let r = cmd_run(&config, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
        }
        Cmd::Diagnose { mesh, config, ambient } => {
            let v = cmd_diagnose(&mesh, &MeshContext { ambient, config })?;
            println!("{}", serde_json::to_string_pretty(&v).expect("report serializes"));
        }
        Cmd::Derive { which, flat } => {
            let d = cmd_derive(&which, flat)?;
            println!("{}", d.trace_text());
            println!("{}", d.result);
        }
        Cmd::Check { mesh, config, ambient } => {
            let ctx = MeshContext { ambient, config };
            let checks = cmd_check(&mesh, &ctx)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({ "pass": true, "checks": checks })).expect("serializes")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
