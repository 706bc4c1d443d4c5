mod commands;

use clap::{Parser, Subcommand};

use commands::{compress, gen_toy, infer, schedule, verify};

#[derive(Parser)]
#[command(
    name = "ftrans",
    version,
    about = "Block-circulant transformer compression, FFT inference kernels, and accelerator scheduling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress dense weight records into block-circulant form
    Compress(compress::Args),
    /// Run a transformer forward pass over a weight container
    Infer(infer::Args),
    /// Build the computation graph, allocate resources, schedule, and report
    Schedule(schedule::Args),
    /// Generate a deterministic toy model (config, weights, device)
    GenToy(gen_toy::Args),
    /// Run the built-in oracle suites
    Verify(verify::Args),
}

/// Exit codes: 0 success, 2 usage, 3 I/O, 4 validation, 5 feasibility,
/// 1 anything else. Usage errors from flag parsing also exit 2 via clap.
fn exit_code(err: &anyhow::Error) -> i32 {
    use ftrans_core::Error as CoreError;
    if err.downcast_ref::<commands::UsageError>().is_some() {
        return 2;
    }
    if let Some(core) = err.downcast_ref::<CoreError>() {
        return match core {
            CoreError::Io(_) => 3,
            CoreError::Feasibility(_) => 5,
            CoreError::Shape(_)
            | CoreError::Domain(_)
            | CoreError::Length(_)
            | CoreError::Format(_)
            | CoreError::Cycle { .. }
            | CoreError::Unschedulable(_)
            | CoreError::Json(_) => 4,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    1
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compress(args) => compress::run(args),
        Command::Infer(args) => infer::run(args),
        Command::Schedule(args) => schedule::run(args),
        Command::GenToy(args) => gen_toy::run(args),
        Command::Verify(args) => verify::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
