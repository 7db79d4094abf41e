use std::path::PathBuf;
use std::process::ExitCode;

use anisodiff::cli::{run_to_exit_code, RunOptions, EXIT_USAGE};
use anisodiff::config::Mode;
use clap::Parser;

#[derive(Parser)]
#[command(name = "anisodiff", version, about = "Anisotropic diffusion: forward solves and diffusivity reconstruction")]
struct Args {
    /// forward | synth | invert | check-jacobian | mms-convergence
    mode: Mode,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let code = run_to_exit_code(&RunOptions {
        mode: args.mode,
        config: args.config,
        out: args.out,
        threads: args.threads,
        seed: args.seed,
    });
    ExitCode::from(code as u8)
}
