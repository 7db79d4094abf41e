//! Runs every bundled config through the same entry point as the binary.
//!
//! `cargo run --example config_driven -- [out-dir]`

use std::path::{Path, PathBuf};

use anisodiff::cli::{run, RunOptions};
use anisodiff::config::Mode;

fn main() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("anisodiff-examples"));
    for (mode, file) in [
        (Mode::Forward, "forward.json"),
        (Mode::Synth, "synth.json"),
        (Mode::Invert, "invert.json"),
        (Mode::Invert, "invert_noisy.json"),
        (Mode::CheckJacobian, "check_jacobian.json"),
        (Mode::MmsConvergence, "mms.json"),
    ] {
        let opts = RunOptions {
            mode,
            config: configs.join(file),
            out: Some(out.join(file.trim_end_matches(".json"))),
            threads: None,
            seed: None,
        };
        match run(&opts) {
            Ok(report) => println!(
                "{file}: exit {} -> {}\n{}",
                report.exit_code,
                report.out_dir.display(),
                serde_json::to_string_pretty(&report.summary).unwrap()
            ),
            Err(e) => println!("{file}: {e}"),
        }
    }
}
