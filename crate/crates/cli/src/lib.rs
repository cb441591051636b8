//! Command-line front end of `sdlyap`.
//!
//! Exit codes: 0 when every check passed, 1 when a check was falsified and
//! 2 on usage or input errors.

pub mod cli;
pub mod commands;
pub mod signals;
pub mod spec;

use std::io::Write;

use clap::Parser;

use crate::cli::{Cli, Command};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FALSIFIED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Caps the global thread pool when `SDLYAP_THREADS` is a positive integer.
pub fn configure_threads() {
    if let Some(n) = std::env::var("SDLYAP_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        // fails only when the pool was already built
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate_cmd(a, out),
        Command::Verify(a) => commands::verify_cmd(a, out),
        Command::Masp(a) => commands::masp_cmd(a, out),
        Command::Certify(a) => commands::certify_cmd(a, out),
        Command::Lemma(a) => commands::lemma_cmd(a, out),
        Command::Backstep(a) => commands::backstep_cmd(a, out),
        Command::PlotData(a) => commands::plot_data_cmd(a, out),
    };
    match result {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FALSIFIED,
        Err(e) if is_broken_pipe(&e) => EXIT_PASS,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe))
}
