//! Command-line front end. `dispatch` parses arguments, runs one subcommand
//! inside a sized worker pool and maps failures to exit codes:
//! 0 success, 1 usage or input error, 2 numerical failure.

mod args;
mod commands;
pub mod manifest;

use std::ffi::OsString;

use clap::Parser;
use serde_json::json;

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(g0geo::Error),
}

impl From<g0geo::Error> for CliError {
    fn from(e: g0geo::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let command_line = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return EXIT_USAGE;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| commands::run(&cli, command_line, threads)) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            let code = err.exit_code();
            match &err {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Core(e) => {
                    let diag = json!({ "error": e, "message": e.to_string(), "exit_code": code });
                    eprintln!("{diag}");
                }
            }
            code
        }
    }
}
