//! `specfilter` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error,
//! 3 numeric or convergence error.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::Cli;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

impl Category {
    fn name(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Data => "data",
            Category::Numeric => "numeric",
        }
    }
}

/// Raised for bad flag combinations that clap cannot express.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn categorize(err: &anyhow::Error) -> Category {
    use specfilter_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return Category::Usage;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Convergence { .. } | E::Divergence { .. } | E::NonFinite { .. } => Category::Numeric,
                E::Domain(_) | E::Config(_) => Category::Usage,
                E::Shape { .. } | E::Dimensions(_) | E::Format { .. } | E::Manifest(_) | E::Io { .. } => {
                    Category::Data
                }
            };
        }
    }
    Category::Data
}

fn report(err: &anyhow::Error, category: Category, json_errors: bool) {
    let message = format!("{err:#}");
    if json_errors {
        let body = json!({
            "error": {
                "kind": category.name(),
                "exit_code": category as u8,
                "message": message,
            }
        });
        eprintln!("{body}");
    } else {
        eprintln!("error: {message}");
    }
}

fn main() -> ExitCode {
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if json_errors {
                report(&anyhow::anyhow!(e.to_string().trim().to_owned()), Category::Usage, true);
            } else {
                let _ = e.print();
            }
            return ExitCode::from(Category::Usage as u8);
        }
    };

    init_logging(cli.global.log_level.as_deref());
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let category = categorize(&err);
            report(&err, category, cli.global.json_errors);
            ExitCode::from(category as u8)
        }
    }
}

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::new().filter_or("SPECFILTER_LOG", "warn");
    let mut builder = env_logger::Builder::from_env(env);
    if let Some(level) = level {
        builder.parse_filters(level);
    }
    builder.format_timestamp_millis().init();
}
