// SPDX-License-Identifier: Apache-2.0

//! Driver behind the `decoh` binary: configuration, subcommands, output
//! files and the self-check suite.

pub mod commands;
pub mod config;
pub mod output;
pub mod selfcheck;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use thiserror::Error;

pub use config::{ConfigError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    RateCurve,
    CompareRoutes,
    Eta,
    Gbar,
    McVerify,
    Evolve,
    Selfcheck { extended: bool },
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RateCurve => "rate-curve",
            Command::CompareRoutes => "compare-routes",
            Command::Eta => "eta",
            Command::Gbar => "gbar",
            Command::McVerify => "mc-verify",
            Command::Evolve => "evolve",
            Command::Selfcheck { .. } => "selfcheck",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] decoh_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{failed} of {total} self-checks failed")]
    SelfcheckFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for bad input, 2 for numerical failure, 3 for a failed self-check.
    pub fn exit_code(&self) -> i32 {
        use decoh_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Core(E::InvalidParameter { .. } | E::DegenerateModel(_)) => 1,
            CliError::Core(E::Convergence { .. } | E::Contract(_) | E::InsufficientData(_)) => 2,
            CliError::SelfcheckFailed { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        use decoh_core::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Core(E::InvalidParameter { .. }) => "invalid_parameter",
            CliError::Core(E::DegenerateModel(_)) => "degenerate_model",
            CliError::Core(E::Convergence { .. }) => "convergence",
            CliError::Core(E::Contract(_)) => "contract",
            CliError::Core(E::InsufficientData(_)) => "insufficient_data",
            CliError::SelfcheckFailed { .. } => "selfcheck",
        }
    }

    /// One-line JSON description for standard error.
    pub fn json_line(&self) -> String {
        let mut v = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Config(c) = self {
            if let Some(line) = c.line() {
                v["line"] = json!(line);
            }
        }
        if let CliError::Core(decoh_core::Error::Convergence {
            achieved,
            requested,
            ..
        }) = self
        {
            v["achieved"] = json!(achieved);
            v["requested"] = json!(requested);
        }
        v.to_string()
    }
}

/// Everything a run needs besides the subcommand's own settings.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
    pub out: PathBuf,
    pub threads: usize,
}

/// What a subcommand hands back for the manifest and the terminal.
#[derive(Debug, Default)]
pub struct Report {
    pub diagnostics: Value,
    pub warnings: Vec<String>,
    pub summary: String,
}

/// Runs one subcommand and writes its files and the manifest. Returns the
/// text summary for standard output, which a failed self-check still has.
pub fn run(inv: &Invocation) -> (String, Result<(), CliError>) {
    match run_inner(inv) {
        Ok((summary, failure)) => (summary, failure.map_or(Ok(()), Err)),
        Err(e) => (String::new(), Err(e)),
    }
}

fn run_inner(inv: &Invocation) -> Result<(String, Option<CliError>), CliError> {
    let start = Instant::now();
    let mut out = output::OutputDir::new(&inv.out)?;
    let result = match inv.command {
        Command::RateCurve => commands::rate_curve(&inv.config, &mut out),
        Command::CompareRoutes => commands::compare_routes(&inv.config, &mut out),
        Command::Eta => commands::eta(&inv.config, &mut out),
        Command::Gbar => commands::gbar(&inv.config, &mut out),
        Command::McVerify => commands::mc_verify(&inv.config, &mut out),
        Command::Evolve => commands::evolve(&inv.config, &mut out),
        Command::Selfcheck { extended } => selfcheck::run(&inv.config, extended, &mut out),
    };
    let (report, failure) = match result {
        Ok(r) => (r, None),
        Err(commands::Failed { report, error }) => (*report, Some(error)),
    };
    let mut warnings = report.warnings;
    warnings.sort();
    warnings.dedup();
    let manifest = output::Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: inv.command.name().to_string(),
        seed: inv.config.seed,
        threads: inv.threads,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        config: inv
            .config
            .echo()
            .into_iter()
            .map(|(k, v)| (k, Value::String(v)))
            .collect(),
        outputs: out
            .written()
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        diagnostics: report.diagnostics,
        warnings,
    };
    out.write(
        &format!("{}.manifest.json", inv.command.name()),
        &manifest.render(),
    )?;
    Ok((report.summary, failure))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        let conv = CliError::Core(decoh_core::Error::Convergence {
            context: "x".into(),
            achieved: 1e-6,
            requested: 1e-9,
        });
        assert_eq!(conv.exit_code(), 2);
        assert_eq!(
            CliError::Core(decoh_core::Error::DegenerateModel("x".into())).exit_code(),
            1
        );
        assert_eq!(
            CliError::SelfcheckFailed {
                failed: 1,
                total: 20
            }
            .exit_code(),
            3
        );
        let v: Value = serde_json::from_str(&conv.json_line()).unwrap();
        assert_eq!(v["error"], "convergence");
        assert_eq!(v["requested"], 1e-9);
    }
}
