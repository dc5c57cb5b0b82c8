// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use decoh_cli::{run, CliError, Command, Invocation, RunConfig};
use decoh_core::EpsilonMode;

/// Collisional decoherence rates of a heavy particle in a thermal gas.
#[derive(Debug, Parser)]
#[command(name = "decoh", version)]
struct Args {
    #[command(subcommand)]
    command: Sub,

    /// key=value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads (falls back to DECOH_THREADS, then all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Seed for Monte Carlo sampling; overrides mc.seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Prefactor convention; overrides `epsilon` in the config.
    #[arg(long, global = true, value_name = "MODE", value_parser = parse_epsilon)]
    epsilon: Option<EpsilonMode>,

    /// Override a config key, e.g. `--set grid.count=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// F(R) on the separation grid by one route.
    RateCurve,
    /// General route at both conventions against the other routes.
    CompareRoutes,
    /// Per-collision decoherence η_p(R) by two evaluations.
    Eta,
    /// Ḡ_q(ω) in closed form against its defining integral.
    Gbar,
    /// Monte Carlo wave-packet estimates against quadrature.
    McVerify,
    /// Density-matrix snapshots under the rate equation.
    Evolve,
    /// Run the invariant suite; exits 3 if any check fails.
    Selfcheck {
        /// Include the slow oracle and full-size Monte Carlo checks.
        #[arg(long)]
        extended: bool,
    },
}

fn parse_epsilon(s: &str) -> Result<EpsilonMode, String> {
    s.parse().map_err(|e: decoh_core::Error| e.to_string())
}

fn threads(flag: Option<usize>) -> Result<usize, CliError> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("DECOH_THREADS") {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::Usage(format!("DECOH_THREADS must be a count, got `{v}`"))
            })?,
            Err(_) => 0,
        },
    };
    Ok(n)
}

fn invocation(args: Args) -> Result<Invocation, CliError> {
    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        config.apply_text(&text, &path.display().to_string())?;
    }
    for item in &args.set {
        config.apply_override(item)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(eps) = args.epsilon {
        config.epsilon = eps;
    }
    let requested = threads(args.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(requested)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    let command = match args.command {
        Sub::RateCurve => Command::RateCurve,
        Sub::CompareRoutes => Command::CompareRoutes,
        Sub::Eta => Command::Eta,
        Sub::Gbar => Command::Gbar,
        Sub::McVerify => Command::McVerify,
        Sub::Evolve => Command::Evolve,
        Sub::Selfcheck { extended } => Command::Selfcheck { extended },
    };
    Ok(Invocation {
        command,
        config,
        out: args.out,
        threads: rayon::current_num_threads(),
    })
}

fn fail(e: &CliError) -> ExitCode {
    let _ = writeln!(std::io::stderr().lock(), "{}", e.json_line());
    ExitCode::from(e.exit_code() as u8)
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
            return fail(&CliError::Usage(e.kind().to_string()));
        }
    };
    let inv = match invocation(args) {
        Ok(inv) => inv,
        Err(e) => return fail(&e),
    };
    let (summary, result) = run(&inv);
    let _ = std::io::stdout().lock().write_all(summary.as_bytes());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
