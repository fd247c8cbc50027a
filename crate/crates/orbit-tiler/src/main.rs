//! Batch front end: `orbit-tiler <subcommand> --config PATH [flags]`.
//!
//! Exit codes: 0 when every assertion passed, 1 when any failed, 2 on
//! configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use orbit_tiler::config::{resolve, CliOverrides, Subcommand};
use orbit_tiler::runner::run;

const USAGE: &str = "\
orbit-tiler — orbit tilings, sparse sections, and averaging checks on
measure-preserving Z-actions

USAGE:
  orbit-tiler <subcommand> --config PATH [--seed U64] [--out DIR] [--jobs N]

SUBCOMMANDS:
  lemma1     finite-averaging identity over seeded random relations
  sections   sparse marker sections and their gap statistics
  tile       tile-length plan, greedy tilings, classes, coverage
  chain      the inequality chain (two-sided probe when [chain] lower is set)
  converge   orbit averages against the space average
  condexp    full-period averages against the invariant projection

FLAGS:
  --config PATH   plain-text key = value config (required)
  --seed U64      overrides [run] seed
  --out DIR       overrides [run] out
  --jobs N        overrides [run] jobs
  --help          this text

ENVIRONMENT:
  ORBIT_TILER_CAP   overrides the horizon search cap (default 65536)

Exit codes: 0 all assertions passed, 1 some assertion failed, 2 config error.
";

struct Args {
    command: Subcommand,
    config_path: PathBuf,
    overrides: CliOverrides,
}

fn parse_args() -> Result<Args, String> {
    let mut argv = std::env::args().skip(1);
    let mut command = None;
    let mut config_path = None;
    let mut overrides = CliOverrides::default();

    while let Some(arg) = argv.next() {
        match arg.as_str() {
            "--help" | "-h" => {
                println!("{USAGE}");
                std::process::exit(0);
            }
            "--config" => {
                let v = argv.next().ok_or("missing value for --config")?;
                config_path = Some(PathBuf::from(v));
            }
            "--seed" => {
                let v = argv.next().ok_or("missing value for --seed")?;
                overrides.seed =
                    Some(v.parse().map_err(|_| format!("invalid --seed '{v}'"))?);
            }
            "--out" => {
                let v = argv.next().ok_or("missing value for --out")?;
                overrides.out_dir = Some(PathBuf::from(v));
            }
            "--jobs" => {
                let v = argv.next().ok_or("missing value for --jobs")?;
                overrides.jobs =
                    Some(v.parse().map_err(|_| format!("invalid --jobs '{v}'"))?);
            }
            other if other.starts_with('-') => {
                return Err(format!("unknown flag '{other}'"));
            }
            other => {
                if command.is_some() {
                    return Err(format!("unexpected extra argument '{other}'"));
                }
                command = Some(
                    Subcommand::parse(other)
                        .ok_or(format!("unknown subcommand '{other}'"))?,
                );
            }
        }
    }

    if let Ok(v) = std::env::var("ORBIT_TILER_CAP") {
        overrides.cap = Some(
            v.parse()
                .map_err(|_| format!("invalid ORBIT_TILER_CAP '{v}'"))?,
        );
    }

    Ok(Args {
        command: command.ok_or("missing subcommand")?,
        config_path: config_path.ok_or("missing --config PATH")?,
        overrides,
    })
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("{msg}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };

    let text = match std::fs::read_to_string(&args.config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read config {}: {e}", args.config_path.display());
            return ExitCode::from(2);
        }
    };

    let cfg = match resolve(&text, args.command, &args.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };

    match run(&cfg) {
        Ok(summary) => {
            print!("{}", summary.text);
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(1)
        }
    }
}
