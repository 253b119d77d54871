//! Command-line entry point.
//!
//! Subcommands:
//!   gamedyn run <config> [--key value ...]
//!   gamedyn spectrum <config> [--snapshot file.json] [--key value ...]
//!   gamedyn sweep <config> --axis <h|gamma> --values v1,v2,... [--key value ...]
//!
//! Any config key can be overridden as `--key value` (hyphens map to
//! underscores, so `--out-dir` sets `out_dir`). Exit codes: 0 success,
//! 1 diverged, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use gamedyn_cli::config::RunConfig;
use gamedyn_cli::pipeline::{self, RunStatus, SweepAxis};

const USAGE: &str = "usage: gamedyn <run|spectrum|sweep> <config> [options]
  run <config> [--key value ...]
  spectrum <config> [--snapshot file.json] [--key value ...]
  sweep <config> --axis <h|gamma> --values v1,v2,... [--key value ...]
options: any config key as --key value (e.g. --seed 7, --out-dir runs/a)";

enum CliError {
    Usage(String),
    Runtime(String),
}

struct Invocation {
    subcommand: String,
    config_path: PathBuf,
    overrides: Vec<(String, String)>,
    axis: Option<String>,
    values: Option<String>,
    snapshot: Option<PathBuf>,
}

fn parse_args(args: &[String]) -> Result<Invocation, CliError> {
    let mut positional = Vec::new();
    let mut overrides = Vec::new();
    let mut axis = None;
    let mut values = None;
    let mut snapshot = None;
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        if let Some(name) = arg.strip_prefix("--") {
            let value = args
                .get(i + 1)
                .ok_or_else(|| CliError::Usage(format!("missing value for --{name}")))?
                .clone();
            match name {
                "axis" => axis = Some(value),
                "values" => values = Some(value),
                "snapshot" => snapshot = Some(PathBuf::from(value)),
                _ => overrides.push((name.replace('-', "_"), value)),
            }
            i += 2;
        } else {
            positional.push(arg.clone());
            i += 1;
        }
    }
    if positional.len() != 2 {
        return Err(CliError::Usage(format!(
            "expected a subcommand and a config path, got {positional:?}"
        )));
    }
    Ok(Invocation {
        subcommand: positional[0].clone(),
        config_path: PathBuf::from(&positional[1]),
        overrides,
        axis,
        values,
        snapshot,
    })
}

fn load_config(inv: &Invocation) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&inv.config_path).map_err(|e| {
        CliError::Usage(format!(
            "cannot read config {}: {e}",
            inv.config_path.display()
        ))
    })?;
    RunConfig::parse(&text, &inv.overrides).map_err(|e| CliError::Usage(e.to_string()))
}

fn real_main() -> Result<RunStatus, CliError> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let inv = parse_args(&args)?;
    let config = load_config(&inv)?;
    match inv.subcommand.as_str() {
        "run" => {
            let outcome = pipeline::run(&config).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "run: status={} steps={} final_field_norm={:e} -> {}",
                gamedyn_cli::output::status_name(outcome.summary.status),
                outcome.summary.steps_run,
                outcome.summary.final_field_norm,
                outcome.out_dir.display()
            );
            Ok(outcome.summary.status)
        }
        "spectrum" => {
            let path = pipeline::spectrum(&config, inv.snapshot.as_deref())
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("spectrum: wrote {}", path.display());
            Ok(RunStatus::Converged)
        }
        "sweep" => {
            let axis: SweepAxis = inv
                .axis
                .as_deref()
                .ok_or_else(|| CliError::Usage("sweep requires --axis".into()))?
                .parse()
                .map_err(CliError::Usage)?;
            let values: Vec<f64> = inv
                .values
                .as_deref()
                .ok_or_else(|| CliError::Usage("sweep requires --values".into()))?
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Usage(format!("bad --values: {e}")))?;
            if values.is_empty() {
                return Err(CliError::Usage("sweep needs at least one value".into()));
            }
            let outcome = pipeline::sweep(&config, axis, &values)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            for row in &outcome.rows {
                println!(
                    "sweep value {:e}: {}",
                    row.value,
                    gamedyn_cli::output::status_name(row.status)
                );
            }
            let any_diverged = outcome
                .rows
                .iter()
                .any(|r| r.status == RunStatus::Diverged);
            Ok(if any_diverged {
                RunStatus::Diverged
            } else {
                RunStatus::Converged
            })
        }
        other => Err(CliError::Usage(format!("unknown subcommand {other:?}"))),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(RunStatus::Diverged) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n{USAGE}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
