//! `dcreg` — learn DC regularizers, reconstruct, and probe the geometry.
//!
//! ```text
//! dcreg <train|solve|bench|stargeom|ablate> [CONFIG.toml]
//!       [--preset NAME] [--out DIR] [--section.key=value ...]
//! ```
//!
//! Exit codes: 0 success, 2 config error, 3 missing artifact, 4 numerical
//! failure. The output root defaults to the working directory and can be
//! moved with the `DCREG_OUT` environment variable.

use dcreg_cli::commands;
use dcreg_cli::config::RunConfig;
use dcreg_cli::{presets, CliError, CliResult};
use std::path::PathBuf;

fn usage() -> String {
    format!(
        "usage: dcreg <train|solve|bench|stargeom|ablate> [CONFIG.toml] \
         [--preset NAME] [--out DIR] [--section.key=value ...]\n\
         presets: {}",
        presets::NAMES.join(", ")
    )
}

struct Cli {
    command: String,
    config_path: Option<PathBuf>,
    preset: Option<String>,
    out_override: Option<String>,
    overrides: Vec<(String, String)>,
}

fn parse_args(args: &[String]) -> CliResult<Cli> {
    if args.is_empty() {
        return Err(CliError::config(usage()));
    }
    let command = args[0].clone();
    let mut config_path = None;
    let mut preset = None;
    let mut out_override = None;
    let mut overrides = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if let Some(rest) = a.strip_prefix("--") {
            if rest == "preset" || rest == "out" {
                i += 1;
                let Some(v) = args.get(i) else {
                    return Err(CliError::config(format!("--{rest} needs a value")));
                };
                if rest == "preset" {
                    preset = Some(v.clone());
                } else {
                    out_override = Some(v.clone());
                }
            } else if let Some((k, v)) = rest.split_once('=') {
                match k {
                    "preset" => preset = Some(v.to_string()),
                    "out" => out_override = Some(v.to_string()),
                    _ => overrides.push((k.to_string(), v.to_string())),
                }
            } else {
                return Err(CliError::config(format!(
                    "unrecognized flag `{a}` (overrides look like --section.key=value)"
                )));
            }
        } else if config_path.is_none() {
            config_path = Some(PathBuf::from(a));
        } else {
            return Err(CliError::config(format!("unexpected argument `{a}`")));
        }
        i += 1;
    }
    Ok(Cli {
        command,
        config_path,
        preset,
        out_override,
        overrides,
    })
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let base = match (&cli.config_path, &cli.preset) {
        (Some(_), Some(_)) => {
            return Err(CliError::config(
                "pass either a config path or --preset, not both",
            ))
        }
        (Some(path), None) => std::fs::read_to_string(path).map_err(|e| {
            CliError::missing(format!("cannot read config {}: {e}", path.display()))
        })?,
        (None, Some(name)) => presets::by_name(name)
            .ok_or_else(|| {
                CliError::config(format!(
                    "unknown preset `{name}` (available: {})",
                    presets::NAMES.join(", ")
                ))
            })?
            .to_string(),
        (None, None) => String::new(), // defaults + overrides
    };
    let mut overrides = cli.overrides.clone();
    if let Some(dir) = &cli.out_override {
        overrides.push(("output.dir".to_string(), dir.clone()));
    }
    RunConfig::load(&base, &overrides)
}

fn run() -> CliResult<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = parse_args(&args)?;
    let cfg = load_config(&cli)?;

    let root = std::env::var("DCREG_OUT").unwrap_or_else(|_| ".".to_string());
    let out = PathBuf::from(root).join(&cfg.output.dir);

    match cli.command.as_str() {
        "train" => commands::cmd_train(&cfg, &out),
        "solve" => commands::cmd_solve(&cfg, &out),
        "bench" => commands::cmd_bench(&cfg, &out),
        "stargeom" => commands::cmd_stargeom(&cfg, &out),
        "ablate" => commands::cmd_ablate(&cfg, &out),
        other => Err(CliError::config(format!(
            "unknown command `{other}`\n{}",
            usage()
        ))),
    }
}

fn main() {
    match run() {
        Ok(()) => {}
        Err(e) => {
            eprintln!("dcreg: {}", e.message);
            std::process::exit(e.code);
        }
    }
}
