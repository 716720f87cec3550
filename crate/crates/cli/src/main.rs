//! `fraccal` — run the laboratory's named scenarios from TOML configs.
//!
//! Exit codes: 0 all assertions pass, 1 an assertion (or a numerical step)
//! failed, 2 configuration error, 3 resource refusal.

mod config;
mod error;
mod scenarios;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ScenarioConfig, SCHEMA};
use crate::error::{CliError, CliResult};
use crate::scenarios::{Outcome, Scenario};

#[derive(Debug, Parser)]
#[command(name = "fraccal", version, about = "Numerical experiments for fractional Calderón-type inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one or more scenario configs; each writes into its own directory.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Root for relative output directories.
        #[arg(long, env = "FRACCAL_OUT", default_value = "fraccal-out")]
        out: PathBuf,
        /// Run the configs concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// List scenarios, one per line.
    List,
    /// Parameters, outputs and assertions of a scenario.
    Describe { scenario: String },
}

struct Report {
    scenario: Scenario,
    dir: PathBuf,
    outcome: Outcome,
}

fn output_dir(cfg: &ScenarioConfig, root: &Path) -> PathBuf {
    match &cfg.output {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => root.join(p),
        None => root.join(&cfg.scenario),
    }
}

fn execute(cfg: &ScenarioConfig, config_path: &Path, root: &Path) -> CliResult<Report> {
    let scenario = cfg.scenario();
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let outcome = scenario.run(cfg, base_dir)?;
    let dir = output_dir(cfg, root);
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    for (name, table) in &outcome.tables {
        table.write(&dir.join(name)).map_err(|e| match e {
            fraccal::Error::Io(io) => CliError::Io(io),
            other => CliError::from(other),
        })?;
        files.push(name.clone());
    }
    let manifest = json!({
        "schema": SCHEMA,
        "scenario": scenario.name(),
        "seed": cfg.seed,
        "inputs": cfg,
        "metrics": outcome.metrics,
        "assertions": outcome.checks,
        "passed": outcome.passed(),
        "files": files,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(Report {
        scenario,
        dir,
        outcome,
    })
}

fn print_report(config: &Path, report: &CliResult<Report>) {
    match report {
        Ok(r) => {
            let tag = if r.outcome.passed() { "PASS" } else { "FAIL" };
            println!("[{tag}] {} ({}) -> {}", r.scenario.name(), config.display(), r.dir.display());
            for c in &r.outcome.checks {
                println!(
                    "    {} {}: {:.3e} {} {:.3e}",
                    if c.passed { "ok  " } else { "FAIL" },
                    c.name,
                    c.value,
                    c.relation,
                    c.bound
                );
            }
        }
        Err(e) => eprintln!("[ERROR] {}: {e}", config.display()),
    }
}

fn run(configs: &[PathBuf], root: &Path, parallel: bool) -> u8 {
    let loaded: Vec<(&PathBuf, CliResult<ScenarioConfig>)> =
        configs.iter().map(|p| (p, ScenarioConfig::load(p))).collect();
    let mut code = 0u8;
    let mut jobs = Vec::new();
    for (path, cfg) in loaded {
        match cfg {
            Ok(cfg) => jobs.push((path, cfg)),
            Err(e) => {
                eprintln!("[ERROR] {e}");
                code = code.max(e.exit_code());
            }
        }
    }
    if code != 0 {
        return code;
    }
    let mut dirs: Vec<PathBuf> = jobs.iter().map(|(_, c)| output_dir(c, root)).collect();
    dirs.sort();
    if dirs.windows(2).any(|w| w[0] == w[1]) {
        eprintln!("[ERROR] config error: two configs share an output directory");
        return 2;
    }
    let reports: Vec<CliResult<Report>> = if parallel {
        jobs.par_iter().map(|(p, c)| execute(c, p, root)).collect()
    } else {
        jobs.iter().map(|(p, c)| execute(c, p, root)).collect()
    };
    for ((path, _), report) in jobs.iter().zip(&reports) {
        print_report(path, report);
        code = code.max(match report {
            Ok(r) if r.outcome.passed() => 0,
            Ok(_) => 1,
            Err(e) => e.exit_code(),
        });
    }
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            configs,
            out,
            parallel,
        } => ExitCode::from(run(&configs, &out, parallel)),
        Command::List => {
            for s in Scenario::ALL {
                println!("{:<20} {}", s.name(), s.summary());
            }
            ExitCode::SUCCESS
        }
        Command::Describe { scenario } => match Scenario::from_name(&scenario) {
            Ok(s) => {
                println!("{}: {}\n{}", s.name(), s.summary(), s.details());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(e.exit_code())
            }
        },
    }
}
