//! `holedim`: run survivor-set experiments from a TOML config.
//!
//! Exit status is 0 when every check passes, 2 when any check fails and 1 on
//! configuration or runtime errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{Outcome, VERSION};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "holedim",
    version,
    about = "Survivor sets of toral automorphisms with a hole"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; built-in defaults when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory, overriding the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads, overriding the config (0 = all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// sampling seed, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Cover counts of survivor sets against the lemma and proposition bounds
    CoverVerify,
    /// Growth of mollifier Sobolev norms as the transition width shrinks
    MollifierScaling,
    /// Correlation decay along the unstable leaf and the entry-measure estimate
    MixingFit,
    /// Dimension deficits of survivor slices across hole radii
    DimSweep,
    /// Box-counting estimator on the unit interval and the Cantor set
    Calibrate,
    /// All of the above, bundled
    Report,
    /// Print the effective config as TOML
    ShowConfig,
}

enum Failure {
    Config(config::ConfigError),
    Run(anyhow::Error),
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Run(e)
    }
}

fn write_outcome(dir: &Path, cfg: &ExperimentConfig, o: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in &o.tables {
        std::fs::write(dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
    }
    for (name, svg) in &o.plots {
        std::fs::write(dir.join(name), svg).with_context(|| format!("writing {name}"))?;
    }
    let summary = json!({
        "version": VERSION,
        "subcommand": o.name,
        "seed": cfg.seed,
        "pass": o.pass,
        "config": cfg,
        "results": o.summary,
    });
    let name = format!("{}.json", o.name);
    std::fs::write(
        dir.join(&name),
        serde_json::to_string_pretty(&summary)? + "\n",
    )
    .with_context(|| format!("writing {name}"))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let sys = cfg.validate()?;
    if cli.command == Command::ShowConfig {
        print!("{}", cfg.to_toml());
        return Ok(true);
    }
    if cli.command == Command::DimSweep || cli.command == Command::Report {
        cfg.sweep_radii()?;
    }
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global();

    let outcomes: Vec<Outcome> = match cli.command {
        Command::CoverVerify => vec![commands::cover_verify(&cfg, &sys)?],
        Command::MollifierScaling => vec![commands::mollifier_scaling(&cfg)?],
        Command::MixingFit => vec![commands::mixing_fit(&cfg, &sys)?],
        Command::DimSweep => vec![commands::dim_sweep(&cfg, &sys)?],
        Command::Calibrate => vec![commands::calibrate_cmd()?],
        Command::Report => vec![
            commands::cover_verify(&cfg, &sys)?,
            commands::mollifier_scaling(&cfg)?,
            commands::mixing_fit(&cfg, &sys)?,
            commands::dim_sweep(&cfg, &sys)?,
            commands::calibrate_cmd()?,
        ],
        Command::ShowConfig => unreachable!(),
    };
    let all_pass = outcomes.iter().all(|o| o.pass);
    if cli.command == Command::Report {
        let dir = cfg.out.join("report");
        for o in &outcomes {
            write_outcome(&dir, &cfg, o)?;
        }
        let bundle = json!({
            "version": VERSION,
            "seed": cfg.seed,
            "pass": all_pass,
            "config": cfg,
            "subcommands": outcomes.iter().map(|o| (o.name.to_string(), json!({"pass": o.pass, "results": o.summary}))).collect::<serde_json::Map<_, _>>(),
        });
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&bundle).map_err(anyhow::Error::from)? + "\n",
        )
        .context("writing report.json")?;
    } else {
        for o in &outcomes {
            write_outcome(&cfg.out.join(o.name), &cfg, o)?;
        }
    }
    for o in &outcomes {
        println!("{} {}", o.name, if o.pass { "PASS" } else { "FAIL" });
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
