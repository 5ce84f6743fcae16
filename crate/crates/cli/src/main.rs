use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fdagg::experiment::{
    check_hypotheses, output_root, parse_config, run_in, ExperimentConfig, RunManifest, Severity,
    Status,
};

/// Radial fast-diffusion aggregation experiments.
#[derive(Parser)]
#[command(name = "fdagg", version, about)]
struct Cli {
    /// Output root; defaults to $FDAGG_OUTPUT_ROOT, then ./fdagg-output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mode selected in the config.
    Run { config: PathBuf },
    /// Parse the config and report the hypotheses H0..H8.
    Check { config: PathBuf },
    /// Refinement study over at least three grid levels.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(3..))]
        levels: u32,
    },
    /// Run every point of the config's `sweep.<key>` lists in parallel.
    Sweep { config: PathBuf },
}

const EXIT_FAILED: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).map_err(|errs| anyhow::anyhow!("{}:\n{errs}", path.display()))
}

fn print_manifest(m: &RunManifest) {
    println!("run {} ({}) -> {}", m.run_id, m.mode, m.directory.display());
    for d in &m.diagnostics {
        let tag = match (d.severity, d.passed) {
            (Severity::Info, _) => "info",
            (_, true) => "pass",
            (Severity::Hard, false) => "FAIL",
            (Severity::Soft, false) => "warn",
        };
        if d.severity == Severity::Info {
            println!("  [{tag}] {} = {:e}  {}", d.name, d.value, d.note);
        } else {
            println!(
                "  [{tag}] {} = {:e} (threshold {:e}, margin {:e})  {}",
                d.name, d.value, d.threshold, d.margin, d.note
            );
        }
    }
    for (k, v) in &m.summary {
        println!("  {k} = {v}");
    }
    println!("{} files written", m.files.len());
}

fn execute(cfg: &ExperimentConfig, root: &Path) -> Result<ExitCode> {
    let manifest = run_in(cfg, root)?;
    print_manifest(&manifest);
    Ok(if manifest.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let root = cli.output.unwrap_or_else(output_root);
    match cli.command {
        Command::Run { config } => execute(&load(&config)?, &root),
        Command::Check { config } => {
            let cfg = load(&config)?;
            let report = check_hypotheses(&cfg);
            for (name, v) in &report.verdicts {
                let status = match v.status {
                    Status::Holds => "holds",
                    Status::Fails => "fails",
                    Status::NotCheckable => "not checkable",
                };
                let witness = v
                    .witness
                    .map_or_else(String::new, |r| format!(" (witness r = {r})"));
                println!("{name}: {status}{witness}  {}", v.detail);
            }
            Ok(if report.blocking().is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED)
            })
        }
        Command::Converge { config, levels } => {
            let cfg = load(&config)?
                .with_overrides(&[("mode", "convergence"), ("levels", &levels.to_string())])?;
            let code = execute(&cfg, &root)?;
            let dir = root
                .join(&cfg.output.dir)
                .join(fdagg::experiment::run_id(&cfg));
            if let Ok(orders) = fs::read_to_string(dir.join("orders.csv")) {
                print!("{orders}");
            }
            Ok(code)
        }
        Command::Sweep { config } => {
            let cfg = load(&config)?;
            if cfg.sweep.is_empty() {
                anyhow::bail!("{}: no `sweep.<key>` lists to sweep over", config.display());
            }
            execute(&cfg.with_overrides(&[("mode", "sweep")])?, &root)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
