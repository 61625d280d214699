use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fvsa_core::bench::{run_cgm_steps, run_compare, run_norms, run_optimize, RunConfig};

/// Discrete topology optimization benchmarks and sensitivity studies.
#[derive(Parser)]
#[command(name = "fvsa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizer: history.csv, topology.pgm, topology.csv, summary.txt.
    Optimize(Common),
    /// Compare sensitivity estimates with exact values: compare.csv, compare_global.csv.
    Compare(Common),
    /// CGM steps needed per visited topology: steps.csv.
    CgmSteps(Common),
    /// Element operator norms: norms.csv.
    Norms(Common),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the `output` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` setting applied after the file (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Lift the element-count guard on the exact methods.
    #[arg(long)]
    allow_large: bool,
}

impl Common {
    fn config(&self) -> fvsa_core::Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let pairs = self
            .overrides
            .iter()
            .map(|o| {
                o.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| fvsa_core::Error::Config(format!("override `{o}` is not key=value")))
            })
            .collect::<fvsa_core::Result<Vec<_>>>()?;
        cfg.apply(pairs)?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output.clone());
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> fvsa_core::Result<()> {
    match cli.command {
        Command::Optimize(c) => {
            let (cfg, out) = c.config()?;
            let r = run_optimize(&cfg, &out, c.allow_large)?;
            println!(
                "best compliance {} at iteration {} ({} iterations)",
                r.result.compliance * r.compliance_scale,
                r.result.iteration,
                r.result.history.len()
            );
        }
        Command::Compare(c) => {
            let (cfg, out) = c.config()?;
            for m in run_compare(&cfg, &out, c.allow_large)? {
                println!("{}: relative l2 error {} (solids), {} (all)", m.method, m.solids, m.all);
            }
        }
        Command::CgmSteps(c) => {
            let (cfg, out) = c.config()?;
            let rows = run_cgm_steps(&cfg, &out, c.allow_large)?;
            println!("{} rows written to {}", rows.len(), out.join("steps.csv").display());
        }
        Command::Norms(c) => {
            let (cfg, out) = c.config()?;
            let t = run_norms(&cfg, &out, c.allow_large)?;
            println!("mean norm {}", t.mean_a);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
