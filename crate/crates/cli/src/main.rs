use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use kramers_core::harness::commands;
use kramers_core::{Error, ExperimentConfig, Result};

/// Small-mass limit experiments for mean-field particles with fast forcing.
#[derive(Debug, Parser)]
#[command(name = "kramers", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// W2 between eps-system and limit laws across the eps grid.
    Converge(ConfigArgs),
    /// Terminal samples and step diagnostics of the eps-system.
    SimulateEps(ConfigArgs),
    /// Terminal samples of the limit system for each diffusion mode.
    SimulateLimit(ConfigArgs),
    /// Green-Kubo estimate of the effective diffusion.
    EstimateGk(ConfigArgs),
    /// Moment tables, u/v checks and Brownian-proxy statistics.
    Diagnose(ConfigArgs),
    /// W2 distance between two sample files.
    W2 {
        file_a: PathBuf,
        file_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let cfg = ExperimentConfig::load(&self.config)?;
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
        Ok((cfg, out))
    }
}

fn show(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Converge(args) => {
            let (cfg, out) = args.load()?;
            let (report, path) = commands::converge(&cfg, &out)?;
            println!(
                "{:>8} {:>12} {:>12} {:>10}",
                "eps", "w2_paper", "w2_gk", "ci"
            );
            for r in &report.rows {
                println!(
                    "{:>8} {:>12} {:>12} {:>10.6}",
                    r.eps,
                    fmt_opt(r.paper.map(|d| d.value)),
                    fmt_opt(r.green_kubo.map(|d| d.value)),
                    r.ci_halfwidth()
                );
            }
            if let Some(m) = report.preferred_mode {
                println!("smaller terminal W2: {} mode", m.as_str());
            }
            show(&[path]);
        }
        Command::SimulateEps(args) => {
            let (cfg, out) = args.load()?;
            show(&commands::simulate_eps(&cfg, &out)?);
        }
        Command::SimulateLimit(args) => {
            let (cfg, out) = args.load()?;
            show(&commands::simulate_limit(&cfg, &out)?);
        }
        Command::EstimateGk(args) => {
            let (cfg, out) = args.load()?;
            let (gk, path) = commands::estimate_gk(&cfg, &out)?;
            println!(
                "G = {:?} (ci_fro {:.3e}, lag {})",
                gk.g, gk.ci_fro, gk.truncation_lag
            );
            show(&[path]);
        }
        Command::Diagnose(args) => {
            let (cfg, out) = args.load()?;
            let (report, path) = commands::diagnose(&cfg, &out)?;
            println!("v_msq log-log slope: {:.4}", report.v_slope);
            println!("sup E|sqrt(eps) Y|^4 spread: {:.4}", report.y4_spread);
            show(&[path]);
        }
        Command::W2 {
            file_a,
            file_b,
            out,
        } => {
            let r = commands::w2_files(&file_a, &file_b)?;
            println!("{:?}", r.value);
            if let Some(dir) = out {
                show(&[commands::write_w2(&r, &file_a, &file_b, &dir)?]);
            }
        }
    }
    Ok(())
}

fn exit_with(err: &Error) -> ExitCode {
    eprintln!("kramers: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_with(&e),
    }
}
