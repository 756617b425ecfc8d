use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cpmcmc::cli::{self, EXIT_BUDGET};
use cpmcmc::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "cpmcmc",
    version,
    about = "Coupled particle MCMC estimates from a TOML config"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `run`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the tempering schedule.
    Adapt,
    /// Run coupled replicates.
    Run,
    /// Unbiased estimates, variance-time table and (for ggm) edge report.
    Estimate,
    /// Meeting-time and autocorrelation summaries.
    Diagnose,
    /// Simulate a Gaussian graphical model data set.
    SynthGgm,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}

fn execute(args: &Args) -> cpmcmc::Result<u8> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| cpmcmc::Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.config.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir());
    match args.command {
        Command::Adapt => {
            let s = cli::cmd_adapt(&cfg, &out)?;
            println!("S = {} (alpha0 = {})", s.stages, s.alpha0);
            if let (Some(lo), Some(mean), Some(hi)) = (s.moves_min, s.moves_mean, s.moves_max) {
                println!("m_s: min {lo}, mean {mean:.2}, max {hi}");
            }
            println!("wrote {}", s.path.display());
        }
        Command::Run => {
            let s = cli::cmd_run(&cfg, &out, args.workers)?;
            println!("meeting times over {} replicates:", s.replicates);
            for (tau, count) in &s.tau_histogram {
                println!("  tau = {tau:>4}: {count}");
            }
            println!("incomplete: {}", s.incomplete);
            println!("wrote {}", s.path.display());
            if s.incomplete > 0 {
                return Ok(EXIT_BUDGET as u8);
            }
        }
        Command::Estimate => {
            let s = cli::cmd_estimate(&cfg, &out)?;
            let r = &s.report;
            println!(
                "k = {}, l = {}, runs = {} ({} incomplete skipped)",
                r.k, r.l, r.r_used, r.r_incomplete
            );
            for o in &r.observables {
                match (o.std_error, o.ci) {
                    (Some(se), Some((lo, hi))) => {
                        println!(
                            "  {}: {:.6} (se {:.2e}, ci [{:.6}, {:.6}])",
                            o.name, o.estimate, se, lo, hi
                        )
                    }
                    _ => println!("  {}: {:.6} (single run, no variance)", o.name, o.estimate),
                }
            }
            println!("wrote {}", s.report_path.display());
            println!("wrote {}", s.variance_time_path.display());
            if let Some(p) = &s.edges_path {
                println!("wrote {}", p.display());
            }
        }
        Command::Diagnose => {
            let (d, path) = cli::cmd_diagnose(&cfg, &out)?;
            println!("replicates: {}, incomplete: {}", d.replicates, d.incomplete);
            if let Some(t) = &d.tau {
                println!(
                    "tau: mean {:.2}, median {}, 90th percentile {}, max {}, Pr(tau = 1) {:.3}",
                    t.mean, t.median, t.p90, t.max, t.met_at_one
                );
            }
            for o in &d.iact {
                match o.mean_iact {
                    Some(v) => println!("  IACT {}: {:.3} over {} runs", o.name, v, o.runs_used),
                    None => println!("  IACT {}: runs too short", o.name),
                }
            }
            println!("wrote {}", path.display());
        }
        Command::SynthGgm => {
            let (data, truth, edges) = cli::cmd_synth_ggm(&cfg, &out)?;
            println!("true graph has {edges} edges");
            println!("wrote {}", data.display());
            println!("wrote {}", truth.display());
        }
    }
    Ok(0)
}
