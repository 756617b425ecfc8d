//! Two-component Gaussian mixture with a multimodal posterior: adapt the
//! tempering schedule, then compare meeting times and estimates of
//! `x1 + x2 + x1^2 + x2^2` across PIMH, conditional SMC and their mixture.
//!
//! `cargo run --release --example mixture -- [replicates] [l]`

use std::time::Instant;

use cpmcmc::adaptation::{adapt, AdaptationConfig};
use cpmcmc::cli::{tau_stats, window_estimates};
use cpmcmc::estimator::{aggregate, run_replicates, RunSettings, Statistic};
use cpmcmc::models::Mixture;
use cpmcmc::RngStream;

fn main() -> cpmcmc::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("integer argument"));
    let replicates = args.next().unwrap_or(32);
    let l = args.next().unwrap_or(100);

    let root = RngStream::new(2024);
    let data = Mixture::simulate(&[-3.0, 0.0], 100, &mut root.child(0).rng());
    let model = Mixture::new(2, data)?;

    let started = Instant::now();
    let schedule = adapt(&model, &AdaptationConfig::default(), &root.child(1))?;
    println!(
        "schedule: S = {}, m_s = {:?} ({:.1}s)",
        schedule.stages(),
        schedule.mcmc_counts(),
        started.elapsed().as_secs_f64()
    );

    for rho in [0.0, 0.5, 1.0] {
        let settings = RunSettings {
            particles: 25,
            rho,
            min_steps: l,
            gamma: 0.5,
            time_budget: None,
        };
        let started = Instant::now();
        let runs = run_replicates(&model, &schedule, &settings, 7, replicates)?;
        let tau = tau_stats(&runs).expect("runs complete without a budget");
        let k = tau.p90.min(l);
        let refs: Vec<_> = runs.iter().collect();
        let est: Vec<f64> = window_estimates(&refs, 1, k, l, Statistic::RaoBlackwell)?
            .into_iter()
            .map(|row| row[0])
            .collect();
        let report = aggregate(&est, 0.95)?;
        println!(
            "rho = {rho:.1}: mean tau {:.2}, median {}, Pr(tau = 1) {:.2}; h estimate {:.3} +/- {:.3} (k = {k}, {:.1}s)",
            tau.mean,
            tau.median,
            tau.met_at_one,
            report.estimate,
            report.std_error,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
