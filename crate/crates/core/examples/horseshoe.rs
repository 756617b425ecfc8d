//! Horseshoe regression on the standard sparse simulation design
//! (100 observations, 20 coefficients, 10 of them non-zero). Adapts the
//! schedule, then estimates `beta_c + beta_c^2` for the chosen coefficient.
//!
//! `cargo run --release --example horseshoe -- [replicates] [particles]`

use std::time::Instant;

use cpmcmc::adaptation::{adapt, AdaptationConfig};
use cpmcmc::cli::{tau_stats, window_estimates};
use cpmcmc::estimator::{aggregate, run_replicates, RunSettings, Statistic};
use cpmcmc::models::Horseshoe;
use cpmcmc::{Model, RngStream};

fn main() -> cpmcmc::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("integer argument"));
    let replicates = args.next().unwrap_or(8);
    let particles = args.next().unwrap_or(32);

    let root = RngStream::new(42);
    let (y, w) = Horseshoe::simulate(&mut root.child(0).rng());
    let model = Horseshoe::new(y, w)?;
    let truth = Horseshoe::simulation_coefficients(model.p())[model.target];

    let started = Instant::now();
    let config = AdaptationConfig {
        particles: 2000,
        ..AdaptationConfig::default()
    };
    let schedule = adapt(&model, &config, &root.child(1))?;
    println!(
        "schedule: S = {}, m_s = {:?} ({:.1}s)",
        schedule.stages(),
        schedule.mcmc_counts(),
        started.elapsed().as_secs_f64()
    );

    let settings = RunSettings {
        particles,
        rho: 0.5,
        min_steps: 20,
        gamma: 0.5,
        time_budget: None,
    };
    let started = Instant::now();
    let runs = run_replicates(&model, &schedule, &settings, 3, replicates)?;
    let tau = tau_stats(&runs).expect("runs complete without a budget");
    let refs: Vec<_> = runs.iter().collect();
    let k = tau.p90.min(20);
    let est: Vec<f64> = window_estimates(&refs, 1, k, 20, Statistic::RaoBlackwell)?
        .into_iter()
        .map(|r| r[0])
        .collect();
    let rep = aggregate(&est, 0.95)?;
    println!(
        "{}: {:.3} +/- {:.3} (true beta gives {:.3}); mean tau {:.2} ({:.1}s)",
        model.observable_names()[0],
        rep.estimate,
        rep.std_error,
        truth + truth * truth,
        tau.mean,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
