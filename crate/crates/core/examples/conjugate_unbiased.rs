//! Unbiasedness in action: coupled particle MCMC on a Gaussian mean with a
//! closed-form posterior. Each replicate yields one unbiased estimate; their
//! average approaches the exact posterior mean for any mixing weight `rho`,
//! even with few particles and a short run.
//!
//! `cargo run --release --example conjugate_unbiased -- [replicates]`

use cpmcmc::adaptation::{adapt, AdaptationConfig};
use cpmcmc::estimator::{aggregate, h_hat_k, run_replicates, RunSettings};
use cpmcmc::models::{ConjugateGaussian, ConjugateKernel};
use cpmcmc::{Model, RngStream};

fn main() -> cpmcmc::Result<()> {
    let replicates = std::env::args()
        .nth(1)
        .map(|a| a.parse::<usize>().expect("integer argument"))
        .unwrap_or(200);
    let data = vec![vec![0.8, -0.4], vec![1.4, 0.3], vec![0.2, -1.1], vec![1.9, 0.0]];
    let model = ConjugateGaussian::new(data, 0.0, 4.0, 1.0)?.with_kernel(ConjugateKernel::RandomWalk, 0.5);
    let schedule = adapt(&model, &AdaptationConfig::default(), &RngStream::new(1))?;
    let truth = model.posterior_observables();
    let names = model.observable_names();
    let k = 5;
    for rho in [0.0, 0.5, 1.0] {
        let settings = RunSettings {
            particles: 16,
            rho,
            min_steps: k,
            ..RunSettings::default()
        };
        let runs = run_replicates(&model, &schedule, &settings, 2, replicates)?;
        println!("rho = {rho}");
        for (j, name) in names.iter().enumerate() {
            let est = runs
                .iter()
                .map(|r| h_hat_k(r, j, k))
                .collect::<cpmcmc::Result<Vec<_>>>()?;
            let rep = aggregate(&est, 0.95)?;
            println!(
                "  {name:>10}: {:.4} +/- {:.4}, exact {:.4}",
                rep.estimate, rep.std_error, truth[j]
            );
        }
    }
    Ok(())
}
