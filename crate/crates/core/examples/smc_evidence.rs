//! Tempered SMC on a conjugate Gaussian model: the evidence estimate `Z` is
//! unbiased, so the average of `Z / Z_true` over independent runs sits near 1
//! while `log Z` is biased downwards.
//!
//! `cargo run --release --example smc_evidence -- [runs] [particles]`

use cpmcmc::adaptation::{adapt, AdaptationConfig};
use cpmcmc::models::{ConjugateGaussian, ConjugateKernel};
use cpmcmc::smc::run_smc;
use cpmcmc::RngStream;

fn main() -> cpmcmc::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("integer argument"));
    let runs = args.next().unwrap_or(2000);
    let n = args.next().unwrap_or(32);

    let data = vec![vec![0.8], vec![1.4], vec![0.2], vec![1.9], vec![1.1], vec![0.6]];
    let model = ConjugateGaussian::new(data, 0.0, 4.0, 1.0)?.with_kernel(ConjugateKernel::RandomWalk, 0.7);
    let truth = model.log_evidence();
    let root = RngStream::new(3);
    let config = AdaptationConfig {
        particles: 2000,
        ..AdaptationConfig::default()
    };
    let schedule = adapt(&model, &config, &root.child(0))?;
    println!("temperatures: {:?}, then 1", schedule.alphas());
    println!("moves per stage: {:?}", schedule.mcmc_counts());

    let mut ratio = Vec::with_capacity(runs);
    let mut log_err = Vec::with_capacity(runs);
    for r in 0..runs {
        let sys = run_smc(&model, &schedule, n, 0.5, &root.child(1).child(r as u64))?;
        ratio.push((sys.log_z - truth).exp());
        log_err.push(sys.log_z - truth);
    }
    let mean = ratio.iter().sum::<f64>() / runs as f64;
    let sd = (ratio.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
    println!("log Z true {truth:.4}");
    println!("mean Z / Z_true = {mean:.4} +/- {:.4}", sd / (runs as f64).sqrt());
    println!(
        "mean log Z - log Z_true = {:.4}",
        log_err.iter().sum::<f64>() / runs as f64
    );
    Ok(())
}
