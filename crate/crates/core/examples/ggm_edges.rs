//! Edge-inclusion probabilities for a Gaussian graphical model on synthetic
//! data: coupled particle MCMC replicates against a long run of the plain
//! double reversible jump chain.
//!
//! `cargo run --release --example ggm_edges -- [replicates] [chain_steps]`

use std::time::Instant;

use cpmcmc::adaptation::{adapt, AdaptationConfig};
use cpmcmc::cli::{tau_stats, window_estimates};
use cpmcmc::estimator::{aggregate, run_replicates, RunSettings, Statistic};
use cpmcmc::ggm::{edge_probabilities, ggm_graph_step, ggm_synthetic, GWishartParams, GgmModel, Graph};
use cpmcmc::RngStream;

fn main() -> cpmcmc::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("integer argument"));
    let replicates = args.next().unwrap_or(8);
    let chain_steps = args.next().unwrap_or(200_000);

    let root = RngStream::new(5);
    let synth = ggm_synthetic(5, 50, 0.4, &mut root.child(0).rng())?;
    let model = GgmModel::new(&synth.y, GWishartParams::identity(5, 3.0)?)?;
    println!("true edges: {:?}", synth.graph.edge_indicators());

    let started = Instant::now();
    let mut rng = root.child(1).rng();
    let mut g = Graph::empty(5);
    let mut freq = vec![0.0; 10];
    for _ in 0..chain_steps {
        g = ggm_graph_step(&g, model.scatter(), model.n(), model.params(), 1.0, &mut rng)?.graph;
        for (f, e) in freq.iter_mut().zip(g.edge_indicators()) {
            *f += e;
        }
    }
    freq.iter_mut().for_each(|f| *f /= chain_steps as f64);
    println!(
        "plain chain, {chain_steps} steps ({:.1}s)",
        started.elapsed().as_secs_f64()
    );

    let started = Instant::now();
    let schedule = adapt(&model, &AdaptationConfig::default(), &root.child(2))?;
    println!(
        "schedule: S = {}, m_s = {:?} ({:.1}s)",
        schedule.stages(),
        schedule.mcmc_counts(),
        started.elapsed().as_secs_f64()
    );

    let settings = RunSettings {
        particles: 128,
        rho: 0.5,
        min_steps: 40,
        gamma: 0.5,
        time_budget: None,
    };
    let started = Instant::now();
    let runs = run_replicates(&model, &schedule, &settings, 11, replicates)?;
    let tau = tau_stats(&runs).expect("runs complete without a budget");
    println!(
        "{replicates} coupled runs: mean tau {:.2}, Pr(tau = 1) {:.2} ({:.1}s)",
        tau.mean,
        tau.met_at_one,
        started.elapsed().as_secs_f64()
    );
    let refs: Vec<_> = runs.iter().collect();
    let per_run = window_estimates(&refs, 10, 7, 40, Statistic::RaoBlackwell)?;
    let (mut probs, mut ses) = (Vec::new(), Vec::new());
    for j in 0..10 {
        let column: Vec<f64> = per_run.iter().map(|r| r[j]).collect();
        let r = aggregate(&column, 0.95)?;
        probs.push(r.estimate);
        ses.push(r.std_error);
    }
    println!("edge  coupled        chain");
    for (row, f) in edge_probabilities(5, &probs, &ses)?.iter().zip(&freq) {
        println!(
            "{}-{}   {:.3} ({:.3})  {:.3}",
            row.node_i, row.node_j, row.prob, row.std_err, f
        );
    }
    Ok(())
}
