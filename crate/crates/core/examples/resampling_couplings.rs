//! The resampling building blocks on small weight vectors: systematic
//! resampling, its conditional version that keeps the reference particle,
//! the coupled conditional version used by coupled conditional SMC, and the
//! maximal coupling of two discrete laws.
//!
//! `cargo run --release --example resampling_couplings`

use std::collections::BTreeMap;

use cpmcmc::resampling::{
    conditional_systematic_resample, coupled_conditional_systematic, maximal_coupling_discrete, systematic_resample,
    ProbabilityVector,
};
use cpmcmc::RngStream;
use rand::Rng;

fn main() -> cpmcmc::Result<()> {
    let p = ProbabilityVector::new(vec![0.5, 0.2, 0.3])?;
    let q = ProbabilityVector::new(vec![0.25, 0.45, 0.3])?;
    let mut rng = RngStream::new(1).rng();
    let draws = 100_000;

    let mut plain = BTreeMap::new();
    for _ in 0..draws {
        *plain.entry(systematic_resample(&p, rng.random())).or_insert(0usize) += 1;
    }
    println!("systematic resampling of {:?}:", p.as_slice());
    for (a, c) in &plain {
        println!("  {a:?}: {:.4}", *c as f64 / draws as f64);
    }

    let mut conditional = BTreeMap::new();
    for _ in 0..draws {
        *conditional
            .entry(conditional_systematic_resample(&p, &mut rng)?)
            .or_insert(0usize) += 1;
    }
    println!("conditional on keeping particle 0:");
    for (a, c) in &conditional {
        println!("  {a:?}: {:.4}", *c as f64 / draws as f64);
    }

    let mut agree = 0usize;
    let mut identical = 0usize;
    for _ in 0..draws {
        let (a, b) = coupled_conditional_systematic(&p, &q, &mut rng)?;
        agree += a.iter().zip(&b).filter(|(x, y)| x == y).count();
        identical += usize::from(a == b);
    }
    println!(
        "coupled conditional against {:?}: {:.3} matching ancestors per draw, identical vectors {:.3}",
        q.as_slice(),
        agree as f64 / draws as f64,
        identical as f64 / draws as f64
    );

    let overlap: f64 = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| a.min(*b)).sum();
    let mut same = 0usize;
    for _ in 0..draws {
        let (i, j) = maximal_coupling_discrete(&p, &q, &mut rng)?;
        same += usize::from(i == j);
    }
    println!(
        "maximal coupling: Pr(i = j) = {:.4}, the largest possible is {overlap:.4}",
        same as f64 / draws as f64
    );
    Ok(())
}
