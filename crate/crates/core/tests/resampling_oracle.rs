mod common;

use std::collections::BTreeMap;

use common::*;
use cpmcmc::resampling::{coupled_conditional_systematic, ProbabilityVector};
use cpmcmc::RngStream;

const CASES: &[&[f64]] = &[
    &[0.75, 0.25],
    &[0.5, 0.5],
    &[0.2, 0.5, 0.3],
    &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    &[0.6, 0.1, 0.3],
    &[0.05, 0.15, 0.8],
    &[0.25, 0.25, 0.1, 0.4],
    &[0.5, 0.1, 0.1, 0.3],
    &[0.4, 0.0, 0.35, 0.1, 0.15],
];

#[test]
fn naive_systematic_agrees_with_the_library() {
    let mut rng = RngStream::new(1).rng();
    for p in CASES {
        let pv = ProbabilityVector::new(p.to_vec()).unwrap();
        for _ in 0..2000 {
            let u: f64 = rand::Rng::random(&mut rng);
            assert_eq!(naive_systematic(p, u), cpmcmc::resampling::systematic_resample(&pv, u));
        }
    }
}

#[test]
fn conditional_systematic_is_the_rotation_conditional() {
    for p in CASES {
        let tv = total_variation(&conditional_systematic_law(p), &conditioned_rotation_law(p));
        assert!(tv < 1e-12, "{p:?}: TV {tv}");
    }
}

#[test]
fn hand_traced_two_particle_law() {
    let law = conditional_systematic_law(&[0.75, 0.25]);
    assert!((law[&vec![0, 0]] - 2.0 / 3.0).abs() < 1e-12);
    assert!((law[&vec![0, 1]] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn coupled_marginals_equal_the_conditional_law() {
    for p in CASES {
        for q in CASES.iter().filter(|q| q.len() == p.len()) {
            let joint = coupled_law(p, q);
            let mut left = Law::new();
            let mut right = Law::new();
            for ((a, b), m) in &joint {
                add(&mut left, a.clone(), *m);
                add(&mut right, b.clone(), *m);
            }
            assert!(total_variation(&left, &conditional_systematic_law(p)) < 1e-10);
            assert!(total_variation(&right, &conditional_systematic_law(q)) < 1e-10);
        }
    }
}

#[test]
fn identical_inputs_are_resampled_identically() {
    for p in CASES {
        let joint = coupled_law(p, p);
        let off: f64 = joint.iter().filter(|((a, b), _)| a != b).map(|(_, m)| m).sum();
        assert!(off < 1e-14);
    }
}

#[test]
fn expected_overlap_matches_simulation() {
    let (p, q) = ([0.75, 0.25], [0.25, 0.75]);
    let exact: f64 = coupled_law(&p, &q)
        .iter()
        .map(|((a, b), m)| m * a.iter().zip(b).filter(|(x, y)| x == y).count() as f64)
        .sum();
    let pv = ProbabilityVector::new(p.to_vec()).unwrap();
    let qv = ProbabilityVector::new(q.to_vec()).unwrap();
    let mut rng = RngStream::new(2).rng();
    let n = 100_000;
    let mut overlaps = Vec::with_capacity(n);
    let mut counts = BTreeMap::new();
    for _ in 0..n {
        let (a, b) = coupled_conditional_systematic(&pv, &qv, &mut rng).unwrap();
        overlaps.push(a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64);
        *counts.entry((a, b)).or_insert(0usize) += 1;
    }
    let mean = overlaps.iter().sum::<f64>() / n as f64;
    let sd = (overlaps.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    assert!(
        (mean - exact).abs() < 4.0 * sd / (n as f64).sqrt() + 1e-9,
        "{mean} vs {exact}"
    );
    let (_, pval) = chi_square(&counts, &coupled_law(&p, &q));
    assert!(pval > 0.001);
}
