#![allow(dead_code)]

use std::collections::BTreeMap;

use cpmcmc::resampling::{
    conditional_uniform, reference_rotations, rotate, rotation_coupling, systematic_resample, ProbabilityVector,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub type Law = BTreeMap<Vec<usize>, f64>;

/// Systematic resampling written from the definition: output `k` is the
/// first index whose scaled cumulative weight exceeds `u + k`.
pub fn naive_systematic(p: &[f64], u: f64) -> Vec<usize> {
    let n = p.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let target = (u + k as f64) / n as f64;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (j, &pj) in p.iter().enumerate() {
            acc += pj;
            if acc >= target && pj > 0.0 {
                pick = j;
                break;
            }
        }
        out.push(pick);
    }
    out
}

/// Values of `u` in `(0, 1)` at which the systematic output can change.
pub fn breakpoints(p: &[f64]) -> Vec<f64> {
    let n = p.len() as f64;
    let mut acc = 0.0;
    let mut pts = Vec::new();
    for &pj in p {
        acc += pj;
        let v = n * acc;
        let f = v - v.floor();
        if f > 1e-12 && f < 1.0 - 1e-12 {
            pts.push(f);
        }
    }
    pts
}

fn intervals(mut pts: Vec<f64>) -> Vec<(f64, f64)> {
    pts.push(0.0);
    pts.push(1.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}

pub fn add(law: &mut Law, key: Vec<usize>, mass: f64) {
    *law.entry(key).or_insert(0.0) += mass;
}

/// Exact law of unconditional systematic resampling with `U ~ U(0, 1)`.
pub fn systematic_law(p: &[f64]) -> Law {
    let mut law = Law::new();
    for (a, b) in intervals(breakpoints(p)) {
        add(&mut law, naive_systematic(p, 0.5 * (a + b)), b - a);
    }
    law
}

/// Law of the output given that its first entry is the reference index 0,
/// when systematic resampling is followed by a uniformly random cyclic
/// rotation. This is the conditional law conditional systematic resampling
/// must reproduce.
pub fn conditioned_rotation_law(p: &[f64]) -> Law {
    let n = p.len();
    let mut joint = Law::new();
    let mut total = 0.0;
    for (a, b) in intervals(breakpoints(p)) {
        let base = naive_systematic(p, 0.5 * (a + b));
        for k in 0..n {
            let rotated: Vec<usize> = (0..n).map(|i| base[(k + i) % n]).collect();
            if rotated[0] == 0 {
                let mass = (b - a) / n as f64;
                add(&mut joint, rotated, mass);
                total += mass;
            }
        }
    }
    joint.values_mut().for_each(|v| *v /= total);
    joint
}

/// Density pieces of the driving uniform as a map from `(v_mix, v_pos)`.
fn mix_pieces(p: &[f64]) -> (f64, f64, f64) {
    let n_p0 = p.len() as f64 * p[0];
    let r = n_p0 - n_p0.floor();
    let w_low = if r <= 0.0 { 0.0 } else { r * (n_p0.floor() + 1.0) / n_p0 };
    (n_p0, r, w_low)
}

/// Splits `(0, 1)` for `v_pos` so that the systematic output is constant on
/// each piece, given the mixture component.
fn pos_breaks(p: &[f64], low: bool) -> Vec<f64> {
    let (_, r, _) = mix_pieces(p);
    breakpoints(p)
        .into_iter()
        .filter_map(|u| {
            let v = if r <= 0.0 {
                u
            } else if low {
                u / r
            } else {
                (u - r) / (1.0 - r)
            };
            (v > 0.0 && v < 1.0).then_some(v)
        })
        .collect()
}

/// Exact law of the implementation's conditional systematic resampling.
pub fn conditional_systematic_law(p: &[f64]) -> Law {
    let (n_p0, _, w_low) = mix_pieces(p);
    let pv = ProbabilityVector::new(p.to_vec()).unwrap();
    let mut law = Law::new();
    let mut mix = vec![0.0, w_low, 1.0];
    mix.dedup();
    for m in mix.windows(2) {
        let vm = 0.5 * (m[0] + m[1]);
        let low = vm < w_low;
        for (a, b) in intervals(pos_breaks(p, low)) {
            let u = conditional_uniform(n_p0, vm, 0.5 * (a + b));
            let base = systematic_resample(&pv, u);
            let starts = reference_rotations(&base);
            for &k in &starts {
                add(
                    &mut law,
                    rotate(&base, k),
                    (m[1] - m[0]) * (b - a) / starts.len() as f64,
                );
            }
        }
    }
    law
}

/// Exact joint law of the coupled conditional systematic pair.
pub fn coupled_law(p: &[f64], p_bar: &[f64]) -> BTreeMap<(Vec<usize>, Vec<usize>), f64> {
    let (n_p0, _, w) = mix_pieces(p);
    let (n_p0_bar, _, w_bar) = mix_pieces(p_bar);
    let pv = ProbabilityVector::new(p.to_vec()).unwrap();
    let pv_bar = ProbabilityVector::new(p_bar.to_vec()).unwrap();
    let mut law = BTreeMap::new();
    for (ma, mb) in intervals(vec![w, w_bar].into_iter().filter(|x| *x > 0.0 && *x < 1.0).collect()) {
        let vm = 0.5 * (ma + mb);
        let mut cuts = pos_breaks(p, vm < w);
        cuts.extend(pos_breaks(p_bar, vm < w_bar));
        for (a, b) in intervals(cuts) {
            let vp = 0.5 * (a + b);
            let base = systematic_resample(&pv, conditional_uniform(n_p0, vm, vp));
            let base_bar = systematic_resample(&pv_bar, conditional_uniform(n_p0_bar, vm, vp));
            for (k, kb, mass) in rotation_coupling(&base, &base_bar) {
                *law.entry((rotate(&base, k), rotate(&base_bar, kb))).or_insert(0.0) += (mb - ma) * (b - a) * mass;
            }
        }
    }
    law
}

pub fn total_variation(a: &Law, b: &Law) -> f64 {
    let keys: std::collections::BTreeSet<&Vec<usize>> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Pearson chi-square test of observed outcome counts against an exact law.
/// Returns `(statistic, p_value)`; outcomes outside the law's support make
/// the p-value zero.
pub fn chi_square<K: Ord>(observed: &BTreeMap<K, usize>, law: &BTreeMap<K, f64>) -> (f64, f64) {
    let total: usize = observed.values().sum();
    if observed.keys().any(|k| law.get(k).is_none_or(|&p| p <= 0.0)) {
        return (f64::INFINITY, 0.0);
    }
    let mut stat = 0.0;
    let mut cells = 0;
    for (k, &prob) in law {
        if prob <= 0.0 {
            continue;
        }
        let expected = prob * total as f64;
        let seen = *observed.get(k).unwrap_or(&0) as f64;
        stat += (seen - expected).powi(2) / expected;
        cells += 1;
    }
    if cells < 2 {
        return (0.0, 1.0);
    }
    let dist = ChiSquared::new((cells - 1) as f64).unwrap();
    (stat, 1.0 - dist.cdf(stat))
}
