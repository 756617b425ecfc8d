//! Resampling schemes and couplings of discrete distributions.
//!
//! Indices are 0-based throughout: index 0 plays the role of the reference
//! particle in the conditional schemes.

use rand::distr::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SimRng;

const SUM_TOLERANCE: f64 = 1e-6;

/// A discrete law on `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Validates and renormalises `raw`, which must already sum to one up to
    /// float drift.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        let sum = checked_sum(&raw)?;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self(raw.into_iter().map(|v| v / sum).collect()))
    }

    /// Normalises arbitrary non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum = checked_sum(weights)?;
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::DegenerateWeights { stage: None });
        }
        Ok(Self(weights.iter().map(|v| v / sum).collect()))
    }

    /// Normalises log-weights after subtracting their maximum.
    pub fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        crate::model::normalize_log_weights(log_w)
            .map(Self)
            .ok_or(Error::DegenerateWeights { stage: None })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn checked_sum(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Domain("empty probability vector".into()));
    }
    if let Some(bad) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("invalid probability entry {bad}")));
    }
    Ok(v.iter().sum())
}

/// Effective sample size `(sum w)^2 / sum w^2`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if !(s > 0.0) || !s2.is_finite() {
        return Err(Error::DegenerateWeights { stage: None });
    }
    Ok(s * s / s2)
}

/// ESS of `exp(log_w)`; zero when every weight vanishes.
pub fn ess_from_log_weights(log_w: &[f64]) -> f64 {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return 0.0;
    }
    let (mut s, mut s2) = (0.0, 0.0);
    for v in log_w {
        let w = (v - max).exp();
        s += w;
        s2 += w * w;
    }
    s * s / s2
}

/// Systematic resampling driven by a single uniform `u`.
pub fn systematic_resample(p: &ProbabilityVector, u: f64) -> Vec<usize> {
    let n = p.len();
    let last_positive = p.0.iter().rposition(|&x| x > 0.0).unwrap_or(n - 1);
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &pi in &p.0 {
        acc += pi;
        cumulative.push(n as f64 * acc);
    }
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    let mut u = u;
    for _ in 0..n {
        while j < last_positive && cumulative[j] < u {
            j += 1;
        }
        out.push(j);
        u += 1.0;
    }
    out
}

/// The uniform driving conditional systematic resampling, as a function of
/// two independent uniforms: `v_mix` picks the mixture component and
/// `v_pos` the position inside it.
///
/// `U` is size-biased by the number of offspring the reference index gets.
/// When `N p_0` is an integer every `U` in `(0, 1)` yields the same count,
/// so `U` is uniform on `(0, 1)`.
pub fn conditional_uniform(n_p0: f64, v_mix: f64, v_pos: f64) -> f64 {
    let floor = n_p0.floor();
    let r = n_p0 - floor;
    if r <= 0.0 {
        return v_pos;
    }
    let w_low = r * (floor + 1.0) / n_p0;
    if v_mix < w_low {
        v_pos * r
    } else {
        r + v_pos * (1.0 - r)
    }
}

/// Positions `k` at which the cyclic rotation of `b` starts with index 0.
pub fn reference_rotations(b: &[usize]) -> Vec<usize> {
    b.iter()
        .enumerate()
        .filter_map(|(k, &v)| (v == 0).then_some(k))
        .collect()
}

/// The rotation of `b` that starts at position `k`.
pub fn rotate(b: &[usize], k: usize) -> Vec<usize> {
    let n = b.len();
    (0..n).map(|i| b[(k + i) % n]).collect()
}

/// Conditional systematic resampling: the output always starts with the
/// reference index 0 and the law of the remaining entries is the one
/// required for conditional SMC.
pub fn conditional_systematic_resample(p: &ProbabilityVector, rng: &mut SimRng) -> Result<Vec<usize>> {
    if !(p[0] > 0.0) {
        return Err(Error::ConditioningImpossible);
    }
    let n_p0 = p.len() as f64 * p[0];
    let u = conditional_uniform(n_p0, rng.random(), rng.sample(Open01));
    let b = systematic_resample(p, u);
    let starts = reference_rotations(&b);
    if starts.is_empty() {
        return Err(Error::Invariant("systematic draw missed the reference index".into()));
    }
    let k = starts[rng.random_range(0..starts.len())];
    Ok(rotate(&b, k))
}

/// Joint law over rotation pairs `(k, k_bar)` with uniform marginals on the
/// reference rotations of `b` and `b_bar`, built greedily so that pairs with
/// the largest overlap `|{i : A_i = Abar_i}|` receive mass first. Ties go to
/// the lexicographically smallest `(k, k_bar)`.
pub fn rotation_coupling(b: &[usize], b_bar: &[usize]) -> Vec<(usize, usize, f64)> {
    let n = b.len();
    let ks = reference_rotations(b);
    let kbs = reference_rotations(b_bar);
    if ks.is_empty() || kbs.is_empty() {
        return Vec::new();
    }
    let mut pairs: Vec<(usize, usize, usize)> = Vec::with_capacity(ks.len() * kbs.len());
    for &k in &ks {
        for &kb in &kbs {
            let overlap = (0..n).filter(|&i| b[(k + i) % n] == b_bar[(kb + i) % n]).count();
            pairs.push((overlap, k, kb));
        }
    }
    pairs.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let row_pos = |k: usize| ks.binary_search(&k).unwrap();
    let col_pos = |k: usize| kbs.binary_search(&k).unwrap();
    let mut row_left = vec![1.0 / ks.len() as f64; ks.len()];
    let mut col_left = vec![1.0 / kbs.len() as f64; kbs.len()];
    let mut rows_open = ks.len();
    let mut joint = Vec::new();
    for (_, k, kb) in pairs {
        let (r, c) = (row_pos(k), col_pos(kb));
        let mass = row_left[r].min(col_left[c]);
        if mass <= 0.0 {
            continue;
        }
        joint.push((k, kb, mass));
        row_left[r] -= mass;
        col_left[c] -= mass;
        // Snap float residue so every row and column closes exactly once.
        if row_left[r] < 1e-15 {
            row_left[r] = 0.0;
            rows_open -= 1;
        }
        if col_left[c] < 1e-15 {
            col_left[c] = 0.0;
        }
        if rows_open == 0 {
            break;
        }
    }
    joint
}

/// Coupled conditional systematic resampling: both outputs start with 0,
/// each is marginally a conditional systematic draw, and they share their
/// driving uniforms and an overlap-maximising rotation coupling.
pub fn coupled_conditional_systematic(
    p: &ProbabilityVector,
    p_bar: &ProbabilityVector,
    rng: &mut SimRng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(p[0] > 0.0) || !(p_bar[0] > 0.0) {
        return Err(Error::ConditioningImpossible);
    }
    if p.len() != p_bar.len() {
        return Err(Error::Domain("coupled resampling needs equal lengths".into()));
    }
    let n = p.len() as f64;
    let v_mix: f64 = rng.random();
    let v_pos: f64 = rng.sample(Open01);
    let b = systematic_resample(p, conditional_uniform(n * p[0], v_mix, v_pos));
    let b_bar = systematic_resample(p_bar, conditional_uniform(n * p_bar[0], v_mix, v_pos));
    let joint = rotation_coupling(&b, &b_bar);
    if joint.is_empty() {
        return Err(Error::Invariant("systematic draw missed the reference index".into()));
    }
    let v: f64 = rng.random();
    let total: f64 = joint.iter().map(|j| j.2).sum();
    let mut acc = 0.0;
    let mut chosen = joint[joint.len() - 1];
    for entry in &joint {
        acc += entry.2 / total;
        if v < acc {
            chosen = *entry;
            break;
        }
    }
    Ok((rotate(&b, chosen.0), rotate(&b_bar, chosen.1)))
}

/// Index drawn from unnormalised non-negative `weights` by inversion of `u`.
pub fn categorical_from_uniform(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

pub fn categorical(p: &ProbabilityVector, rng: &mut SimRng) -> usize {
    categorical_from_uniform(p.as_slice(), rng.random())
}

/// Draws `(i, i_bar)` with `i ~ p`, `i_bar ~ p_bar` and
/// `Pr(i = i_bar) = sum_k min(p_k, p_bar_k)`, the largest value possible.
pub fn maximal_coupling_discrete(
    p: &ProbabilityVector,
    p_bar: &ProbabilityVector,
    rng: &mut SimRng,
) -> Result<(usize, usize)> {
    if p.len() != p_bar.len() {
        return Err(Error::Domain("coupled resampling needs equal lengths".into()));
    }
    let overlap: Vec<f64> = p.0.iter().zip(&p_bar.0).map(|(a, b)| a.min(*b)).collect();
    let a: f64 = overlap.iter().sum();
    let v: f64 = rng.random();
    let u: f64 = rng.random();
    if v < a {
        let i = categorical_from_uniform(&overlap, u);
        return Ok((i, i));
    }
    let rest: Vec<f64> = p.0.iter().zip(&overlap).map(|(x, m)| (x - m).max(0.0)).collect();
    let rest_bar: Vec<f64> = p_bar.0.iter().zip(&overlap).map(|(x, m)| (x - m).max(0.0)).collect();
    if rest.iter().sum::<f64>() <= 0.0 || rest_bar.iter().sum::<f64>() <= 0.0 {
        // 1 - a is float residue; the overlap branch is the exact answer.
        let i = categorical_from_uniform(&overlap, u);
        return Ok((i, i));
    }
    let u_bar: f64 = rng.random();
    Ok((
        categorical_from_uniform(&rest, u),
        categorical_from_uniform(&rest_bar, u_bar),
    ))
}

/// `count` independent categorical draws.
pub fn multinomial_resample(p: &ProbabilityVector, count: usize, rng: &mut SimRng) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &x in &p.0 {
        acc += x;
        cumulative.push(acc);
    }
    let last_positive = p.0.iter().rposition(|&x| x > 0.0).unwrap_or(0);
    (0..count)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            cumulative.partition_point(|&c| c <= u).min(last_positive)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ess_examples() {
        assert_eq!(ess(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 4.0);
        assert_eq!(ess(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!((ess(&[2.0, 1.0, 1.0]).unwrap() - 16.0 / 6.0).abs() < 1e-12);
        assert!(matches!(ess(&[0.0, 0.0]), Err(Error::DegenerateWeights { .. })));
        assert!((ess_from_log_weights(&[0.0, 0.0, f64::NEG_INFINITY]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.5 + 1e-9]).is_ok());
        assert!(matches!(
            ProbabilityVector::new(vec![0.5, 0.6]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(ProbabilityVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityVector::from_weights(&[0.0, 0.0]).is_err());
        let p = ProbabilityVector::from_log_weights(&[0.0, 2f64.ln()]).unwrap();
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn systematic_hand_traces() {
        assert_eq!(systematic_resample(&pv(&[1.0]), 0.7), vec![0]);
        assert_eq!(systematic_resample(&pv(&[0.75, 0.25]), 0.3), vec![0, 0]);
        assert_eq!(systematic_resample(&pv(&[0.5, 0.5]), 0.3), vec![0, 1]);
        // Zero-mass tail is never selected even for U at the top of the range.
        assert_eq!(systematic_resample(&pv(&[0.5, 0.5, 0.0]), 1.0), vec![0, 1, 1]);
    }

    #[test]
    fn conditional_uniform_is_integer_safe() {
        // N p_0 = 2: uniform on (0, 1), never the (0, 2) range.
        assert_eq!(conditional_uniform(2.0, 0.3, 0.9), 0.9);
        // N p_0 < 1: U ~ U(0, N p_0).
        assert!((conditional_uniform(0.4, 0.99, 0.5) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn conditional_uniform_weights_is_identity() {
        let mut rng = RngStream::new(1).rng();
        let p = pv(&[0.25; 4]);
        for _ in 0..200 {
            assert_eq!(conditional_systematic_resample(&p, &mut rng).unwrap(), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn conditional_point_mass() {
        let mut rng = RngStream::new(2).rng();
        let p = pv(&[1.0, 0.0, 0.0]);
        assert_eq!(conditional_systematic_resample(&p, &mut rng).unwrap(), vec![0, 0, 0]);
        let q = pv(&[0.0, 1.0]);
        assert!(matches!(
            conditional_systematic_resample(&q, &mut rng),
            Err(Error::ConditioningImpossible)
        ));
    }

    #[test]
    fn conditional_two_point_frequencies() {
        let mut rng = RngStream::new(3).rng();
        let p = pv(&[0.75, 0.25]);
        let n = 60_000;
        let ones = (0..n)
            .filter(|_| conditional_systematic_resample(&p, &mut rng).unwrap() == vec![0, 0])
            .count();
        let f = ones as f64 / n as f64;
        assert!((f - 2.0 / 3.0).abs() < 0.01, "{f}");
    }

    #[test]
    fn coupled_identical_inputs_agree() {
        let mut rng = RngStream::new(4).rng();
        let p = pv(&[0.4, 0.1, 0.3, 0.2]);
        for _ in 0..500 {
            let (a, b) = coupled_conditional_systematic(&p, &p, &mut rng).unwrap();
            assert_eq!(a, b);
            assert_eq!(a[0], 0);
        }
    }

    #[test]
    fn rotation_coupling_has_uniform_marginals() {
        let b = vec![0, 0, 1, 2, 2];
        let bb = vec![0, 0, 0, 1, 3];
        let joint = rotation_coupling(&b, &bb);
        let mut row = std::collections::BTreeMap::new();
        let mut col = std::collections::BTreeMap::new();
        for (k, kb, m) in &joint {
            *row.entry(*k).or_insert(0.0) += m;
            *col.entry(*kb).or_insert(0.0) += m;
        }
        assert_eq!(row.len(), 2);
        assert_eq!(col.len(), 3);
        row.values().for_each(|v| assert!((v - 0.5).abs() < 1e-12));
        col.values().for_each(|v| assert!((v - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn maximal_coupling_extremes() {
        let mut rng = RngStream::new(5).rng();
        let p = pv(&[0.2, 0.3, 0.5]);
        for _ in 0..100 {
            let (i, j) = maximal_coupling_discrete(&p, &p, &mut rng).unwrap();
            assert_eq!(i, j);
        }
        let a = pv(&[1.0, 0.0]);
        let b = pv(&[0.0, 1.0]);
        for _ in 0..100 {
            assert_eq!(maximal_coupling_discrete(&a, &b, &mut rng).unwrap(), (0, 1));
        }
    }

    #[test]
    fn multinomial_skips_zero_mass() {
        let mut rng = RngStream::new(6).rng();
        let p = pv(&[0.0, 1.0, 0.0]);
        assert!(multinomial_resample(&p, 100, &mut rng).iter().all(|&i| i == 1));
    }
}
