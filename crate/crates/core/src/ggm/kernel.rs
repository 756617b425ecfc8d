//! The graph move: a double reversible jump on an extended space that
//! exchanges `G` with a one-edge neighbour without evaluating any G-Wishart
//! normalising constant.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use super::graph::{permute_matrix, propose_graph, reorder_permutation, size_prior_log_ratio, Graph};
use super::wishart::{gwishart_sample, GWishartParams};
use crate::error::{Error, Result};
use crate::model::check_kernel_temperature;
use crate::rng::SimRng;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// `log p(Y | K) = -(np/2) log 2 pi + (n/2) log|K| - <K, U>/2`.
pub fn ggm_loglik(k: &DMatrix<f64>, scatter: &DMatrix<f64>, n: f64) -> Result<f64> {
    let p = k.nrows();
    let chol = k
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("precision matrix not positive definite: {k}")))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-n * p as f64 * HALF_LOG_2PI + 0.5 * n * log_det - 0.5 * k.dot(scatter))
}

/// Log-scale pieces of the acceptance ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceFactors {
    /// `log p(G~) - log p(G)`.
    pub log_prior: f64,
    /// `log q(G | G~) - log q(G~ | G)`.
    pub log_q: f64,
    /// `-<K_pr - K, D*>/2 - <K~_pr - K~, D>/2`.
    pub log_trace: f64,
    /// `epsilon * log(Phi_{p-1,p-1} / Phi~_{p-1,p-1})`.
    pub log_jacobian: f64,
    /// Reverse minus forward density of the freed Cholesky element.
    pub log_free: f64,
}

impl AcceptanceFactors {
    pub fn log_ratio(&self) -> f64 {
        self.log_prior + self.log_q + self.log_trace + self.log_jacobian + self.log_free
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphMove {
    pub graph: Graph,
    pub proposed: Graph,
    pub accepted: bool,
    /// `+1` when the proposal adds an edge, `-1` when it removes one.
    pub epsilon: i8,
    pub factors: AcceptanceFactors,
}

fn upper_cholesky(k: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    k.clone()
        .cholesky()
        .map(|c| c.l().transpose())
        .ok_or_else(|| Error::Numerical(format!("{what} not positive definite: {k}")))
}

/// Value of `Phi[a, b]` (for `b = a + 1` the last pair) that makes the
/// corresponding precision entry zero.
fn completion(phi: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    -(0..a).map(|i| phi[(i, a)] * phi[(i, b)]).sum::<f64>() / phi[(a, a)]
}

fn log_normal(x: f64, mean: f64, precision: f64) -> f64 {
    -HALF_LOG_2PI + 0.5 * precision.ln() - 0.5 * precision * (x - mean).powi(2)
}

fn with_entry(phi: &DMatrix<f64>, a: usize, b: usize, v: f64) -> DMatrix<f64> {
    let mut out = phi.clone();
    out[(a, b)] = v;
    out
}

/// One graph update targeting `p(G) p(K | G) p(Y | K)^alpha` with `K`
/// integrated out, where the data enter only through `alpha n` and
/// `alpha U`.
pub fn ggm_graph_step(
    g: &Graph,
    scatter: &DMatrix<f64>,
    n: f64,
    params: &GWishartParams,
    alpha: f64,
    rng: &mut SimRng,
) -> Result<GraphMove> {
    check_kernel_temperature(alpha)?;
    let p = g.p();
    let proposal = propose_graph(g, rng)?;
    let seed_k: u64 = rng.random();
    let seed_k_tilde: u64 = rng.random();
    let z: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.sample(rand::distr::Open01);

    let (i, j) = proposal.edge;
    let perm = reorder_permutation(p, i, j)?;
    let g_r = g.permuted(&perm);
    let g_tilde_r = proposal.graph.permuted(&perm);
    let d = permute_matrix(&params.rate, &perm);
    let d_star = &d + permute_matrix(scatter, &perm) * alpha;
    let (a, b) = (p - 2, p - 1);

    let posterior = GWishartParams {
        delta: params.delta + alpha * n,
        rate: d_star.clone(),
    };
    let prior = GWishartParams {
        delta: params.delta,
        rate: d.clone(),
    };
    let k = gwishart_sample(&g_r, &posterior, &mut SimRng::seed_from_u64(seed_k))?;
    let k_tilde = gwishart_sample(&g_tilde_r, &prior, &mut SimRng::seed_from_u64(seed_k_tilde))?;
    let phi = upper_cholesky(&k, "posterior G-Wishart draw")?;
    let phi_tilde = upper_cholesky(&k_tilde, "prior G-Wishart draw")?;

    let theta = -d_star[(a, b)] * phi[(a, a)] / d_star[(b, b)];
    let theta_tilde = -d[(a, b)] * phi_tilde[(a, a)] / d[(b, b)];
    let adding = !g.has_edge(i, j);
    let (phi_pr, phi_tilde_pr, log_free) = if adding {
        let free = theta + z / d_star[(b, b)].sqrt();
        let fixed = completion(&phi_tilde, a, b);
        let log_free = log_normal(phi_tilde[(a, b)], theta_tilde, d[(b, b)]) - log_normal(free, theta, d_star[(b, b)]);
        (free, fixed, log_free)
    } else {
        let free = theta_tilde + z / d[(b, b)].sqrt();
        let fixed = completion(&phi, a, b);
        let log_free = log_normal(phi[(a, b)], theta, d_star[(b, b)]) - log_normal(free, theta_tilde, d[(b, b)]);
        (fixed, free, log_free)
    };
    let epsilon: i8 = if adding { 1 } else { -1 };

    let phi_new = with_entry(&phi, a, b, phi_pr);
    let phi_tilde_new = with_entry(&phi_tilde, a, b, phi_tilde_pr);
    let k_pr = phi_new.transpose() * &phi_new;
    let k_tilde_pr = phi_tilde_new.transpose() * &phi_tilde_new;
    let log_trace = -0.5 * (&k_pr - &k).dot(&d_star) - 0.5 * (&k_tilde_pr - &k_tilde).dot(&d);

    let factors = AcceptanceFactors {
        log_prior: size_prior_log_ratio(g, &proposal.graph),
        log_q: proposal.log_q_ratio,
        log_trace,
        log_jacobian: f64::from(epsilon) * (phi[(a, a)].ln() - phi_tilde[(a, a)].ln()),
        log_free,
    };
    let log_r = factors.log_ratio();
    if log_r.is_nan() {
        return Err(Error::Numerical(format!("acceptance ratio is NaN: {factors:?}")));
    }
    let accepted = u.ln() < log_r;
    Ok(GraphMove {
        graph: if accepted { proposal.graph.clone() } else { g.clone() },
        proposed: proposal.graph,
        accepted,
        epsilon,
        factors,
    })
}
