//! Wishart and G-Wishart sampling.
//!
//! `W_G(delta, D)` has density proportional to
//! `|K|^(delta/2 - 1) exp(-<K, D>/2)` on precision matrices with zeros
//! outside `G`. For the complete graph this is the Wishart law with
//! `delta + p - 1` degrees of freedom and scale `D^-1`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::graph::Graph;
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const GWISHART_TOLERANCE: f64 = 1e-8;
pub const GWISHART_MAX_SWEEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct GWishartParams {
    pub delta: f64,
    /// Rate matrix `D`.
    pub rate: DMatrix<f64>,
}

impl GWishartParams {
    pub fn new(delta: f64, rate: DMatrix<f64>) -> Result<Self> {
        let params = Self { delta, rate };
        params.validate()?;
        Ok(params)
    }

    pub fn identity(p: usize, delta: f64) -> Result<Self> {
        Self::new(delta, DMatrix::identity(p, p))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 2.0) {
            return Err(Error::Domain(format!("delta = {} must exceed 2", self.delta)));
        }
        let d = &self.rate;
        if !d.is_square() || (d - d.transpose()).amax() > 1e-10 * d.amax().max(1.0) {
            return Err(Error::Domain("rate matrix must be square and symmetric".into()));
        }
        if d.clone().cholesky().is_none() {
            return Err(Error::Domain("rate matrix must be positive definite".into()));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.rate.nrows()
    }
}

/// Bartlett draw from the Wishart law with `df` degrees of freedom and scale
/// `L L'` for lower-triangular `scale_chol = L`.
pub fn wishart_sample(df: f64, scale_chol: &DMatrix<f64>, rng: &mut SimRng) -> Result<DMatrix<f64>> {
    let p = scale_chol.nrows();
    if !(df > p as f64 - 1.0) {
        return Err(Error::Domain(format!(
            "Wishart needs df > p - 1, got {df} with p = {p}"
        )));
    }
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let la = scale_chol * a;
    Ok(&la * la.transpose())
}

fn inverse_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite: {m}")))
}

/// Draw from `W_G(delta, D)`: a complete-graph Wishart draw whose covariance
/// is then iteratively completed so that its inverse has the zero pattern of
/// `G`, stopping once no entry moves by more than the tolerance or after the
/// sweep cap, whichever comes first.
pub fn gwishart_sample(g: &Graph, params: &GWishartParams, rng: &mut SimRng) -> Result<DMatrix<f64>> {
    let p = params.p();
    if g.p() != p {
        return Err(Error::Domain(format!("graph has {} nodes, rate matrix {p}", g.p())));
    }
    let scale = inverse_spd(&params.rate, "rate matrix")?;
    let chol = scale
        .cholesky()
        .ok_or_else(|| Error::Numerical("Wishart scale not positive definite".into()))?;
    let k0 = wishart_sample(params.delta + p as f64 - 1.0, &chol.l(), rng)?;
    if g.is_complete() {
        return Ok(k0);
    }
    let sigma = inverse_spd(&k0, "Wishart draw")?;
    let mut w = sigma.clone();
    let neighbors: Vec<Vec<usize>> = (0..p).map(|j| g.neighbors(j)).collect();
    for _ in 0..GWISHART_MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for j in 0..p {
            let nb = &neighbors[j];
            let mut column = vec![0.0; p];
            if !nb.is_empty() {
                let w_nn = DMatrix::from_fn(nb.len(), nb.len(), |a, b| w[(nb[a], nb[b])]);
                let rhs = nalgebra::DVector::from_fn(nb.len(), |a, _| sigma[(nb[a], j)]);
                let beta = w_nn
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Numerical(format!("neighbour block of node {j} singular: {w_nn}")))?
                    .solve(&rhs);
                for (i, c) in column.iter_mut().enumerate() {
                    if i != j {
                        *c = nb.iter().zip(beta.iter()).map(|(&k, b)| w[(i, k)] * b).sum();
                    }
                }
            }
            for i in (0..p).filter(|&i| i != j) {
                change = change.max((w[(i, j)] - column[i]).abs());
                w[(i, j)] = column[i];
                w[(j, i)] = column[i];
            }
        }
        if change < GWISHART_TOLERANCE {
            break;
        }
    }
    let mut k = inverse_spd(&w, "completed covariance")?;
    for a in 0..p {
        for b in (a + 1)..p {
            let v = if g.has_edge(a, b) {
                0.5 * (k[(a, b)] + k[(b, a)])
            } else {
                0.0
            };
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    if k.clone().cholesky().is_none() {
        return Err(Error::Numerical(
            "completed G-Wishart draw is not positive definite".into(),
        ));
    }
    Ok(k)
}
