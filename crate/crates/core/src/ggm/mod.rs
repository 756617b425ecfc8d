//! Gaussian graphical models: inference on the conditional-independence
//! graph of a zero-mean Gaussian with a size-based graph prior and a
//! G-Wishart prior on the precision matrix.

pub mod graph;
pub mod kernel;
pub mod wishart;

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::Serialize;

pub use graph::{propose_graph, size_prior_log_ratio, Graph};
pub use kernel::{ggm_graph_step, ggm_loglik};
pub use wishart::{gwishart_sample, GWishartParams};

use crate::error::{Error, Result};
use crate::model::{Canonical, Model, Particle};
use crate::rng::SimRng;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// A point `(K, G)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GgmState {
    pub graph: Graph,
    pub precision: DMatrix<f64>,
}

impl Canonical for GgmState {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        self.graph.write_canonical(out);
        for v in self.precision.iter() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
}

#[derive(Debug, Clone)]
pub struct GgmModel {
    n: f64,
    scatter: DMatrix<f64>,
    params: GWishartParams,
    log_lik_sup: Option<f64>,
}

impl GgmModel {
    /// Model for the rows of `y` (observations by variables) with prior
    /// `W_G(delta, D)`.
    pub fn new(y: &DMatrix<f64>, params: GWishartParams) -> Result<Self> {
        let scatter = y.transpose() * y;
        Self::from_scatter(y.nrows(), scatter, params)
    }

    pub fn from_scatter(n: usize, scatter: DMatrix<f64>, params: GWishartParams) -> Result<Self> {
        params.validate()?;
        let p = params.p();
        if p < 2 {
            return Err(Error::Config("graphical model needs at least two variables".into()));
        }
        if scatter.nrows() != p || scatter.ncols() != p {
            return Err(Error::Config(format!("scatter matrix must be {p}x{p}")));
        }
        if n == 0 {
            return Err(Error::Config("need at least one observation".into()));
        }
        let nf = n as f64;
        let log_lik_sup = scatter.clone().cholesky().map(|c| {
            let log_det_u = 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let pf = p as f64;
            -nf * pf * HALF_LOG_2PI + 0.5 * nf * (pf * nf.ln() - log_det_u) - 0.5 * nf * pf
        });
        Ok(Self {
            n: nf,
            scatter,
            params,
            log_lik_sup,
        })
    }

    pub fn p(&self) -> usize {
        self.params.p()
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    pub fn params(&self) -> &GWishartParams {
        &self.params
    }

    /// Draws a precision matrix from `K | G, Y` at temperature `alpha`.
    pub fn sample_precision(&self, g: &Graph, alpha: f64, rng: &mut SimRng) -> Result<DMatrix<f64>> {
        let posterior = GWishartParams {
            delta: self.params.delta + alpha * self.n,
            rate: &self.params.rate + &self.scatter * alpha,
        };
        gwishart_sample(g, &posterior, rng)
    }

    pub fn edge_names(&self) -> Vec<String> {
        let g = Graph::empty(self.p());
        (0..g.max_edges())
            .map(|k| {
                let (i, j) = g.pair(k);
                format!("edge_{}_{}", i + 1, j + 1)
            })
            .collect()
    }
}

impl Model for GgmModel {
    type Point = GgmState;

    fn name(&self) -> &str {
        "ggm"
    }

    fn log_likelihood(&self, x: &GgmState) -> Result<f64> {
        ggm_loglik(&x.precision, &self.scatter, self.n)
    }

    fn sample_prior(&self, rng: &mut SimRng) -> GgmState {
        let graph = graph::sample_size_prior(self.p(), rng);
        let seed: u64 = rng.random();
        // prior parameters were validated at construction, so sampling succeeds
        let precision =
            gwishart_sample(&graph, &self.params, &mut SimRng::seed_from_u64(seed)).expect("validated G-Wishart prior");
        GgmState { graph, precision }
    }

    /// Graph move followed by a fresh draw of `K` given the new graph.
    fn inner_kernel(&self, x: &Particle<GgmState>, alpha: f64, rng: &mut SimRng) -> Result<Particle<GgmState>> {
        let mv = ggm_graph_step(&x.point.graph, &self.scatter, self.n, &self.params, alpha, rng)?;
        let seed: u64 = rng.random();
        let precision = self.sample_precision(&mv.graph, alpha, &mut SimRng::seed_from_u64(seed))?;
        self.particle(GgmState {
            graph: mv.graph,
            precision,
        })
    }

    fn summary_stats(&self, x: &Particle<GgmState>) -> Vec<f64> {
        vec![x.log_lik, x.point.graph.n_edges() as f64]
    }

    fn observable_names(&self) -> Vec<String> {
        self.edge_names()
    }

    fn observables(&self, x: &GgmState) -> Vec<f64> {
        x.graph.edge_indicators()
    }

    fn log_likelihood_sup(&self) -> Option<f64> {
        self.log_lik_sup
    }
}

/// Simulated data set with its generating graph and precision matrix.
#[derive(Debug, Clone)]
pub struct SyntheticGgm {
    /// `n x p`, rows are observations.
    pub y: DMatrix<f64>,
    pub graph: Graph,
    pub precision: DMatrix<f64>,
}

/// Uniform random graph with `round(density * p(p-1)/2)` edges, `K ~ W_G(3, I)`
/// and rows `N(0, K^-1)`.
pub fn ggm_synthetic(p: usize, n: usize, density: f64, rng: &mut SimRng) -> Result<SyntheticGgm> {
    if p < 2 || n == 0 {
        return Err(Error::Domain("need p >= 2 and n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Domain(format!("edge density {density} outside [0, 1]")));
    }
    let m = graph::max_edges(p);
    let ne = (density * m as f64).round() as usize;
    let mut g = Graph::empty(p);
    for k in rand::seq::index::sample(rng, m, ne) {
        let (i, j) = g.pair(k);
        g.set(i, j, true);
    }
    let params = GWishartParams::identity(p, 3.0)?;
    let precision = gwishart_sample(&g, &params, rng)?;
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("synthetic precision not positive definite".into()))?;
    let lt = chol.l().transpose();
    let mut y = DMatrix::zeros(n, p);
    for r in 0..n {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = lt
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        y.set_row(r, &x.transpose());
    }
    Ok(SyntheticGgm { y, graph: g, precision })
}

/// Reads a headerless numeric CSV into an `n x p` matrix.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Config(format!("CSV: {e}")))?;
        let row = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("CSV value {f:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let p = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::Config("CSV matrix must be non-empty and rectangular".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

pub fn write_matrix_csv<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..m.nrows() {
        writer
            .write_record(m.row(i).iter().map(|v| format!("{v:e}")))
            .map_err(|e| Error::Config(format!("CSV: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeProbability {
    pub node_i: usize,
    pub node_j: usize,
    pub prob: f64,
    pub std_err: f64,
}

/// Rows for the edge report, with 1-based node labels.
pub fn edge_probabilities(p: usize, probs: &[f64], std_errs: &[f64]) -> Result<Vec<EdgeProbability>> {
    let g = Graph::empty(p);
    if probs.len() != g.max_edges() || std_errs.len() != probs.len() {
        return Err(Error::Domain(format!("expected {} edge values", g.max_edges())));
    }
    Ok((0..g.max_edges())
        .map(|k| {
            let (i, j) = g.pair(k);
            EdgeProbability {
                node_i: i + 1,
                node_j: j + 1,
                prob: probs[k],
                std_err: std_errs[k],
            }
        })
        .collect())
}

pub fn write_edge_report<W: Write>(out: W, rows: &[EdgeProbability]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Config(format!("CSV: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}
