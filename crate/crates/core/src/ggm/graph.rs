//! Undirected graphs, the size-based graph prior, the edge-flip proposal and
//! node reordering.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::model::Canonical;
use crate::rng::SimRng;

/// Simple undirected graph on nodes `0..p`, stored as the row-major upper
/// triangle of its adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Graph {
    p: usize,
    edges: Vec<bool>,
}

pub fn max_edges(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

impl Graph {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: vec![false; max_edges(p)],
        }
    }

    pub fn complete(p: usize) -> Self {
        Self {
            p,
            edges: vec![true; max_edges(p)],
        }
    }

    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(p);
        for &(i, j) in edges {
            if i == j || i >= p || j >= p {
                return Err(Error::Domain(format!("invalid edge ({i}, {j}) for p = {p}")));
            }
            g.set(i, j, true);
        }
        Ok(g)
    }

    /// Graph whose edges are the set bits of `code` in upper-triangle order.
    pub fn from_code(p: usize, code: u64) -> Self {
        let edges = (0..max_edges(p)).map(|k| code >> k & 1 == 1).collect();
        Self { p, edges }
    }

    pub fn code(&self) -> u64 {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(k, _)| 1u64 << k)
            .sum()
    }

    pub fn from_adjacency(adj: &DMatrix<bool>) -> Result<Self> {
        let p = adj.nrows();
        if adj.ncols() != p {
            return Err(Error::Domain("adjacency must be square".into()));
        }
        let mut g = Self::empty(p);
        for i in 0..p {
            if adj[(i, i)] {
                return Err(Error::Domain(format!("self-loop at node {i}")));
            }
            for j in (i + 1)..p {
                if adj[(i, j)] != adj[(j, i)] {
                    return Err(Error::Domain(format!("adjacency not symmetric at ({i}, {j})")));
                }
                g.set(i, j, adj[(i, j)]);
            }
        }
        Ok(g)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn max_edges(&self) -> usize {
        self.edges.len()
    }

    /// Position of edge `{i, j}` in upper-triangle row-major order.
    pub fn edge_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        debug_assert!(i < j && j < self.p);
        i * (2 * self.p - i - 1) / 2 + (j - i - 1)
    }

    pub fn pair(&self, k: usize) -> (usize, usize) {
        let mut i = 0;
        let mut start = 0;
        loop {
            let row = self.p - i - 1;
            if k < start + row {
                return (i, i + 1 + k - start);
            }
            start += row;
            i += 1;
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges[self.edge_index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, present: bool) {
        let k = self.edge_index(i, j);
        self.edges[k] = present;
    }

    pub fn toggled(&self, i: usize, j: usize) -> Self {
        let mut g = self.clone();
        g.set(i, j, !self.has_edge(i, j));
        g
    }

    pub fn n_edges(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    pub fn is_empty(&self) -> bool {
        self.n_edges() == 0
    }

    pub fn is_complete(&self) -> bool {
        self.edges.iter().all(|&e| e)
    }

    pub fn neighbors(&self, j: usize) -> Vec<usize> {
        (0..self.p).filter(|&i| self.has_edge(i, j)).collect()
    }

    pub fn edge_indicators(&self) -> Vec<f64> {
        self.edges.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect()
    }

    /// Graph with node `perm[k]` of `self` moved to position `k`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut g = Self::empty(self.p);
        for a in 0..self.p {
            for b in (a + 1)..self.p {
                g.set(a, b, self.has_edge(perm[a], perm[b]));
            }
        }
        g
    }
}

impl Canonical for Graph {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.p as u64).to_le_bytes());
        for chunk in self.edges.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (b, &e)| acc | (u8::from(e) << b));
            out.push(byte);
        }
    }
}

/// Unnormalised `log p(G)` under the size-based prior: uniform given the
/// number of edges, which follows a geometric law with success probability
/// `1 / (p + 1)` truncated to `0..=p(p-1)/2`.
pub fn size_prior_log_density(g: &Graph) -> f64 {
    let p = g.p() as f64;
    let ne = g.n_edges() as u64;
    ne as f64 * (p / (p + 1.0)).ln() - ln_binomial(g.max_edges() as u64, ne)
}

/// `log p(G~) - log p(G)`.
pub fn size_prior_log_ratio(g: &Graph, g_new: &Graph) -> f64 {
    size_prior_log_density(g_new) - size_prior_log_density(g)
}

/// Draws a graph from the size-based prior.
pub fn sample_size_prior(p: usize, rng: &mut SimRng) -> Graph {
    let m = max_edges(p);
    let ratio = p as f64 / (p as f64 + 1.0);
    let weights: Vec<f64> = (0..=m).map(|k| ratio.powi(k as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut ne = m;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            ne = k;
            break;
        }
        u -= w;
    }
    let mut g = Graph::empty(p);
    for k in rand::seq::index::sample(rng, m, ne) {
        g.edges[k] = true;
    }
    g
}

/// `log q(G~ | G)` for the add/remove proposal.
pub fn proposal_log_prob(g: &Graph, g_new: &Graph) -> f64 {
    let m = g.max_edges() as f64;
    let ne = g.n_edges() as f64;
    if g.is_empty() || g.is_complete() {
        return -m.ln();
    }
    if g_new.n_edges() > g.n_edges() {
        -(2.0 * (m - ne)).ln()
    } else {
        -(2.0 * ne).ln()
    }
}

/// A single edge flip.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphProposal {
    pub graph: Graph,
    /// Flipped pair with `i < j`.
    pub edge: (usize, usize),
    /// `log q(G | G~) - log q(G~ | G)`.
    pub log_q_ratio: f64,
}

/// Picks removal or addition with equal probability (forced when the graph
/// is empty or complete), then a uniform edge of that kind.
pub fn propose_graph(g: &Graph, rng: &mut SimRng) -> Result<GraphProposal> {
    let m = g.max_edges();
    if m == 0 {
        return Err(Error::Domain("graph proposal needs p >= 2".into()));
    }
    let coin: f64 = rng.random();
    let pick: f64 = rng.random();
    let remove = if g.is_complete() {
        true
    } else if g.is_empty() {
        false
    } else {
        coin < 0.5
    };
    let candidates: Vec<usize> = (0..m).filter(|&k| g.edges[k] == remove).collect();
    let k = candidates[((pick * candidates.len() as f64) as usize).min(candidates.len() - 1)];
    let edge = g.pair(k);
    let graph = g.toggled(edge.0, edge.1);
    let log_q_ratio = proposal_log_prob(&graph, g) - proposal_log_prob(g, &graph);
    Ok(GraphProposal {
        graph,
        edge,
        log_q_ratio,
    })
}

/// Permutation moving `i` and `j` to the last two positions and keeping the
/// remaining nodes in order; entry `k` is the original node at position `k`.
pub fn reorder_permutation(p: usize, i: usize, j: usize) -> Result<Vec<usize>> {
    if !(i < j && j < p) {
        return Err(Error::Domain(format!("need i < j < p, got ({i}, {j}) with p = {p}")));
    }
    let mut perm: Vec<usize> = (0..p).filter(|&k| k != i && k != j).collect();
    perm.push(i);
    perm.push(j);
    Ok(perm)
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &v) in perm.iter().enumerate() {
        inv[v] = k;
    }
    inv
}

/// `M'[a, b] = M[perm[a], perm[b]]`.
pub fn permute_matrix(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |a, b| m[(perm[a], perm[b])])
}
