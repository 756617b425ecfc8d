//! Linear regression with a horseshoe prior on the coefficients.
//!
//! `beta_j ~ N(0, sigma2 / (xi eta_j))`, `sqrt(eta_j)` and `sqrt(xi)` standard
//! half-Cauchy, `1 / sigma2 ~ Gamma(1, 1)`. Raising the likelihood to the
//! power `alpha` is the same as replacing `(n, y, W)` by
//! `(alpha n, sqrt(alpha) y, sqrt(alpha) W)`, so one Gibbs sweep serves every
//! temperature.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_kernel_temperature, Canonical, Model, Particle};
use crate::rng::SimRng;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;
const SELECTION_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct HorseshoeState {
    pub beta: Vec<f64>,
    /// Local precisions.
    pub eta: Vec<f64>,
    pub sigma2: f64,
    /// Global precision.
    pub xi: f64,
}

impl HorseshoeState {
    pub fn validate(&self) -> Result<()> {
        if self.eta.len() != self.beta.len() {
            return Err(Error::Domain("beta and eta differ in length".into()));
        }
        if !(self.sigma2 > 0.0 && self.xi > 0.0 && self.eta.iter().all(|e| *e > 0.0)) {
            return Err(Error::Domain("precisions and variance must be positive".into()));
        }
        Ok(())
    }
}

impl Canonical for HorseshoeState {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        self.beta.write_canonical(out);
        self.eta.write_canonical(out);
        self.sigma2.write_canonical(out);
        self.xi.write_canonical(out);
    }
}

/// Data substituted for an `alpha`-tempered likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperedData {
    pub n: f64,
    pub y: DVector<f64>,
    pub w: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Horseshoe {
    y: DVector<f64>,
    w: DMatrix<f64>,
    wtw: DMatrix<f64>,
    wty: DVector<f64>,
    yty: f64,
    /// Index of the coefficient in the target statistic `beta_c + beta_c^2`.
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeData {
    /// Rows are observations.
    pub design: Vec<Vec<f64>>,
    pub response: Vec<f64>,
    #[serde(default)]
    pub target: Option<usize>,
}

impl Horseshoe {
    pub fn new(y: DVector<f64>, w: DMatrix<f64>) -> Result<Self> {
        if y.len() != w.nrows() || w.ncols() == 0 {
            return Err(Error::Config(format!(
                "response has {} rows but design is {}x{}",
                y.len(),
                w.nrows(),
                w.ncols()
            )));
        }
        if y.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("horseshoe data must be finite".into()));
        }
        let wtw = w.transpose() * &w;
        let wty = w.transpose() * &y;
        let yty = y.dot(&y);
        let target = w.ncols().min(10) - 1;
        Ok(Self {
            y,
            w,
            wtw,
            wty,
            yty,
            target,
        })
    }

    pub fn from_data(data: &HorseshoeData) -> Result<Self> {
        let n = data.design.len();
        let p = data.design.first().map_or(0, Vec::len);
        if data.design.iter().any(|r| r.len() != p) {
            return Err(Error::Config("design rows differ in length".into()));
        }
        let w = DMatrix::from_fn(n, p, |i, j| data.design[i][j]);
        let mut model = Self::new(DVector::from_vec(data.response.clone()), w)?;
        if let Some(t) = data.target {
            if t >= p {
                return Err(Error::Config(format!("target coefficient {t} out of range")));
            }
            model.target = t;
        }
        Ok(model)
    }

    pub fn to_data(&self) -> HorseshoeData {
        HorseshoeData {
            design: (0..self.w.nrows())
                .map(|i| self.w.row(i).iter().copied().collect())
                .collect(),
            response: self.y.iter().copied().collect(),
            target: Some(self.target),
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.w.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.y
    }

    /// True coefficients of the standard simulation design.
    pub fn simulation_coefficients(p: usize) -> Vec<f64> {
        (1..=p)
            .map(|j| {
                if j <= 10 {
                    2f64.powf((9.0 - j as f64) / 4.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Standard-normal design, `y ~ N(W beta*, 8 I)`, `n = 100`, `p = 20`.
    pub fn simulate(rng: &mut SimRng) -> (DVector<f64>, DMatrix<f64>) {
        Self::simulate_with(100, 20, 8.0, rng)
    }

    pub fn simulate_with(n: usize, p: usize, noise_var: f64, rng: &mut SimRng) -> (DVector<f64>, DMatrix<f64>) {
        let w = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = DVector::from_vec(Self::simulation_coefficients(p));
        let sd = noise_var.sqrt();
        let y = &w * beta + DVector::from_fn(n, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
        (y, w)
    }

    pub fn tempered_data(&self, alpha: f64) -> Result<TemperedData> {
        check_kernel_temperature(alpha)?;
        let s = alpha.sqrt();
        Ok(TemperedData {
            n: alpha * self.n() as f64,
            y: &self.y * s,
            w: &self.w * s,
        })
    }

    fn residual_ss(&self, beta: &DVector<f64>) -> f64 {
        // ||y - W b||^2 = y'y - 2 b'W'y + b'W'W b, from cached products
        let quad = beta.dot(&(&self.wtw * beta));
        (self.yty - 2.0 * beta.dot(&self.wty) + quad).max(0.0)
    }

    fn shrinkage(state: &HorseshoeState) -> f64 {
        state.beta.iter().zip(&state.eta).map(|(b, e)| e * b * b).sum()
    }

    fn update_eta(&self, state: &mut HorseshoeState, rng: &mut SimRng) {
        for j in 0..state.eta.len() {
            let m = state.xi * state.beta[j] * state.beta[j] / (2.0 * state.sigma2);
            let u: f64 = rng.random::<f64>() / (1.0 + state.eta[j]);
            let upper = (1.0 - u) / u;
            let v: f64 = rng.random();
            let draw = if m * upper < 1e-12 {
                v * upper
            } else {
                -(v * (-m * upper).exp_m1()).ln_1p() / m
            };
            if draw > 0.0 && draw.is_finite() {
                state.eta[j] = draw;
            }
        }
    }

    fn update_xi(&self, state: &mut HorseshoeState, rng: &mut SimRng) {
        let p = state.beta.len() as f64;
        let rate = Self::shrinkage(state) / (2.0 * state.sigma2);
        // log-density of t = log xi, including the Jacobian
        let log_f = |t: f64| -> f64 {
            let xi = t.exp();
            0.5 * (p + 1.0) * t - rate * xi - xi.ln_1p()
        };
        state.xi = slice_sample(log_f, state.xi.ln(), 1.0, rng).exp();
    }

    fn update_sigma2(&self, state: &mut HorseshoeState, alpha: f64, rng: &mut SimRng) -> Result<()> {
        let beta = DVector::from_column_slice(&state.beta);
        let shape = 1.0 + 0.5 * (alpha * self.n() as f64 + state.beta.len() as f64);
        let rate = 1.0 + 0.5 * (alpha * self.residual_ss(&beta) + state.xi * Self::shrinkage(state));
        let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(e.to_string()))?;
        state.sigma2 = 1.0 / gamma.sample(rng);
        Ok(())
    }

    /// Precision `alpha W'W + xi diag(eta)` and the mean `A^-1 alpha W'y`.
    pub fn beta_conditional(&self, state: &HorseshoeState, alpha: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mut a = &self.wtw * alpha;
        for j in 0..self.p() {
            a[(j, j)] += state.xi * state.eta[j];
        }
        let chol = a.clone().cholesky().ok_or_else(|| {
            let diag_min = a.diagonal().min();
            let diag_max = a.diagonal().max();
            Error::Numerical(format!(
                "beta precision not positive definite (diagonal range {diag_min:e}..{diag_max:e})"
            ))
        })?;
        let mean = chol.solve(&(&self.wty * alpha));
        Ok((mean, chol.l()))
    }

    fn update_beta(&self, state: &mut HorseshoeState, alpha: f64, rng: &mut SimRng) -> Result<()> {
        let (mean, l) = self.beta_conditional(state, alpha)?;
        let z = DVector::from_fn(self.p(), |_, _| rng.sample::<f64, _>(StandardNormal));
        // L' e = z gives e ~ N(0, A^-1)
        let e = l
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        let beta = mean + e * state.sigma2.sqrt();
        state.beta = beta.iter().copied().collect();
        Ok(())
    }

    /// One sweep updating `eta`, `xi`, `sigma2` and `beta` in that order.
    pub fn gibbs_sweep(&self, state: &HorseshoeState, alpha: f64, rng: &mut SimRng) -> Result<HorseshoeState> {
        check_kernel_temperature(alpha)?;
        state.validate()?;
        let mut next = state.clone();
        self.update_eta(&mut next, rng);
        self.update_xi(&mut next, rng);
        self.update_sigma2(&mut next, alpha, rng)?;
        self.update_beta(&mut next, alpha, rng)?;
        Ok(next)
    }
}

fn half_cauchy_squared(rng: &mut SimRng) -> f64 {
    let u: f64 = rng.sample(rand::distr::Open01);
    (std::f64::consts::FRAC_PI_2 * u).tan().powi(2)
}

/// Stepping-out and shrinkage slice sampler for a univariate log-density.
fn slice_sample(log_f: impl Fn(f64) -> f64, x0: f64, width: f64, rng: &mut SimRng) -> f64 {
    const MAX_STEPS: usize = 1000;
    let level = log_f(x0) + rng.random::<f64>().ln();
    let mut lo = x0 - width * rng.random::<f64>();
    let mut hi = lo + width;
    let mut steps = 0;
    while steps < MAX_STEPS && log_f(lo) > level {
        lo -= width;
        steps += 1;
    }
    steps = 0;
    while steps < MAX_STEPS && log_f(hi) > level {
        hi += width;
        steps += 1;
    }
    loop {
        let x = lo + (hi - lo) * rng.random::<f64>();
        if log_f(x) > level {
            return x;
        }
        if x < x0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo < 1e-300_f64.max(x0.abs() * f64::EPSILON) {
            return x0;
        }
    }
}

impl Model for Horseshoe {
    type Point = HorseshoeState;

    fn name(&self) -> &str {
        "horseshoe"
    }

    fn log_likelihood(&self, x: &HorseshoeState) -> Result<f64> {
        if x.beta.len() != self.p() {
            return Err(Error::Domain(format!("expected {} coefficients", self.p())));
        }
        let beta = DVector::from_column_slice(&x.beta);
        let n = self.n() as f64;
        Ok(-0.5 * n * (LOG_2PI + x.sigma2.ln()) - self.residual_ss(&beta) / (2.0 * x.sigma2))
    }

    fn sample_prior(&self, rng: &mut SimRng) -> HorseshoeState {
        let p = self.p();
        let eta: Vec<f64> = (0..p).map(|_| half_cauchy_squared(rng)).collect();
        let xi = half_cauchy_squared(rng);
        let sigma2 = 1.0 / -rng.sample::<f64, _>(rand::distr::Open01).ln();
        let beta = eta
            .iter()
            .map(|e| (sigma2 / (xi * e)).sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        HorseshoeState { beta, eta, sigma2, xi }
    }

    fn inner_kernel(
        &self,
        x: &Particle<HorseshoeState>,
        alpha: f64,
        rng: &mut SimRng,
    ) -> Result<Particle<HorseshoeState>> {
        let next = self.gibbs_sweep(&x.point, alpha, rng)?;
        self.particle(next)
    }

    fn summary_stats(&self, x: &Particle<HorseshoeState>) -> Vec<f64> {
        let selected = x.point.beta.iter().filter(|b| b.abs() > SELECTION_THRESHOLD).count();
        vec![x.log_lik, selected as f64]
    }

    fn observable_names(&self) -> Vec<String> {
        let j = self.target + 1;
        vec![format!("beta{j}_plus_beta{j}_squared")]
    }

    fn observables(&self, x: &HorseshoeState) -> Vec<f64> {
        let b = x.beta[self.target];
        vec![b + b * b]
    }
}
