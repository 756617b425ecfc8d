//! Gaussian mean with a Gaussian prior: every tempered posterior and the
//! evidence are available in closed form, which makes this the reference
//! model for checking unbiasedness.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_kernel_temperature, Model, Particle};
use crate::rng::SimRng;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateKernel {
    /// Independent draw from the tempered posterior.
    #[default]
    Exact,
    /// Gaussian random-walk Metropolis.
    RandomWalk,
}

/// `y_i ~ N(x, noise_var I)` independently, `x ~ N(prior_mean 1, prior_var I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugateGaussian {
    pub data: Vec<Vec<f64>>,
    #[serde(default)]
    pub prior_mean: f64,
    #[serde(default = "one")]
    pub prior_var: f64,
    #[serde(default = "one")]
    pub noise_var: f64,
    #[serde(default)]
    pub kernel: ConjugateKernel,
    #[serde(default = "one")]
    pub step: f64,
}

fn one() -> f64 {
    1.0
}

impl ConjugateGaussian {
    pub fn new(data: Vec<Vec<f64>>, prior_mean: f64, prior_var: f64, noise_var: f64) -> Result<Self> {
        let m = Self {
            data,
            prior_mean,
            prior_var,
            noise_var,
            kernel: ConjugateKernel::Exact,
            step: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_kernel(mut self, kernel: ConjugateKernel, step: f64) -> Self {
        self.kernel = kernel;
        self.step = step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.data.iter().any(|row| row.len() != d) {
            return Err(Error::Config(
                "conjugate data must be a non-empty rectangular table".into(),
            ));
        }
        if !(self.prior_var > 0.0 && self.noise_var > 0.0 && self.step > 0.0) {
            return Err(Error::Config("variances and step must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    fn column_means(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.dim())
            .map(|j| self.data.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }

    fn within_ss(&self) -> f64 {
        let means = self.column_means();
        self.data
            .iter()
            .map(|r| r.iter().zip(&means).map(|(y, m)| (y - m).powi(2)).sum::<f64>())
            .sum()
    }

    /// Mean and per-coordinate variance of `p(x) p(y|x)^alpha`.
    pub fn tempered_posterior(&self, alpha: f64) -> (Vec<f64>, f64) {
        let precision = 1.0 / self.prior_var + alpha * self.n() as f64 / self.noise_var;
        let var = 1.0 / precision;
        let mean = self
            .column_means()
            .iter()
            .map(|ybar| var * (self.prior_mean / self.prior_var + alpha * self.n() as f64 * ybar / self.noise_var))
            .collect();
        (mean, var)
    }

    /// `log p(y)`.
    pub fn log_evidence(&self) -> f64 {
        let (n, d) = (self.n() as f64, self.dim() as f64);
        let total_var = self.noise_var + n * self.prior_var;
        let between: f64 = self.column_means().iter().map(|m| (m - self.prior_mean).powi(2)).sum();
        -0.5 * n * d * (LOG_2PI + self.noise_var.ln())
            - 0.5 * d * (total_var / self.noise_var).ln()
            - self.within_ss() / (2.0 * self.noise_var)
            - n * between / (2.0 * total_var)
    }

    /// Exact posterior expectations of the observables.
    pub fn posterior_observables(&self) -> Vec<f64> {
        let (mean, var) = self.tempered_posterior(1.0);
        let mut out = mean.clone();
        out.push(mean[0] * mean[0] + var);
        out
    }
}

impl Model for ConjugateGaussian {
    type Point = Vec<f64>;

    fn name(&self) -> &str {
        "conjugate"
    }

    fn log_likelihood(&self, x: &Vec<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!(
                "expected dimension {}, got {}",
                self.dim(),
                x.len()
            )));
        }
        let ss: f64 = self
            .data
            .iter()
            .map(|r| r.iter().zip(x).map(|(y, m)| (y - m).powi(2)).sum::<f64>())
            .sum();
        let nd = (self.n() * self.dim()) as f64;
        Ok(-0.5 * nd * (LOG_2PI + self.noise_var.ln()) - ss / (2.0 * self.noise_var))
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        let sd = self.prior_var.sqrt();
        (0..self.dim())
            .map(|_| self.prior_mean + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn inner_kernel(&self, x: &Particle<Vec<f64>>, alpha: f64, rng: &mut SimRng) -> Result<Particle<Vec<f64>>> {
        check_kernel_temperature(alpha)?;
        match self.kernel {
            ConjugateKernel::Exact => {
                let (mean, var) = self.tempered_posterior(alpha);
                let sd = var.sqrt();
                let point = mean
                    .iter()
                    .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                self.particle(point)
            }
            ConjugateKernel::RandomWalk => {
                let proposal: Vec<f64> = x
                    .point
                    .iter()
                    .map(|v| v + self.step * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let u: f64 = rng.random();
                let log_lik = self.log_likelihood(&proposal)?;
                let log_prior = |p: &[f64]| -> f64 {
                    -p.iter().map(|v| (v - self.prior_mean).powi(2)).sum::<f64>() / (2.0 * self.prior_var)
                };
                let log_ratio = alpha * (log_lik - x.log_lik) + log_prior(&proposal) - log_prior(&x.point);
                if u.ln() < log_ratio {
                    Ok(Particle {
                        point: proposal,
                        log_lik,
                    })
                } else {
                    Ok(x.clone())
                }
            }
        }
    }

    fn summary_stats(&self, x: &Particle<Vec<f64>>) -> Vec<f64> {
        vec![x.log_lik, x.point[0]]
    }

    fn observable_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        names.push("x1_squared".into());
        names
    }

    fn observables(&self, x: &Vec<f64>) -> Vec<f64> {
        let mut out = x.clone();
        out.push(x[0] * x[0]);
        out
    }

    fn log_likelihood_sup(&self) -> Option<f64> {
        let nd = (self.n() * self.dim()) as f64;
        Some(-0.5 * nd * (LOG_2PI + self.noise_var.ln()) - self.within_ss() / (2.0 * self.noise_var))
    }
}
