//! Equal-weight mixture of unit-variance Gaussians with unknown means and a
//! uniform prior on a hypercube.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_kernel_temperature, log_sum_exp, Model, Particle};
use crate::rng::SimRng;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub dim: usize,
    pub data: Vec<f64>,
    /// Half-width of the prior hypercube.
    #[serde(default = "default_bound")]
    pub bound: f64,
    /// Random-walk proposal standard deviation.
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_bound() -> f64 {
    10.0
}

fn default_step() -> f64 {
    1.0
}

impl Mixture {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        let m = Self {
            dim,
            data,
            bound: default_bound(),
            step: default_step(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("mixture dimension must be positive".into()));
        }
        if !(self.bound > 0.0) || !(self.step > 0.0) {
            return Err(Error::Config("mixture bound and step must be positive".into()));
        }
        if self.data.iter().any(|y| !y.is_finite()) {
            return Err(Error::Config("mixture data must be finite".into()));
        }
        Ok(())
    }

    /// Draws `n` observations, each from a component picked uniformly.
    pub fn simulate(truth: &[f64], n: usize, rng: &mut SimRng) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let j = rng.random_range(0..truth.len());
                truth[j] + rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }

    pub fn in_support(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.abs() <= self.bound)
    }

    fn rwmh(&self, x: &Particle<Vec<f64>>, alpha: f64, rng: &mut SimRng) -> Result<Particle<Vec<f64>>> {
        let proposal: Vec<f64> = x
            .point
            .iter()
            .map(|v| v + self.step * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let u: f64 = rng.random();
        if !self.in_support(&proposal) {
            return Ok(x.clone());
        }
        let log_lik = self.log_likelihood(&proposal)?;
        if u.ln() < alpha * (log_lik - x.log_lik) {
            Ok(Particle {
                point: proposal,
                log_lik,
            })
        } else {
            Ok(x.clone())
        }
    }
}

impl Model for Mixture {
    type Point = Vec<f64>;

    fn name(&self) -> &str {
        "mixture"
    }

    fn log_likelihood(&self, x: &Vec<f64>) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!("expected {} means, got {}", self.dim, x.len())));
        }
        let log_d = (self.dim as f64).ln();
        let mut terms = vec![0.0; self.dim];
        let mut total = 0.0;
        for y in &self.data {
            for (t, m) in terms.iter_mut().zip(x) {
                *t = -0.5 * (y - m) * (y - m);
            }
            total += log_sum_exp(&terms) - log_d - HALF_LOG_2PI;
        }
        Ok(total)
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        (0..self.dim)
            .map(|_| rng.random_range(-self.bound..=self.bound))
            .collect()
    }

    fn inner_kernel(&self, x: &Particle<Vec<f64>>, alpha: f64, rng: &mut SimRng) -> Result<Particle<Vec<f64>>> {
        check_kernel_temperature(alpha)?;
        self.rwmh(x, alpha, rng)
    }

    fn summary_stats(&self, x: &Particle<Vec<f64>>) -> Vec<f64> {
        vec![x.log_lik, x.point.iter().map(|v| v * v).sum::<f64>().sqrt()]
    }

    fn observable_names(&self) -> Vec<String> {
        vec!["sum_x_plus_x2".into()]
    }

    fn observables(&self, x: &Vec<f64>) -> Vec<f64> {
        vec![x.iter().map(|v| v + v * v).sum()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn toy() -> Mixture {
        let mut rng = RngStream::new(1).rng();
        Mixture::new(2, Mixture::simulate(&[-3.0, 0.0], 100, &mut rng)).unwrap()
    }

    fn naive(m: &Mixture, x: &[f64]) -> f64 {
        m.data
            .iter()
            .map(|y| {
                let s: f64 = x
                    .iter()
                    .map(|mu| (-(y - mu).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt())
                    .sum();
                (s / x.len() as f64).ln()
            })
            .sum()
    }

    #[test]
    fn single_datum_at_both_means() {
        let m = Mixture::new(2, vec![0.0]).unwrap();
        let v = m.log_likelihood(&vec![0.0, 0.0]).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_summation_and_is_symmetric() {
        let m = toy();
        let mut rng = RngStream::new(2).rng();
        for _ in 0..20 {
            let x = m.sample_prior(&mut rng);
            let v = m.log_likelihood(&x).unwrap();
            let oracle = naive(&m, &x);
            if oracle.is_finite() {
                assert!((v - oracle).abs() < 1e-9 * oracle.abs().max(1.0), "{v} vs {oracle}");
            }
            let swapped = vec![x[1], x[0]];
            assert_eq!(v, m.log_likelihood(&swapped).unwrap());
        }
    }

    #[test]
    fn prior_is_centered() {
        let m = toy();
        let mut rng = RngStream::new(3).rng();
        let n = 100_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let x = m.sample_prior(&mut rng);
            assert!(m.in_support(&x));
            mean[0] += x[0] / n as f64;
            mean[1] += x[1] / n as f64;
        }
        assert!(mean[0].abs() < 0.1 && mean[1].abs() < 0.1);
    }

    #[test]
    fn stats_and_observables() {
        let m = toy();
        let p = m.particle(vec![3.0, 4.0]).unwrap();
        assert_eq!(m.summary_stats(&p)[1], 5.0);
        assert_eq!(m.observables(&vec![1.0, 2.0]), vec![1.0 + 2.0 + 1.0 + 4.0]);
    }

    #[test]
    fn proposals_leaving_the_box_are_rejected() {
        let m = Mixture { step: 100.0, ..toy() };
        let x = m.particle(vec![9.99, -9.99]).unwrap();
        let mut rng = RngStream::new(4).rng();
        let mut stayed = 0;
        for _ in 0..200 {
            let y = m.inner_kernel(&x, 1.0, &mut rng).unwrap();
            assert!(m.in_support(&y.point));
            if y.same_as(&x) {
                stayed += 1;
            }
        }
        assert!(stayed > 190);
    }

    #[test]
    fn acceptance_rises_as_temperature_falls() {
        let m = toy();
        let mut rates = Vec::new();
        for &alpha in &[1.0, 0.1, 0.01, 0.001] {
            let mut rng = RngStream::new(5).rng();
            let mut x = m.particle(vec![-3.0, 0.0]).unwrap();
            let mut moves = 0;
            for _ in 0..4000 {
                let y = m.inner_kernel(&x, alpha, &mut rng).unwrap();
                if !y.same_as(&x) {
                    moves += 1;
                }
                x = y;
            }
            rates.push(moves as f64 / 4000.0);
        }
        assert!(rates.windows(2).all(|w| w[0] < w[1] + 0.02), "{rates:?}");
        assert!(rates[3] > rates[0] + 0.2);
    }

    #[test]
    fn one_dimensional_invariance() {
        // alpha-tempered target on [-10, 10] for one datum: exp(-alpha (x - y)^2 / 2)
        let m = Mixture::new(1, vec![1.5]).unwrap();
        let alpha = 0.25;
        let mut rng = RngStream::new(6).rng();
        let mut x = m.particle(vec![0.0]).unwrap();
        let (mut s1, mut n) = (0.0, 0usize);
        for i in 0..400_000 {
            x = m.inner_kernel(&x, alpha, &mut rng).unwrap();
            if i >= 1000 {
                s1 += x.point[0];
                n += 1;
            }
        }
        // posterior is N(1.5, 1 / alpha) truncated to [-10, 10]; truncation is negligible
        let mean = s1 / n as f64;
        assert!((mean - 1.5).abs() < 0.08, "{mean}");
    }

    #[test]
    fn crn_coupling_contracts() {
        let m = toy();
        let mut rng = RngStream::new(7).rng();
        let mut a = m.particle(vec![-3.2, 0.3]).unwrap();
        let mut b = m.particle(vec![-2.9, -0.1]).unwrap();
        let d0 = ((a.point[0] - b.point[0]).powi(2) + (a.point[1] - b.point[1]).powi(2)).sqrt();
        let mut total = 0.0;
        for _ in 0..300 {
            let (na, nb) = m.coupled_inner_kernel(&a, &b, 1.0, &mut rng).unwrap();
            a = na;
            b = nb;
            total += ((a.point[0] - b.point[0]).powi(2) + (a.point[1] - b.point[1]).powi(2)).sqrt();
        }
        assert!(total / 300.0 < d0);
    }
}
