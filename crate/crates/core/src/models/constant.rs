//! A model whose likelihood does not depend on the parameter. Every particle
//! carries the same weight, so the evidence equals the likelihood constant.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{check_kernel_temperature, Model, Particle};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantLikelihood {
    pub log_value: f64,
    pub dim: usize,
}

impl Model for ConstantLikelihood {
    type Point = Vec<f64>;

    fn name(&self) -> &str {
        "constant"
    }

    fn log_likelihood(&self, _x: &Vec<f64>) -> Result<f64> {
        Ok(self.log_value)
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn inner_kernel(&self, _x: &Particle<Vec<f64>>, alpha: f64, rng: &mut SimRng) -> Result<Particle<Vec<f64>>> {
        check_kernel_temperature(alpha)?;
        Ok(Particle {
            point: self.sample_prior(rng),
            log_lik: self.log_value,
        })
    }

    fn summary_stats(&self, x: &Particle<Vec<f64>>) -> Vec<f64> {
        vec![x.log_lik, x.point.first().copied().unwrap_or(0.0)]
    }

    fn observable_names(&self) -> Vec<String> {
        (1..=self.dim).map(|j| format!("x{j}")).collect()
    }

    fn observables(&self, x: &Vec<f64>) -> Vec<f64> {
        x.clone()
    }

    fn log_likelihood_sup(&self) -> Option<f64> {
        Some(self.log_value)
    }
}
