//! The frozen tempering schedule that defines the Feynman-Kac model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Temperatures `alpha_0 < alpha_1 < ... < alpha_S < 1` and the number of
/// inner moves `m_s` applied after reweighting to `alpha_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperingSchedule {
    alphas: Vec<f64>,
    mcmc_counts: Vec<usize>,
}

impl TemperingSchedule {
    pub fn new(alphas: Vec<f64>, mcmc_counts: Vec<usize>) -> Result<Self> {
        let s = Self { alphas, mcmc_counts };
        s.validate()?;
        Ok(s)
    }

    /// Schedule with no intermediate temperatures: plain importance sampling
    /// from `pi_{alpha_0}` to the posterior.
    pub fn direct(alpha0: f64) -> Result<Self> {
        Self::new(vec![alpha0], Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Domain("schedule needs alpha_0".into()));
        }
        if self.alphas.len() != self.mcmc_counts.len() + 1 {
            return Err(Error::Domain(format!(
                "schedule has {} temperatures above alpha_0 but {} move counts",
                self.alphas.len() - 1,
                self.mcmc_counts.len()
            )));
        }
        if self.alphas.iter().any(|a| !(0.0..1.0).contains(a)) {
            return Err(Error::Domain("temperatures must lie in [0, 1)".into()));
        }
        if self.alphas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("temperatures must increase strictly".into()));
        }
        if self.mcmc_counts.contains(&0) {
            return Err(Error::Domain("move counts must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of intermediate temperatures `S`.
    pub fn stages(&self) -> usize {
        self.mcmc_counts.len()
    }

    pub fn alpha0(&self) -> f64 {
        self.alphas[0]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn mcmc_counts(&self) -> &[usize] {
        &self.mcmc_counts
    }

    /// Temperature at stage `s` (0 ..= S).
    pub fn alpha(&self, s: usize) -> f64 {
        self.alphas[s]
    }

    /// Temperature the final reweighting targets after stage `s`.
    pub fn next_alpha(&self, s: usize) -> f64 {
        self.alphas.get(s + 1).copied().unwrap_or(1.0)
    }

    /// Inner moves at stage `s` (1 ..= S).
    pub fn moves(&self, s: usize) -> usize {
        self.mcmc_counts[s - 1]
    }
}

/// On-disk form of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub alphas: Vec<f64>,
    pub mcmc_counts: Vec<usize>,
    pub model: String,
    pub seed: u64,
}

impl ScheduleFile {
    pub fn new(schedule: &TemperingSchedule, model: &str, seed: u64) -> Self {
        Self {
            alphas: schedule.alphas.clone(),
            mcmc_counts: schedule.mcmc_counts.clone(),
            model: model.to_string(),
            seed,
        }
    }

    pub fn schedule(&self) -> Result<TemperingSchedule> {
        TemperingSchedule::new(self.alphas.clone(), self.mcmc_counts.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        file.schedule()?;
        Ok(file)
    }
}
