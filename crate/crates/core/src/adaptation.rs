//! Construction of the tempering schedule from a pilot particle population.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_correlation, Model, Particle};
use crate::resampling::{ess_from_log_weights, multinomial_resample, ProbabilityVector};
use crate::rng::RngStream;
use crate::schedule::TemperingSchedule;
use crate::smc::{mutate, sample_initial};

const BISECTION_ITERS: usize = 60;
const BISECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    /// Pilot population size `N_0`.
    pub particles: usize,
    /// ESS threshold `gamma_0` as a fraction of `N_0`.
    pub ess_threshold: f64,
    /// Correlation threshold `zeta_0`.
    pub correlation_threshold: f64,
    /// Acceptance rate for choosing `alpha_0 > 0` by rejection sampling;
    /// `None` starts from the prior.
    pub rejection_rate: Option<f64>,
    /// Cap on the number of inner moves per stage.
    pub max_steps: usize,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            particles: 10_000,
            ess_threshold: 0.8,
            correlation_threshold: 0.95,
            rejection_rate: None,
            max_steps: 100,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::Domain("adaptation needs N_0 >= 2".into()));
        }
        for (name, v) in [
            ("ess_threshold", self.ess_threshold),
            ("correlation_threshold", self.correlation_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if let Some(a) = self.rejection_rate {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Domain(format!("rejection_rate = {a} outside (0, 1]")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Domain("max_steps must be positive".into()));
        }
        Ok(())
    }
}

fn ess_at(log_liks: &[f64], delta: f64) -> f64 {
    let lw: Vec<f64> = log_liks
        .iter()
        .map(|l| {
            if *l == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                delta * l
            }
        })
        .collect();
    ess_from_log_weights(&lw)
}

/// Largest step above `alpha_prev` that keeps the ESS of
/// `p(y|x_i)^(alpha - alpha_prev)` at or above `gamma0 * N`; 1 when the
/// constraint still holds at `alpha = 1`.
pub fn next_temperature(log_liks: &[f64], alpha_prev: f64, gamma0: f64) -> Result<f64> {
    if !(alpha_prev < 1.0) {
        return Err(Error::Domain(format!("alpha_prev = {alpha_prev} must be below 1")));
    }
    if log_liks.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::Domain("log-likelihoods must be finite or -inf".into()));
    }
    let target = gamma0 * log_liks.len() as f64;
    if ess_at(log_liks, 1.0 - alpha_prev) >= target {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0 - alpha_prev);
    for _ in 0..BISECTION_ITERS {
        if hi - lo < BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ess_at(log_liks, mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Guard against lo == 0 when even the smallest representable step fails.
    let alpha = alpha_prev + lo.max(BISECTION_TOL);
    Ok(alpha.min(1.0))
}

/// Smallest `k >= 1` such that, after `k` inner moves, no summary statistic
/// keeps a sample correlation above `zeta0` with its starting value.
/// Statistics with zero variance are ignored; `k` is capped at `max_steps`.
/// Returns `k` together with the moved particles.
pub fn select_mcmc_count<M: Model>(
    model: &M,
    particles: &[Particle<M::Point>],
    alpha: f64,
    zeta0: f64,
    max_steps: usize,
    stream: &RngStream,
) -> Result<(usize, Vec<Particle<M::Point>>)> {
    if particles.is_empty() {
        return Err(Error::Domain("no particles to mutate".into()));
    }
    let max_steps = max_steps.max(1);
    let before: Vec<Vec<f64>> = particles.iter().map(|x| model.summary_stats(x)).collect();
    let n_stats = before[0].len();
    let columns_before: Vec<Vec<f64>> = (0..n_stats).map(|j| before.iter().map(|v| v[j]).collect()).collect();

    let mut rngs: Vec<_> = (0..particles.len()).map(|i| stream.child(i as u64).rng()).collect();
    let mut current = particles.to_vec();
    for k in 1..=max_steps {
        current = current
            .iter()
            .zip(rngs.iter_mut())
            .map(|(x, rng)| mutate(model, x, alpha, 1, rng))
            .collect::<Result<_>>()?;
        let after: Vec<Vec<f64>> = current.iter().map(|x| model.summary_stats(x)).collect();
        let worst = (0..n_stats)
            .filter_map(|j| {
                let col: Vec<f64> = after.iter().map(|v| v[j]).collect();
                sample_correlation(&columns_before[j], &col)
            })
            .fold(None, |m: Option<f64>, c| Some(m.map_or(c, |m| m.max(c))));
        match worst {
            None => return Ok((k, current)),
            Some(c) if c <= zeta0 => return Ok((k, current)),
            _ => {}
        }
    }
    Ok((max_steps, current))
}

/// Result of choosing `alpha_0` by rejection sampling.
#[derive(Debug, Clone)]
pub struct RejectionStart<P> {
    pub alpha0: f64,
    pub particles: Vec<Particle<P>>,
}

/// Picks the largest `alpha_0` at which exactly `n0` of `ceil(n0 / a)` prior
/// draws pass the rejection test `u_i < (p(y|x_i) / sup p(y|.))^alpha_0`.
///
/// Each draw accepts for all `alpha <= t_i = log(u_i) / b_i`, with
/// `b_i = log p(y|x_i) - sup log p(y|.)`, so `alpha_0` is the `n0`-th largest
/// threshold.
pub fn select_alpha0_rejection<M: Model>(
    model: &M,
    n0: usize,
    rate: f64,
    stream: &RngStream,
) -> Result<RejectionStart<M::Point>> {
    if !(rate > 0.0 && rate <= 1.0) || n0 == 0 {
        return Err(Error::Domain("need n0 >= 1 and a rate in (0, 1]".into()));
    }
    let sup = model
        .log_likelihood_sup()
        .ok_or_else(|| Error::Domain(format!("model '{}' exposes no likelihood bound", model.name())))?;
    let total = (n0 as f64 / rate).ceil() as usize;
    let mut draws = Vec::with_capacity(total);
    for i in 0..total {
        let mut rng = stream.child(i as u64).rng();
        let x = model.particle(model.sample_prior(&mut rng))?;
        let u: f64 = rng.sample(Open01);
        let b = x.log_lik - sup;
        let t = if b < 0.0 { u.ln() / b } else { f64::INFINITY };
        draws.push((t, x));
    }
    let distinct_below = draws.iter().filter(|(t, _)| t.is_finite()).count();
    if distinct_below < n0 {
        let particles = draws.into_iter().take(n0).map(|(_, x)| x).collect();
        return Ok(RejectionStart { alpha0: 0.0, particles });
    }
    draws.sort_by(|a, b| b.0.total_cmp(&a.0));
    let alpha0 = draws[n0 - 1].0.clamp(0.0, 1.0 - 1e-12);
    let particles = draws.into_iter().take(n0).map(|(_, x)| x).collect();
    Ok(RejectionStart { alpha0, particles })
}

/// Runs the pilot SMC and freezes the resulting schedule.
pub fn adapt<M: Model>(model: &M, config: &AdaptationConfig, stream: &RngStream) -> Result<TemperingSchedule> {
    config.validate()?;
    let n0 = config.particles;
    let (alpha0, mut particles) = match config.rejection_rate {
        Some(rate) => {
            let start = select_alpha0_rejection(model, n0, rate, &stream.child(0))?;
            (start.alpha0, start.particles)
        }
        None => {
            let init = stream.child(0);
            let ps = (0..n0)
                .map(|i| sample_initial(model, 0.0, &mut init.child(i as u64).rng()))
                .collect::<Result<Vec<_>>>()?;
            (0.0, ps)
        }
    };
    let mut alphas = vec![alpha0];
    let mut counts = Vec::new();
    let mut alpha_prev = alpha0;
    loop {
        let s = alphas.len() as u64;
        let log_liks: Vec<f64> = particles.iter().map(|x| x.log_lik).collect();
        let alpha = next_temperature(&log_liks, alpha_prev, config.ess_threshold)?;
        if alpha >= 1.0 {
            break;
        }
        let delta = alpha - alpha_prev;
        let lw: Vec<f64> = log_liks.iter().map(|l| delta * l).collect();
        let p = ProbabilityVector::from_log_weights(&lw).map_err(|_| Error::DegenerateWeights {
            stage: Some(s as usize),
        })?;
        let idx = multinomial_resample(&p, n0, &mut stream.path(&[s, 0]).rng());
        let resampled: Vec<_> = idx.into_iter().map(|i| particles[i].clone()).collect();
        let (m, moved) = select_mcmc_count(
            model,
            &resampled,
            alpha,
            config.correlation_threshold,
            config.max_steps,
            &stream.path(&[s, 1]),
        )?;
        alphas.push(alpha);
        counts.push(m);
        particles = moved;
        alpha_prev = alpha;
    }
    TemperingSchedule::new(alphas, counts)
}
