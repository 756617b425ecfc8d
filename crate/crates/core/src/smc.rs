//! Tempered SMC sampler with adaptive systematic resampling.

use std::sync::Arc;

use rand::distr::Open01;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{log_sum_exp, Canonical, Model, Particle};
use crate::resampling::{categorical, ess_from_log_weights, systematic_resample, ProbabilityVector};
use crate::rng::{RngStream, SimRng};
use crate::schedule::TemperingSchedule;

/// Stream label reserved for resampling uniforms inside a stage.
pub(crate) const RESAMPLE_LABEL: u64 = u64::MAX;
/// Stream label for the terminal draw.
pub(crate) const SELECT_LABEL: u64 = u64::MAX - 1;

const REJECTION_CAP: usize = 10_000_000;

/// One sample from `pi_alpha0`: the prior when `alpha0 == 0`, otherwise
/// rejection sampling with the prior as proposal and the likelihood bound as
/// envelope.
pub fn sample_initial<M: Model>(model: &M, alpha0: f64, rng: &mut SimRng) -> Result<Particle<M::Point>> {
    if alpha0 == 0.0 {
        return model.particle(model.sample_prior(rng));
    }
    let sup = model.log_likelihood_sup().ok_or_else(|| {
        Error::Domain(format!(
            "model '{}' has no likelihood bound, so alpha_0 must be 0",
            model.name()
        ))
    })?;
    for _ in 0..REJECTION_CAP {
        let candidate = model.particle(model.sample_prior(rng))?;
        let u: f64 = rng.sample(Open01);
        if u.ln() < alpha0 * (candidate.log_lik - sup) {
            return Ok(candidate);
        }
    }
    Err(Error::Numerical(format!(
        "rejection sampler at alpha_0 = {alpha0} accepted nothing in {REJECTION_CAP} proposals"
    )))
}

/// Applies `moves` inner transitions at temperature `alpha`.
pub fn mutate<M: Model>(
    model: &M,
    x: &Particle<M::Point>,
    alpha: f64,
    moves: usize,
    rng: &mut SimRng,
) -> Result<Particle<M::Point>> {
    let mut cur = model.inner_kernel(x, alpha, rng)?;
    for _ in 1..moves {
        cur = model.inner_kernel(&cur, alpha, rng)?;
    }
    Ok(cur)
}

/// Terminal weighted particle cloud `(w^{1:N}, x_S^{1:N})`.
#[derive(Debug, Clone)]
pub struct Cloud<P> {
    pub log_weights: Vec<f64>,
    pub particles: Vec<Particle<P>>,
}

impl<P: Canonical> Cloud<P> {
    pub fn same_as(&self, other: &Self) -> bool {
        self.log_weights.len() == other.log_weights.len()
            && self
                .log_weights
                .iter()
                .zip(&other.log_weights)
                .all(|(a, b)| a.to_bits() == b.to_bits())
            && self.particles.iter().zip(&other.particles).all(|(a, b)| a.same_as(b))
    }

    /// Normalised weights.
    pub fn weights(&self) -> Result<ProbabilityVector> {
        ProbabilityVector::from_log_weights(&self.log_weights)
    }

    /// Weighted average of `h` over the cloud.
    pub fn rao_blackwell(&self, h: impl Fn(&P) -> Vec<f64>) -> Result<Vec<f64>> {
        let w = self.weights()?;
        let mut acc: Option<Vec<f64>> = None;
        for (wi, x) in w.as_slice().iter().zip(&self.particles) {
            if *wi == 0.0 {
                continue;
            }
            let v = h(&x.point);
            match acc.as_mut() {
                None => acc = Some(v.into_iter().map(|e| wi * e).collect()),
                Some(a) => a.iter_mut().zip(v).for_each(|(s, e)| *s += wi * e),
            }
        }
        acc.ok_or(Error::DegenerateWeights { stage: None })
    }
}

/// Per-stage diagnostics record.
#[derive(Debug, Clone, Serialize)]
pub struct StageTrace {
    pub stage: usize,
    pub alpha: f64,
    pub ess: f64,
    pub resampled: bool,
    pub log_z_so_far: f64,
}

/// Everything one SMC run produces.
#[derive(Debug, Clone)]
pub struct ParticleSystem<P> {
    /// Particles after mutation at each stage, `x_0 .. x_S`.
    pub stages: Vec<Vec<Particle<P>>>,
    /// `ancestors[s - 1][i]` is the stage `s - 1` parent of particle `i` at
    /// stage `s`.
    pub ancestors: Vec<Vec<usize>>,
    /// Carried log-weights right after reweighting at stages `1 .. S`.
    pub stage_log_weights: Vec<Vec<f64>>,
    pub resampled: Vec<bool>,
    pub trace: Vec<StageTrace>,
    pub log_z: f64,
    pub cloud: Arc<Cloud<P>>,
}

impl<P: Clone> ParticleSystem<P> {
    pub fn num_particles(&self) -> usize {
        self.stages[0].len()
    }

    /// Trace dump: one JSON object per stage.
    pub fn trace_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for t in &self.trace {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// One state of the outer chain: an ancestral path `x_{0:S}`, the marginal
/// likelihood estimate of the run that produced it, and that run's terminal
/// cloud.
#[derive(Debug, Clone)]
pub struct ChainState<P> {
    pub path: Vec<Particle<P>>,
    pub log_z: f64,
    pub cloud: Arc<Cloud<P>>,
}

impl<P: Canonical> ChainState<P> {
    pub fn terminal(&self) -> &Particle<P> {
        self.path.last().expect("paths are never empty")
    }

    /// Bitwise equality of path, estimate and cloud.
    pub fn same_as(&self, other: &Self) -> bool {
        self.log_z.to_bits() == other.log_z.to_bits()
            && self.path.len() == other.path.len()
            && self.path.iter().zip(&other.path).all(|(a, b)| a.same_as(b))
            && (Arc::ptr_eq(&self.cloud, &other.cloud) || self.cloud.same_as(&other.cloud))
    }
}

/// Running bookkeeping for adaptive resampling.
pub(crate) struct WeightState {
    pub log_w: Vec<f64>,
    pub log_z: f64,
}

impl WeightState {
    pub fn new(n: usize) -> Self {
        Self {
            log_w: vec![0.0; n],
            log_z: 0.0,
        }
    }

    /// Multiplies incremental weights in; `log_z` grows by the log of their
    /// mean under the carried normalised weights.
    pub fn reweight(&mut self, increments: &[f64], stage: usize) -> Result<()> {
        let before = log_sum_exp(&self.log_w);
        for (w, inc) in self.log_w.iter_mut().zip(increments) {
            *w += inc;
        }
        let after = log_sum_exp(&self.log_w);
        if !after.is_finite() || after.is_nan() {
            return Err(Error::DegenerateWeights { stage: Some(stage) });
        }
        self.log_z += after - before;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.log_w.iter_mut().for_each(|w| *w = 0.0);
    }
}

pub(crate) fn increments<P>(particles: &[Particle<P>], delta: f64) -> Vec<f64> {
    particles
        .iter()
        .map(|x| {
            if x.log_lik == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                delta * x.log_lik
            }
        })
        .collect()
}

/// Runs the sampler from `pi_{alpha_0}` through the schedule to the
/// posterior. Resampling (systematic) happens only when the ESS drops below
/// `n * gamma`.
pub fn run_smc<M: Model>(
    model: &M,
    schedule: &TemperingSchedule,
    n: usize,
    gamma: f64,
    stream: &RngStream,
) -> Result<ParticleSystem<M::Point>> {
    if n < 1 {
        return Err(Error::Domain("SMC needs at least one particle".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("resampling threshold {gamma} outside [0, 1]")));
    }
    let big_s = schedule.stages();
    let alpha0 = schedule.alpha0();
    let initial: Vec<Particle<M::Point>> = (0..n)
        .map(|i| sample_initial(model, alpha0, &mut stream.path(&[0, i as u64]).rng()))
        .collect::<Result<_>>()?;

    let mut stages = Vec::with_capacity(big_s + 1);
    stages.push(initial);
    let mut ancestors = Vec::with_capacity(big_s);
    let mut stage_log_weights = Vec::with_capacity(big_s);
    let mut resampled = Vec::with_capacity(big_s);
    let mut trace = Vec::with_capacity(big_s + 1);
    let mut weights = WeightState::new(n);

    for s in 1..=big_s {
        let alpha = schedule.alpha(s);
        let prev = &stages[s - 1];
        weights.reweight(&increments(prev, alpha - schedule.alpha(s - 1)), s)?;
        stage_log_weights.push(weights.log_w.clone());
        let ess = ess_from_log_weights(&weights.log_w);
        let resample = ess < n as f64 * gamma;
        let parents = if resample {
            let p = ProbabilityVector::from_log_weights(&weights.log_w)?;
            let u: f64 = stream.path(&[s as u64, RESAMPLE_LABEL]).rng().sample(Open01);
            weights.reset();
            systematic_resample(&p, u)
        } else {
            (0..n).collect()
        };
        trace.push(StageTrace {
            stage: s,
            alpha,
            ess,
            resampled: resample,
            log_z_so_far: weights.log_z,
        });
        let moves = schedule.moves(s);
        let next: Vec<Particle<M::Point>> = parents
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let mut rng = stream.path(&[s as u64, i as u64]).rng();
                mutate(model, &prev[a], alpha, moves, &mut rng)
            })
            .collect::<Result<_>>()?;
        stages.push(next);
        ancestors.push(parents);
        resampled.push(resample);
    }

    let last = &stages[big_s];
    weights.reweight(&increments(last, 1.0 - schedule.alpha(big_s)), big_s + 1)?;
    trace.push(StageTrace {
        stage: big_s + 1,
        alpha: 1.0,
        ess: ess_from_log_weights(&weights.log_w),
        resampled: false,
        log_z_so_far: weights.log_z,
    });
    let cloud = Arc::new(Cloud {
        log_weights: weights.log_w.clone(),
        particles: last.clone(),
    });
    Ok(ParticleSystem {
        stages,
        ancestors,
        stage_log_weights,
        resampled,
        trace,
        log_z: weights.log_z,
        cloud,
    })
}

/// Follows the ancestry of terminal particle `index` back to stage 0.
pub fn trace_ancestor_path<P: Clone>(system: &ParticleSystem<P>, index: usize) -> Result<ChainState<P>> {
    let n = system.num_particles();
    if index >= n {
        return Err(Error::Domain(format!("terminal index {index} out of 0..{n}")));
    }
    let big_s = system.stages.len() - 1;
    if system.ancestors.len() != big_s {
        return Err(Error::Invariant("ancestry length does not match stage count".into()));
    }
    let mut path = vec![system.stages[big_s][index].clone()];
    let mut idx = index;
    for s in (1..=big_s).rev() {
        idx = *system.ancestors[s - 1]
            .get(idx)
            .ok_or_else(|| Error::Invariant(format!("missing ancestor at stage {s}")))?;
        if idx >= n {
            return Err(Error::Invariant(format!("ancestor {idx} out of range at stage {s}")));
        }
        path.push(system.stages[s - 1][idx].clone());
    }
    path.reverse();
    Ok(ChainState {
        path,
        log_z: system.log_z,
        cloud: Arc::clone(&system.cloud),
    })
}

/// Draws the terminal index proportionally to the final weights.
pub fn select_terminal_particle<P>(system: &ParticleSystem<P>, rng: &mut SimRng) -> Result<usize> {
    let p = ProbabilityVector::from_log_weights(&system.cloud.log_weights)?;
    Ok(categorical(&p, rng))
}

/// Fresh SMC run reduced to one outer-chain state.
pub fn sample_chain_state<M: Model>(
    model: &M,
    schedule: &TemperingSchedule,
    n: usize,
    gamma: f64,
    stream: &RngStream,
) -> Result<ChainState<M::Point>> {
    let system = run_smc(model, schedule, n, gamma, stream)?;
    let mut rng = stream.path(&[schedule.stages() as u64 + 1, SELECT_LABEL]).rng();
    let k = select_terminal_particle(&system, &mut rng)?;
    trace_ancestor_path(&system, k)
}
