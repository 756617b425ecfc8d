//! Coupled outer-chain transitions: coupled particle independent
//! Metropolis-Hastings and coupled conditional SMC.

use std::sync::Arc;

use rand::distr::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Model, Particle};
use crate::resampling::{
    coupled_conditional_systematic, ess_from_log_weights, maximal_coupling_discrete, ProbabilityVector,
};
use crate::rng::RngStream;
use crate::schedule::TemperingSchedule;
use crate::smc::{
    increments, sample_chain_state, sample_initial, ChainState, Cloud, WeightState, RESAMPLE_LABEL, SELECT_LABEL,
};

/// Pair of outer-chain states.
#[derive(Debug, Clone)]
pub struct CoupledState<P> {
    pub chain: ChainState<P>,
    pub chain_bar: ChainState<P>,
    pub met: bool,
}

impl<P: crate::model::Canonical + Clone> CoupledState<P> {
    pub fn new(chain: ChainState<P>, chain_bar: ChainState<P>) -> Self {
        let met = chain.same_as(&chain_bar);
        Self { chain, chain_bar, met }
    }

    /// Both chains at the same state.
    pub fn twin(chain: ChainState<P>) -> Self {
        Self {
            chain_bar: chain.clone(),
            chain,
            met: true,
        }
    }
}

/// MH acceptance for an independent proposal with estimated evidence:
/// accept iff `u < Z_prop / Z_cur`.
pub fn pimh_accepts(u: f64, log_z_proposal: f64, log_z_current: f64) -> bool {
    if log_z_current == f64::NEG_INFINITY {
        return true;
    }
    u.ln() < log_z_proposal - log_z_current
}

/// The accept/reject half of a coupled PIMH step with a given proposal and
/// shared uniform.
pub fn apply_pimh<P: crate::model::Canonical + Clone>(
    state: CoupledState<P>,
    proposal: &ChainState<P>,
    u: f64,
) -> CoupledState<P> {
    let accept = pimh_accepts(u, proposal.log_z, state.chain.log_z);
    let accept_bar = pimh_accepts(u, proposal.log_z, state.chain_bar.log_z);
    let CoupledState {
        mut chain,
        mut chain_bar,
        met,
    } = state;
    if accept {
        chain = proposal.clone();
    }
    if accept_bar {
        chain_bar = proposal.clone();
    }
    let met = met || (accept && accept_bar) || chain.same_as(&chain_bar);
    CoupledState { chain, chain_bar, met }
}

/// Coupled PIMH: one fresh SMC run proposes to both chains, and a single
/// uniform drives both accept/reject decisions.
pub fn coupled_pimh_step<M: Model>(
    state: CoupledState<M::Point>,
    model: &M,
    schedule: &TemperingSchedule,
    n: usize,
    gamma: f64,
    stream: &RngStream,
) -> Result<CoupledState<M::Point>> {
    let proposal = sample_chain_state(model, schedule, n, gamma, &stream.child(0))?;
    let u: f64 = stream.child(1).rng().sample(Open01);
    Ok(apply_pimh(state, &proposal, u))
}

/// Single-chain PIMH transition; returns the new state and whether the
/// proposal was accepted.
pub fn pimh_step<M: Model>(
    state: &ChainState<M::Point>,
    model: &M,
    schedule: &TemperingSchedule,
    n: usize,
    gamma: f64,
    stream: &RngStream,
) -> Result<(ChainState<M::Point>, bool)> {
    let proposal = sample_chain_state(model, schedule, n, gamma, &stream.child(0))?;
    let u: f64 = stream.child(1).rng().sample(Open01);
    if pimh_accepts(u, proposal.log_z, state.log_z) {
        Ok((proposal, true))
    } else {
        Ok((state.clone(), false))
    }
}

struct ConditionalSystem<P> {
    stages: Vec<Vec<Particle<P>>>,
    ancestors: Vec<Vec<usize>>,
    weights: WeightState,
}

impl<P: Clone> ConditionalSystem<P> {
    fn trace(&self, index: usize) -> Vec<Particle<P>> {
        let big_s = self.stages.len() - 1;
        let mut idx = index;
        let mut path = vec![self.stages[big_s][idx].clone()];
        for s in (1..=big_s).rev() {
            idx = self.ancestors[s - 1][idx];
            path.push(self.stages[s - 1][idx].clone());
        }
        path.reverse();
        path
    }

    fn into_state(self, index: usize) -> ChainState<P> {
        let path = self.trace(index);
        let big_s = self.stages.len() - 1;
        let log_z = self.weights.log_z;
        let mut stages = self.stages;
        let particles = stages.swap_remove(big_s);
        ChainState {
            path,
            log_z,
            cloud: Arc::new(Cloud {
                log_weights: self.weights.log_w,
                particles,
            }),
        }
    }
}

/// Coupled conditional SMC.
///
/// Slot 0 of each system carries that chain's current path. The free slots
/// share their stage-0 draws, are resampled with coupled conditional
/// systematic resampling, and are moved with the model's coupled inner
/// kernel. Both systems resample whenever either one's ESS falls below
/// `n * gamma`. The new paths are drawn with a maximal coupling of the final
/// weights.
pub fn coupled_csmc_step<M: Model>(
    state: CoupledState<M::Point>,
    model: &M,
    schedule: &TemperingSchedule,
    n: usize,
    gamma: f64,
    stream: &RngStream,
) -> Result<CoupledState<M::Point>> {
    if n < 2 {
        return Err(Error::Domain("conditional SMC needs at least two particles".into()));
    }
    let big_s = schedule.stages();
    for chain in [&state.chain, &state.chain_bar] {
        if chain.path.len() != big_s + 1 {
            return Err(Error::Domain(format!(
                "path of length {} does not match a schedule with {} stages",
                chain.path.len(),
                big_s
            )));
        }
    }
    let twin = state.met || state.chain.same_as(&state.chain_bar);
    let reference = &state.chain.path;
    let reference_bar = &state.chain_bar.path;

    let mut init = Vec::with_capacity(n);
    init.push(reference[0].clone());
    for i in 1..n {
        init.push(sample_initial(
            model,
            schedule.alpha0(),
            &mut stream.path(&[0, i as u64]).rng(),
        )?);
    }
    let mut init_bar = init.clone();
    init_bar[0] = reference_bar[0].clone();

    let mut sys = ConditionalSystem {
        stages: vec![init],
        ancestors: Vec::with_capacity(big_s),
        weights: WeightState::new(n),
    };
    let mut bar = if twin {
        None
    } else {
        Some(ConditionalSystem {
            stages: vec![init_bar],
            ancestors: Vec::with_capacity(big_s),
            weights: WeightState::new(n),
        })
    };

    for s in 1..=big_s {
        let alpha = schedule.alpha(s);
        let delta = alpha - schedule.alpha(s - 1);
        sys.weights.reweight(&increments(&sys.stages[s - 1], delta), s)?;
        let mut resample = ess_from_log_weights(&sys.weights.log_w) < n as f64 * gamma;
        if let Some(b) = bar.as_mut() {
            b.weights.reweight(&increments(&b.stages[s - 1], delta), s)?;
            resample |= ess_from_log_weights(&b.weights.log_w) < n as f64 * gamma;
        }
        let (parents, parents_bar) = if resample {
            let p = ProbabilityVector::from_log_weights(&sys.weights.log_w)?;
            let p_bar = match bar.as_ref() {
                Some(b) => ProbabilityVector::from_log_weights(&b.weights.log_w)?,
                None => p.clone(),
            };
            let mut rng = stream.path(&[s as u64, RESAMPLE_LABEL]).rng();
            let pair = coupled_conditional_systematic(&p, &p_bar, &mut rng)?;
            sys.weights.reset();
            if let Some(b) = bar.as_mut() {
                b.weights.reset();
            }
            pair
        } else {
            ((0..n).collect(), (0..n).collect())
        };

        let moves = schedule.moves(s);
        let prev = &sys.stages[s - 1];
        let mut next = Vec::with_capacity(n);
        next.push(reference[s].clone());
        match bar.as_mut() {
            None => {
                for i in 1..n {
                    let mut rng = stream.path(&[s as u64, i as u64]).rng();
                    next.push(crate::smc::mutate(model, &prev[parents[i]], alpha, moves, &mut rng)?);
                }
            }
            Some(b) => {
                let prev_bar = &b.stages[s - 1];
                let mut next_bar = Vec::with_capacity(n);
                next_bar.push(reference_bar[s].clone());
                for i in 1..n {
                    let mut rng = stream.path(&[s as u64, i as u64]).rng();
                    let (mut x, mut xb) = (prev[parents[i]].clone(), prev_bar[parents_bar[i]].clone());
                    for _ in 0..moves {
                        (x, xb) = model.coupled_inner_kernel(&x, &xb, alpha, &mut rng)?;
                    }
                    next.push(x);
                    next_bar.push(xb);
                }
                b.stages.push(next_bar);
                b.ancestors.push(parents_bar);
            }
        }
        sys.stages.push(next);
        sys.ancestors.push(parents);
    }

    let last_delta = 1.0 - schedule.alpha(big_s);
    sys.weights
        .reweight(&increments(&sys.stages[big_s], last_delta), big_s + 1)?;
    let p = ProbabilityVector::from_log_weights(&sys.weights.log_w)?;
    let mut rng = stream.path(&[big_s as u64 + 1, SELECT_LABEL]).rng();
    match bar {
        None => {
            let (k, _) = maximal_coupling_discrete(&p, &p, &mut rng)?;
            Ok(CoupledState::twin(sys.into_state(k)))
        }
        Some(mut b) => {
            b.weights
                .reweight(&increments(&b.stages[big_s], last_delta), big_s + 1)?;
            let p_bar = ProbabilityVector::from_log_weights(&b.weights.log_w)?;
            let (k, k_bar) = maximal_coupling_discrete(&p, &p_bar, &mut rng)?;
            Ok(CoupledState::new(sys.into_state(k), b.into_state(k_bar)))
        }
    }
}

/// Conditional SMC update of a single chain; identical to the coupled step
/// applied to a met pair.
pub fn conditional_smc_step<M: Model>(
    state: &ChainState<M::Point>,
    model: &M,
    schedule: &TemperingSchedule,
    n: usize,
    gamma: f64,
    stream: &RngStream,
) -> Result<ChainState<M::Point>> {
    let pair = CoupledState::twin(state.clone());
    Ok(coupled_csmc_step(pair, model, schedule, n, gamma, stream)?.chain)
}
