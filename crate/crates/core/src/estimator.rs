//! The coupled-chain driver and the unbiased estimators built on its output.

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coupled::{conditional_smc_step, coupled_csmc_step, coupled_pimh_step, CoupledState};
use crate::error::{Error, Result};
use crate::model::{Canonical, Model};
use crate::rng::RngStream;
use crate::schedule::TemperingSchedule;
use crate::smc::{sample_chain_state, ChainState};

const COIN_LABEL: u64 = u64::MAX - 2;

/// Tuning of one coupled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    /// Particles per SMC run.
    pub particles: usize,
    /// Probability of a PIMH step; conditional SMC otherwise.
    pub rho: f64,
    /// Minimum number of outer steps `l`.
    pub min_steps: usize,
    /// Adaptive resampling threshold `gamma`.
    pub gamma: f64,
    pub time_budget: Option<Duration>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            particles: 25,
            rho: 0.5,
            min_steps: 1,
            gamma: 0.5,
            time_budget: None,
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Domain(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if self.min_steps == 0 {
            return Err(Error::Domain("l must be at least 1".into()));
        }
        if self.particles < 2 {
            return Err(Error::Domain("need at least two particles".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Domain(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// Output of one run of the coupled chains.
///
/// `h[t - 1]` holds the Rao-Blackwellised observables of `x(t)` and
/// `h_bar[t - 1]` those of `x_bar(t)`; the `*_single` series use the selected
/// path's terminal point only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub replicate: u64,
    /// Meeting time; `None` when the budget ran out first.
    pub tau: Option<usize>,
    pub wall_time_s: f64,
    pub completed: bool,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "H_bar")]
    pub h_bar: Vec<Vec<f64>>,
    #[serde(rename = "H_single", default)]
    pub h_single: Vec<Vec<f64>>,
    #[serde(rename = "H_bar_single", default)]
    pub h_bar_single: Vec<Vec<f64>>,
    /// Cumulative wall time after each outer step.
    #[serde(default)]
    pub step_times_s: Vec<f64>,
}

/// Which per-step statistic feeds the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// Weighted average over the terminal particle cloud.
    #[default]
    RaoBlackwell,
    /// Value at the selected path's terminal point.
    SinglePath,
}

impl CoupledRun {
    /// Number of recorded outer steps `T`.
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    fn series(&self, which: Statistic) -> (&[Vec<f64>], &[Vec<f64>]) {
        match which {
            Statistic::RaoBlackwell => (&self.h, &self.h_bar),
            Statistic::SinglePath => (&self.h_single, &self.h_bar_single),
        }
    }

    fn require_tau(&self) -> Result<usize> {
        match (self.completed, self.tau) {
            (true, Some(t)) => Ok(t),
            _ => Err(Error::Estimator(format!(
                "replicate {} did not complete; its estimate would be biased",
                self.replicate
            ))),
        }
    }

    /// Cumulative time spent to reach step `t`.
    pub fn time_at(&self, t: usize) -> f64 {
        self.step_times_s
            .get(t.saturating_sub(1))
            .copied()
            .unwrap_or(self.wall_time_s)
    }
}

fn stat(v: &[Vec<f64>], t: usize, j: usize) -> Result<f64> {
    v.get(t - 1)
        .and_then(|row| row.get(j))
        .copied()
        .ok_or_else(|| Error::Estimator(format!("no value for step {t}, statistic {j}")))
}

/// `H(k) + sum_{t=k+1}^{tau-1} [H(t) - H_bar(t)]`.
pub fn h_hat_k(run: &CoupledRun, j: usize, k: usize) -> Result<f64> {
    h_hat_k_with(run, j, k, Statistic::RaoBlackwell)
}

pub fn h_hat_k_with(run: &CoupledRun, j: usize, k: usize, which: Statistic) -> Result<f64> {
    let tau = run.require_tau()?;
    if k == 0 || k > run.len() {
        return Err(Error::Estimator(format!("k = {k} outside 1..={}", run.len())));
    }
    let (h, hb) = run.series(which);
    let mut value = stat(h, k, j)?;
    for t in (k + 1)..tau {
        value += stat(h, t, j)? - stat(hb, t, j)?;
    }
    Ok(value)
}

/// Time-averaged estimator: ergodic average of `H` over `k..=l` plus the
/// weighted bias correction.
pub fn h_bar_k_l(run: &CoupledRun, j: usize, k: usize, l: usize) -> Result<f64> {
    h_bar_k_l_with(run, j, k, l, Statistic::RaoBlackwell)
}

pub fn h_bar_k_l_with(run: &CoupledRun, j: usize, k: usize, l: usize, which: Statistic) -> Result<f64> {
    let tau = run.require_tau()?;
    if k == 0 || k > l || l > run.len() {
        return Err(Error::Estimator(format!(
            "need 1 <= k <= l <= T, got k = {k}, l = {l}, T = {}",
            run.len()
        )));
    }
    let (h, hb) = run.series(which);
    let width = (l - k + 1) as f64;
    let mut average = 0.0;
    for t in k..=l {
        average += stat(h, t, j)?;
    }
    average /= width;
    let mut correction = 0.0;
    for t in (k + 1)..tau {
        let w = ((t - k) as f64).min(width) / width;
        correction += w * (stat(h, t, j)? - stat(hb, t, j)?);
    }
    Ok(average + correction)
}

/// Prefix sums over one run that give `h_bar_k_l` for any window in
/// constant time.
#[derive(Debug, Clone)]
pub struct WindowSums {
    tau: usize,
    h: Vec<f64>,
    d: Vec<f64>,
    td: Vec<f64>,
}

impl WindowSums {
    pub fn new(run: &CoupledRun, j: usize, which: Statistic) -> Result<Self> {
        let tau = run.require_tau()?;
        let (h, hb) = run.series(which);
        let big_t = run.len();
        let (mut ph, mut pd, mut ptd) = (vec![0.0; big_t + 1], vec![0.0; big_t + 1], vec![0.0; big_t + 1]);
        for t in 1..=big_t {
            let (a, b) = (stat(h, t, j)?, stat(hb, t, j)?);
            ph[t] = ph[t - 1] + a;
            pd[t] = pd[t - 1] + (a - b);
            ptd[t] = ptd[t - 1] + t as f64 * (a - b);
        }
        Ok(Self {
            tau,
            h: ph,
            d: pd,
            td: ptd,
        })
    }

    pub fn len(&self) -> usize {
        self.h.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_bar(&self, k: usize, l: usize) -> Result<f64> {
        if k == 0 || k > l || l > self.len() {
            return Err(Error::Estimator(format!(
                "need 1 <= k <= l <= T, got k = {k}, l = {l}, T = {}",
                self.len()
            )));
        }
        let width = (l - k + 1) as f64;
        let mut value = (self.h[l] - self.h[k - 1]) / width;
        let ramp_end = (self.tau - 1).min(l);
        if ramp_end > k {
            let sd = self.d[ramp_end] - self.d[k];
            let std = self.td[ramp_end] - self.td[k];
            value += (std - k as f64 * sd) / width;
        }
        if self.tau > l + 1 {
            value += self.d[self.tau - 1] - self.d[l];
        }
        Ok(value)
    }
}

/// `sum_i w_i h_i / sum_i w_i` for non-negative weights.
pub fn rao_blackwell_statistic(weights: &[f64], values: &[f64]) -> Result<f64> {
    if weights.len() != values.len() {
        return Err(Error::Domain("weights and values differ in length".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights { stage: None });
    }
    Ok(weights.iter().zip(values).map(|(w, h)| w * h).sum::<f64>() / total)
}

/// Summary of independent replicate estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub variance: f64,
    pub std_error: f64,
    pub ci: (f64, f64),
    pub confidence: f64,
    pub r_used: usize,
    pub k: Option<usize>,
    pub l: Option<usize>,
}

impl EstimateReport {
    pub fn with_window(mut self, k: usize, l: usize) -> Self {
        self.k = Some(k);
        self.l = Some(l);
        self
    }
}

/// Mean, unbiased sample variance and a normal-theory interval.
pub fn aggregate(estimates: &[f64], confidence: f64) -> Result<EstimateReport> {
    let r = estimates.len();
    if r < 2 {
        return Err(Error::Estimator(format!("need at least 2 estimates, got {r}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Domain(format!("confidence {confidence} outside (0, 1)")));
    }
    let mean = estimates.iter().sum::<f64>() / r as f64;
    let variance = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    let std_error = (variance / r as f64).sqrt();
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    Ok(EstimateReport {
        estimate: mean,
        variance,
        std_error,
        ci: (mean - z * std_error, mean + z * std_error),
        confidence,
        r_used: r,
        k: None,
        l: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IactEstimate {
    pub value: f64,
    /// Set when the series is constant and the autocorrelation undefined.
    pub degenerate: bool,
}

/// Integrated autocorrelation time `1 + 2 sum_m rho_m`, truncated with
/// Geyer's initial monotone sequence rule on paired autocorrelations.
pub fn iact(series: &[f64]) -> Result<IactEstimate> {
    let n = series.len();
    if n < 10 {
        return Err(Error::Domain(format!("IACT needs at least 10 values, got {n}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return Ok(IactEstimate {
            value: 1.0,
            degenerate: true,
        });
    }
    let rho = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
            / c0
    };
    let mut sum = 0.0;
    let mut previous = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(previous);
        sum += pair;
        previous = pair;
        m += 1;
    }
    Ok(IactEstimate {
        value: (2.0 * sum - 1.0).max(0.0),
        degenerate: false,
    })
}

/// One row of the variance-times-cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTimeRow {
    pub l: usize,
    pub k: Option<usize>,
    pub variance: Option<f64>,
    pub mean_time_s: f64,
    pub variance_x_time: Option<f64>,
    /// Variance undefined (fewer than two usable runs).
    pub flagged: bool,
}

/// For each `l`, the `k <= l` with the smallest empirical variance of the
/// time-averaged estimator, and that variance times mean run time.
pub fn variance_time_curve(runs: &[CoupledRun], j: usize, l_grid: &[usize]) -> Result<Vec<VarianceTimeRow>> {
    variance_time_curve_with(runs, j, l_grid, Statistic::RaoBlackwell)
}

pub fn variance_time_curve_with(
    runs: &[CoupledRun],
    j: usize,
    l_grid: &[usize],
    which: Statistic,
) -> Result<Vec<VarianceTimeRow>> {
    let complete: Vec<&CoupledRun> = runs.iter().filter(|r| r.completed && r.tau.is_some()).collect();
    let mut rows = Vec::with_capacity(l_grid.len());
    for &l in l_grid {
        let usable: Vec<&CoupledRun> = complete.iter().copied().filter(|r| r.len() >= l && l >= 1).collect();
        let mean_time = if usable.is_empty() {
            0.0
        } else {
            usable.iter().map(|r| r.time_at(r.tau.unwrap().max(l))).sum::<f64>() / usable.len() as f64
        };
        if usable.len() < 2 {
            rows.push(VarianceTimeRow {
                l,
                k: None,
                variance: None,
                mean_time_s: mean_time,
                variance_x_time: None,
                flagged: true,
            });
            continue;
        }
        let sums = usable
            .iter()
            .map(|r| WindowSums::new(r, j, which))
            .collect::<Result<Vec<_>>>()?;
        let mut best: Option<(usize, f64)> = None;
        for k in 1..=l {
            let est = sums.iter().map(|s| s.h_bar(k, l)).collect::<Result<Vec<_>>>()?;
            let var = aggregate(&est, 0.95)?.variance;
            if best.is_none_or(|(_, v)| var < v) {
                best = Some((k, var));
            }
        }
        let (k, variance) = best.unwrap();
        rows.push(VarianceTimeRow {
            l,
            k: Some(k),
            variance: Some(variance),
            mean_time_s: mean_time,
            variance_x_time: Some(variance * mean_time),
            flagged: false,
        });
    }
    Ok(rows)
}

/// `k` set to the 90th percentile (nearest rank) of observed meeting times.
pub fn default_k(runs: &[CoupledRun]) -> Option<usize> {
    let mut taus: Vec<usize> = runs.iter().filter(|r| r.completed).filter_map(|r| r.tau).collect();
    if taus.is_empty() {
        return None;
    }
    taus.sort_unstable();
    let rank = ((0.9 * taus.len() as f64).ceil() as usize).clamp(1, taus.len());
    Some(taus[rank - 1].max(1))
}

fn record<M: Model>(model: &M, chain: &ChainState<M::Point>) -> Result<(Vec<f64>, Vec<f64>)> {
    let rb = chain.cloud.rao_blackwell(|x| model.observables(x))?;
    let single = model.observables(&chain.terminal().point);
    Ok((rb, single))
}

struct Recorder {
    h: Vec<Vec<f64>>,
    h_bar: Vec<Vec<f64>>,
    h_single: Vec<Vec<f64>>,
    h_bar_single: Vec<Vec<f64>>,
    step_times: Vec<f64>,
}

impl Recorder {
    fn push<M: Model>(&mut self, model: &M, state: &CoupledState<M::Point>, elapsed: f64) -> Result<()>
    where
        M::Point: Canonical,
    {
        let (rb, single) = record(model, &state.chain)?;
        if state.met {
            self.h_bar.push(rb.clone());
            self.h_bar_single.push(single.clone());
        } else {
            let (rb_bar, single_bar) = record(model, &state.chain_bar)?;
            self.h_bar.push(rb_bar);
            self.h_bar_single.push(single_bar);
        }
        self.h.push(rb);
        self.h_single.push(single);
        self.step_times.push(elapsed);
        Ok(())
    }
}

/// Runs the pair of coupled outer chains until both `tau` has been observed
/// and at least `l` steps are recorded, or the time budget expires.
///
/// The first step either moves `x(0)` by PIMH and sets `x_bar(1)` to the
/// PIMH proposal (probability `rho`) or moves it by conditional SMC with
/// `x_bar(1) = x(0)`. Later steps flip one shared coin per step to choose
/// the kernel for both chains.
pub fn run_coupled_chain<M: Model>(
    model: &M,
    schedule: &TemperingSchedule,
    settings: &RunSettings,
    stream: &RngStream,
) -> Result<CoupledRun> {
    settings.validate()?;
    let started = Instant::now();
    let (n, gamma) = (settings.particles, settings.gamma);
    let x0 = sample_chain_state(model, schedule, n, gamma, &stream.child(0))?;

    let step = stream.child(1);
    let use_pimh = step.child(COIN_LABEL).rng().random::<f64>() < settings.rho;
    let mut state = if use_pimh {
        let proposal = sample_chain_state(model, schedule, n, gamma, &step.child(0))?;
        let u: f64 = step.child(1).rng().sample(rand::distr::Open01);
        let x1 = if crate::coupled::pimh_accepts(u, proposal.log_z, x0.log_z) {
            proposal.clone()
        } else {
            x0
        };
        CoupledState::new(x1, proposal)
    } else {
        let x1 = conditional_smc_step(&x0, model, schedule, n, gamma, &step)?;
        CoupledState::new(x1, x0)
    };

    let mut rec = Recorder {
        h: Vec::new(),
        h_bar: Vec::new(),
        h_single: Vec::new(),
        h_bar_single: Vec::new(),
        step_times: Vec::new(),
    };
    rec.push(model, &state, started.elapsed().as_secs_f64())?;
    let mut tau = state.met.then_some(1);
    let mut t = 1;
    let mut completed = true;
    while tau.is_none() || t < settings.min_steps {
        if let Some(budget) = settings.time_budget {
            if started.elapsed() > budget {
                completed = false;
                break;
            }
        }
        t += 1;
        let step = stream.child(t as u64);
        let use_pimh = step.child(COIN_LABEL).rng().random::<f64>() < settings.rho;
        state = if use_pimh {
            coupled_pimh_step(state, model, schedule, n, gamma, &step)?
        } else {
            coupled_csmc_step(state, model, schedule, n, gamma, &step)?
        };
        rec.push(model, &state, started.elapsed().as_secs_f64())?;
        if tau.is_none() && state.met {
            tau = Some(t);
        }
    }
    Ok(CoupledRun {
        replicate: 0,
        tau: if completed { tau } else { None },
        wall_time_s: started.elapsed().as_secs_f64(),
        completed,
        h: rec.h,
        h_bar: rec.h_bar,
        h_single: rec.h_single,
        h_bar_single: rec.h_bar_single,
        step_times_s: rec.step_times,
    })
}

/// Independent replicates `0..count` on the current rayon pool; replicate
/// `r` uses stream `seed / r`, so results do not depend on scheduling.
pub fn run_replicates<M: Model>(
    model: &M,
    schedule: &TemperingSchedule,
    settings: &RunSettings,
    seed: u64,
    count: usize,
) -> Result<Vec<CoupledRun>> {
    let root = RngStream::new(seed);
    let mut runs = (0..count as u64)
        .into_par_iter()
        .map(|r| {
            let mut run = run_coupled_chain(model, schedule, settings, &root.child(r))?;
            run.replicate = r;
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.replicate);
    Ok(runs)
}

/// Writes runs as JSON lines sorted by replicate index.
pub fn write_run_store<W: Write>(mut out: W, runs: &[CoupledRun]) -> Result<()> {
    let mut sorted: Vec<&CoupledRun> = runs.iter().collect();
    sorted.sort_by_key(|r| r.replicate);
    for run in sorted {
        serde_json::to_writer(&mut out, run)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_run_store<R: BufRead>(input: R) -> Result<Vec<CoupledRun>> {
    let mut runs = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        runs.push(serde_json::from_str(&line)?);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConjugateGaussian, ConjugateKernel};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn hand_run() -> CoupledRun {
        CoupledRun {
            replicate: 0,
            tau: Some(3),
            wall_time_s: 0.3,
            completed: true,
            h: vec![vec![1.0], vec![3.0], vec![5.0]],
            h_bar: vec![vec![0.0], vec![2.0], vec![5.0]],
            h_single: vec![vec![1.0], vec![3.0], vec![5.0]],
            h_bar_single: vec![vec![0.0], vec![2.0], vec![5.0]],
            step_times_s: vec![0.1, 0.2, 0.3],
        }
    }

    #[test]
    fn three_step_hand_cases() {
        let run = hand_run();
        assert_eq!(h_bar_k_l(&run, 0, 1, 2).unwrap(), 2.5);
        // H(1) + [H(2) - H_bar(2)]
        assert_eq!(h_hat_k(&run, 0, 1).unwrap(), 2.0);
        assert_eq!(h_hat_k(&run, 0, 3).unwrap(), 5.0);
        for k in 1..=3 {
            assert_eq!(h_bar_k_l(&run, 0, k, k).unwrap(), h_hat_k(&run, 0, k).unwrap());
        }
        // tau <= k: plain ergodic average
        assert_eq!(h_bar_k_l(&run, 0, 3, 3).unwrap(), 5.0);
        assert!(h_hat_k(&run, 0, 0).is_err());
        assert!(h_bar_k_l(&run, 0, 2, 4).is_err());
        let mut partial = run.clone();
        partial.completed = false;
        partial.tau = None;
        assert!(matches!(h_hat_k(&partial, 0, 1), Err(Error::Estimator(_))));
    }

    #[test]
    fn window_sums_match_the_direct_sum() {
        let mut rng = crate::rng::RngStream::new(9).rng();
        for _ in 0..50 {
            let big_t = rng.random_range(1..30usize);
            let tau = rng.random_range(1..=big_t);
            let h: Vec<Vec<f64>> = (0..big_t).map(|_| vec![rng.random::<f64>() * 4.0 - 2.0]).collect();
            let h_bar: Vec<Vec<f64>> = (0..big_t)
                .map(|t| {
                    if t + 1 >= tau {
                        h[t].clone()
                    } else {
                        vec![rng.random::<f64>()]
                    }
                })
                .collect();
            let run = CoupledRun {
                tau: Some(tau),
                h_single: h.clone(),
                h_bar_single: h_bar.clone(),
                h,
                h_bar,
                step_times_s: vec![0.0; big_t],
                ..hand_run()
            };
            let sums = WindowSums::new(&run, 0, Statistic::RaoBlackwell).unwrap();
            for l in 1..=big_t {
                for k in 1..=l {
                    let direct = h_bar_k_l(&run, 0, k, l).unwrap();
                    assert!((sums.h_bar(k, l).unwrap() - direct).abs() < 1e-10);
                }
            }
            assert!(sums.h_bar(1, big_t + 1).is_err());
        }
    }

    #[test]
    fn rao_blackwell_examples() {
        assert_eq!(rao_blackwell_statistic(&[3.0], &[7.0]).unwrap(), 7.0);
        assert_eq!(rao_blackwell_statistic(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), 1.5);
        assert_eq!(
            rao_blackwell_statistic(&[2.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(),
            1.75
        );
        assert!(rao_blackwell_statistic(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate(&[0.0, 2.0], 0.95).unwrap();
        assert_eq!((r.estimate, r.variance, r.std_error), (1.0, 2.0, 1.0));
        let same = aggregate(&[4.0; 5], 0.95).unwrap();
        assert_eq!(same.variance, 0.0);
        assert_eq!(same.ci, (4.0, 4.0));
        assert!(aggregate(&[1.0], 0.95).is_err());
    }

    #[test]
    fn interval_coverage_is_nominal() {
        let mut rng = crate::rng::RngStream::new(1).rng();
        let trials = 10_000;
        let mut hits = 0;
        for _ in 0..trials {
            let xs: Vec<f64> = (0..200).map(|_| 3.0 + rng.sample::<f64, _>(StandardNormal)).collect();
            let r = aggregate(&xs, 0.95).unwrap();
            if r.ci.0 <= 3.0 && 3.0 <= r.ci.1 {
                hits += 1;
            }
        }
        let cover = hits as f64 / trials as f64;
        assert!((cover - 0.95).abs() < 0.01, "{cover}");
    }

    #[test]
    fn iact_examples() {
        let mut rng = crate::rng::RngStream::new(2).rng();
        let noise: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let w = iact(&noise).unwrap();
        assert!((w.value - 1.0).abs() < 0.05 && !w.degenerate, "{w:?}");

        let mut x = 0.0;
        let ar: Vec<f64> = (0..1_000_000)
            .map(|_| {
                x = 0.5 * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let a = iact(&ar).unwrap();
        assert!((a.value / 3.0 - 1.0).abs() < 0.05, "{a:?}");

        let periodic: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let p = iact(&periodic).unwrap();
        assert!(p.value >= 0.0 && p.value.is_finite());

        let c = iact(&[2.0; 50]).unwrap();
        assert!(c.degenerate && c.value == 1.0);
        assert!(iact(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn variance_time_edge_cases() {
        let run = hand_run();
        let rows = variance_time_curve(std::slice::from_ref(&run), 0, &[2]).unwrap();
        assert!(rows[0].flagged && rows[0].variance.is_none());

        let mut flat = hand_run();
        flat.h = vec![vec![1.0]; 3];
        flat.h_bar = vec![vec![1.0]; 3];
        let runs = vec![flat.clone(), CoupledRun { replicate: 1, ..flat }];
        let rows = variance_time_curve(&runs, 0, &[1, 2, 3]).unwrap();
        assert!(rows.iter().all(|r| r.variance == Some(0.0) && !r.flagged));
        assert!((rows[2].mean_time_s - 0.3).abs() < 1e-12);
    }

    #[test]
    fn default_k_is_the_ninetieth_percentile() {
        let runs: Vec<CoupledRun> = (1..=10)
            .map(|t| CoupledRun {
                tau: Some(t),
                replicate: t as u64,
                ..hand_run()
            })
            .collect();
        assert_eq!(default_k(&runs), Some(9));
        assert_eq!(default_k(&[]), None);
    }

    #[test]
    fn runs_are_deterministic_and_met_chains_stay_equal() {
        let model = ConjugateGaussian::new(vec![vec![0.5], vec![1.5], vec![1.0]], 0.0, 4.0, 1.0)
            .unwrap()
            .with_kernel(ConjugateKernel::RandomWalk, 0.7);
        let schedule = TemperingSchedule::new(vec![0.0, 0.3], vec![2]).unwrap();
        let settings = RunSettings {
            particles: 6,
            rho: 0.5,
            min_steps: 12,
            gamma: 0.5,
            time_budget: None,
        };
        let a = run_replicates(&model, &schedule, &settings, 3, 16).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_replicates(&model, &schedule, &settings, 3, 16).unwrap());
        let strip = |runs: &[CoupledRun]| -> Vec<(Option<usize>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
            runs.iter().map(|r| (r.tau, r.h.clone(), r.h_bar.clone())).collect()
        };
        assert_eq!(strip(&a), strip(&b));
        for run in &a {
            let tau = run.tau.unwrap();
            assert_eq!(run.len(), tau.max(12));
            for t in tau..=run.len() {
                assert_eq!(run.h[t - 1], run.h_bar[t - 1]);
            }
        }
    }

    #[test]
    fn pure_pimh_on_a_trivial_model_meets_at_once() {
        let model = crate::models::ConstantLikelihood {
            log_value: -2.0,
            dim: 1,
        };
        let schedule = TemperingSchedule::direct(0.0).unwrap();
        let settings = RunSettings {
            particles: 4,
            rho: 1.0,
            ..RunSettings::default()
        };
        let run = run_coupled_chain(&model, &schedule, &settings, &crate::rng::RngStream::new(5)).unwrap();
        assert_eq!(run.tau, Some(1));
        assert_eq!(run.len(), 1);
    }

    #[test]
    fn run_store_round_trips_sorted() {
        let mut a = hand_run();
        a.replicate = 2;
        let b = hand_run();
        let mut buf = Vec::new();
        write_run_store(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"replicate\":0,\"tau\":3,"));
        assert!(text.contains("\"H\":[[1.0],[3.0],[5.0]]"));
        assert_eq!(read_run_store(buf.as_slice()).unwrap(), vec![b, a]);
    }
}
