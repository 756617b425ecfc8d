//! The contract every model implements, plus the particle wrapper the
//! samplers pass around.

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Canonical serialisation used to decide whether two chains have met.
///
/// Two points are the same exactly when their canonical byte strings are
/// equal; floating point values therefore compare bitwise.
pub trait Canonical {
    fn write_canonical(&self, out: &mut Vec<u8>);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_canonical(&mut out);
        out
    }

    fn same_as(&self, other: &Self) -> bool {
        self.canonical_bytes() == other.canonical_bytes()
    }
}

impl Canonical for Vec<f64> {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        out.extend((self.len() as u64).to_le_bytes());
        for v in self {
            out.extend(v.to_bits().to_le_bytes());
        }
    }

    fn same_as(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().zip(other).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Canonical for f64 {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        out.extend(self.to_bits().to_le_bytes());
    }

    fn same_as(&self, other: &Self) -> bool {
        self.to_bits() == other.to_bits()
    }
}

/// A model point together with its cached log-likelihood.
#[derive(Debug, Clone)]
pub struct Particle<P> {
    pub point: P,
    pub log_lik: f64,
}

impl<P: Canonical> Particle<P> {
    pub fn same_as(&self, other: &Self) -> bool {
        self.log_lik.to_bits() == other.log_lik.to_bits() && self.point.same_as(&other.point)
    }
}

/// Prior, likelihood and tempered MCMC moves for one Bayesian model.
///
/// All methods must be pure given their inputs and the generator state, so
/// that replaying a stream reproduces a result bit for bit.
pub trait Model: Send + Sync {
    type Point: Clone + Debug + Send + Sync + Canonical;

    fn name(&self) -> &str;

    /// `log p(y | x)`; may be `-inf`, never NaN.
    fn log_likelihood(&self, x: &Self::Point) -> Result<f64>;

    fn sample_prior(&self, rng: &mut SimRng) -> Self::Point;

    /// One MCMC transition leaving `p(x) p(y|x)^alpha` invariant.
    fn inner_kernel(&self, x: &Particle<Self::Point>, alpha: f64, rng: &mut SimRng) -> Result<Particle<Self::Point>>;

    /// Joint transition of two particles with `inner_kernel` marginals.
    ///
    /// The default is a common-random-numbers coupling: both moves replay the
    /// same generator state, so equal inputs always give equal outputs.
    fn coupled_inner_kernel(
        &self,
        x: &Particle<Self::Point>,
        x_bar: &Particle<Self::Point>,
        alpha: f64,
        rng: &mut SimRng,
    ) -> Result<(Particle<Self::Point>, Particle<Self::Point>)> {
        if x.same_as(x_bar) {
            let moved = self.inner_kernel(x, alpha, rng)?;
            return Ok((moved.clone(), moved));
        }
        let mut rng_bar = rng.clone();
        let moved = self.inner_kernel(x, alpha, rng)?;
        let moved_bar = self.inner_kernel(x_bar, alpha, &mut rng_bar)?;
        Ok((moved, moved_bar))
    }

    /// Scalar statistics used to tune the number of inner moves. Entry 0 is
    /// always the log-likelihood.
    fn summary_stats(&self, x: &Particle<Self::Point>) -> Vec<f64>;

    /// Names of the functions whose posterior expectations are estimated.
    fn observable_names(&self) -> Vec<String>;

    fn observables(&self, x: &Self::Point) -> Vec<f64>;

    /// `sup_x log p(y | x)` when it is available in closed form.
    fn log_likelihood_sup(&self) -> Option<f64> {
        None
    }

    fn particle(&self, point: Self::Point) -> Result<Particle<Self::Point>> {
        let log_lik = self.log_likelihood(&point)?;
        Ok(Particle { point, log_lik })
    }
}

/// Rejects temperatures outside `(0, 1]`, the range inner kernels accept.
pub fn check_kernel_temperature(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "inner kernel needs a temperature in (0, 1], got {alpha}; sample the prior at 0"
        )))
    }
}

/// Sample correlation; `None` when either side has zero variance.
pub fn sample_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 || !saa.is_finite() || !sbb.is_finite() {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// `log(sum(exp(v)))`, stable for large magnitudes; `-inf` for an empty or
/// all `-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalised weights from log-weights, exponentiated after subtracting the
/// maximum.
pub fn normalize_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Some(w.into_iter().map(|v| v / total).collect())
}
