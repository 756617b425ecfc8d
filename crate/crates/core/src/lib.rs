//! Unbiased estimation with coupled particle MCMC over tempered SMC samplers.

pub mod adaptation;
pub mod cli;
pub mod config;
pub mod coupled;
pub mod error;
pub mod estimator;
pub mod ggm;
pub mod model;
pub mod models;
pub mod resampling;
pub mod rng;
pub mod schedule;
pub mod smc;

pub use error::{Error, Result};
pub use model::{Model, Particle};
pub use rng::{RngStream, SimRng};
pub use schedule::TemperingSchedule;
