//! Built-in models.

pub mod conjugate;
pub mod constant;
pub mod horseshoe;
pub mod mixture;

pub use conjugate::{ConjugateGaussian, ConjugateKernel};
pub use constant::ConstantLikelihood;
pub use horseshoe::{Horseshoe, HorseshoeState};
pub use mixture::Mixture;
