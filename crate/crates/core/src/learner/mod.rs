//! Offline estimation of the pointing kernel from session logs.

pub mod kde;
pub mod pairs;
pub mod parametric;

pub use kde::{kde_conditional, DensityEstimator};
pub use pairs::{record_pairs, TrainingPair};
pub use parametric::{anneal, fit_parametric, ParametricEstimator, PointingSample, Schedule, Symmetry};
