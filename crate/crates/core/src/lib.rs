//! Finite-population symmetric games coupled through empirical measures,
//! their mean field limits, and Monte Carlo estimators of how far the
//! mean field strategy is from a Nash equilibrium at finite population size.

pub mod continuous_game;
pub mod error;
pub mod measures;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod static_game;

pub use error::{Error, Result};
