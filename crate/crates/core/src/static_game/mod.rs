//! One-period engine: the implicit population equation, conditional laws,
//! the mean field equilibrium and finite-population deviation gains.

mod deviation;
mod estimate;
mod mfe;
mod population;
mod strategy;

pub use deviation::{
    estimate_deviation_gain, induce_profile, max_deviation, truncation_radius, Classification,
    DeviationClass, DeviationConfig, DeviationReport, GainEstimate, MIN_BATCHES, REPORT_COLUMNS,
};
pub use estimate::{estimate_conditional_law, payoff};
pub use mfe::{
    mean_field_of_strategy, operator_defect, solve_mfe, MfeConfig, MfeSolution, ValueEntry,
};
pub use population::{solve_population_state, Draws, PicardConfig, PopulationState};
pub use strategy::{uniform_xi_edges, Strategy};

pub(crate) use estimate::{batch_se, finite_or_neg_inf, replicate};
pub(crate) use strategy::nearest_sorted;
