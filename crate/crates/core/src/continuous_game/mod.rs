//! Continuous-time engine: Euler–Maruyama simulation of the controlled SDE,
//! the mean field flow solver and the open-loop `n`-player system built from
//! shadow states.

mod control;
mod flow;
mod grid;
mod nplayer;

pub use control::{FeedbackControl, PolicyClass};
pub use flow::{
    flow_of_control, simulate_mean_field_sde, solve_mfg_flow, Initial, MfgConfig, MfgFlowSolution,
    PathEnsemble,
};
pub use grid::{MeasureFlow, TimeGrid};
pub use nplayer::{
    ct_deviation_report, simulate_n_player_openloop, CtDeviationConfig, NPlayerRun,
    TRAJECTORY_COLUMNS,
};
