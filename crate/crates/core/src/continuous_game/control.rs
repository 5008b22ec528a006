use crate::error::{Error, Result};
use crate::model::ActionGrid;
use crate::static_game::nearest_sorted;

/// Markov feedback `(t, x0, x) ↦ a`. Both representations select their row
/// by the nearest point of an x0 grid (clamped, ties to the lower point).
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackControl {
    /// `a = clip(g₁·x + g₀)` into `bounds`, gains per x0-grid point. Not
    /// restricted to the action grid.
    LinearGains {
        x0_grid: Vec<f64>,
        gains: Vec<(f64, f64)>,
        bounds: (f64, f64),
    },
    /// Action index per `[x0 point][time bin][state bin]`.
    Table {
        x0_grid: Vec<f64>,
        time_edges: Vec<f64>,
        state_edges: Vec<f64>,
        cells: Vec<usize>,
        actions: ActionGrid,
    },
}

fn check_grid(x0_grid: &[f64]) -> Result<()> {
    if x0_grid.is_empty() {
        return Err(Error::InvalidArgument("x0 grid is empty".into()));
    }
    if x0_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "x0 grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

impl FeedbackControl {
    pub fn linear(x0_grid: Vec<f64>, gains: Vec<(f64, f64)>, bounds: (f64, f64)) -> Result<Self> {
        check_grid(&x0_grid)?;
        if gains.len() != x0_grid.len() {
            return Err(Error::DimensionMismatch {
                expected: x0_grid.len(),
                found: gains.len(),
            });
        }
        if !(bounds.0 <= bounds.1) {
            return Err(Error::InvalidArgument(format!("action bounds {bounds:?}")));
        }
        Ok(Self::LinearGains {
            x0_grid,
            gains,
            bounds,
        })
    }

    /// The same action everywhere.
    pub fn constant(a: f64, bounds: (f64, f64)) -> Result<Self> {
        Self::linear(vec![0.0], vec![(0.0, a)], bounds)
    }

    pub fn table(
        x0_grid: Vec<f64>,
        time_edges: Vec<f64>,
        state_edges: Vec<f64>,
        cells: Vec<usize>,
        actions: ActionGrid,
    ) -> Result<Self> {
        check_grid(&x0_grid)?;
        if time_edges.windows(2).any(|w| !(w[0] < w[1]))
            || state_edges.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(Error::InvalidArgument(
                "table edges must be strictly increasing".into(),
            ));
        }
        let expected = x0_grid.len() * (time_edges.len() + 1) * (state_edges.len() + 1);
        if cells.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: cells.len(),
            });
        }
        if cells.iter().any(|&c| c >= actions.len()) {
            return Err(Error::InvalidArgument(
                "control cell outside the action grid".into(),
            ));
        }
        Ok(Self::Table {
            x0_grid,
            time_edges,
            state_edges,
            cells,
            actions,
        })
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, Self::LinearGains { .. })
    }

    pub fn x0_grid(&self) -> &[f64] {
        match self {
            Self::LinearGains { x0_grid, .. } | Self::Table { x0_grid, .. } => x0_grid,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::LinearGains { x0_grid, .. } => format!("linear_gains({})", x0_grid.len()),
            Self::Table {
                x0_grid,
                time_edges,
                state_edges,
                ..
            } => format!(
                "table({}x{}x{})",
                x0_grid.len(),
                time_edges.len() + 1,
                state_edges.len() + 1
            ),
        }
    }

    pub fn evaluate(&self, t: f64, x0: f64, x: f64) -> f64 {
        match self {
            Self::LinearGains {
                x0_grid,
                gains,
                bounds,
            } => {
                let (g1, g0) = gains[nearest_sorted(x0_grid, x0)];
                (g1 * x + g0).clamp(bounds.0, bounds.1)
            }
            Self::Table {
                x0_grid,
                time_edges,
                state_edges,
                cells,
                actions,
            } => {
                let tb = time_edges.len() + 1;
                let sb = state_edges.len() + 1;
                let row = nearest_sorted(x0_grid, x0);
                let ti = time_edges.partition_point(|&e| e <= t);
                let si = state_edges.partition_point(|&e| e <= x);
                actions.get(cells[(row * tb + ti) * sb + si])
            }
        }
    }
}

/// Policies searched by the individual optimization, one member per
/// x0-grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyClass {
    /// Every `(g₁, g₀)` pair of the two grids, followed by `refinements`
    /// rounds that try `g₀ ± h/2^r` around the incumbent (`h` the intercept
    /// spacing).
    LinearGains {
        slopes: Vec<f64>,
        intercepts: Vec<f64>,
        refinements: usize,
    },
    /// Piecewise constant on `time_bins` equal time bins × the state bins cut
    /// by `state_edges`, found by `sweeps` rounds of coordinate ascent over
    /// cells.
    Table {
        time_bins: usize,
        state_edges: Vec<f64>,
        sweeps: usize,
    },
}

impl Default for PolicyClass {
    fn default() -> Self {
        Self::Table {
            time_bins: 4,
            state_edges: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            sweeps: 2,
        }
    }
}

impl PolicyClass {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::LinearGains {
                slopes, intercepts, ..
            } => {
                if slopes.is_empty() || intercepts.is_empty() {
                    return Err(Error::InvalidArgument("policy class is empty".into()));
                }
                if slopes.iter().chain(intercepts).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("policy gain grid".into()));
                }
            }
            Self::Table {
                time_bins,
                state_edges,
                ..
            } => {
                if *time_bins == 0 {
                    return Err(Error::InvalidArgument(
                        "policy class needs a time bin".into(),
                    ));
                }
                if state_edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidArgument(
                        "state edges must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self {
            Self::LinearGains {
                slopes,
                intercepts,
                refinements,
            } => format!(
                "linear_gains({}x{}, refine {refinements})",
                slopes.len(),
                intercepts.len()
            ),
            Self::Table {
                time_bins,
                state_edges,
                sweeps,
            } => format!(
                "table({time_bins}x{}, sweeps {sweeps})",
                state_edges.len() + 1
            ),
        }
    }
}
