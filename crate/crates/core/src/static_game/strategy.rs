use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ActionGrid;

type ClosedFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

enum Kind {
    Table(Table),
    ClosedForm { tag: String, f: Box<ClosedFn> },
}

struct Table {
    x0_grid: Vec<f64>,
    xi_edges: Vec<f64>,
    /// Action indices, row-major `[x0 point][ξ bin]`.
    cells: Vec<usize>,
    actions: ActionGrid,
}

/// Map `(x0, ξ) ↦ action`. Clones share the same underlying map.
#[derive(Clone)]
pub struct Strategy(Arc<Kind>);

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Kind::Table(t) => f
                .debug_struct("Strategy::Table")
                .field("x0_grid", &t.x0_grid.len())
                .field("xi_bins", &(t.xi_edges.len() + 1))
                .finish(),
            Kind::ClosedForm { tag, .. } => write!(f, "Strategy::ClosedForm({tag})"),
        }
    }
}

/// Evenly spaced interior cut points of `bins` bins of `[0, 1]`.
pub fn uniform_xi_edges(bins: usize) -> Vec<f64> {
    (1..bins.max(1)).map(|k| k as f64 / bins as f64).collect()
}

impl Strategy {
    /// Piecewise-constant lookup: nearest point of `x0_grid` (clamped at the
    /// ends, ties to the lower point) and the `ξ` bin given by `xi_edges`.
    pub fn table(
        x0_grid: Vec<f64>,
        xi_edges: Vec<f64>,
        cells: Vec<usize>,
        actions: ActionGrid,
    ) -> Result<Self> {
        if x0_grid.is_empty() {
            return Err(Error::InvalidArgument("x0 grid is empty".into()));
        }
        if x0_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "x0 grid must be strictly increasing".into(),
            ));
        }
        if xi_edges.windows(2).any(|w| !(w[0] < w[1]))
            || xi_edges.iter().any(|e| !(0.0..=1.0).contains(e))
        {
            return Err(Error::InvalidArgument(
                "xi edges must be increasing within [0, 1]".into(),
            ));
        }
        let expected = x0_grid.len() * (xi_edges.len() + 1);
        if cells.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: cells.len(),
            });
        }
        if cells.iter().any(|&c| c >= actions.len()) {
            return Err(Error::InvalidArgument(
                "strategy cell outside the action grid".into(),
            ));
        }
        Ok(Self(Arc::new(Kind::Table(Table {
            x0_grid,
            xi_edges,
            cells,
            actions,
        }))))
    }

    /// Same action index everywhere.
    pub fn constant(index: usize, actions: ActionGrid) -> Result<Self> {
        Self::table(vec![0.0], vec![], vec![index], actions)
    }

    /// A closed-form map, exempt from the action-grid range requirement.
    pub fn closed_form<F>(tag: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self(Arc::new(Kind::ClosedForm {
            tag: tag.into(),
            f: Box::new(f),
        }))
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(&*self.0, Kind::ClosedForm { .. })
    }

    pub fn describe(&self) -> String {
        match &*self.0 {
            Kind::Table(t) => format!("table({}x{})", t.x0_grid.len(), t.xi_edges.len() + 1),
            Kind::ClosedForm { tag, .. } => format!("closed_form({tag})"),
        }
    }

    pub fn same_as(&self, other: &Strategy) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn xi_edges(&self) -> &[f64] {
        match &*self.0 {
            Kind::Table(t) => &t.xi_edges,
            Kind::ClosedForm { .. } => &[],
        }
    }

    pub fn xi_bins(&self) -> usize {
        self.xi_edges().len() + 1
    }

    pub fn x0_grid(&self) -> Option<&[f64]> {
        match &*self.0 {
            Kind::Table(t) => Some(&t.x0_grid),
            Kind::ClosedForm { .. } => None,
        }
    }

    pub fn cells(&self) -> Option<&[usize]> {
        match &*self.0 {
            Kind::Table(t) => Some(&t.cells),
            Kind::ClosedForm { .. } => None,
        }
    }

    pub fn xi_bin(&self, xi: f64) -> usize {
        bin_of(self.xi_edges(), xi)
    }

    /// Action index for tabular strategies.
    pub fn action_index(&self, x0: f64, xi: f64) -> Option<usize> {
        match &*self.0 {
            Kind::Table(t) => {
                Some(t.cells[t.row(x0) * (t.xi_edges.len() + 1) + bin_of(&t.xi_edges, xi)])
            }
            Kind::ClosedForm { .. } => None,
        }
    }

    pub fn evaluate(&self, x0: f64, xi: f64) -> f64 {
        match &*self.0 {
            Kind::Table(t) => t
                .actions
                .get(t.cells[t.row(x0) * (t.xi_edges.len() + 1) + bin_of(&t.xi_edges, xi)]),
            Kind::ClosedForm { f, .. } => f(x0, xi),
        }
    }
}

pub(crate) fn bin_of(edges: &[f64], xi: f64) -> usize {
    edges.partition_point(|&e| e <= xi)
}

/// Nearest point of an increasing grid, clamped at the ends, ties to the
/// lower point.
pub(crate) fn nearest_sorted(g: &[f64], x: f64) -> usize {
    let k = g.partition_point(|&v| v < x);
    if k == 0 {
        0
    } else if k == g.len() {
        g.len() - 1
    } else if x - g[k - 1] <= g[k] - x {
        k - 1
    } else {
        k
    }
}

impl Table {
    fn row(&self, x0: f64) -> usize {
        nearest_sorted(&self.x0_grid, x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> ActionGrid {
        ActionGrid::new(vec![-1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn lookup_nearest_and_clamped() {
        let s = Strategy::table(
            vec![-1.0, 0.0, 1.0],
            vec![0.5],
            vec![0, 1, 1, 2, 2, 0],
            grid(),
        )
        .unwrap();
        assert_eq!(s.evaluate(-5.0, 0.1), -1.0);
        assert_eq!(s.evaluate(-5.0, 0.7), 0.0);
        assert_eq!(s.evaluate(0.2, 0.49), 0.0);
        assert_eq!(s.evaluate(0.2, 0.5), 1.0);
        assert_eq!(s.evaluate(0.5, 0.0), 0.0);
        assert_eq!(s.evaluate(9.0, 0.9), -1.0);
    }

    #[test]
    fn table_validation() {
        assert!(Strategy::table(vec![], vec![], vec![], grid()).is_err());
        assert!(Strategy::table(vec![0.0], vec![], vec![3], grid()).is_err());
        assert!(Strategy::table(vec![1.0, 0.0], vec![], vec![0, 0], grid()).is_err());
    }

    #[test]
    fn closed_form() {
        let s = Strategy::closed_form("linear", |x0, _| -0.3 * x0);
        assert!(s.is_closed_form());
        assert!((s.evaluate(2.0, 0.3) + 0.6).abs() < 1e-15);
        assert!(s.clone().same_as(&s));
    }

    #[test]
    fn uniform_edges() {
        assert_eq!(uniform_xi_edges(1), Vec::<f64>::new());
        assert_eq!(uniform_xi_edges(4), vec![0.25, 0.5, 0.75]);
    }
}
