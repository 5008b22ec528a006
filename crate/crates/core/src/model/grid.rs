use crate::error::{Error, Result};

/// Finite set of actions every optimization searches over.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    values: Vec<f64>,
}

impl ActionGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("action grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("action grid".into()));
        }
        Ok(Self { values })
    }

    /// Evenly spaced grid from `lo` to `hi`. Points are computed as
    /// `lo + k * spacing` and snapped so the grid is symmetric whenever
    /// `lo = -hi`.
    pub fn uniform(lo: f64, hi: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(hi >= lo) {
            return Err(Error::InvalidArgument(format!(
                "action grid [{lo}, {hi}] with spacing {spacing}"
            )));
        }
        let steps = ((hi - lo) / spacing + 1e-9).floor() as usize;
        let values = (0..=steps)
            .map(|k| {
                let v = lo + k as f64 * spacing;
                let m = hi - (steps - k) as f64 * spacing;
                // Whichever end is closer determines the rounding, so that
                // mirror-image points are exact negatives on symmetric grids.
                if k <= steps / 2 {
                    v
                } else {
                    m
                }
            })
            .collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// The grid midpoint, used as a placeholder action.
    pub fn midpoint_index(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn nearest(&self, a: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, v) in self.values.iter().enumerate() {
            let d = (v - a).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }

    /// Largest gap between consecutive sorted points.
    pub fn spacing(&self) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_uniform_grid() {
        let g = ActionGrid::uniform(-3.0, 3.0, 0.01).unwrap();
        assert_eq!(g.len(), 601);
        for i in 0..g.len() {
            assert_eq!(g.get(i), -g.get(g.len() - 1 - i));
        }
        assert_eq!(g.get(g.midpoint_index()), 0.0);
    }

    #[test]
    fn nearest_ties_lowest() {
        let g = ActionGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(g.nearest(0.5), 0);
        assert_eq!(g.nearest(1.7), 2);
        assert_eq!(g.nearest(-9.0), 0);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(ActionGrid::new(vec![]).is_err());
    }
}
