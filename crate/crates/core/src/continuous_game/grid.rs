use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::measures::{write_measure, EmpiricalMeasure, Split};
use crate::model::ContinuousModel;

/// Uniform grid `t_k = k·dt` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "time grid needs at least one step".into(),
            ));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive (T = {horizon})"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

/// Particle representation of `(μ_t)`: the law of `(X_0, X_{t_k})` at every
/// grid time, with the model summary of each measure cached.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFlow {
    grid: TimeGrid,
    x0: Vec<f64>,
    /// `states[k][j]` is particle `j` at `t_k`.
    states: Vec<Vec<f64>>,
    summaries: Vec<Vec<f64>>,
}

impl MeasureFlow {
    pub fn from_states<M: ContinuousModel + ?Sized>(
        model: &M,
        grid: TimeGrid,
        x0: Vec<f64>,
        states: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::InvalidArgument(
                "flow needs at least one particle".into(),
            ));
        }
        if states.len() != grid.steps() + 1 {
            return Err(Error::DimensionMismatch {
                expected: grid.steps() + 1,
                found: states.len(),
            });
        }
        if let Some(bad) = states.iter().find(|s| s.len() != x0.len()) {
            return Err(Error::DimensionMismatch {
                expected: x0.len(),
                found: bad.len(),
            });
        }
        let summaries = states
            .iter()
            .map(|x| {
                let mut s = vec![0.0; model.summary_len()];
                model.summarize(&x0, x, &mut s);
                s
            })
            .collect();
        Ok(Self {
            grid,
            x0,
            states,
            summaries,
        })
    }

    /// `X_t = X_0` for every `t`.
    pub fn frozen<M: ContinuousModel + ?Sized>(
        model: &M,
        grid: TimeGrid,
        x0: Vec<f64>,
    ) -> Result<Self> {
        let states = vec![x0.clone(); grid.steps() + 1];
        Self::from_states(model, grid, x0, states)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn particle_count(&self) -> usize {
        self.x0.len()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn states(&self, k: usize) -> &[f64] {
        &self.states[k]
    }

    pub fn summary(&self, k: usize) -> &[f64] {
        &self.summaries[k]
    }

    pub fn summaries(&self) -> &[Vec<f64>] {
        &self.summaries
    }

    /// Law of `(X_0, X_{t_k})`.
    pub fn measure(&self, k: usize) -> EmpiricalMeasure {
        let mut pts = Vec::with_capacity(2 * self.x0.len());
        for (a, b) in self.x0.iter().zip(&self.states[k]) {
            pts.extend_from_slice(&[*a, *b]);
        }
        EmpiricalMeasure::uniform(pts, 2)
            .and_then(|m| m.with_split(Split::new(1, 1, 0)))
            .expect("flow has particles")
    }

    /// Law of `X_{t_k}` alone.
    pub fn marginal(&self, k: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::from_values(&self.states[k]).expect("flow has particles")
    }

    /// One measure file per grid time plus `manifest.csv` indexing them.
    /// Each `(column, value)` tag is appended to every manifest row.
    pub fn write_dir(&self, dir: &Path, tags: &[(&str, String)]) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = csv::Writer::from_path(dir.join("manifest.csv"))?;
        let mut header = vec!["step", "t", "file"];
        header.extend(tags.iter().map(|t| t.0));
        manifest.write_record(&header)?;
        for k in 0..=self.grid.steps() {
            let name = format!("flow_{k:05}.txt");
            let mut w = BufWriter::new(fs::File::create(dir.join(&name))?);
            write_measure(&self.measure(k), &mut w)?;
            w.flush()?;
            let mut row = vec![k.to_string(), format!("{:?}", self.grid.time(k)), name];
            row.extend(tags.iter().map(|t| t.1.clone()));
            manifest.write_record(&row)?;
        }
        manifest.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_lq_continuous, ActionGrid};

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, 5).is_err());
        let g = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(g.dt(), 0.5);
        assert_eq!(g.time(3), 1.5);
    }

    #[test]
    fn frozen_flow_keeps_initial_marginal() {
        let m = builtin_lq_continuous(1.0, 0.5, 1.0, ActionGrid::new(vec![0.0]).unwrap()).unwrap();
        let f = MeasureFlow::frozen(&m, TimeGrid::new(1.0, 3).unwrap(), vec![-1.0, 3.0]).unwrap();
        assert_eq!(f.summary(2), &[1.0]);
        let mu = f.measure(3);
        assert_eq!(
            mu.initial_marginal().unwrap(),
            mu.terminal_marginal().unwrap()
        );
    }
}
