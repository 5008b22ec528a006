//! Game primitives: transition maps, drifts, payoffs, samplers and the
//! runtime checks of the standing assumptions.
//!
//! State, noise and action spaces are one-dimensional in every model. The
//! population measure enters the transition only through a finite summary the
//! model declares (the mean of the terminal states for the LQ models, a
//! thresholded cell mass for discrete instances). Solvers compute the summary
//! once per sweep over the population instead of handing every agent the
//! whole measure.

mod certificate;
mod continuous;
mod discrete;
mod grid;
mod law;
mod lq;

pub use certificate::{check_assumptions, check_drift_bound, AssumptionCertificate};
pub use continuous::{builtin_lq_continuous, ContinuousModel, LqContinuous};
pub use discrete::{
    builtin_discrete_flip, flip_with_initial_law, CellPattern, DiscreteInstance, DiscreteModel,
    SummaryStat,
};
pub use grid::ActionGrid;
pub use law::Law;
pub use lq::{builtin_lq_static, LqStatic};

use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;

/// Atoms `(x0, x1, a)` of a measure on `X × X × A`, in columns.
/// `weights = None` means uniform.
#[derive(Debug, Clone, Copy)]
pub struct ProductAtoms<'a> {
    pub x0: &'a [f64],
    pub x1: &'a [f64],
    pub a: &'a [f64],
    pub weights: Option<&'a [f64]>,
}

impl<'a> ProductAtoms<'a> {
    pub fn uniform(x0: &'a [f64], x1: &'a [f64], a: &'a [f64]) -> Self {
        Self {
            x0,
            x1,
            a,
            weights: None,
        }
    }

    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        match self.weights {
            Some(w) => w[i],
            None => 1.0 / self.x0.len() as f64,
        }
    }
}

/// One-period game primitives.
pub trait StaticModel: Send + Sync {
    fn id(&self) -> &str;

    fn actions(&self) -> &ActionGrid;

    /// Law of `X_0`.
    fn initial_law(&self) -> &Law;

    /// Law of the idiosyncratic noise `η`.
    fn noise_law(&self) -> &Law;

    fn summary_len(&self) -> usize;

    /// Summary of the measure through which `F` depends on it.
    fn summarize(&self, atoms: ProductAtoms<'_>, out: &mut [f64]);

    /// `F^e_{x0}(m, a)` with `m` given by its summary.
    fn transition(&self, e: f64, x0: f64, summary: &[f64], a: f64) -> f64;

    /// `U(ν)` for a law of terminal states.
    fn utility(&self, law: &EmpiricalMeasure) -> f64;

    /// Declared bound `c(x0, a, e)` on the Lipschitz constant of `F` in its
    /// measure argument.
    fn contraction(&self, _x0: f64, _a: f64, _e: f64) -> Option<f64> {
        None
    }

    /// Constant `K` with `|F| <= K (1 + |x0| + |a| + |e| + ∫|x| m(dx))`.
    fn growth_constant(&self) -> Option<f64> {
        None
    }

    /// False when `F` ignores its measure argument.
    fn measure_dependent(&self) -> bool {
        true
    }

    /// `F^e_{x0}(m, a)` for an explicit product measure with split `(1, 1, 1)`.
    fn transition_at(&self, e: f64, x0: f64, m: &EmpiricalMeasure, a: f64) -> Result<f64> {
        let s = m.split();
        if (s.initial, s.terminal, s.action) != (1, 1, 1) {
            return Err(Error::InvalidArgument(
                "measure must live on X x X x A with split 1,1,1".into(),
            ));
        }
        let n = m.len();
        let mut cols = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for p in m.points() {
            for (c, v) in cols.iter_mut().zip(p) {
                c.push(*v);
            }
        }
        let weights = m.weights();
        let atoms = ProductAtoms {
            x0: &cols[0],
            x1: &cols[1],
            a: &cols[2],
            weights: Some(&weights),
        };
        let mut summary = vec![0.0; self.summary_len()];
        self.summarize(atoms, &mut summary);
        Ok(self.transition(e, x0, &summary, a))
    }
}
