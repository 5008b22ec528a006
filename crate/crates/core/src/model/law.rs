use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A one-dimensional sampling law for initial states and noise.
#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Point(f64),
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl Law {
    pub fn standard_normal() -> Self {
        Law::Normal { mean: 0.0, sd: 1.0 }
    }

    /// Uniform on `{-1, +1}`.
    pub fn rademacher() -> Self {
        Law::Discrete {
            values: vec![-1.0, 1.0],
            probs: vec![0.5, 0.5],
        }
    }

    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySupport);
        }
        if values.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                found: probs.len(),
            });
        }
        if let Some((index, &weight)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
            return Err(Error::NegativeWeight { index, weight });
        }
        let sum: f64 = crate::measures::exact_sum(probs.iter().copied());
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::WeightSum { sum });
        }
        Ok(Law::Discrete { values, probs })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Law::Point(x) if !x.is_finite() => Err(Error::NonFinite("point law".into())),
            Law::Normal { mean, sd } if !mean.is_finite() || !(*sd >= 0.0) || !sd.is_finite() => {
                Err(Error::InvalidArgument(format!(
                    "normal law with mean {mean}, sd {sd}"
                )))
            }
            Law::Uniform { lo, hi } if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() => Err(
                Error::InvalidArgument(format!("uniform law on [{lo}, {hi}]")),
            ),
            Law::Discrete { values, probs } => {
                Law::discrete(values.clone(), probs.clone()).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    /// Highest moment order the law is declared to have.
    pub fn moment_order(&self) -> f64 {
        f64::INFINITY
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law::Point(x) => *x,
            Law::Normal { mean, .. } => *mean,
            Law::Uniform { lo, hi } => 0.5 * (lo + hi),
            Law::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
        }
    }

    /// Inverse CDF of a discrete law at `u ∈ [0, 1]`.
    fn discrete_index(probs: &[f64], u: f64) -> usize {
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        probs.len() - 1
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw_pair(rng).0
    }

    /// An antithetic pair: both coordinates have this law, and for laws
    /// symmetric about their mean the second is the reflection of the first.
    pub fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            Law::Point(x) => (*x, *x),
            Law::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                (mean + sd * z, mean - sd * z)
            }
            Law::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                (lo + (hi - lo) * u, hi - (hi - lo) * u)
            }
            Law::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let i = Self::discrete_index(probs, u);
                let j = Self::discrete_index(probs, 1.0 - u);
                (values[i], values[j])
            }
        }
    }
}
