//! Empirical probability measures and Wasserstein-type distances.

mod io;
mod sum;
mod transport;

pub use io::{read_measure, write_measure};
pub use sum::{exact_sum, ExactSum};
pub use transport::{
    transport_cost_exact, wasserstein, wasserstein_detailed, wasserstein_entropic, wasserstein_lp,
    Distance, GroundMetric, Method, ENTROPIC_LEVELS, EXACT_SUPPORT_CAP,
};

use crate::error::{Error, Result};

/// Tolerance within which probability weights are silently renormalized.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Coordinate layout of a product-space point `(x0, x1, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Split {
    pub initial: usize,
    pub terminal: usize,
    pub action: usize,
}

impl Split {
    pub fn new(initial: usize, terminal: usize, action: usize) -> Self {
        Self {
            initial,
            terminal,
            action,
        }
    }

    /// Layout of a measure with no product structure.
    pub fn flat(dim: usize) -> Self {
        Self::new(dim, 0, 0)
    }

    pub fn dim(&self) -> usize {
        self.initial + self.terminal + self.action
    }

    pub fn initial_range(&self) -> std::ops::Range<usize> {
        0..self.initial
    }

    pub fn terminal_range(&self) -> std::ops::Range<usize> {
        self.initial..self.initial + self.terminal
    }

    pub fn action_range(&self) -> std::ops::Range<usize> {
        self.initial + self.terminal..self.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Weights {
    Uniform,
    Explicit(Vec<f64>),
}

/// Weighted point cloud in `R^d`.
///
/// Points are stored row-major in one flat buffer. Duplicate atoms are kept
/// as separate atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Weights,
    split: Split,
}

impl EmpiricalMeasure {
    /// Uniform measure on the rows of `points` (flat, `dim` coordinates each).
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "dimension must be at least 1".into(),
            ));
        }
        if points.is_empty() {
            return Err(Error::EmptySupport);
        }
        if points.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: points.len() % dim,
            });
        }
        Ok(Self {
            dim,
            points,
            weights: Weights::Uniform,
            split: Split::flat(dim),
        })
    }

    /// Measure with probability weights. Weights whose sum is within
    /// [`WEIGHT_SUM_TOLERANCE`] of one are renormalized; anything further off
    /// is rejected.
    pub fn new(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        let mut m = Self::uniform(points, dim)?;
        if weights.len() != m.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                found: weights.len(),
            });
        }
        check_nonnegative(&weights)?;
        let sum = exact_sum(weights.iter().copied());
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::WeightSum { sum });
        }
        m.weights = Weights::Explicit(weights.into_iter().map(|w| w / sum).collect());
        Ok(m)
    }

    /// Empirical measure of a sample. Without weights every sample gets
    /// `1/n`; given weights are treated as unnormalized masses.
    pub fn from_samples(samples: &[Vec<f64>], weights: Option<&[f64]>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptySupport)?;
        let dim = first.len();
        let mut flat = Vec::with_capacity(samples.len() * dim);
        for s in samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.len(),
                });
            }
            flat.extend_from_slice(s);
        }
        let mut m = Self::uniform(flat, dim)?;
        if let Some(w) = weights {
            if w.len() != samples.len() {
                return Err(Error::DimensionMismatch {
                    expected: samples.len(),
                    found: w.len(),
                });
            }
            check_nonnegative(w)?;
            let sum = exact_sum(w.iter().copied());
            if !(sum > 0.0) || !sum.is_finite() {
                return Err(Error::WeightSum { sum });
            }
            m.weights = Weights::Explicit(w.iter().map(|x| x / sum).collect());
        }
        Ok(m)
    }

    /// One-dimensional uniform measure.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::uniform(values.to_vec(), 1)
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        if split.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: split.dim(),
            });
        }
        self.split = split;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn raw_points(&self) -> &[f64] {
        &self.points
    }

    pub fn into_raw_points(self) -> Vec<f64> {
        self.points
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.weights, Weights::Uniform)
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Weights::Uniform => 1.0 / self.len() as f64,
            Weights::Explicit(w) => w[i],
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// Atoms `(weight, point)`.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.points()
            .enumerate()
            .map(move |(i, p)| (self.weight(i), p))
    }

    /// `∫ f dμ`, summed exactly so the result is independent of atom order.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        match &self.weights {
            Weights::Uniform => exact_sum(self.points().map(&f)) / self.len() as f64,
            Weights::Explicit(w) => exact_sum(self.points().zip(w).map(|(p, w)| w * f(p))),
        }
    }

    /// Mean of one coordinate.
    pub fn coordinate_mean(&self, coord: usize) -> f64 {
        self.integrate(|p| p[coord])
    }

    /// `∫ |x|^q μ(dx)` with the Euclidean norm.
    pub fn moment(&self, q: f64) -> Result<f64> {
        if !(q > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "moment order must be positive, got {q}"
            )));
        }
        Ok(self.integrate(|p| {
            let r = norm(p);
            if q == 2.0 {
                p.iter().map(|x| x * x).sum()
            } else if q == 1.0 {
                r
            } else {
                r.powf(q)
            }
        }))
    }

    /// Coordinate projection onto `coords` (a contiguous range).
    pub fn project(&self, coords: std::ops::Range<usize>) -> Result<EmpiricalMeasure> {
        if coords.is_empty() || coords.end > self.dim {
            return Err(Error::InvalidArgument(format!(
                "projection {coords:?} out of range for dimension {}",
                self.dim
            )));
        }
        let d = coords.len();
        let mut flat = Vec::with_capacity(self.len() * d);
        for p in self.points() {
            flat.extend_from_slice(&p[coords.clone()]);
        }
        Ok(EmpiricalMeasure {
            dim: d,
            points: flat,
            weights: self.weights.clone(),
            split: Split::flat(d),
        })
    }

    pub fn initial_marginal(&self) -> Result<EmpiricalMeasure> {
        self.project(self.split.initial_range())
    }

    pub fn terminal_marginal(&self) -> Result<EmpiricalMeasure> {
        self.project(self.split.terminal_range())
    }

    pub fn action_marginal(&self) -> Result<EmpiricalMeasure> {
        self.project(self.split.action_range())
    }
}

/// Empirical measure of a sample; see [`EmpiricalMeasure::from_samples`].
pub fn empirical_from_samples(
    samples: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::from_samples(samples, weights)
}

/// `Σ w_i |x_i|^q`.
pub fn moment(mu: &EmpiricalMeasure, q: f64) -> Result<f64> {
    mu.moment(q)
}

fn check_nonnegative(w: &[f64]) -> Result<()> {
    for (index, &weight) in w.iter().enumerate() {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::NegativeWeight { index, weight });
        }
    }
    Ok(())
}

pub(crate) fn norm(p: &[f64]) -> f64 {
    if p.len() == 1 {
        p[0].abs()
    } else {
        p.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Order of a Wasserstein distance. The zero order uses the bounded cost
/// `1 ∧ |x - y|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WassersteinOrder {
    Zero,
    One,
    Two,
}

impl WassersteinOrder {
    pub fn from_q(q: f64) -> Result<Self> {
        match q {
            q if q == 0.0 => Ok(Self::Zero),
            q if q == 1.0 => Ok(Self::One),
            q if q == 2.0 => Ok(Self::Two),
            other => Err(Error::UnsupportedOrder(other)),
        }
    }

    pub fn q(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::One => 1.0,
            Self::Two => 2.0,
        }
    }

    /// `1 ∨ q`, the power the optimal cost is raised to.
    pub fn root(&self) -> f64 {
        self.q().max(1.0)
    }

    /// Ground cost as a function of the distance between two points.
    #[inline]
    pub fn cost(&self, dist: f64) -> f64 {
        match self {
            Self::Zero => dist.min(1.0),
            Self::One => dist,
            Self::Two => dist * dist,
        }
    }

    /// Converts an optimal cost back into the distance.
    #[inline]
    pub fn distance_from_cost(&self, cost: f64) -> f64 {
        let cost = cost.max(0.0);
        match self {
            Self::Two => cost.sqrt(),
            _ => cost,
        }
    }
}

impl std::fmt::Display for WassersteinOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.q())
    }
}
