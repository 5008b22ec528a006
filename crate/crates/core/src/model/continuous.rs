use super::{ActionGrid, Law};
use crate::error::{Error, Result};
use crate::measures::{exact_sum, EmpiricalMeasure};

/// Controlled SDE `dX = b(t, X_0, X, μ_t, α) dt + dW` on `[0, T]` with a
/// terminal payoff.
pub trait ContinuousModel: Send + Sync {
    fn id(&self) -> &str;

    fn horizon(&self) -> f64;

    /// Actions searched by tabular policies.
    fn actions(&self) -> &ActionGrid;

    /// Closed interval every action, tabular or parametric, is clipped to.
    fn action_bounds(&self) -> (f64, f64) {
        (self.actions().min(), self.actions().max())
    }

    fn initial_law(&self) -> &Law;

    fn summary_len(&self) -> usize;

    /// Summary of the measure of `(X_0, X_t)` through which `b` depends on it.
    fn summarize(&self, x0: &[f64], x: &[f64], out: &mut [f64]);

    fn drift(&self, t: f64, x0: f64, x: f64, summary: &[f64], a: f64) -> f64;

    /// Declared bound on `|b|`.
    fn drift_bound(&self) -> f64;

    fn utility(&self, law: &EmpiricalMeasure) -> f64;

    fn measure_dependent(&self) -> bool {
        true
    }
}

/// `b = a - θ x + κ m̄_t`, `U(ν) = -min(∫ x² dν, cap)`.
///
/// The state and the mean fed to the drift are clipped at `clip_radius`,
/// which keeps `b` bounded; the payoff cap keeps `U` bounded.
#[derive(Debug, Clone)]
pub struct LqContinuous {
    pub theta: f64,
    pub kappa: f64,
    pub horizon: f64,
    pub clip_radius: f64,
    pub payoff_cap: f64,
    actions: ActionGrid,
    mu0: Law,
    id: String,
}

pub fn builtin_lq_continuous(
    theta: f64,
    kappa: f64,
    horizon: f64,
    actions: ActionGrid,
) -> Result<LqContinuous> {
    LqContinuous::new(theta, kappa, horizon, actions, Law::standard_normal())
}

impl LqContinuous {
    pub fn new(
        theta: f64,
        kappa: f64,
        horizon: f64,
        actions: ActionGrid,
        mu0: Law,
    ) -> Result<Self> {
        if !(kappa.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "coupling kappa = {kappa} must satisfy |kappa| < 1"
            )));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} must be positive"
            )));
        }
        if !theta.is_finite() {
            return Err(Error::NonFinite("theta".into()));
        }
        mu0.validate()?;
        Ok(Self {
            theta,
            kappa,
            horizon,
            clip_radius: 1e3,
            payoff_cap: 1e6,
            actions,
            mu0,
            id: format!("lq_continuous(theta={theta},kappa={kappa},T={horizon})"),
        })
    }

    pub fn with_initial_law(mut self, mu0: Law) -> Result<Self> {
        mu0.validate()?;
        self.mu0 = mu0;
        Ok(self)
    }

    pub fn with_clip_radius(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!("clip radius {r}")));
        }
        self.clip_radius = r;
        Ok(self)
    }

    pub fn with_payoff_cap(mut self, cap: f64) -> Result<Self> {
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(Error::InvalidArgument(format!("payoff cap {cap}")));
        }
        self.payoff_cap = cap;
        Ok(self)
    }

    fn clip(&self, x: f64) -> f64 {
        x.clamp(-self.clip_radius, self.clip_radius)
    }
}

impl ContinuousModel for LqContinuous {
    fn id(&self) -> &str {
        &self.id
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn actions(&self) -> &ActionGrid {
        &self.actions
    }

    fn initial_law(&self) -> &Law {
        &self.mu0
    }

    fn summary_len(&self) -> usize {
        1
    }

    fn summarize(&self, _x0: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = exact_sum(x.iter().copied()) / x.len() as f64;
    }

    fn drift(&self, _t: f64, _x0: f64, x: f64, summary: &[f64], a: f64) -> f64 {
        let b = a - self.theta * self.clip(x);
        if self.kappa != 0.0 {
            b + self.kappa * self.clip(summary[0])
        } else {
            b
        }
    }

    fn drift_bound(&self) -> f64 {
        let (lo, hi) = self.action_bounds();
        self.theta.abs() * self.clip_radius
            + lo.abs().max(hi.abs())
            + self.kappa.abs() * self.clip_radius
    }

    fn utility(&self, law: &EmpiricalMeasure) -> f64 {
        -law.integrate(|x| x[0] * x[0]).min(self.payoff_cap)
    }

    fn measure_dependent(&self) -> bool {
        self.kappa != 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> ActionGrid {
        ActionGrid::uniform(-1.0, 1.0, 0.1).unwrap()
    }

    #[test]
    fn constructor_errors() {
        assert!(builtin_lq_continuous(1.0, 1.0, 1.0, grid()).is_err());
        assert!(builtin_lq_continuous(1.0, 0.0, 0.0, grid()).is_err());
    }

    #[test]
    fn drift_is_bounded_by_clipping() {
        let m = builtin_lq_continuous(1.0, 0.5, 1.0, grid()).unwrap();
        let b = m.drift(0.0, 0.0, 1e9, &[-1e9], 1.0);
        assert!(b.abs() <= m.drift_bound());
        assert_eq!(m.drift_bound(), 1e3 + 1.0 + 0.5e3);
    }

    #[test]
    fn payoff_is_capped() {
        let m = builtin_lq_continuous(1.0, 0.0, 1.0, grid()).unwrap();
        let law = EmpiricalMeasure::from_values(&[1e4]).unwrap();
        assert_eq!(m.utility(&law), -1e6);
    }
}
