use super::{ActionGrid, Law, ProductAtoms, StaticModel};
use crate::error::{Error, Result};
use crate::measures::{exact_sum, EmpiricalMeasure};

/// One-period linear-quadratic game:
/// `F = ρ x0 + a + κ m̄ + σ e`, `U(ν) = -∫ x² ν(dx)`, with `m̄` the mean of
/// the terminal-state marginal.
#[derive(Debug, Clone)]
pub struct LqStatic {
    pub rho: f64,
    pub kappa: f64,
    pub sigma: f64,
    actions: ActionGrid,
    mu0: Law,
    noise: Law,
    id: String,
}

pub fn builtin_lq_static(
    rho: f64,
    kappa: f64,
    sigma: f64,
    actions: ActionGrid,
) -> Result<LqStatic> {
    LqStatic::new(rho, kappa, sigma, actions, Law::standard_normal())
}

impl LqStatic {
    pub fn new(rho: f64, kappa: f64, sigma: f64, actions: ActionGrid, mu0: Law) -> Result<Self> {
        if !(kappa.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "coupling kappa = {kappa} must satisfy |kappa| < 1"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() || !rho.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need finite rho and sigma > 0, got rho = {rho}, sigma = {sigma}"
            )));
        }
        mu0.validate()?;
        Ok(Self {
            rho,
            kappa,
            sigma,
            actions,
            mu0,
            noise: Law::standard_normal(),
            id: format!("lq_static(rho={rho},kappa={kappa},sigma={sigma})"),
        })
    }

    /// The mean-field optimal action against a population with terminal mean `mbar`.
    pub fn best_action(&self, x0: f64, mbar: f64) -> f64 {
        -self.rho * x0 - self.kappa * mbar
    }
}

impl StaticModel for LqStatic {
    fn id(&self) -> &str {
        &self.id
    }

    fn actions(&self) -> &ActionGrid {
        &self.actions
    }

    fn initial_law(&self) -> &Law {
        &self.mu0
    }

    fn noise_law(&self) -> &Law {
        &self.noise
    }

    fn summary_len(&self) -> usize {
        1
    }

    fn summarize(&self, atoms: ProductAtoms<'_>, out: &mut [f64]) {
        out[0] = match atoms.weights {
            None => exact_sum(atoms.x1.iter().copied()) / atoms.len() as f64,
            Some(w) => exact_sum(atoms.x1.iter().zip(w).map(|(x, w)| x * w)),
        };
    }

    fn transition(&self, e: f64, x0: f64, summary: &[f64], a: f64) -> f64 {
        self.rho * x0 + a + self.kappa * summary[0] + self.sigma * e
    }

    fn utility(&self, law: &EmpiricalMeasure) -> f64 {
        -law.integrate(|x| x[0] * x[0])
    }

    fn contraction(&self, _x0: f64, _a: f64, _e: f64) -> Option<f64> {
        Some(self.kappa.abs())
    }

    fn growth_constant(&self) -> Option<f64> {
        Some(
            self.rho
                .abs()
                .max(1.0)
                .max(self.kappa.abs())
                .max(self.sigma),
        )
    }

    fn measure_dependent(&self) -> bool {
        self.kappa != 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Split;

    fn model(kappa: f64) -> LqStatic {
        builtin_lq_static(
            0.3,
            kappa,
            1.0,
            ActionGrid::uniform(-3.0, 3.0, 0.01).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constructor_rejects_unit_coupling() {
        assert!(builtin_lq_static(0.3, 1.0, 1.0, ActionGrid::new(vec![0.0]).unwrap()).is_err());
        assert!(builtin_lq_static(0.3, -1.5, 1.0, ActionGrid::new(vec![0.0]).unwrap()).is_err());
    }

    #[test]
    fn affine_in_the_measure() {
        let m = model(0.5);
        let mu = EmpiricalMeasure::uniform(vec![0.0, 1.0, 0.0, 1.0, 3.0, 0.5], 3)
            .unwrap()
            .with_split(Split::new(1, 1, 1))
            .unwrap();
        let nu = EmpiricalMeasure::new(vec![0.0, -2.0, 0.0, 1.0, 0.5, 0.5], 3, vec![0.25, 0.75])
            .unwrap()
            .with_split(Split::new(1, 1, 1))
            .unwrap();
        let (mbar_mu, mbar_nu) = (2.0, -0.5 + 0.375);
        for (e, x0, a) in [(0.1, 2.0, -0.6), (-1.3, -0.7, 0.2), (0.0, 0.0, 0.0)] {
            let d =
                m.transition_at(e, x0, &mu, a).unwrap() - m.transition_at(e, x0, &nu, a).unwrap();
            assert!((d - 0.5 * (mbar_mu - mbar_nu)).abs() < 1e-12);
        }
    }

    #[test]
    fn first_order_condition_on_the_grid() {
        // a ↦ -((ρ x0 + a + κ m̄)² + σ²) peaks at -ρ x0 - κ m̄.
        let m = model(0.5);
        let grid = m.actions();
        let x0 = 2.0;
        let best = (0..grid.len())
            .max_by(|&i, &j| {
                let f = |k: usize| -(m.transition(0.0, x0, &[0.0], grid.get(k))).powi(2);
                f(i).total_cmp(&f(j))
            })
            .unwrap();
        assert!((grid.get(best) - m.best_action(x0, 0.0)).abs() < 1e-12);
        assert!((m.best_action(2.0, 0.0) + 0.6).abs() < 1e-15);
    }
}
