use rand::Rng;

use super::{ContinuousModel, ProductAtoms, StaticModel};
use crate::error::{Error, Result};
use crate::measures::{exact_sum, WassersteinOrder};
use crate::rng::{tag, Streams};

/// Samples closer than this to 1 make the integrability estimate unreliable.
const NEAR_ONE: f64 = 1e-6;

/// Sample audit of the contraction and growth assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCertificate {
    pub model_id: String,
    pub p: WassersteinOrder,
    /// Mean of `ĉ^(1∨p)` over the sample.
    pub c_mean: f64,
    pub c_max: f64,
    /// Mean of `1 / (1 - ĉ^(1∨p))`; infinite if any sample reached 1.
    pub integrability: f64,
    /// Some sample came within `1e-6` of 1.
    pub near_one: bool,
    pub growth_violations: usize,
    /// Samples of `|X_0|` beyond `N^(1/q)` times the sample `q`-norm, with
    /// `q = min(declared moment order, 4)`. Diagnostic only.
    pub tail_count: usize,
    pub sample_size: usize,
    pub pass: bool,
}

/// Draws `sample_size` triples `(X_0, ξ, η)`, evaluates the declared
/// contraction at the grid-midpoint action, and checks affine growth of `F`
/// against the empirical measure of the draws.
pub fn check_assumptions<M: StaticModel + ?Sized>(
    model: &M,
    p: WassersteinOrder,
    sample_size: usize,
    seed: u64,
) -> Result<AssumptionCertificate> {
    if sample_size == 0 {
        return Err(Error::InvalidArgument(
            "sample size must be at least 1".into(),
        ));
    }
    if model
        .contraction(0.0, model.actions().get(0), 0.0)
        .is_none()
    {
        return Err(Error::MissingCertificate(model.id().to_string()));
    }
    let streams = Streams::new(seed);
    let mut rng = streams.rng(tag::CERTIFICATE, &[]);
    let a_mid = model.actions().get(model.actions().midpoint_index());
    let mut x0 = Vec::with_capacity(sample_size);
    let mut eta = Vec::with_capacity(sample_size);
    for _ in 0..sample_size {
        x0.push(model.initial_law().sample(&mut rng));
        let _xi: f64 = rng.random();
        eta.push(model.noise_law().sample(&mut rng));
    }
    let root = p.root();
    let mut c_pow = Vec::with_capacity(sample_size);
    let mut c_max: f64 = 0.0;
    for (&x, &e) in x0.iter().zip(&eta) {
        let c = model
            .contraction(x, a_mid, e)
            .ok_or_else(|| Error::MissingCertificate(model.id().to_string()))?;
        if !c.is_finite() {
            return Err(Error::NonFinite("contraction certificate".into()));
        }
        c_max = c_max.max(c);
        c_pow.push(c.max(0.0).powf(root));
    }
    let n = sample_size as f64;
    let c_mean = exact_sum(c_pow.iter().copied()) / n;
    let near_one = c_pow.iter().any(|&c| c >= 1.0 - NEAR_ONE);
    let integrability = if c_pow.iter().any(|&c| c >= 1.0) {
        f64::INFINITY
    } else {
        exact_sum(c_pow.iter().map(|c| 1.0 / (1.0 - c))) / n
    };

    let actions = vec![a_mid; sample_size];
    let atoms = ProductAtoms::uniform(&x0, &x0, &actions);
    let mut summary = vec![0.0; model.summary_len()];
    model.summarize(atoms, &mut summary);
    let first_moment = exact_sum(x0.iter().map(|x| x.abs())) / n;
    let growth_violations = match model.growth_constant() {
        None => 0,
        Some(k) => x0
            .iter()
            .zip(&eta)
            .filter(|(&x, &e)| {
                let f = model.transition(e, x, &summary, a_mid);
                !f.is_finite()
                    || f.abs()
                        > k * (1.0 + x.abs() + a_mid.abs() + e.abs() + first_moment) * (1.0 + 1e-12)
            })
            .count(),
    };

    let q = model.initial_law().moment_order().min(4.0);
    let norm = (exact_sum(x0.iter().map(|x| x.abs().powf(q))) / n).powf(1.0 / q);
    let cut = n.powf(1.0 / q) * norm;
    let tail_count = x0.iter().filter(|x| x.abs() > cut).count();

    let pass = c_max < 1.0 && c_mean < 1.0 && growth_violations == 0;
    Ok(AssumptionCertificate {
        model_id: model.id().to_string(),
        p,
        c_mean,
        c_max,
        integrability,
        near_one,
        growth_violations,
        tail_count,
        sample_size,
        pass,
    })
}

/// Number of sampled drift evaluations exceeding the declared bound.
pub fn check_drift_bound<M: ContinuousModel + ?Sized>(
    model: &M,
    samples: usize,
    seed: u64,
) -> usize {
    let mut rng = Streams::new(seed).rng(tag::CERTIFICATE, &[1]);
    let (lo, hi) = model.action_bounds();
    let bound = model.drift_bound();
    let mut violations = 0;
    let mut summary = vec![0.0; model.summary_len()];
    for _ in 0..samples {
        // Spread states over many orders of magnitude to reach the clipping.
        let scale = 10f64.powf(rng.random_range(-2.0..6.0));
        let x0: Vec<f64> = (0..4)
            .map(|_| scale * rng.random_range(-1.0..1.0))
            .collect();
        let x: Vec<f64> = (0..4)
            .map(|_| scale * rng.random_range(-1.0..1.0))
            .collect();
        model.summarize(&x0, &x, &mut summary);
        let t = rng.random_range(0.0..=model.horizon());
        let a = rng.random_range(lo..=hi);
        let b = model.drift(t, x0[0], x[0], &summary, a);
        if !b.is_finite() || b.abs() > bound {
            violations += 1;
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        builtin_discrete_flip, builtin_lq_continuous, builtin_lq_static, ActionGrid, LqStatic,
    };

    fn grid() -> ActionGrid {
        ActionGrid::uniform(-3.0, 3.0, 0.01).unwrap()
    }

    #[test]
    fn lq_constant_contraction() {
        let m = builtin_lq_static(0.3, 0.5, 1.0, grid()).unwrap();
        let c = check_assumptions(&m, WassersteinOrder::One, 1000, 1).unwrap();
        assert_eq!(c.c_mean, 0.5);
        assert_eq!(c.integrability, 2.0);
        assert_eq!(c.growth_violations, 0);
        assert!(c.pass);
    }

    #[test]
    fn decoupled_lq() {
        let m = builtin_lq_static(0.3, 0.0, 1.0, grid()).unwrap();
        let c = check_assumptions(&m, WassersteinOrder::Two, 500, 2).unwrap();
        assert_eq!(c.c_mean, 0.0);
        assert_eq!(c.integrability, 1.0);
        assert!(c.pass);
    }

    struct Saturated(LqStatic);

    impl StaticModel for Saturated {
        fn id(&self) -> &str {
            "saturated"
        }
        fn actions(&self) -> &crate::model::ActionGrid {
            self.0.actions()
        }
        fn initial_law(&self) -> &crate::model::Law {
            self.0.initial_law()
        }
        fn noise_law(&self) -> &crate::model::Law {
            self.0.noise_law()
        }
        fn summary_len(&self) -> usize {
            1
        }
        fn summarize(&self, atoms: ProductAtoms<'_>, out: &mut [f64]) {
            self.0.summarize(atoms, out)
        }
        fn transition(&self, e: f64, x0: f64, s: &[f64], a: f64) -> f64 {
            self.0.transition(e, x0, s, a)
        }
        fn utility(&self, law: &crate::measures::EmpiricalMeasure) -> f64 {
            self.0.utility(law)
        }
        fn contraction(&self, _: f64, _: f64, _: f64) -> Option<f64> {
            Some(1.0)
        }
    }

    #[test]
    fn unit_contraction_fails() {
        let m = Saturated(builtin_lq_static(0.3, 0.5, 1.0, grid()).unwrap());
        let c = check_assumptions(&m, WassersteinOrder::One, 100, 3).unwrap();
        assert!(!c.pass);
        assert!(c.near_one);
        assert_eq!(c.integrability, f64::INFINITY);
    }

    #[test]
    fn missing_certificate() {
        let m = builtin_discrete_flip(0.5).unwrap();
        assert!(matches!(
            check_assumptions(&m, WassersteinOrder::One, 10, 0),
            Err(Error::MissingCertificate(_))
        ));
    }

    #[test]
    fn continuous_drift_within_bound() {
        let m = builtin_lq_continuous(1.0, 0.5, 1.0, ActionGrid::uniform(-2.0, 2.0, 0.5).unwrap())
            .unwrap();
        assert_eq!(check_drift_bound(&m, 10_000, 9), 0);
    }
}
