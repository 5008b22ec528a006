use rayon::prelude::*;

use super::population::{solve_population_state, Draws, PicardConfig};
use super::Strategy;
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::model::StaticModel;
use crate::rng::Streams;

/// `U(law)`, with every non-finite value mapped to `-∞`.
pub fn payoff<M: StaticModel + ?Sized>(model: &M, law: &EmpiricalMeasure) -> f64 {
    finite_or_neg_inf(model.utility(law))
}

pub(crate) fn finite_or_neg_inf(u: f64) -> f64 {
    if u.is_finite() {
        u
    } else {
        f64::NEG_INFINITY
    }
}

/// Payoff of the uniform law on `values`.
pub(crate) fn payoff_of_values<M: StaticModel + ?Sized>(model: &M, values: &[f64]) -> f64 {
    match EmpiricalMeasure::from_values(values) {
        Ok(law) => payoff(model, &law),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Runs `f` for every replication in parallel and returns the results in
/// replication order. The first failing replication, by index, is reported.
pub(crate) fn replicate<T, F>(m: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..m).into_par_iter().map(&f).collect();
    let mut out = Vec::with_capacity(m);
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(Error::Replication {
                    replication: r,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

/// Standard error of a difference of two functionals estimated on the same
/// replications: the replications are cut into `batches` contiguous blocks
/// (each holding whole antithetic pairs) and the spread of the per-block
/// differences is used.
pub(crate) fn batch_se<F>(m: usize, batches: usize, stat: F) -> f64
where
    F: Fn(std::ops::Range<usize>) -> f64,
{
    let pairs = m / 2;
    let b = batches.min(pairs).max(1);
    if b < 2 {
        return f64::NAN;
    }
    let values: Vec<f64> = (0..b)
        .map(|k| {
            let lo = 2 * (k * pairs / b);
            let hi = if k + 1 == b {
                m
            } else {
                2 * ((k + 1) * pairs / b)
            };
            stat(lo..hi)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / b as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Empirical law of `X_1^i` given `X_0^i = x0_pin`, over `replications`
/// independent populations of size `n` with everything except `X_0^i` resampled.
#[allow(clippy::too_many_arguments)]
pub fn estimate_conditional_law<M: StaticModel + ?Sized>(
    model: &M,
    profile: &[Strategy],
    i: usize,
    x0_pin: f64,
    n: usize,
    replications: usize,
    seed: u64,
    picard: &PicardConfig,
) -> Result<EmpiricalMeasure> {
    if replications == 0 {
        return Err(Error::InvalidArgument(
            "need at least one replication".into(),
        ));
    }
    if profile.len() != n || i >= n {
        return Err(Error::InvalidArgument(format!(
            "profile of {} strategies for n = {n}, agent {i}",
            profile.len()
        )));
    }
    let streams = Streams::new(seed);
    let values = replicate(replications, |r| {
        let mut draws = Draws::sample(model, n, &streams, r as u64);
        draws.x0[i] = x0_pin;
        let state = solve_population_state(model, profile, &draws, picard)?;
        Ok(state.x1[i])
    })?;
    EmpiricalMeasure::from_values(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_lq_static, ActionGrid};

    #[test]
    fn payoff_convention() {
        let m = builtin_lq_static(0.3, 0.5, 1.0, ActionGrid::new(vec![0.0]).unwrap()).unwrap();
        assert_eq!(
            payoff(&m, &EmpiricalMeasure::from_values(&[2.0]).unwrap()),
            -4.0
        );
        assert_eq!(
            payoff(&m, &EmpiricalMeasure::from_values(&[-1.0, 1.0]).unwrap()),
            -1.0
        );
        assert_eq!(
            payoff(&m, &EmpiricalMeasure::from_values(&[f64::NAN]).unwrap()),
            f64::NEG_INFINITY
        );
        assert_eq!(finite_or_neg_inf(f64::INFINITY), f64::NEG_INFINITY);
    }

    #[test]
    fn zero_replications_rejected() {
        let m = builtin_lq_static(0.3, 0.0, 1.0, ActionGrid::new(vec![0.0]).unwrap()).unwrap();
        let profile = vec![Strategy::closed_form("z", |_, _| 0.0)];
        assert!(
            estimate_conditional_law(&m, &profile, 0, 1.0, 1, 0, 1, &PicardConfig::default())
                .is_err()
        );
    }

    #[test]
    fn batch_se_of_constant_is_zero() {
        assert_eq!(batch_se(100, 10, |_| 3.0), 0.0);
        assert!(batch_se(2, 10, |_| 3.0).is_nan());
    }
}
