use rand::Rng;

use super::Strategy;
use crate::error::{Error, Result};
use crate::model::{ProductAtoms, StaticModel};
use crate::rng::{tag, Streams};

/// Randomness of one population: `(X_0^i, ξ^i, η^i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    pub x0: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl Draws {
    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    /// Draws for replication `replication` of an `n`-agent population.
    ///
    /// Agent `j` reads its own substream keyed by `(replication / 2, j)`;
    /// even and odd replications receive the two halves of an antithetic
    /// pair. Agents never share a stream, so the first `n` agents of a larger
    /// population see exactly these draws.
    pub fn sample<M: StaticModel + ?Sized>(
        model: &M,
        n: usize,
        streams: &Streams,
        replication: u64,
    ) -> Self {
        let mut d = Draws {
            x0: Vec::with_capacity(n),
            xi: Vec::with_capacity(n),
            eta: Vec::with_capacity(n),
        };
        let side = replication % 2 == 1;
        for j in 0..n {
            let mut rng = streams.rng(tag::AGENT, &[replication / 2, j as u64]);
            let (x0a, x0b) = model.initial_law().draw_pair(&mut rng);
            let u: f64 = rng.random();
            let (ea, eb) = model.noise_law().draw_pair(&mut rng);
            if side {
                d.x0.push(x0b);
                d.xi.push(1.0 - u);
                d.eta.push(eb);
            } else {
                d.x0.push(x0a);
                d.xi.push(u);
                d.eta.push(ea);
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 200,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Picard tolerance {} must be positive",
                self.tol
            )));
        }
        Ok(())
    }
}

/// One solved configuration of the implicit population equation.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub n: usize,
    pub x0: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub actions: Vec<f64>,
    pub x1: Vec<f64>,
    /// Sup-norm change of the last Picard step.
    pub residual: f64,
    pub picard_iters: usize,
    /// Sup-norm change of every Picard step.
    pub residual_history: Vec<f64>,
}

impl PopulationState {
    /// Largest ratio of consecutive Picard residuals.
    pub fn max_contraction_ratio(&self) -> Option<f64> {
        contraction_ratio(&self.residual_history)
    }
}

pub(crate) fn contraction_ratio(history: &[f64]) -> Option<f64> {
    history
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .reduce(f64::max)
}

/// Solves `x1^i = F^{η^i}_{x0^i}(μ^n, a^i)` with `a^i = α^i(x0^i, ξ^i)`.
pub fn solve_population_state<M: StaticModel + ?Sized>(
    model: &M,
    profile: &[Strategy],
    draws: &Draws,
    cfg: &PicardConfig,
) -> Result<PopulationState> {
    let n = draws.len();
    if profile.len() != n || draws.xi.len() != n || draws.eta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: profile.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("population is empty".into()));
    }
    let actions: Vec<f64> = (0..n)
        .map(|i| profile[i].evaluate(draws.x0[i], draws.xi[i]))
        .collect();
    solve_with_actions(model, draws, actions, None, cfg)
}

/// Picard iteration for fixed actions. Without a warm start, iteration 0
/// evaluates `F` at the measure of the atoms `(x0, x0, a)`.
pub(crate) fn solve_with_actions<M: StaticModel + ?Sized>(
    model: &M,
    draws: &Draws,
    actions: Vec<f64>,
    warm: Option<&[f64]>,
    cfg: &PicardConfig,
) -> Result<PopulationState> {
    cfg.validate()?;
    let n = draws.len();
    let mut summary = vec![0.0; model.summary_len()];
    let mut x1 = match warm {
        Some(w) => w.to_vec(),
        None => {
            model.summarize(
                ProductAtoms::uniform(&draws.x0, &draws.x0, &actions),
                &mut summary,
            );
            (0..n)
                .map(|i| model.transition(draws.eta[i], draws.x0[i], &summary, actions[i]))
                .collect()
        }
    };
    let mut next = vec![0.0; n];
    let mut history = Vec::new();
    for k in 1..=cfg.max_iters {
        model.summarize(
            ProductAtoms::uniform(&draws.x0, &x1, &actions),
            &mut summary,
        );
        let mut res: f64 = 0.0;
        for i in 0..n {
            next[i] = model.transition(draws.eta[i], draws.x0[i], &summary, actions[i]);
            let d = (next[i] - x1[i]).abs();
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("Picard iterate {k}, agent {i}")));
            }
            res = res.max(d);
        }
        std::mem::swap(&mut x1, &mut next);
        history.push(res);
        if res <= cfg.tol {
            return Ok(PopulationState {
                n,
                x0: draws.x0.clone(),
                xi: draws.xi.clone(),
                eta: draws.eta.clone(),
                actions,
                x1,
                residual: res,
                picard_iters: k,
                residual_history: history,
            });
        }
    }
    Err(Error::PicardDiverged {
        iters: cfg.max_iters,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}
