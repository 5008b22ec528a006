use rand::Rng;
use rayon::prelude::*;

use super::estimate::{batch_se, payoff_of_values};
use super::strategy::uniform_xi_edges;
use super::Strategy;
use crate::error::{Error, Result};
use crate::measures::{exact_sum, EmpiricalMeasure, Split, WassersteinOrder};
use crate::model::{ProductAtoms, StaticModel};
use crate::rng::{tag, Streams};

#[derive(Debug, Clone, PartialEq)]
pub struct MfeConfig {
    /// Particles `N` representing the equilibrium measure.
    pub particles: usize,
    /// Noise draws per best-response payoff evaluation.
    pub br_samples: usize,
    pub x0_grid: Vec<f64>,
    pub xi_bins: usize,
    /// Probability with which each antithetic particle pair adopts its
    /// updated state in a damped step.
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub p: WassersteinOrder,
    /// Cap of the action part of the ground metric.
    pub action_cap: f64,
    pub value_batches: usize,
    pub seed: u64,
}

impl Default for MfeConfig {
    fn default() -> Self {
        Self {
            particles: 10_000,
            br_samples: 2048,
            x0_grid: (0..=40).map(|k| -4.0 + 0.2 * k as f64).collect(),
            xi_bins: 1,
            damping: 0.5,
            tol: 1e-8,
            max_iters: 100,
            p: WassersteinOrder::One,
            action_cap: 1.0,
            value_batches: 50,
            seed: 0,
        }
    }
}

impl MfeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.br_samples == 0 {
            return Err(Error::InvalidArgument(
                "particles and br_samples must be positive".into(),
            ));
        }
        if self.x0_grid.is_empty() {
            return Err(Error::InvalidArgument("x0 grid is empty".into()));
        }
        if self.x0_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "x0 grid must be strictly increasing".into(),
            ));
        }
        if self.xi_bins == 0 {
            return Err(Error::InvalidArgument("need at least one xi bin".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping {} outside (0, 1]",
                self.damping
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.action_cap > 0.0) {
            return Err(Error::InvalidArgument("action cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEntry {
    pub x0: f64,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct MfeSolution {
    pub strategy: Strategy,
    /// Particles `(X_0, ξ, η)` and their equilibrium `(X_1, a)`.
    pub x0: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub x1: Vec<f64>,
    pub actions: Vec<f64>,
    /// Model summary of `μ̂`.
    pub summary: Vec<f64>,
    pub fixed_point_residual: f64,
    pub residual_history: Vec<f64>,
    /// Best-response iterations after the initial push.
    pub br_iterations: usize,
    pub converged: bool,
    pub value_table: Vec<ValueEntry>,
    pub p: WassersteinOrder,
}

impl MfeSolution {
    pub fn particle_count(&self) -> usize {
        self.x0.len()
    }

    /// `μ̂` as a measure on `X × X × A`.
    pub fn mu_hat(&self) -> EmpiricalMeasure {
        let mut pts = Vec::with_capacity(3 * self.x0.len());
        for i in 0..self.x0.len() {
            pts.extend_from_slice(&[self.x0[i], self.x1[i], self.actions[i]]);
        }
        EmpiricalMeasure::uniform(pts, 3)
            .and_then(|m| m.with_split(Split::new(1, 1, 1)))
            .expect("particle set is nonempty")
    }

    /// Value-table entry of the grid point nearest to `x0`.
    pub fn value_at(&self, x0: f64) -> Option<ValueEntry> {
        self.value_table
            .iter()
            .min_by(|a, b| (a.x0 - x0).abs().total_cmp(&(b.x0 - x0).abs()))
            .copied()
    }
}

struct Particles {
    x0: Vec<f64>,
    xi: Vec<f64>,
    eta: Vec<f64>,
}

/// `n` antithetic draws of `(X_0, ξ, η)` from the substream family `purpose`.
fn draw_particles<M: StaticModel + ?Sized>(
    model: &M,
    n: usize,
    streams: &Streams,
    purpose: u64,
) -> Particles {
    let mut p = Particles {
        x0: Vec::with_capacity(n),
        xi: Vec::with_capacity(n),
        eta: Vec::with_capacity(n),
    };
    for k in 0..n.div_ceil(2) {
        let mut rng = streams.rng(purpose, &[k as u64]);
        let (xa, xb) = model.initial_law().draw_pair(&mut rng);
        let u: f64 = rng.random();
        let (ea, eb) = model.noise_law().draw_pair(&mut rng);
        p.x0.push(xa);
        p.xi.push(u);
        p.eta.push(ea);
        if p.x0.len() < n {
            p.x0.push(xb);
            p.xi.push(1.0 - u);
            p.eta.push(eb);
        }
    }
    p
}

fn noise_draws<M: StaticModel + ?Sized>(model: &M, n: usize, streams: &Streams) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n.div_ceil(2) {
        let (a, b) = model
            .noise_law()
            .draw_pair(&mut streams.rng(tag::BEST_RESPONSE, &[k as u64]));
        out.push(a);
        if out.len() < n {
            out.push(b);
        }
    }
    out
}

/// Pointwise best response to a measure with the given summary, one action
/// per x0-grid point (identical across ξ bins); ties go to the lowest index.
fn best_response<M: StaticModel + ?Sized>(
    model: &M,
    summary: &[f64],
    noise: &[f64],
    cfg: &MfeConfig,
) -> Result<Strategy> {
    let grid = model.actions();
    let rows: Vec<usize> = cfg
        .x0_grid
        .par_iter()
        .map(|&x0| {
            let mut buf = vec![0.0; noise.len()];
            let mut best = (f64::NEG_INFINITY, 0usize);
            for k in 0..grid.len() {
                let a = grid.get(k);
                for (b, &e) in buf.iter_mut().zip(noise) {
                    *b = model.transition(e, x0, summary, a);
                }
                let u = payoff_of_values(model, &buf);
                if u > best.0 {
                    best = (u, k);
                }
            }
            best.1
        })
        .collect();
    let bins = cfg.xi_bins;
    let cells = rows
        .iter()
        .flat_map(|&k| std::iter::repeat_n(k, bins))
        .collect();
    Strategy::table(
        cfg.x0_grid.clone(),
        uniform_xi_edges(bins),
        cells,
        grid.clone(),
    )
}

fn push<M: StaticModel + ?Sized>(
    model: &M,
    p: &Particles,
    summary: &[f64],
    strategy: &Strategy,
) -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> =
        p.x0.iter()
            .zip(&p.xi)
            .map(|(&x, &u)| strategy.evaluate(x, u))
            .collect();
    let x1 = (0..p.x0.len())
        .map(|i| model.transition(p.eta[i], p.x0[i], summary, a[i]))
        .collect();
    (x1, a)
}

/// Upper bound on `W_p` between two particle measures from the coupling that
/// pairs particle `i` with particle `i`.
pub(crate) fn paired_distance(
    p: WassersteinOrder,
    cap: f64,
    x1: &[f64],
    a: &[f64],
    y1: &[f64],
    b: &[f64],
) -> f64 {
    let n = x1.len() as f64;
    let cost = exact_sum((0..x1.len()).map(|i| {
        let da = (a[i] - b[i]).abs().min(cap);
        let dx = x1[i] - y1[i];
        p.cost((dx * dx + da * da).sqrt())
    })) / n;
    p.distance_from_cost(cost)
}

fn summarize<M: StaticModel + ?Sized>(model: &M, x0: &[f64], x1: &[f64], a: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; model.summary_len()];
    model.summarize(ProductAtoms::uniform(x0, x1, a), &mut s);
    s
}

/// Damped best-response iteration for a mean field equilibrium.
///
/// Iteration 0 pushes the particles through the best response to the
/// measure of `(x0, x0, a_mid)` without damping. Each later iteration
/// computes `T(μ^(k))`; if its paired distance to `μ^(k)` is within `tol`
/// the image is returned, otherwise every antithetic particle pair moves to
/// its image with probability `damping`.
pub fn solve_mfe<M: StaticModel + ?Sized>(model: &M, cfg: &MfeConfig) -> Result<MfeSolution> {
    cfg.validate()?;
    let streams = Streams::new(cfg.seed);
    let particles = draw_particles(model, cfg.particles, &streams, tag::PARTICLES);
    let noise = noise_draws(model, cfg.br_samples, &streams);
    let a_mid = vec![model.actions().get(model.actions().midpoint_index()); cfg.particles];
    let mut summary = summarize(model, &particles.x0, &particles.x0, &a_mid);

    let mut history = Vec::new();
    let mut current: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut best: Option<(f64, usize, Strategy, Vec<f64>, Vec<f64>)> = None;
    for k in 0..=cfg.max_iters {
        let strategy = best_response(model, &summary, &noise, cfg)?;
        let (x1, a) = push(model, &particles, &summary, &strategy);
        let (old_x1, old_a) = match &current {
            Some((x, a)) => (x.as_slice(), a.as_slice()),
            None => (particles.x0.as_slice(), a_mid.as_slice()),
        };
        let res = paired_distance(cfg.p, cfg.action_cap, old_x1, old_a, &x1, &a);
        if !res.is_finite() {
            return Err(Error::NonFinite(format!(
                "fixed-point residual at iteration {k}"
            )));
        }
        history.push(res);
        if k > 0 {
            if res <= cfg.tol {
                return finish(
                    model, cfg, particles, strategy, x1, a, res, history, k, true,
                );
            }
            if best.as_ref().is_none_or(|b| res < b.0) {
                best = Some((res, k, strategy.clone(), x1.clone(), a.clone()));
            }
        }
        let next = match current.take() {
            None => (x1, a),
            Some((mut ox, mut oa)) => {
                for pair in 0..ox.len().div_ceil(2) {
                    let take = streams
                        .rng(tag::MIXING, &[k as u64, pair as u64])
                        .random::<f64>()
                        < cfg.damping;
                    if take {
                        for i in 2 * pair..(2 * pair + 2).min(ox.len()) {
                            ox[i] = x1[i];
                            oa[i] = a[i];
                        }
                    }
                }
                (ox, oa)
            }
        };
        summary = summarize(model, &particles.x0, &next.0, &next.1);
        current = Some(next);
    }
    let (res, k, strategy, x1, a) = best.expect("at least one damped iteration ran");
    finish(
        model, cfg, particles, strategy, x1, a, res, history, k, false,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish<M: StaticModel + ?Sized>(
    model: &M,
    cfg: &MfeConfig,
    particles: Particles,
    strategy: Strategy,
    x1: Vec<f64>,
    actions: Vec<f64>,
    residual: f64,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
) -> Result<MfeSolution> {
    let summary = summarize(model, &particles.x0, &x1, &actions);
    let value_table = value_table(model, &strategy, &summary, cfg);
    Ok(MfeSolution {
        strategy,
        x0: particles.x0,
        xi: particles.xi,
        eta: particles.eta,
        x1,
        actions,
        summary,
        fixed_point_residual: residual,
        residual_history: history,
        br_iterations: iterations,
        converged,
        value_table,
        p: cfg.p,
    })
}

/// `V̂(x0, μ̂)` on the x0 grid from `N` fresh draws of `(ξ, η)`, with a batch
/// standard error.
fn value_table<M: StaticModel + ?Sized>(
    model: &M,
    strategy: &Strategy,
    summary: &[f64],
    cfg: &MfeConfig,
) -> Vec<ValueEntry> {
    let streams = Streams::new(cfg.seed);
    let fresh = draw_particles(model, cfg.particles, &streams, tag::VALUE_TABLE);
    cfg.x0_grid
        .par_iter()
        .map(|&x0| {
            let x1: Vec<f64> = (0..fresh.eta.len())
                .map(|j| {
                    model.transition(
                        fresh.eta[j],
                        x0,
                        summary,
                        strategy.evaluate(x0, fresh.xi[j]),
                    )
                })
                .collect();
            let value = payoff_of_values(model, &x1);
            let se = batch_se(x1.len(), cfg.value_batches, |r| {
                payoff_of_values(model, &x1[r])
            });
            ValueEntry { x0, value, se }
        })
        .collect()
}

/// One application of the best-response operator to `μ̂`, returned as the
/// paired distance moved.
pub fn operator_defect<M: StaticModel + ?Sized>(
    model: &M,
    sol: &MfeSolution,
    cfg: &MfeConfig,
) -> Result<f64> {
    cfg.validate()?;
    let streams = Streams::new(cfg.seed);
    let noise = noise_draws(model, cfg.br_samples, &streams);
    let strategy = best_response(model, &sol.summary, &noise, cfg)?;
    let particles = Particles {
        x0: sol.x0.clone(),
        xi: sol.xi.clone(),
        eta: sol.eta.clone(),
    };
    let (x1, a) = push(model, &particles, &sol.summary, &strategy);
    Ok(paired_distance(
        cfg.p,
        cfg.action_cap,
        &sol.x1,
        &sol.actions,
        &x1,
        &a,
    ))
}

/// Mean field consistent measure of a fixed strategy, found by iterating the
/// push-forward alone. Used for closed-form strategies.
pub fn mean_field_of_strategy<M: StaticModel + ?Sized>(
    model: &M,
    strategy: &Strategy,
    cfg: &MfeConfig,
) -> Result<MfeSolution> {
    cfg.validate()?;
    let streams = Streams::new(cfg.seed);
    let particles = draw_particles(model, cfg.particles, &streams, tag::PARTICLES);
    let mut x1 = particles.x0.clone();
    let a: Vec<f64> = particles
        .x0
        .iter()
        .zip(&particles.xi)
        .map(|(&x, &u)| strategy.evaluate(x, u))
        .collect();
    let mut history = Vec::new();
    for k in 1..=cfg.max_iters {
        let summary = summarize(model, &particles.x0, &x1, &a);
        let (next, _) = push(model, &particles, &summary, strategy);
        let res = paired_distance(cfg.p, cfg.action_cap, &x1, &a, &next, &a);
        history.push(res);
        x1 = next;
        if res <= cfg.tol {
            return finish(
                model,
                cfg,
                particles,
                strategy.clone(),
                x1,
                a,
                res,
                history,
                k,
                true,
            );
        }
    }
    let res = *history.last().expect("max_iters >= 1");
    finish(
        model,
        cfg,
        particles,
        strategy.clone(),
        x1,
        a,
        res,
        history,
        cfg.max_iters,
        false,
    )
}
