use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::control::{FeedbackControl, PolicyClass};
use super::grid::{MeasureFlow, TimeGrid};
use crate::error::{Error, Result};
use crate::measures::{exact_sum, EmpiricalMeasure, WassersteinOrder};
use crate::model::ContinuousModel;
use crate::rng::{tag, Streams};
use crate::static_game::{batch_se, finite_or_neg_inf, ValueEntry};

pub(crate) mod purpose {
    pub const FLOW: u64 = 1;
    pub const POLICY: u64 = 2;
    pub const VALUE: u64 = 3;
    pub const ENSEMBLE: u64 = 4;
    pub const N_PLAYER: u64 = 5;
}

/// `steps` standard normals for `path`; odd paths mirror their even partner.
pub(crate) fn increments(streams: &Streams, purpose: u64, path: usize, steps: usize) -> Vec<f64> {
    let mut rng = streams.rng(tag::BROWNIAN, &[purpose, (path / 2) as u64]);
    let sign = if path % 2 == 1 { -1.0 } else { 1.0 };
    (0..steps)
        .map(|_| sign * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn initial_states<M: ContinuousModel + ?Sized>(
    model: &M,
    streams: &Streams,
    purpose: u64,
    paths: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(paths);
    for k in 0..paths.div_ceil(2) {
        let (a, b) = model
            .initial_law()
            .draw_pair(&mut streams.rng(tag::INITIAL_STATE, &[purpose, k as u64]));
        out.push(a);
        if out.len() < paths {
            out.push(b);
        }
    }
    out
}

/// One Euler–Maruyama path. `states` has `K + 1` slots, `actions` `K`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn euler_path<M, C>(
    model: &M,
    grid: TimeGrid,
    summaries: &[Vec<f64>],
    x0: f64,
    z: &[f64],
    control: C,
    states: &mut [f64],
    actions: &mut [f64],
) where
    M: ContinuousModel + ?Sized,
    C: Fn(f64, f64) -> f64,
{
    let dt = grid.dt();
    let sdt = dt.sqrt();
    let mut x = x0;
    states[0] = x;
    for k in 0..grid.steps() {
        let t = grid.time(k);
        let a = control(t, x);
        actions[k] = a;
        x = x + model.drift(t, x0, x, &summaries[k], a) * dt + sdt * z[k];
        states[k + 1] = x;
    }
}

/// Terminal state only.
fn euler_terminal<M, C>(
    model: &M,
    grid: TimeGrid,
    summaries: &[Vec<f64>],
    x0: f64,
    z: &[f64],
    control: C,
) -> f64
where
    M: ContinuousModel + ?Sized,
    C: Fn(f64, f64) -> f64,
{
    let dt = grid.dt();
    let sdt = dt.sqrt();
    let mut x = x0;
    for k in 0..grid.steps() {
        let t = grid.time(k);
        x = x + model.drift(t, x0, x, &summaries[k], control(t, x)) * dt + sdt * z[k];
    }
    x
}

pub(crate) fn utility_of_values<M: ContinuousModel + ?Sized>(model: &M, values: &[f64]) -> f64 {
    match EmpiricalMeasure::from_values(values) {
        Ok(law) => finite_or_neg_inf(model.utility(&law)),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Starting points of a path ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Initial {
    Pinned(f64),
    /// Antithetic draws from the model's `μ_0`.
    Law,
}

/// `P` simulated paths, row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
    /// `P × (K + 1)`.
    pub states: Vec<f64>,
    /// `P × K`.
    pub actions: Vec<f64>,
    /// `P × K` standard normal increments.
    pub increments: Vec<f64>,
}

impl PathEnsemble {
    pub fn paths(&self) -> usize {
        self.x0.len()
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let w = self.grid.steps() + 1;
        &self.states[p * w..(p + 1) * w]
    }

    pub fn terminal(&self) -> Vec<f64> {
        (0..self.paths())
            .map(|p| self.path(p)[self.grid.steps()])
            .collect()
    }
}

fn check_flow_grid(flow: &MeasureFlow, grid: TimeGrid) -> Result<()> {
    if flow.grid() != grid {
        return Err(Error::InvalidArgument(format!(
            "flow grid {:?} differs from simulation grid {:?}",
            flow.grid(),
            grid
        )));
    }
    Ok(())
}

/// Euler–Maruyama simulation of the controlled SDE against a fixed flow.
/// Path `p` reads its increments from the substream keyed by `(seed, p)`.
pub fn simulate_mean_field_sde<M: ContinuousModel + ?Sized>(
    model: &M,
    flow: &MeasureFlow,
    control: &FeedbackControl,
    initial: Initial,
    paths: usize,
    grid: TimeGrid,
    seed: u64,
) -> Result<PathEnsemble> {
    if paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    check_flow_grid(flow, grid)?;
    let streams = Streams::new(seed);
    let x0 = match initial {
        Initial::Pinned(v) => vec![v; paths],
        Initial::Law => initial_states(model, &streams, purpose::ENSEMBLE, paths),
    };
    let k = grid.steps();
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let z = increments(&streams, purpose::ENSEMBLE, p, k);
            let mut s = vec![0.0; k + 1];
            let mut a = vec![0.0; k];
            euler_path(
                model,
                grid,
                flow.summaries(),
                x0[p],
                &z,
                |t, x| control.evaluate(t, x0[p], x),
                &mut s,
                &mut a,
            );
            (s, a, z)
        })
        .collect();
    let mut out = PathEnsemble {
        grid,
        x0,
        states: Vec::with_capacity(paths * (k + 1)),
        actions: Vec::with_capacity(paths * k),
        increments: Vec::with_capacity(paths * k),
    };
    for (s, a, z) in rows {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("simulated state".into()));
        }
        out.states.extend(s);
        out.actions.extend(a);
        out.increments.extend(z);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfgConfig {
    /// Particles `N` representing the flow.
    pub paths: usize,
    /// Paths per x0-grid point in every policy evaluation.
    pub eval_paths: usize,
    pub steps: usize,
    pub x0_grid: Vec<f64>,
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub policy_class: PolicyClass,
    pub p: WassersteinOrder,
    pub value_batches: usize,
    pub seed: u64,
}

impl Default for MfgConfig {
    fn default() -> Self {
        Self {
            paths: 10_000,
            eval_paths: 512,
            steps: 50,
            x0_grid: (0..=24).map(|k| -3.0 + 0.25 * k as f64).collect(),
            damping: 0.5,
            tol: 1e-6,
            max_iters: 50,
            policy_class: PolicyClass::default(),
            p: WassersteinOrder::One,
            value_batches: 50,
            seed: 0,
        }
    }
}

impl MfgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.eval_paths == 0 {
            return Err(Error::InvalidArgument(
                "paths and eval_paths must be positive".into(),
            ));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument(
                "time grid needs at least one step".into(),
            ));
        }
        if self.x0_grid.is_empty() || self.x0_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "x0 grid must be nonempty and strictly increasing".into(),
            ));
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
        self.policy_class.validate()
    }

    pub fn grid<M: ContinuousModel + ?Sized>(&self, model: &M) -> Result<TimeGrid> {
        TimeGrid::new(model.horizon(), self.steps)
    }
}

#[derive(Debug, Clone)]
pub struct MfgFlowSolution {
    pub control: FeedbackControl,
    pub flow: MeasureFlow,
    /// Sup over grid times of the paired `W_p` between the returned flow and
    /// the flow it was computed from.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub value_table: Vec<ValueEntry>,
    pub policy_class: String,
    pub p: WassersteinOrder,
}

impl MfgFlowSolution {
    pub fn grid(&self) -> TimeGrid {
        self.flow.grid()
    }

    pub fn value_at(&self, x0: f64) -> Option<ValueEntry> {
        self.value_table
            .iter()
            .min_by(|a, b| (a.x0 - x0).abs().total_cmp(&(b.x0 - x0).abs()))
            .copied()
    }
}

/// Shared increments of every policy evaluation (common random numbers).
struct EvalNoise {
    z: Vec<Vec<f64>>,
}

impl EvalNoise {
    fn new(streams: &Streams, purpose: u64, paths: usize, steps: usize) -> Self {
        Self {
            z: (0..paths)
                .map(|p| increments(streams, purpose, p, steps))
                .collect(),
        }
    }

    fn payoff<M, C>(
        &self,
        model: &M,
        grid: TimeGrid,
        summaries: &[Vec<f64>],
        x0: f64,
        buf: &mut [f64],
        control: C,
    ) -> f64
    where
        M: ContinuousModel + ?Sized,
        C: Fn(f64, f64) -> f64 + Copy,
    {
        for (b, z) in buf.iter_mut().zip(&self.z) {
            *b = euler_terminal(model, grid, summaries, x0, z, control);
        }
        utility_of_values(model, buf)
    }
}

fn improve_linear<M: ContinuousModel + ?Sized>(
    model: &M,
    grid: TimeGrid,
    summaries: &[Vec<f64>],
    noise: &EvalNoise,
    x0: f64,
    (slopes, intercepts, refinements): (&[f64], &[f64], usize),
) -> (f64, f64) {
    let (lo, hi) = model.action_bounds();
    let mut buf = vec![0.0; noise.z.len()];
    let mut eval = |g1: f64, g0: f64| {
        noise.payoff(model, grid, summaries, x0, &mut buf, move |_, x| {
            (g1 * x + g0).clamp(lo, hi)
        })
    };
    let mut best = (f64::NEG_INFINITY, slopes[0], intercepts[0]);
    for &g1 in slopes {
        for &g0 in intercepts {
            let u = eval(g1, g0);
            if u > best.0 {
                best = (u, g1, g0);
            }
        }
    }
    let h = if intercepts.len() > 1 {
        (intercepts[intercepts.len() - 1] - intercepts[0]).abs() / (intercepts.len() - 1) as f64
    } else {
        0.0
    };
    let mut step = h;
    for _ in 0..refinements {
        step /= 2.0;
        let (_, g1, g0) = best;
        for cand in [g0 - step, g0 + step] {
            let u = eval(g1, cand);
            if u > best.0 {
                best = (u, g1, cand);
            }
        }
    }
    (best.1, best.2)
}

#[allow(clippy::too_many_arguments)]
fn improve_table<M: ContinuousModel + ?Sized>(
    model: &M,
    grid: TimeGrid,
    summaries: &[Vec<f64>],
    noise: &EvalNoise,
    x0: f64,
    time_edges: &[f64],
    state_edges: &[f64],
    sweeps: usize,
    start: Vec<usize>,
) -> Vec<usize> {
    let actions = model.actions();
    let sb = state_edges.len() + 1;
    let mut buf = vec![0.0; noise.z.len()];
    let mut cells = start;
    let mut eval = |cells: &[usize]| {
        noise.payoff(model, grid, summaries, x0, &mut buf, |t, x| {
            let ti = time_edges.partition_point(|&e| e <= t);
            let si = state_edges.partition_point(|&e| e <= x);
            actions.get(cells[ti * sb + si])
        })
    };
    let mut best = eval(&cells);
    for _ in 0..sweeps {
        let mut moved = false;
        for c in 0..cells.len() {
            let keep = cells[c];
            let mut winner = keep;
            for k in 0..actions.len() {
                if k == keep {
                    continue;
                }
                cells[c] = k;
                let u = eval(&cells);
                if u > best {
                    best = u;
                    winner = k;
                    moved = true;
                }
            }
            cells[c] = winner;
        }
        if !moved {
            break;
        }
    }
    cells
}

fn time_edges(grid: TimeGrid, bins: usize) -> Vec<f64> {
    (1..bins)
        .map(|k| grid.horizon() * k as f64 / bins as f64)
        .collect()
}

/// Best member of the policy class at every x0-grid point against the flow.
fn improve<M: ContinuousModel + ?Sized>(
    model: &M,
    flow: &MeasureFlow,
    noise: &EvalNoise,
    cfg: &MfgConfig,
    previous: Option<&FeedbackControl>,
) -> Result<FeedbackControl> {
    let grid = flow.grid();
    let summaries = flow.summaries();
    match &cfg.policy_class {
        PolicyClass::LinearGains {
            slopes,
            intercepts,
            refinements,
        } => {
            let gains = cfg
                .x0_grid
                .par_iter()
                .map(|&x0| {
                    improve_linear(
                        model,
                        grid,
                        summaries,
                        noise,
                        x0,
                        (slopes, intercepts, *refinements),
                    )
                })
                .collect();
            FeedbackControl::linear(cfg.x0_grid.clone(), gains, model.action_bounds())
        }
        PolicyClass::Table {
            time_bins,
            state_edges,
            sweeps,
        } => {
            let te = time_edges(grid, *time_bins);
            let per_row = *time_bins * (state_edges.len() + 1);
            let start = |row: usize| -> Vec<usize> {
                match previous {
                    Some(FeedbackControl::Table { cells, .. })
                        if cells.len() == per_row * cfg.x0_grid.len() =>
                    {
                        cells[row * per_row..(row + 1) * per_row].to_vec()
                    }
                    _ => vec![model.actions().midpoint_index(); per_row],
                }
            };
            let rows: Vec<Vec<usize>> = cfg
                .x0_grid
                .par_iter()
                .enumerate()
                .map(|(row, &x0)| {
                    improve_table(
                        model,
                        grid,
                        summaries,
                        noise,
                        x0,
                        &te,
                        state_edges,
                        *sweeps,
                        start(row),
                    )
                })
                .collect();
            FeedbackControl::table(
                cfg.x0_grid.clone(),
                te,
                state_edges.clone(),
                rows.concat(),
                model.actions().clone(),
            )
        }
    }
}

struct Particles {
    x0: Vec<f64>,
    z: Vec<Vec<f64>>,
}

/// States of every particle under `control` against `flow`, by grid time.
fn push<M: ContinuousModel + ?Sized>(
    model: &M,
    particles: &Particles,
    flow: &MeasureFlow,
    control: &FeedbackControl,
) -> Result<Vec<Vec<f64>>> {
    let grid = flow.grid();
    let k = grid.steps();
    let paths: Vec<Vec<f64>> = (0..particles.x0.len())
        .into_par_iter()
        .map(|p| {
            let x0 = particles.x0[p];
            let mut s = vec![0.0; k + 1];
            let mut a = vec![0.0; k];
            euler_path(
                model,
                grid,
                flow.summaries(),
                x0,
                &particles.z[p],
                |t, x| control.evaluate(t, x0, x),
                &mut s,
                &mut a,
            );
            s
        })
        .collect();
    let mut states = vec![Vec::with_capacity(paths.len()); k + 1];
    for path in &paths {
        for (col, &v) in states.iter_mut().zip(path) {
            if !v.is_finite() {
                return Err(Error::NonFinite("flow particle state".into()));
            }
            col.push(v);
        }
    }
    Ok(states)
}

/// `sup_k` of the `W_p` bound from pairing particle `j` with particle `j`.
fn flow_distance(p: WassersteinOrder, a: &MeasureFlow, b: &[Vec<f64>]) -> f64 {
    (0..b.len())
        .map(|k| {
            let x = a.states(k);
            let y = &b[k];
            let cost =
                exact_sum(x.iter().zip(y).map(|(u, v)| p.cost((u - v).abs()))) / x.len() as f64;
            p.distance_from_cost(cost)
        })
        .fold(0.0, f64::max)
}

fn particles<M: ContinuousModel + ?Sized>(
    model: &M,
    streams: &Streams,
    n: usize,
    steps: usize,
) -> Particles {
    Particles {
        x0: initial_states(model, streams, purpose::FLOW, n),
        z: (0..n)
            .map(|p| increments(streams, purpose::FLOW, p, steps))
            .collect(),
    }
}

/// Damped fixed-point iteration for a mean field flow.
///
/// Iteration 0 improves the policy against the frozen flow `X_t = X_0` and
/// adopts the resulting flow without damping. Each later iteration improves
/// the policy against the current flow `μ^(k)`, simulates the particles under
/// it, and stops when the simulated flow is within `tol` of `μ^(k)`;
/// otherwise each antithetic particle pair adopts its new path with
/// probability `damping`.
pub fn solve_mfg_flow<M: ContinuousModel + ?Sized>(
    model: &M,
    cfg: &MfgConfig,
) -> Result<MfgFlowSolution> {
    cfg.validate()?;
    let grid = cfg.grid(model)?;
    let streams = Streams::new(cfg.seed);
    let parts = particles(model, &streams, cfg.paths, grid.steps());
    let noise = EvalNoise::new(&streams, purpose::POLICY, cfg.eval_paths, grid.steps());
    let mut flow = MeasureFlow::frozen(model, grid, parts.x0.clone())?;
    let mut control: Option<FeedbackControl> = None;
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, FeedbackControl, MeasureFlow)> = None;
    for k in 0..=cfg.max_iters {
        let next_control = improve(model, &flow, &noise, cfg, control.as_ref())?;
        let states = push(model, &parts, &flow, &next_control)?;
        let res = flow_distance(cfg.p, &flow, &states);
        if !res.is_finite() {
            return Err(Error::NonFinite(format!("flow residual at iteration {k}")));
        }
        history.push(res);
        let image = MeasureFlow::from_states(model, grid, parts.x0.clone(), states)?;
        if k > 0 {
            if res <= cfg.tol {
                return finish(
                    model,
                    cfg,
                    next_control,
                    image,
                    res,
                    history,
                    k,
                    true,
                    &streams,
                );
            }
            if best.as_ref().is_none_or(|b| res < b.0) {
                best = Some((res, k, next_control.clone(), image.clone()));
            }
            let mut mixed: Vec<Vec<f64>> = (0..=grid.steps())
                .map(|t| flow.states(t).to_vec())
                .collect();
            for pair in 0..cfg.paths.div_ceil(2) {
                if streams
                    .rng(tag::MIXING, &[k as u64, pair as u64])
                    .random::<f64>()
                    < cfg.damping
                {
                    for (t, col) in mixed.iter_mut().enumerate() {
                        for j in 2 * pair..(2 * pair + 2).min(cfg.paths) {
                            col[j] = image.states(t)[j];
                        }
                    }
                }
            }
            flow = MeasureFlow::from_states(model, grid, parts.x0.clone(), mixed)?;
        } else {
            flow = image;
        }
        control = Some(next_control);
    }
    let (res, k, control, image) = best.expect("at least one damped iteration ran");
    finish(model, cfg, control, image, res, history, k, false, &streams)
}

#[allow(clippy::too_many_arguments)]
fn finish<M: ContinuousModel + ?Sized>(
    model: &M,
    cfg: &MfgConfig,
    control: FeedbackControl,
    flow: MeasureFlow,
    residual: f64,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    streams: &Streams,
) -> Result<MfgFlowSolution> {
    let value_table = value_table(model, &control, &flow, cfg, streams);
    Ok(MfgFlowSolution {
        control,
        flow,
        residual,
        residual_history: history,
        iterations,
        converged,
        value_table,
        policy_class: cfg.policy_class.describe(),
        p: cfg.p,
    })
}

/// `V̂(x0)` on the x0 grid from fresh paths, with a batch standard error.
fn value_table<M: ContinuousModel + ?Sized>(
    model: &M,
    control: &FeedbackControl,
    flow: &MeasureFlow,
    cfg: &MfgConfig,
    streams: &Streams,
) -> Vec<ValueEntry> {
    let grid = flow.grid();
    let noise = EvalNoise::new(streams, purpose::VALUE, cfg.eval_paths, grid.steps());
    cfg.x0_grid
        .par_iter()
        .map(|&x0| {
            let xt: Vec<f64> = noise
                .z
                .iter()
                .map(|z| {
                    euler_terminal(model, grid, flow.summaries(), x0, z, |t, x| {
                        control.evaluate(t, x0, x)
                    })
                })
                .collect();
            let value = utility_of_values(model, &xt);
            let se = batch_se(xt.len(), cfg.value_batches, |r| {
                utility_of_values(model, &xt[r])
            });
            ValueEntry { x0, value, se }
        })
        .collect()
}

/// Mean field consistent flow of a fixed control, found by iterating the
/// push-forward alone.
pub fn flow_of_control<M: ContinuousModel + ?Sized>(
    model: &M,
    control: &FeedbackControl,
    cfg: &MfgConfig,
) -> Result<MfgFlowSolution> {
    cfg.validate()?;
    let grid = cfg.grid(model)?;
    let streams = Streams::new(cfg.seed);
    let parts = particles(model, &streams, cfg.paths, grid.steps());
    let mut flow = MeasureFlow::frozen(model, grid, parts.x0.clone())?;
    let mut history = Vec::new();
    for k in 1..=cfg.max_iters {
        let states = push(model, &parts, &flow, control)?;
        let res = flow_distance(cfg.p, &flow, &states);
        history.push(res);
        flow = MeasureFlow::from_states(model, grid, parts.x0.clone(), states)?;
        if res <= cfg.tol || k == cfg.max_iters {
            return finish(
                model,
                cfg,
                control.clone(),
                flow,
                res,
                history,
                k,
                res <= cfg.tol,
                &streams,
            );
        }
    }
    unreachable!("max_iters >= 1")
}
