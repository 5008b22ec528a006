use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use super::flow::{euler_path, purpose, utility_of_values, MfgFlowSolution};
use super::grid::TimeGrid;
use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, Split};
use crate::model::ContinuousModel;
use crate::rng::{tag, Streams};
use crate::static_game::{batch_se, replicate, DeviationReport, GainEstimate, MIN_BATCHES};

/// One realization of the open-loop `n`-player system with its shadow
/// states. Per-agent arrays are row-major by agent.
#[derive(Debug, Clone, PartialEq)]
pub struct NPlayerRun {
    pub n: usize,
    pub grid: TimeGrid,
    pub replication: u64,
    pub x0: Vec<f64>,
    /// `n × (K + 1)` states of the interacting system.
    pub actual: Vec<f64>,
    /// `n × (K + 1)` mean field states driven by the same increments.
    pub shadow: Vec<f64>,
    /// `n × K` open-loop actions, read off the shadow states.
    pub actions: Vec<f64>,
    /// Model summary of the empirical measure at every grid time.
    pub summaries: Vec<Vec<f64>>,
}

impl NPlayerRun {
    fn width(&self) -> usize {
        self.grid.steps() + 1
    }

    pub fn actual_path(&self, i: usize) -> &[f64] {
        &self.actual[i * self.width()..(i + 1) * self.width()]
    }

    pub fn shadow_path(&self, i: usize) -> &[f64] {
        &self.shadow[i * self.width()..(i + 1) * self.width()]
    }

    pub fn action(&self, i: usize, k: usize) -> f64 {
        self.actions[i * self.grid.steps() + k]
    }

    /// Empirical measure of `(X_0^i, X_{t_k}^i)`.
    pub fn empirical_measure(&self, k: usize) -> EmpiricalMeasure {
        let mut pts = Vec::with_capacity(2 * self.n);
        for i in 0..self.n {
            pts.extend_from_slice(&[self.x0[i], self.actual_path(i)[k]]);
        }
        EmpiricalMeasure::uniform(pts, 2)
            .and_then(|m| m.with_split(Split::new(1, 1, 0)))
            .expect("population is nonempty")
    }

    pub fn terminal_marginal(&self) -> EmpiricalMeasure {
        let k = self.grid.steps();
        let xs: Vec<f64> = (0..self.n).map(|i| self.actual_path(i)[k]).collect();
        EmpiricalMeasure::from_values(&xs).expect("population is nonempty")
    }

    /// Rows `agent, path, step, t, x, shadow_x, action`; the action at the
    /// last grid time is left empty. `header` controls the header row and
    /// each `(column, value)` tag is appended to every row.
    pub fn write_trajectories<W: Write>(
        &self,
        out: W,
        header: bool,
        tags: &[(&str, String)],
    ) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        if header {
            let mut cols = TRAJECTORY_COLUMNS.to_vec();
            cols.extend(tags.iter().map(|t| t.0));
            w.write_record(&cols)?;
        }
        let k = self.grid.steps();
        for i in 0..self.n {
            for s in 0..=k {
                let action = if s < k {
                    format!("{:?}", self.action(i, s))
                } else {
                    String::new()
                };
                let mut row = vec![
                    i.to_string(),
                    self.replication.to_string(),
                    s.to_string(),
                    format!("{:?}", self.grid.time(s)),
                    format!("{:?}", self.actual_path(i)[s]),
                    format!("{:?}", self.shadow_path(i)[s]),
                    action,
                ];
                row.extend(tags.iter().map(|t| t.1.clone()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 7] = ["agent", "path", "step", "t", "x", "shadow_x", "action"];

struct AgentDraws {
    x0: Vec<f64>,
    /// `n` rows of `K` increments.
    z: Vec<Vec<f64>>,
}

/// Agent `j` reads the substream `(replication / 2, j)`; odd replications
/// take the antithetic half. The first `n` agents of a larger population see
/// the same draws.
fn agent_draws<M: ContinuousModel + ?Sized>(
    model: &M,
    streams: &Streams,
    replication: u64,
    n: usize,
    steps: usize,
) -> AgentDraws {
    let side = replication % 2 == 1;
    let mut d = AgentDraws {
        x0: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
    };
    for j in 0..n {
        let mut rng = streams.rng(
            tag::BROWNIAN,
            &[purpose::N_PLAYER, replication / 2, j as u64],
        );
        let (a, b) = model.initial_law().draw_pair(&mut rng);
        let sign = if side { -1.0 } else { 1.0 };
        d.x0.push(if side { b } else { a });
        d.z.push(
            (0..steps)
                .map(|_| sign * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
    }
    d
}

/// Shadow paths and the open-loop actions they induce, per agent.
fn shadows<M: ContinuousModel + ?Sized>(
    model: &M,
    mfg: &MfgFlowSolution,
    d: &AgentDraws,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let grid = mfg.grid();
    let k = grid.steps();
    let mut states = Vec::with_capacity(d.x0.len());
    let mut actions = Vec::with_capacity(d.x0.len());
    for (i, &x0) in d.x0.iter().enumerate() {
        let mut s = vec![0.0; k + 1];
        let mut a = vec![0.0; k];
        euler_path(
            model,
            grid,
            mfg.flow.summaries(),
            x0,
            &d.z[i],
            |t, x| mfg.control.evaluate(t, x0, x),
            &mut s,
            &mut a,
        );
        states.push(s);
        actions.push(a);
    }
    (states, actions)
}

/// The interacting system with prescribed actions; returns the states by
/// grid time and the empirical summaries.
fn interact<M: ContinuousModel + ?Sized>(
    model: &M,
    grid: TimeGrid,
    x0: &[f64],
    z: &[Vec<f64>],
    actions: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = x0.len();
    let dt = grid.dt();
    let sdt = dt.sqrt();
    let mut cols = Vec::with_capacity(grid.steps() + 1);
    let mut summaries = Vec::with_capacity(grid.steps() + 1);
    cols.push(x0.to_vec());
    for k in 0..=grid.steps() {
        let mut s = vec![0.0; model.summary_len()];
        model.summarize(x0, &cols[k], &mut s);
        if k == grid.steps() {
            summaries.push(s);
            break;
        }
        let t = grid.time(k);
        let cur = &cols[k];
        let next: Vec<f64> = (0..n)
            .map(|i| cur[i] + model.drift(t, x0[i], cur[i], &s, actions[i][k]) * dt + sdt * z[i][k])
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "n-player state at step {}",
                k + 1
            )));
        }
        summaries.push(s);
        cols.push(next);
    }
    Ok((cols, summaries))
}

fn check_grid(mfg: &MfgFlowSolution, grid: TimeGrid) -> Result<()> {
    if mfg.grid() != grid {
        return Err(Error::InvalidArgument(format!(
            "grid {:?} differs from the flow grid {:?}",
            grid,
            mfg.grid()
        )));
    }
    Ok(())
}

/// Open-loop `n`-player system induced by a mean field solution.
///
/// Every agent carries a shadow state that follows the mean field dynamics
/// against `μ̂` under `α̂`, driven by the agent's own increments. The agent
/// plays `α̂(t_k, X_0^i, X̄_k^i)` read off its shadow, while its actual state
/// evolves against the empirical measure of the population.
pub fn simulate_n_player_openloop<M: ContinuousModel + ?Sized>(
    model: &M,
    mfg: &MfgFlowSolution,
    n: usize,
    grid: TimeGrid,
    seed: u64,
    replication: u64,
    pin: Option<(usize, f64)>,
) -> Result<NPlayerRun> {
    check_grid(mfg, grid)?;
    if n == 0 {
        return Err(Error::InvalidArgument("population is empty".into()));
    }
    let mut d = agent_draws(model, &Streams::new(seed), replication, n, grid.steps());
    if let Some((i, x0)) = pin {
        if i >= n {
            return Err(Error::InvalidArgument(format!(
                "pinned agent {i} outside a population of {n}"
            )));
        }
        d.x0[i] = x0;
    }
    let (shadow, actions) = shadows(model, mfg, &d);
    let (cols, summaries) = interact(model, grid, &d.x0, &d.z, &actions)?;
    let mut actual = Vec::with_capacity(n * (grid.steps() + 1));
    for i in 0..n {
        actual.extend(cols.iter().map(|c| c[i]));
    }
    Ok(NPlayerRun {
        n,
        grid,
        replication,
        x0: d.x0,
        actual,
        shadow: shadow.concat(),
        actions: actions.concat(),
        summaries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtDeviationConfig {
    pub replications: usize,
    pub batches: usize,
    /// Constant offsets added to the open-loop action, clipped to the action
    /// bounds. Must contain 0, the incumbent.
    pub offsets: Vec<f64>,
    pub seed: u64,
}

impl Default for CtDeviationConfig {
    fn default() -> Self {
        Self {
            replications: 2000,
            batches: 50,
            offsets: (0..=20).map(|k| -0.5 + 0.05 * k as f64).collect(),
            seed: 0,
        }
    }
}

impl CtDeviationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.offsets.contains(&0.0) {
            return Err(Error::InvalidArgument(
                "offset grid must contain the incumbent offset 0".into(),
            ));
        }
        if self.offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::NonFinite("deviation offset".into()));
        }
        let usable = self.batches.min(self.replications / 2);
        if usable < MIN_BATCHES {
            return Err(Error::InvalidArgument(format!(
                "{} replications in {} batches leave fewer than {MIN_BATCHES} batches of antithetic pairs",
                self.replications, self.batches
            )));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        if self.offsets.len() == 1 {
            "incumbent".into()
        } else {
            format!("offsets({})", self.offsets.len())
        }
    }
}

struct RepOut {
    /// `X_T^0` per offset.
    terminal: Vec<f64>,
    shadow: f64,
}

/// Gain and gap of agent 0 pinned at `x0`.
fn pinned_gain<M: ContinuousModel + ?Sized>(
    model: &M,
    mfg: &MfgFlowSolution,
    n: usize,
    x0: f64,
    cfg: &CtDeviationConfig,
) -> Result<GainEstimate> {
    let grid = mfg.grid();
    let streams = Streams::new(cfg.seed);
    let (lo, hi) = model.action_bounds();
    let m = cfg.replications;
    let incumbent = cfg
        .offsets
        .iter()
        .position(|&o| o == 0.0)
        .expect("validated");
    let reps = replicate(m, |r| {
        let mut d = agent_draws(model, &streams, r as u64, n, grid.steps());
        d.x0[0] = x0;
        let (shadow, mut actions) = shadows(model, mfg, &d);
        let base = actions[0].clone();
        let mut terminal = Vec::with_capacity(cfg.offsets.len());
        for &off in &cfg.offsets {
            for (a, b) in actions[0].iter_mut().zip(&base) {
                *a = if off == 0.0 {
                    *b
                } else {
                    (b + off).clamp(lo, hi)
                };
            }
            let (cols, _) = interact(model, grid, &d.x0, &d.z, &actions)?;
            terminal.push(cols[grid.steps()][0]);
        }
        Ok(RepOut {
            terminal,
            shadow: shadow[0][grid.steps()],
        })
    })?;
    let column = |j: usize, range: std::ops::Range<usize>| -> Vec<f64> {
        reps[range].iter().map(|o| o.terminal[j]).collect()
    };
    let values: Vec<f64> = (0..cfg.offsets.len())
        .map(|j| utility_of_values(model, &column(j, 0..m)))
        .collect();
    let incumbent_value = values[incumbent];
    let mut best = incumbent;
    for (j, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = j;
        }
    }
    let (gain, gain_se, best_map) = if best == incumbent {
        (0.0, 0.0, None)
    } else {
        let se = batch_se(m, cfg.batches, |r| {
            utility_of_values(model, &column(best, r.clone()))
                - utility_of_values(model, &column(incumbent, r))
        });
        (
            values[best] - incumbent_value,
            se,
            Some(vec![cfg.offsets[best]]),
        )
    };
    let shadows: Vec<f64> = reps.iter().map(|o| o.shadow).collect();
    let mf = utility_of_values(model, &shadows);
    let gap_se = batch_se(m, cfg.batches, |r| {
        utility_of_values(model, &column(incumbent, r.clone()))
            - utility_of_values(model, &shadows[r])
    });
    Ok(GainEstimate {
        x0,
        gain,
        gain_se,
        incumbent_value,
        best_value: values[best],
        best_map,
        gap: Some((incumbent_value - mf).abs()),
        gap_se: Some(gap_se),
        mean_field_value: Some(mf),
        picard_max_ratio: None,
        picard_solves: 0,
        picard_max_iters: 0,
    })
}

/// Deviation gains of constant-offset open-loop deviations and mean field
/// gaps over an evaluation grid, each point pinned as agent 0. The gap
/// compares the agent's payoff with the payoff of its own shadow state on the
/// same draws.
#[allow(clippy::too_many_arguments)]
pub fn ct_deviation_report<M: ContinuousModel + ?Sized>(
    model: &M,
    mfg: &MfgFlowSolution,
    n: usize,
    delta: Option<f64>,
    epsilon: f64,
    x0_eval_grid: &[f64],
    grid: TimeGrid,
    cfg: &CtDeviationConfig,
) -> Result<DeviationReport> {
    cfg.validate()?;
    check_grid(mfg, grid)?;
    if n == 0 {
        return Err(Error::InvalidArgument("population is empty".into()));
    }
    if x0_eval_grid.is_empty() {
        return Err(Error::InvalidArgument("evaluation grid is empty".into()));
    }
    if let Some(d) = delta {
        if !(d > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "delta = {d} must be positive"
            )));
        }
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    let per_agent = x0_eval_grid
        .iter()
        .map(|&x0| pinned_gain(model, mfg, n, x0, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(DeviationReport::from_estimates(
        n,
        delta,
        epsilon,
        cfg.seed,
        cfg.replications,
        cfg.describe(),
        per_agent,
    ))
}
