use std::fmt;
use std::io::Write;

use super::estimate::{batch_se, payoff_of_values, replicate};
use super::mfe::MfeSolution;
use super::population::{solve_with_actions, Draws, PicardConfig};
use super::strategy::bin_of;
use super::Strategy;
use crate::error::{Error, Result};
use crate::model::StaticModel;
use crate::rng::Streams;

/// Candidate deviations of a single agent.
#[derive(Debug, Clone, PartialEq)]
pub enum DeviationClass {
    /// Only the incumbent strategy; every gain is zero.
    Incumbent,
    /// Maps of the agent's own `ξ` bin (the bins of the incumbent) to
    /// actions within `window` grid steps of the incumbent's action in that
    /// bin, or to any action when `window` is `None`. The class is
    /// enumerated when it has at most `max_enumeration` members and searched
    /// by coordinate ascent over bins otherwise.
    OwnInformation {
        window: Option<usize>,
        max_enumeration: usize,
    },
}

impl DeviationClass {
    pub fn describe(&self) -> String {
        match self {
            DeviationClass::Incumbent => "incumbent".into(),
            DeviationClass::OwnInformation { window, .. } => match window {
                Some(w) => format!("own_information(window={w})"),
                None => "own_information(all)".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationConfig {
    pub replications: usize,
    pub batches: usize,
    pub class: DeviationClass,
    pub picard: PicardConfig,
    pub seed: u64,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        Self {
            replications: 2000,
            batches: 50,
            class: DeviationClass::OwnInformation {
                window: Some(10),
                max_enumeration: 10_000,
            },
            picard: PicardConfig::default(),
            seed: 0,
        }
    }
}

/// Minimum number of batches behind a standard error.
pub const MIN_BATCHES: usize = 10;

impl DeviationConfig {
    pub fn validate(&self) -> Result<()> {
        self.picard.validate()?;
        let usable = self.batches.min(self.replications / 2);
        if usable < MIN_BATCHES {
            return Err(Error::InvalidArgument(format!(
                "{} replications in {} batches leave fewer than {MIN_BATCHES} batches of antithetic pairs",
                self.replications, self.batches
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainEstimate {
    pub x0: f64,
    /// `max_β Ĵ(β) - Ĵ(incumbent)`, nonnegative by construction.
    pub gain: f64,
    pub gain_se: f64,
    pub incumbent_value: f64,
    pub best_value: f64,
    /// Winning action per `ξ` bin, `None` when the incumbent itself wins.
    pub best_map: Option<Vec<f64>>,
    /// `|Ĵ(incumbent) - V̂|` on the same draws, when a mean field reference is given.
    pub gap: Option<f64>,
    pub gap_se: Option<f64>,
    pub mean_field_value: Option<f64>,
    pub picard_max_ratio: Option<f64>,
    pub picard_solves: usize,
    pub picard_max_iters: usize,
}

struct RepOut {
    bin: usize,
    incumbent: f64,
    candidates: Vec<f64>,
    mean_field: f64,
    ratio: Option<f64>,
    solves: usize,
    max_iters: usize,
}

/// Candidate actions per `ξ` bin of the incumbent at `x0_pin`.
fn candidate_sets<M: StaticModel + ?Sized>(
    model: &M,
    incumbent: &Strategy,
    x0_pin: f64,
    class: &DeviationClass,
) -> Vec<Vec<f64>> {
    let grid = model.actions();
    let edges = incumbent.xi_edges().to_vec();
    let bins = edges.len() + 1;
    (0..bins)
        .map(|b| {
            let lo = if b == 0 { 0.0 } else { edges[b - 1] };
            let hi = if b + 1 == bins { 1.0 } else { edges[b] };
            let mid = 0.5 * (lo + hi);
            match class {
                DeviationClass::Incumbent => Vec::new(),
                DeviationClass::OwnInformation { window, .. } => {
                    let k = incumbent
                        .action_index(x0_pin, mid)
                        .unwrap_or_else(|| grid.nearest(incumbent.evaluate(x0_pin, mid)));
                    let (start, end) = match window {
                        Some(w) => (k.saturating_sub(*w), (k + w).min(grid.len() - 1)),
                        None => (0, grid.len() - 1),
                    };
                    (start..=end).map(|j| grid.get(j)).collect()
                }
            }
        })
        .collect()
}

/// Deviation gain of agent `i` pinned at `x0_pin` against `profile`.
///
/// All candidates are evaluated on the same replications (common random
/// numbers). The incumbent is solved once per replication; a candidate that
/// prescribes the incumbent's own action reuses that solution, and the
/// incumbent always belongs to the class, so the gain is exactly `>= 0`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_deviation_gain<M: StaticModel + ?Sized>(
    model: &M,
    profile: &[Strategy],
    i: usize,
    x0_pin: f64,
    n: usize,
    cfg: &DeviationConfig,
) -> Result<GainEstimate> {
    pinned_evaluation(model, profile, i, x0_pin, n, cfg, None)
}

pub(crate) fn pinned_evaluation<M: StaticModel + ?Sized>(
    model: &M,
    profile: &[Strategy],
    i: usize,
    x0_pin: f64,
    n: usize,
    cfg: &DeviationConfig,
    reference: Option<(&Strategy, &[f64])>,
) -> Result<GainEstimate> {
    cfg.validate()?;
    if profile.len() != n || i >= n {
        return Err(Error::InvalidArgument(format!(
            "profile of {} strategies for n = {n}, agent {i}",
            profile.len()
        )));
    }
    let incumbent = &profile[i];
    let sets = candidate_sets(model, incumbent, x0_pin, &cfg.class);
    let edges = incumbent.xi_edges().to_vec();
    let streams = Streams::new(cfg.seed);
    let m = cfg.replications;

    let reps = replicate(m, |r| {
        let mut draws = Draws::sample(model, n, &streams, r as u64);
        draws.x0[i] = x0_pin;
        let actions: Vec<f64> = (0..n)
            .map(|j| profile[j].evaluate(draws.x0[j], draws.xi[j]))
            .collect();
        let own = actions[i];
        let inc = solve_with_actions(model, &draws, actions, None, &cfg.picard)?;
        let mut ratio = inc.max_contraction_ratio();
        let mut solves = 1;
        let mut max_iters = inc.picard_iters;
        let bin = bin_of(&edges, draws.xi[i]);
        let mut candidates = Vec::with_capacity(sets[bin].len());
        for &v in &sets[bin] {
            if v == own {
                candidates.push(inc.x1[i]);
                continue;
            }
            let mut acts = inc.actions.clone();
            acts[i] = v;
            let s = solve_with_actions(model, &draws, acts, Some(&inc.x1), &cfg.picard)?;
            ratio = match (ratio, s.max_contraction_ratio()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            };
            solves += 1;
            max_iters = max_iters.max(s.picard_iters);
            candidates.push(s.x1[i]);
        }
        let mean_field = match reference {
            Some((strategy, summary)) => model.transition(
                draws.eta[i],
                x0_pin,
                summary,
                strategy.evaluate(x0_pin, draws.xi[i]),
            ),
            None => f64::NAN,
        };
        Ok(RepOut {
            bin,
            incumbent: inc.x1[i],
            candidates,
            mean_field,
            ratio,
            solves,
            max_iters,
        })
    })?;

    let inc_values: Vec<f64> = reps.iter().map(|o| o.incumbent).collect();
    let incumbent_value = payoff_of_values(model, &inc_values);
    let values_of = |map: &[usize], range: std::ops::Range<usize>| -> Vec<f64> {
        reps[range]
            .iter()
            .map(|o| o.candidates[map[o.bin]])
            .collect()
    };
    let eval = |map: &[usize]| payoff_of_values(model, &values_of(map, 0..m));

    let best = search_maps(&sets, incumbent, x0_pin, &cfg.class, eval);
    let (gain, gain_se, best_value, best_map) = match best {
        Some((value, map)) if value > incumbent_value => {
            let se = batch_se(m, cfg.batches, |r| {
                payoff_of_values(model, &values_of(&map, r.clone()))
                    - payoff_of_values(model, &inc_values[r])
            });
            let actions = map.iter().enumerate().map(|(b, &k)| sets[b][k]).collect();
            (value - incumbent_value, se, value, Some(actions))
        }
        _ => (0.0, 0.0, incumbent_value, None),
    };

    let (gap, gap_se, mean_field_value) = if reference.is_some() {
        let mf: Vec<f64> = reps.iter().map(|o| o.mean_field).collect();
        let v = payoff_of_values(model, &mf);
        let se = batch_se(m, cfg.batches, |r| {
            payoff_of_values(model, &inc_values[r.clone()]) - payoff_of_values(model, &mf[r])
        });
        (Some((incumbent_value - v).abs()), Some(se), Some(v))
    } else {
        (None, None, None)
    };

    Ok(GainEstimate {
        x0: x0_pin,
        gain,
        gain_se,
        incumbent_value,
        best_value,
        best_map,
        gap,
        gap_se,
        mean_field_value,
        picard_max_ratio: reps.iter().filter_map(|o| o.ratio).reduce(f64::max),
        picard_solves: reps.iter().map(|o| o.solves).sum(),
        picard_max_iters: reps.iter().map(|o| o.max_iters).max().unwrap_or(0),
    })
}

/// Best member of the class other than the incumbent, as `(value, map)`
/// where `map[b]` indexes `sets[b]`.
fn search_maps<F>(
    sets: &[Vec<f64>],
    incumbent: &Strategy,
    x0_pin: f64,
    class: &DeviationClass,
    eval: F,
) -> Option<(f64, Vec<usize>)>
where
    F: Fn(&[usize]) -> f64,
{
    let max_enumeration = match class {
        DeviationClass::Incumbent => return None,
        DeviationClass::OwnInformation {
            max_enumeration, ..
        } => *max_enumeration,
    };
    if sets.iter().any(|s| s.is_empty()) {
        return None;
    }
    let size = sets.iter().fold(1f64, |acc, s| acc * s.len() as f64);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let consider = |map: &[usize], best: &mut Option<(f64, Vec<usize>)>| {
        let v = eval(map);
        if best.as_ref().is_none_or(|b| v > b.0) {
            *best = Some((v, map.to_vec()));
        }
    };
    if size <= max_enumeration as f64 {
        let mut map = vec![0usize; sets.len()];
        loop {
            consider(&map, &mut best);
            // Odometer increment.
            let mut b = 0;
            loop {
                if b == sets.len() {
                    return best;
                }
                map[b] += 1;
                if map[b] < sets[b].len() {
                    break;
                }
                map[b] = 0;
                b += 1;
            }
        }
    }
    // Coordinate ascent from the candidate nearest the incumbent in each bin.
    let edges = incumbent.xi_edges();
    let bins = sets.len();
    let mut map: Vec<usize> = (0..bins)
        .map(|b| {
            let lo = if b == 0 { 0.0 } else { edges[b - 1] };
            let hi = if b + 1 == bins { 1.0 } else { edges[b] };
            let target = incumbent.evaluate(x0_pin, 0.5 * (lo + hi));
            (0..sets[b].len())
                .min_by(|&p, &q| {
                    (sets[b][p] - target)
                        .abs()
                        .total_cmp(&(sets[b][q] - target).abs())
                })
                .unwrap_or(0)
        })
        .collect();
    let mut current = eval(&map);
    for _ in 0..50 {
        let mut improved = false;
        for b in 0..bins {
            for k in 0..sets[b].len() {
                if k == map[b] {
                    continue;
                }
                let old = map[b];
                map[b] = k;
                let v = eval(&map);
                if v > current {
                    current = v;
                    improved = true;
                } else {
                    map[b] = old;
                }
            }
        }
        if !improved {
            break;
        }
    }
    consider(&map, &mut best);
    best
}

/// `n` copies of the mean field strategy, each reading only its own agent's
/// `(x0, ξ)`.
pub fn induce_profile(mfe: &MfeSolution, n: usize) -> Result<Vec<Strategy>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "population size must be at least 1".into(),
        ));
    }
    Ok(vec![mfe.strategy.clone(); n])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Ne,
    NeEps,
    NeDeltaEps,
    None,
}

impl Classification {
    /// Most specific label for the given maxima.
    pub fn from_maxima(dbar_inf: f64, dbar_delta: f64, epsilon: f64) -> Self {
        if dbar_inf == 0.0 {
            Classification::Ne
        } else if dbar_inf <= epsilon {
            Classification::NeEps
        } else if dbar_delta <= epsilon {
            Classification::NeDeltaEps
        } else {
            Classification::None
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Ne => "NE",
            Classification::NeEps => "NE_eps",
            Classification::NeDeltaEps => "NE_delta_eps",
            Classification::None => "none",
        })
    }
}

/// Truncation radius `n^δ`; `None` stands for `δ = ∞`.
pub fn truncation_radius(n: usize, delta: Option<f64>) -> f64 {
    match delta {
        Some(d) => (n as f64).powf(d),
        None => f64::INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub n: usize,
    /// `None` means no truncation.
    pub delta: Option<f64>,
    pub epsilon: f64,
    pub seed: u64,
    pub replications: usize,
    pub deviation_class: String,
    /// One entry per evaluation-grid point, each pinned as agent 0.
    pub per_agent: Vec<GainEstimate>,
    pub dbar_inf: f64,
    pub dbar_delta: f64,
    pub gbar_inf: f64,
    pub gbar_delta: f64,
    pub classification: Classification,
}

pub const REPORT_COLUMNS: [&str; 12] = [
    "n",
    "delta",
    "x0",
    "gain",
    "gain_se",
    "gap",
    "gap_se",
    "dbar_delta",
    "gbar_delta",
    "classification",
    "seed",
    "build",
];

pub(crate) fn fmt_delta(delta: Option<f64>) -> String {
    match delta {
        Some(d) => d.to_string(),
        None => "inf".into(),
    }
}

impl DeviationReport {
    pub fn from_estimates(
        n: usize,
        delta: Option<f64>,
        epsilon: f64,
        seed: u64,
        replications: usize,
        deviation_class: String,
        per_agent: Vec<GainEstimate>,
    ) -> Self {
        let radius = truncation_radius(n, delta);
        let max_of = |f: &dyn Fn(&GainEstimate) -> f64, inside: bool| {
            per_agent
                .iter()
                .filter(|g| !inside || g.x0.abs() <= radius)
                .map(f)
                .fold(0.0, f64::max)
        };
        let dbar_inf = max_of(&|g| g.gain, false);
        let dbar_delta = max_of(&|g| g.gain, true);
        let gbar_inf = max_of(&|g| g.gap.unwrap_or(0.0), false);
        let gbar_delta = max_of(&|g| g.gap.unwrap_or(0.0), true);
        Self {
            n,
            delta,
            epsilon,
            seed,
            replications,
            deviation_class,
            per_agent,
            dbar_inf,
            dbar_delta,
            gbar_inf,
            gbar_delta,
            classification: Classification::from_maxima(dbar_inf, dbar_delta, epsilon),
        }
    }

    /// Same estimates, truncated at another `δ`.
    pub fn with_delta(&self, delta: Option<f64>) -> Self {
        Self::from_estimates(
            self.n,
            delta,
            self.epsilon,
            self.seed,
            self.replications,
            self.deviation_class.clone(),
            self.per_agent.clone(),
        )
    }

    pub fn picard_max_ratio(&self) -> Option<f64> {
        self.per_agent
            .iter()
            .filter_map(|g| g.picard_max_ratio)
            .reduce(f64::max)
    }

    pub fn csv_rows(&self, build: &str) -> Vec<Vec<String>> {
        self.per_agent
            .iter()
            .map(|g| {
                vec![
                    self.n.to_string(),
                    fmt_delta(self.delta),
                    g.x0.to_string(),
                    g.gain.to_string(),
                    g.gain_se.to_string(),
                    g.gap.map_or("".into(), |v| v.to_string()),
                    g.gap_se.map_or("".into(), |v| v.to_string()),
                    self.dbar_delta.to_string(),
                    self.gbar_delta.to_string(),
                    self.classification.to_string(),
                    self.seed.to_string(),
                    build.to_string(),
                ]
            })
            .collect()
    }

    /// Writes the report as CSV with the header of [`REPORT_COLUMNS`].
    pub fn write_csv<W: Write>(&self, out: W, build: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_COLUMNS)?;
        for row in self.csv_rows(build) {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Deviation gains and mean field gaps over an evaluation grid, each point
/// pinned as agent 0 (agents are exchangeable, so the index is immaterial).
#[allow(clippy::too_many_arguments)]
pub fn max_deviation<M: StaticModel + ?Sized>(
    model: &M,
    mfe: &MfeSolution,
    n: usize,
    delta: Option<f64>,
    epsilon: f64,
    x0_eval_grid: &[f64],
    cfg: &DeviationConfig,
) -> Result<DeviationReport> {
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
    let profile = induce_profile(mfe, n)?;
    let per_agent = x0_eval_grid
        .iter()
        .map(|&x0| {
            pinned_evaluation(
                model,
                &profile,
                0,
                x0,
                n,
                cfg,
                Some((&mfe.strategy, &mfe.summary)),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeviationReport::from_estimates(
        n,
        delta,
        epsilon,
        cfg.seed,
        cfg.replications,
        cfg.class.describe(),
        per_agent,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_thresholds() {
        assert_eq!(
            Classification::from_maxima(0.0, 0.0, 0.1),
            Classification::Ne
        );
        assert_eq!(
            Classification::from_maxima(0.05, 0.05, 0.1),
            Classification::NeEps
        );
        assert_eq!(
            Classification::from_maxima(0.2, 0.05, 0.1),
            Classification::NeDeltaEps
        );
        assert_eq!(
            Classification::from_maxima(0.2, 0.15, 0.1),
            Classification::None
        );
    }

    #[test]
    fn radius() {
        assert_eq!(truncation_radius(100, Some(0.5)), 10.0);
        assert_eq!(truncation_radius(100, None), f64::INFINITY);
    }

    #[test]
    fn too_few_batches() {
        let cfg = DeviationConfig {
            replications: 10,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
