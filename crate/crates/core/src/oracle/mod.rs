//! Exact brute-force answers on tiny discrete instances, used to check the
//! Monte Carlo estimators.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::measures::exact_sum;
use crate::model::{ActionGrid, DiscreteInstance};
use crate::static_game::{DeviationReport, GainEstimate, Strategy, REPORT_COLUMNS};

/// Largest `n·(|S|·|ξ levels|·|noise|)^n` enumerated.
pub const ENUMERATION_GUARD: f64 = 1e7;
/// Largest deviation class `|A|^(|S|·|ξ levels|)` enumerated.
pub const CLASS_GUARD: f64 = 1e4;
/// Largest measure lattice.
pub const LATTICE_GUARD: usize = 10_000;

/// Action index per `(x0 state, ξ level)`, row-major by state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DiscreteStrategy {
    pub cells: Vec<usize>,
}

impl DiscreteStrategy {
    pub fn new(inst: &DiscreteInstance, cells: Vec<usize>) -> Result<Self> {
        let expected = inst.num_states() * inst.xi_probs.len();
        if cells.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: cells.len(),
            });
        }
        if cells.iter().any(|&a| a >= inst.num_actions()) {
            return Err(Error::InvalidArgument(
                "strategy action outside the instance".into(),
            ));
        }
        Ok(Self { cells })
    }

    pub fn constant(inst: &DiscreteInstance, a: usize) -> Result<Self> {
        Self::new(inst, vec![a; inst.num_states() * inst.xi_probs.len()])
    }

    pub fn action(&self, inst: &DiscreteInstance, x0: usize, level: usize) -> usize {
        self.cells[x0 * inst.xi_probs.len() + level]
    }

    /// The same map as a tabular [`Strategy`] over the state labels.
    pub fn to_strategy(&self, inst: &DiscreteInstance) -> Result<Strategy> {
        let mut order: Vec<usize> = (0..inst.num_states()).collect();
        order.sort_by(|&a, &b| inst.states[a].total_cmp(&inst.states[b]));
        let x0_grid = order.iter().map(|&s| inst.states[s]).collect();
        let nl = inst.xi_probs.len();
        let cells = order
            .iter()
            .flat_map(|&s| self.cells[s * nl..(s + 1) * nl].to_vec())
            .collect();
        Strategy::table(
            x0_grid,
            inst.xi_edges(),
            cells,
            ActionGrid::new(inst.actions.clone())?,
        )
    }

    /// Reads a [`Strategy`] at every state label and the middle of every
    /// randomization bin.
    pub fn from_strategy(inst: &DiscreteInstance, s: &Strategy) -> Result<Self> {
        let mut edges = vec![0.0];
        edges.extend(inst.xi_edges());
        edges.push(1.0);
        let mut cells = Vec::new();
        for &x0 in &inst.states {
            for l in 0..inst.xi_probs.len() {
                cells.push(inst.action_index(s.evaluate(x0, 0.5 * (edges[l] + edges[l + 1]))));
            }
        }
        Self::new(inst, cells)
    }
}

/// One outcome of the population with its exact probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub x0: Vec<usize>,
    pub x1: Vec<usize>,
    pub prob: f64,
}

/// Exact joint law of `(X_0^{1:n}, X_1^{1:n})` as state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationLaw {
    pub n: usize,
    pub outcomes: Vec<Outcome>,
}

impl PopulationLaw {
    pub fn total(&self) -> f64 {
        exact_sum(self.outcomes.iter().map(|o| o.prob))
    }

    /// Law of `X_1^i` over the state indices.
    pub fn terminal_marginal(&self, inst: &DiscreteInstance, i: usize) -> Vec<f64> {
        (0..inst.num_states())
            .map(|s| {
                exact_sum(
                    self.outcomes
                        .iter()
                        .filter(|o| o.x1[i] == s)
                        .map(|o| o.prob),
                )
            })
            .collect()
    }
}

fn check_profile(inst: &DiscreteInstance, n: usize, profile: &[DiscreteStrategy]) -> Result<()> {
    inst.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("population is empty".into()));
    }
    if profile.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: profile.len(),
        });
    }
    let cells = inst.num_states() * inst.xi_probs.len();
    if profile
        .iter()
        .any(|s| s.cells.len() != cells || s.cells.iter().any(|&a| a >= inst.num_actions()))
    {
        return Err(Error::InvalidArgument(
            "profile does not fit the instance".into(),
        ));
    }
    Ok(())
}

/// Summary level of a configuration, computed as the Monte Carlo model does.
fn level_of(inst: &DiscreteInstance, x0: &[usize], x1: &[usize], a: &[usize]) -> usize {
    let hits = (0..x0.len())
        .filter(|&i| inst.summary.in_cells(x0[i], x1[i], a[i]))
        .count();
    inst.summary.level_of_mass(hits as f64 / x0.len() as f64)
}

/// Exact joint law by enumeration of every draw combination, optionally with
/// agent `pin.0` started at state `pin.1`.
///
/// The transition sees the measure only through its summary level, so every
/// solution of the implicit equation equals `F(level)` for its own level;
/// checking the finitely many levels therefore checks every terminal
/// configuration. A draw with zero or several solutions is an error.
pub fn exact_population_law(
    inst: &DiscreteInstance,
    n: usize,
    profile: &[DiscreteStrategy],
    pin: Option<(usize, usize)>,
) -> Result<PopulationLaw> {
    check_profile(inst, n, profile)?;
    if let Some((i, s)) = pin {
        if i >= n || s >= inst.num_states() {
            return Err(Error::InvalidArgument(format!(
                "pin ({i}, {s}) outside the instance"
            )));
        }
    }
    let ns = inst.num_states();
    let nl = inst.xi_probs.len();
    let ne = inst.noise.len();
    let per_agent = ns * nl * ne;
    let size = n as f64 * (per_agent as f64).powi(n as i32);
    if size > ENUMERATION_GUARD {
        return Err(Error::EnumerationTooLarge {
            size,
            guard: ENUMERATION_GUARD,
        });
    }
    let choices: Vec<usize> = (0..n)
        .map(|i| {
            if pin.is_some_and(|p| p.0 == i) {
                nl * ne
            } else {
                per_agent
            }
        })
        .collect();
    let mut digits = vec![0usize; n];
    let mut table: BTreeMap<(Vec<usize>, Vec<usize>), Vec<f64>> = BTreeMap::new();
    let mut x0 = vec![0; n];
    let mut lv = vec![0; n];
    let mut e = vec![0; n];
    let mut a = vec![0; n];
    loop {
        let mut prob = 1.0;
        for i in 0..n {
            let d = digits[i];
            e[i] = d % ne;
            lv[i] = (d / ne) % nl;
            x0[i] = match pin {
                Some((p, s)) if p == i => s,
                _ => d / (ne * nl),
            };
            let p0 = if pin.is_some_and(|p| p.0 == i) {
                1.0
            } else {
                inst.mu0[x0[i]]
            };
            prob *= p0 * inst.xi_probs[lv[i]] * inst.noise_probs[e[i]];
            a[i] = profile[i].action(inst, x0[i], lv[i]);
        }
        if prob > 0.0 {
            let mut found: Vec<Vec<usize>> = Vec::new();
            for level in 0..inst.num_levels() {
                let x1: Vec<usize> = (0..n)
                    .map(|i| inst.next_state(e[i], x0[i], level, a[i]))
                    .collect();
                if level_of(inst, &x0, &x1, &a) == level {
                    found.push(x1);
                }
            }
            if found.len() != 1 {
                return Err(Error::NonUniqueState {
                    count: found.len(),
                    draw: format!("x0 {x0:?}, xi levels {lv:?}, noise {e:?}, actions {a:?}"),
                });
            }
            let x1 = found.pop().expect("one solution");
            table.entry((x0.clone(), x1)).or_default().push(prob);
        }
        let mut k = 0;
        loop {
            if k == n {
                let outcomes = table
                    .into_iter()
                    .map(|((x0, x1), ps)| Outcome {
                        x0,
                        x1,
                        prob: exact_sum(ps),
                    })
                    .collect();
                return Ok(PopulationLaw { n, outcomes });
            }
            digits[k] += 1;
            if digits[k] < choices[k] {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// Law of `X_1^i` given `X_0^i = x0` (a state index).
pub fn exact_conditional_law(
    inst: &DiscreteInstance,
    n: usize,
    profile: &[DiscreteStrategy],
    i: usize,
    x0: usize,
) -> Result<Vec<f64>> {
    Ok(exact_population_law(inst, n, profile, Some((i, x0)))?.terminal_marginal(inst, i))
}

/// `U(L(X_1^i | X_0^i = x0))`.
pub fn exact_payoff(
    inst: &DiscreteInstance,
    n: usize,
    profile: &[DiscreteStrategy],
    i: usize,
    x0: usize,
) -> Result<f64> {
    Ok(inst.utility_of(&exact_conditional_law(inst, n, profile, i, x0)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactGain {
    pub x0: usize,
    pub gain: f64,
    pub incumbent_value: f64,
    pub best_value: f64,
    /// First maximizer in enumeration order.
    pub best: DiscreteStrategy,
    pub class_size: usize,
}

/// Size of the class of all maps `(x0, ξ level) → action`.
pub fn class_size(inst: &DiscreteInstance) -> f64 {
    (inst.num_actions() as f64).powi((inst.num_states() * inst.xi_probs.len()) as i32)
}

/// Exact `D_n^i` at `X_0^i = x0` over all maps `(x0, ξ level) → action`.
pub fn exact_deviation_gain(
    inst: &DiscreteInstance,
    n: usize,
    profile: &[DiscreteStrategy],
    i: usize,
    x0: usize,
) -> Result<ExactGain> {
    check_profile(inst, n, profile)?;
    let size = class_size(inst);
    if size > CLASS_GUARD {
        return Err(Error::EnumerationTooLarge {
            size,
            guard: CLASS_GUARD,
        });
    }
    let incumbent_value = exact_payoff(inst, n, profile, i, x0)?;
    let cells = inst.num_states() * inst.xi_probs.len();
    let na = inst.num_actions();
    let mut candidate = profile.to_vec();
    let mut best: Option<(f64, DiscreteStrategy)> = None;
    for code in 0..size as usize {
        let mut c = code;
        let map: Vec<usize> = (0..cells)
            .map(|_| {
                let d = c % na;
                c /= na;
                d
            })
            .collect();
        candidate[i] = DiscreteStrategy { cells: map };
        let v = exact_payoff(inst, n, &candidate, i, x0)?;
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, candidate[i].clone()));
        }
    }
    let (best_value, best) = best.expect("class is nonempty");
    Ok(ExactGain {
        x0,
        gain: best_value - incumbent_value,
        incumbent_value,
        best_value,
        best,
        class_size: size as usize,
    })
}

/// A lattice point `m = k/L` of the summary mass mapped into its own cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFixedPoint {
    pub mass: f64,
    pub level: usize,
    /// `T(m)`, within `1/(2L)` of `mass`.
    pub image: f64,
    pub strategy: DiscreteStrategy,
    /// `V(x0, μ)` per state.
    pub values: Vec<f64>,
}

/// Pointwise best response at a summary level; ties go to the lowest action.
fn best_response(inst: &DiscreteInstance, level: usize) -> (DiscreteStrategy, Vec<f64>) {
    let nl = inst.xi_probs.len();
    let mut cells = Vec::with_capacity(inst.num_states() * nl);
    let mut values = Vec::with_capacity(inst.num_states());
    for x0 in 0..inst.num_states() {
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..inst.num_actions() {
            let v = exact_sum(
                (0..inst.noise.len())
                    .map(|e| inst.noise_probs[e] * inst.utility[inst.next_state(e, x0, level, a)]),
            );
            if v > best.0 {
                best = (v, a);
            }
        }
        cells.extend(std::iter::repeat_n(best.1, nl));
        values.push(best.0);
    }
    (DiscreteStrategy { cells }, values)
}

/// Summary mass of the pushforward of `μ_0` under `strategy` at `level`.
fn image_mass(inst: &DiscreteInstance, strategy: &DiscreteStrategy, level: usize) -> f64 {
    let mut terms = Vec::new();
    for x0 in 0..inst.num_states() {
        for (l, pl) in inst.xi_probs.iter().enumerate() {
            let a = strategy.action(inst, x0, l);
            for (e, pe) in inst.noise_probs.iter().enumerate() {
                if inst
                    .summary
                    .in_cells(x0, inst.next_state(e, x0, level, a), a)
                {
                    terms.push(inst.mu0[x0] * pl * pe);
                }
            }
        }
    }
    exact_sum(terms)
}

/// Fixed points of the best-response map on the lattice `{k/L}` of summary
/// masses: every `m` with `|T(m) - m| ≤ 1/(2L)`.
pub fn exact_mfe(inst: &DiscreteInstance, lattice: usize) -> Result<Vec<LatticeFixedPoint>> {
    inst.validate()?;
    if lattice == 0 || lattice + 1 > LATTICE_GUARD {
        return Err(Error::EnumerationTooLarge {
            size: (lattice + 1) as f64,
            guard: LATTICE_GUARD as f64,
        });
    }
    let half = 0.5 / lattice as f64;
    let mut out = Vec::new();
    for k in 0..=lattice {
        let mass = k as f64 / lattice as f64;
        let level = inst.summary.level_of_mass(mass);
        let (strategy, values) = best_response(inst, level);
        let image = image_mass(inst, &strategy, level);
        if (image - mass).abs() <= half {
            out.push(LatticeFixedPoint {
                mass,
                level,
                image,
                strategy,
                values,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::NoLatticeFixedPoint(lattice));
    }
    Ok(out)
}

/// Exact gains and mean field gaps at the listed initial states, as a
/// deviation report with zero standard errors. The gap is measured against
/// the values of `reference`.
#[allow(clippy::too_many_arguments)]
pub fn exact_report(
    inst: &DiscreteInstance,
    n: usize,
    profile: &[DiscreteStrategy],
    x0_states: &[usize],
    reference: Option<&LatticeFixedPoint>,
    delta: Option<f64>,
    epsilon: f64,
    seed: u64,
) -> Result<DeviationReport> {
    let per_agent = x0_states
        .iter()
        .map(|&s| {
            let g = exact_deviation_gain(inst, n, profile, 0, s)?;
            let mf = reference.map(|r| r.values[s]);
            Ok(GainEstimate {
                x0: inst.states[s],
                gain: g.gain,
                gain_se: 0.0,
                incumbent_value: g.incumbent_value,
                best_value: g.best_value,
                best_map: (g.gain > 0.0).then(|| {
                    (0..inst.xi_probs.len())
                        .map(|l| inst.actions[g.best.action(inst, s, l)])
                        .collect()
                }),
                gap: mf.map(|v| (g.incumbent_value - v).abs()),
                gap_se: mf.map(|_| 0.0),
                mean_field_value: mf,
                picard_max_ratio: None,
                picard_solves: 0,
                picard_max_iters: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeviationReport::from_estimates(
        n,
        delta,
        epsilon,
        seed,
        0,
        format!("all_maps({})", class_size(inst)),
        per_agent,
    ))
}

/// A report in the deviation CSV layout with a trailing `exact` column.
pub fn write_exact_csv<W: Write>(
    report: &DeviationReport,
    exact: bool,
    out: W,
    build: &str,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = REPORT_COLUMNS.to_vec();
    header.push("exact");
    w.write_record(&header)?;
    for mut row in report.csv_rows(build) {
        row.push(exact.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
