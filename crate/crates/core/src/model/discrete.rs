use super::{ActionGrid, Law, ProductAtoms, StaticModel};
use crate::error::{Error, Result};
use crate::measures::{exact_sum, EmpiricalMeasure};

/// Slack in threshold comparisons, so that masses like `1/2` computed from
/// counts compare equal to a threshold written as `0.5`.
const THRESHOLD_SLACK: f64 = 1e-12;

/// A cell of `S × S × A`; `None` is a wildcard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellPattern {
    pub x0: Option<usize>,
    pub x1: Option<usize>,
    pub a: Option<usize>,
}

impl CellPattern {
    pub fn matches(&self, x0: usize, x1: usize, a: usize) -> bool {
        self.x0.is_none_or(|v| v == x0)
            && self.x1.is_none_or(|v| v == x1)
            && self.a.is_none_or(|v| v == a)
    }
}

/// The measure enters the transition only through `level`: the number of
/// thresholds not exceeding the total mass of the listed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStat {
    pub cells: Vec<CellPattern>,
    pub thresholds: Vec<f64>,
}

impl SummaryStat {
    pub fn levels(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn level_of_mass(&self, mass: f64) -> usize {
        self.thresholds
            .iter()
            .filter(|&&t| mass + THRESHOLD_SLACK >= t)
            .count()
    }

    /// Levels attained by some mass in `[0, 1]`.
    pub fn reachable_levels(&self) -> Vec<usize> {
        let mut probes = vec![0.0, 1.0];
        probes.extend(self.thresholds.iter().filter(|t| (0.0..=1.0).contains(*t)));
        let mut levels: Vec<usize> = probes.into_iter().map(|m| self.level_of_mass(m)).collect();
        levels.sort_unstable();
        levels.dedup();
        levels
    }

    pub fn in_cells(&self, x0: usize, x1: usize, a: usize) -> bool {
        self.cells.iter().any(|c| c.matches(x0, x1, a))
    }
}

/// Fully discrete one-period game, small enough to enumerate.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteInstance {
    pub name: String,
    /// State labels, embedded in the real line.
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub noise: Vec<f64>,
    pub noise_probs: Vec<f64>,
    /// Probabilities of the randomization levels; `ξ ~ U[0,1]` is binned by
    /// their cumulative sums.
    pub xi_probs: Vec<f64>,
    pub mu0: Vec<f64>,
    pub summary: SummaryStat,
    /// Next-state index, laid out as `[noise][x0][level][action]`.
    pub table: Vec<usize>,
    /// `U(ν) = Σ_s utility[s] ν({s})`.
    pub utility: Vec<f64>,
}

fn check_probs(name: &str, p: &[f64], max_len: usize) -> Result<()> {
    if p.is_empty() || p.len() > max_len {
        return Err(Error::InvalidArgument(format!(
            "{name} must have between 1 and {max_len} entries, found {}",
            p.len()
        )));
    }
    if let Some((index, &weight)) = p.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::NegativeWeight { index, weight });
    }
    let sum = exact_sum(p.iter().copied());
    if (sum - 1.0).abs() > 1e-14 {
        return Err(Error::WeightSum { sum });
    }
    Ok(())
}

impl DiscreteInstance {
    pub fn validate(&self) -> Result<()> {
        let ns = self.states.len();
        let na = self.actions.len();
        if ns == 0 || ns > 4 {
            return Err(Error::InvalidArgument(format!("{ns} states, need 1 to 4")));
        }
        if na == 0 || na > 3 {
            return Err(Error::InvalidArgument(format!("{na} actions, need 1 to 3")));
        }
        if self.noise.len() != self.noise_probs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.noise.len(),
                found: self.noise_probs.len(),
            });
        }
        check_probs("noise probabilities", &self.noise_probs, 3)?;
        check_probs("randomization levels", &self.xi_probs, 3)?;
        check_probs("initial law", &self.mu0, 4)?;
        if self.mu0.len() != ns {
            return Err(Error::DimensionMismatch {
                expected: ns,
                found: self.mu0.len(),
            });
        }
        if self.utility.len() != ns {
            return Err(Error::DimensionMismatch {
                expected: ns,
                found: self.utility.len(),
            });
        }
        let expected = self.noise.len() * ns * self.summary.levels() * na;
        if self.table.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.table.len(),
            });
        }
        if let Some(bad) = self.table.iter().find(|&&s| s >= ns) {
            return Err(Error::InvalidArgument(format!(
                "transition to unknown state {bad}"
            )));
        }
        for c in &self.summary.cells {
            if c.x0.is_some_and(|v| v >= ns)
                || c.x1.is_some_and(|v| v >= ns)
                || c.a.is_some_and(|v| v >= na)
            {
                return Err(Error::InvalidArgument("summary cell out of range".into()));
            }
        }
        for (k, v) in self.states.iter().enumerate() {
            if self.states[..k].contains(v) {
                return Err(Error::InvalidArgument(format!("duplicate state label {v}")));
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_levels(&self) -> usize {
        self.summary.levels()
    }

    pub fn next_state(&self, e: usize, x0: usize, level: usize, a: usize) -> usize {
        let ns = self.states.len();
        let nl = self.summary.levels();
        let na = self.actions.len();
        self.table[((e * ns + x0) * nl + level) * na + a]
    }

    /// Interior cut points of the randomization bins.
    pub fn xi_edges(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut edges = Vec::new();
        for p in &self.xi_probs[..self.xi_probs.len() - 1] {
            acc += p;
            edges.push(acc);
        }
        edges
    }

    pub fn xi_level(&self, xi: f64) -> usize {
        self.xi_edges().iter().filter(|&&e| xi >= e).count()
    }

    fn index_of(values: &[f64], x: f64) -> usize {
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if (v - x).abs() < (values[best] - x).abs() {
                best = i;
            }
        }
        best
    }

    pub fn state_index(&self, x: f64) -> usize {
        Self::index_of(&self.states, x)
    }

    pub fn action_index(&self, a: f64) -> usize {
        Self::index_of(&self.actions, a)
    }

    pub fn noise_index(&self, e: f64) -> usize {
        Self::index_of(&self.noise, e)
    }

    pub fn utility_of(&self, law: &[f64]) -> f64 {
        exact_sum(self.utility.iter().zip(law).map(|(u, p)| u * p))
    }
}

/// `x1 = (x0 + a + 1{x0 = 0} 1{e > 0} + 1{x0 = 1} 1{f(m) >= bias}) mod 2` on
/// `S = A = {0, 1}` with `f(m) = m({x0 = 0, x1 = 1})` and `U(ν) = ν({0})`.
///
/// Agents starting at 0 flip a coin and do not see the population; agents
/// starting at 1 move deterministically but are pushed by the mass of
/// agents that went from 0 to 1. The dependence is triangular, so the
/// implicit population equation has exactly one solution for every draw.
pub fn builtin_discrete_flip(bias: f64) -> Result<DiscreteModel> {
    flip_with_initial_law(bias, [0.5, 0.5])
}

pub fn flip_with_initial_law(bias: f64, mu0: [f64; 2]) -> Result<DiscreteModel> {
    if !bias.is_finite() {
        return Err(Error::NonFinite("bias".into()));
    }
    let mut table = Vec::with_capacity(16);
    for e in 0..2 {
        for x0 in 0..2 {
            for level in 0..2 {
                for a in 0..2 {
                    let kick = if x0 == 0 { usize::from(e == 1) } else { level };
                    table.push((x0 + a + kick) % 2);
                }
            }
        }
    }
    DiscreteModel::new(DiscreteInstance {
        name: format!("discrete_flip(bias={bias})"),
        states: vec![0.0, 1.0],
        actions: vec![0.0, 1.0],
        noise: vec![-1.0, 1.0],
        noise_probs: vec![0.5, 0.5],
        xi_probs: vec![1.0],
        mu0: mu0.to_vec(),
        summary: SummaryStat {
            cells: vec![CellPattern {
                x0: Some(0),
                x1: Some(1),
                a: None,
            }],
            thresholds: vec![bias],
        },
        table,
        utility: vec![1.0, 0.0],
    })
}

/// A [`DiscreteInstance`] seen as a [`StaticModel`]. The summary is the level
/// as a real number.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    instance: DiscreteInstance,
    actions: ActionGrid,
    mu0: Law,
    noise: Law,
}

impl DiscreteModel {
    pub fn new(instance: DiscreteInstance) -> Result<Self> {
        instance.validate()?;
        Ok(Self {
            actions: ActionGrid::new(instance.actions.clone())?,
            mu0: Law::discrete(instance.states.clone(), instance.mu0.clone())?,
            noise: Law::discrete(instance.noise.clone(), instance.noise_probs.clone())?,
            instance,
        })
    }

    pub fn instance(&self) -> &DiscreteInstance {
        &self.instance
    }
}

impl StaticModel for DiscreteModel {
    fn id(&self) -> &str {
        &self.instance.name
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
        let inst = &self.instance;
        let hits = (0..atoms.len()).filter(|&i| {
            inst.summary.in_cells(
                inst.state_index(atoms.x0[i]),
                inst.state_index(atoms.x1[i]),
                inst.action_index(atoms.a[i]),
            )
        });
        let mass = match atoms.weights {
            None => hits.count() as f64 / atoms.len() as f64,
            Some(w) => exact_sum(hits.map(|i| w[i])),
        };
        out[0] = inst.summary.level_of_mass(mass) as f64;
    }

    fn transition(&self, e: f64, x0: f64, summary: &[f64], a: f64) -> f64 {
        let inst = &self.instance;
        let s = inst.next_state(
            inst.noise_index(e),
            inst.state_index(x0),
            summary[0] as usize,
            inst.action_index(a),
        );
        inst.states[s]
    }

    fn utility(&self, law: &EmpiricalMeasure) -> f64 {
        let inst = &self.instance;
        law.integrate(|x| inst.utility[inst.state_index(x[0])])
    }

    fn measure_dependent(&self) -> bool {
        let inst = &self.instance;
        let ns = inst.num_states();
        let na = inst.num_actions();
        let levels = inst.summary.reachable_levels();
        let l0 = levels[0];
        (0..inst.noise.len()).any(|e| {
            (0..ns).any(|x0| {
                (0..na).any(|a| {
                    levels
                        .iter()
                        .any(|&l| inst.next_state(e, x0, l, a) != inst.next_state(e, x0, l0, a))
                })
            })
        })
    }
}
