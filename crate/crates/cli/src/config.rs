//! Experiment configuration: TOML with nested sections, unknown keys rejected.
//!
//! See the README for the full grammar. Every error carries the line of the
//! offending key when one can be found.

use std::fmt;
use std::path::{Path, PathBuf};

use meanfield::continuous_game::{CtDeviationConfig, MfgConfig, PolicyClass};
use meanfield::measures::WassersteinOrder;
use meanfield::model::{
    ActionGrid, CellPattern, DiscreteInstance, DiscreteModel, Law, LqContinuous, LqStatic,
    SummaryStat,
};
use meanfield::static_game::{DeviationClass, DeviationConfig, MfeConfig, PicardConfig};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{l}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GridSpec {
    List(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeSpec {
    lo: f64,
    hi: f64,
    spacing: f64,
}

impl GridSpec {
    fn points(&self) -> Result<Vec<f64>, String> {
        match self {
            GridSpec::List(v) => Ok(v.clone()),
            GridSpec::Range(r) => ActionGrid::uniform(r.lo, r.hi, r.spacing)
                .map(|g| g.values().to_vec())
                .map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LawSpec {
    Point { value: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl LawSpec {
    fn law(&self) -> Result<Law, String> {
        let law = match self {
            LawSpec::Point { value } => Law::Point(*value),
            LawSpec::Normal { mean, sd } => Law::Normal {
                mean: *mean,
                sd: *sd,
            },
            LawSpec::Uniform { lo, hi } => Law::Uniform { lo: *lo, hi: *hi },
            LawSpec::Discrete { values, probs } => {
                Law::discrete(values.clone(), probs.clone()).map_err(|e| e.to_string())?
            }
        };
        law.validate().map_err(|e| e.to_string())?;
        Ok(law)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: String,
    seed: Option<u64>,
    p: Option<f64>,
    out: Option<String>,
    workers: Option<usize>,
    model: RawModel,
    mfe: Option<RawMfe>,
    mfg: Option<RawMfg>,
    sweep: Option<RawSweep>,
    certificate: Option<RawCertificate>,
    simulate: Option<RawSimulate>,
    verify: Option<RawVerify>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    builtin: String,
    rho: Option<f64>,
    kappa: Option<f64>,
    sigma: Option<f64>,
    theta: Option<f64>,
    horizon: Option<f64>,
    bias: Option<f64>,
    clip_radius: Option<f64>,
    payoff_cap: Option<f64>,
    actions: Option<GridSpec>,
    mu0: Option<LawSpec>,
    instance: Option<RawInstance>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    name: String,
    states: Vec<f64>,
    actions: Vec<f64>,
    noise: Vec<f64>,
    noise_probs: Vec<f64>,
    xi_probs: Vec<f64>,
    mu0: Vec<f64>,
    utility: Vec<f64>,
    thresholds: Vec<f64>,
    cells: Vec<RawCell>,
    table: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    x0: Option<usize>,
    x1: Option<usize>,
    a: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMfe {
    particles: Option<usize>,
    br_samples: Option<usize>,
    x0_grid: Option<GridSpec>,
    xi_bins: Option<usize>,
    damping: Option<f64>,
    tol: Option<f64>,
    max_iters: Option<usize>,
    action_cap: Option<f64>,
    value_batches: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMfg {
    paths: Option<usize>,
    eval_paths: Option<usize>,
    steps: Option<usize>,
    x0_grid: Option<GridSpec>,
    damping: Option<f64>,
    tol: Option<f64>,
    max_iters: Option<usize>,
    value_batches: Option<usize>,
    policy: Option<RawPolicy>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
enum RawPolicy {
    LinearGains {
        slopes: GridSpec,
        intercepts: GridSpec,
        refinements: Option<usize>,
    },
    Table {
        time_bins: usize,
        state_edges: GridSpec,
        sweeps: Option<usize>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    n: Vec<i64>,
    delta: Vec<f64>,
    epsilon: f64,
    replications: Option<usize>,
    batches: Option<usize>,
    x0_grid: GridSpec,
    deviation: Option<RawDeviation>,
    picard_tol: Option<f64>,
    picard_max_iters: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
enum RawDeviation {
    Incumbent,
    OwnInformation {
        window: Option<usize>,
        max_enumeration: Option<usize>,
    },
    Offsets {
        offsets: GridSpec,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCertificate {
    samples: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    n: usize,
    replication: Option<u64>,
    pin: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    n: Vec<usize>,
    replications: Option<usize>,
    batches: Option<usize>,
    lattice: Option<usize>,
    particles: Option<usize>,
    br_samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Static,
    Continuous,
}

#[derive(Debug, Clone)]
pub enum Model {
    LqStatic(LqStatic),
    Discrete(DiscreteModel),
    LqContinuous(LqContinuous),
}

impl Model {
    pub fn id(&self) -> String {
        use meanfield::model::{ContinuousModel, StaticModel};
        match self {
            Model::LqStatic(m) => StaticModel::id(m).to_string(),
            Model::Discrete(m) => StaticModel::id(m).to_string(),
            Model::LqContinuous(m) => ContinuousModel::id(m).to_string(),
        }
    }
}

/// Sweep over population sizes. The deviation settings for both game kinds
/// are kept; the mode decides which one is used.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub n: Vec<usize>,
    /// `None` is `δ = ∞`.
    pub deltas: Vec<Option<f64>>,
    pub epsilon: f64,
    pub x0_grid: Vec<f64>,
    pub deviation: DeviationConfig,
    pub ct_deviation: CtDeviationConfig,
}

#[derive(Debug, Clone)]
pub struct Simulate {
    pub n: usize,
    pub replication: u64,
    pub pin: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Verify {
    pub n: Vec<usize>,
    pub replications: usize,
    pub batches: usize,
    pub lattice: usize,
    pub particles: usize,
    pub br_samples: usize,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub path: String,
    pub mode: Mode,
    pub seed: u64,
    pub p: WassersteinOrder,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub model: Model,
    pub mfe: MfeConfig,
    pub mfg: MfgConfig,
    pub sweep: Option<Sweep>,
    pub certificate_samples: usize,
    pub simulate: Option<Simulate>,
    pub verify: Option<Verify>,
}

impl Experiment {
    /// Replaces the seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.mfe.seed = seed;
        self.mfg.seed = seed;
        if let Some(s) = &mut self.sweep {
            s.deviation.seed = seed;
            s.ct_deviation.seed = seed;
        }
    }
}

/// Line of `key` inside `[section]` (empty for the top level); falls back to
/// the section header, then to nothing.
fn line_of(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (k, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
            if current == section {
                header = Some(k + 1);
            }
            continue;
        }
        if current != section || key.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(k + 1);
            }
        }
    }
    header
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    path: &'a str,
    source: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.to_string(),
            line: line_of(self.source, section, key),
            message: message.into(),
        }
    }
}

pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let display = path.display().to_string();
    let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: display.clone(),
        line: None,
        message: format!("cannot read config: {e}"),
    })?;
    parse(&source, &display)
}

pub fn parse(source: &str, path: &str) -> Result<Experiment, ConfigError> {
    let raw: RawConfig = toml::from_str(source).map_err(|e| ConfigError {
        path: path.to_string(),
        line: e.span().map(|s| line_of_offset(source, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let cx = Ctx { path, source };
    build(raw, &cx)
}

fn build(raw: RawConfig, cx: &Ctx) -> Result<Experiment, ConfigError> {
    let mode = match raw.mode.as_str() {
        "static" => Mode::Static,
        "continuous" => Mode::Continuous,
        other => {
            return Err(cx.err(
                "",
                "mode",
                format!("mode `{other}` is not `static` or `continuous`"),
            ))
        }
    };
    let seed = raw
        .seed
        .ok_or_else(|| cx.err("", "", "seed is required; there is no implicit seed"))?;
    let p = WassersteinOrder::from_q(raw.p.unwrap_or(1.0))
        .map_err(|e| cx.err("", "p", e.to_string()))?;
    if raw.workers == Some(0) {
        return Err(cx.err("", "workers", "workers must be at least 1"));
    }
    let model = build_model(&raw.model, mode, cx)?;

    let mut mfe = MfeConfig {
        p,
        seed,
        ..Default::default()
    };
    if let Some(m) = &raw.mfe {
        if mode == Mode::Continuous {
            return Err(cx.err("mfe", "", "[mfe] applies to static mode; use [mfg]"));
        }
        set(&mut mfe.particles, m.particles);
        set(&mut mfe.br_samples, m.br_samples);
        set(&mut mfe.xi_bins, m.xi_bins);
        set(&mut mfe.damping, m.damping);
        set(&mut mfe.tol, m.tol);
        set(&mut mfe.max_iters, m.max_iters);
        set(&mut mfe.action_cap, m.action_cap);
        set(&mut mfe.value_batches, m.value_batches);
        if let Some(g) = &m.x0_grid {
            mfe.x0_grid = g.points().map_err(|e| cx.err("mfe", "x0_grid", e))?;
        }
    }
    if let Model::Discrete(d) = &model {
        if raw.mfe.as_ref().is_none_or(|m| m.x0_grid.is_none()) {
            mfe.x0_grid = d.instance().states.clone();
        }
    }
    mfe.validate()
        .map_err(|e| cx.err("mfe", "", e.to_string()))?;

    let mut mfg = MfgConfig {
        p,
        seed,
        ..Default::default()
    };
    if let Some(m) = &raw.mfg {
        if mode == Mode::Static {
            return Err(cx.err("mfg", "", "[mfg] applies to continuous mode; use [mfe]"));
        }
        set(&mut mfg.paths, m.paths);
        set(&mut mfg.eval_paths, m.eval_paths);
        set(&mut mfg.steps, m.steps);
        set(&mut mfg.damping, m.damping);
        set(&mut mfg.tol, m.tol);
        set(&mut mfg.max_iters, m.max_iters);
        set(&mut mfg.value_batches, m.value_batches);
        if let Some(g) = &m.x0_grid {
            mfg.x0_grid = g.points().map_err(|e| cx.err("mfg", "x0_grid", e))?;
        }
        if let Some(pol) = &m.policy {
            mfg.policy_class = match pol {
                RawPolicy::LinearGains {
                    slopes,
                    intercepts,
                    refinements,
                } => PolicyClass::LinearGains {
                    slopes: slopes.points().map_err(|e| cx.err("mfg", "policy", e))?,
                    intercepts: intercepts
                        .points()
                        .map_err(|e| cx.err("mfg", "policy", e))?,
                    refinements: refinements.unwrap_or(0),
                },
                RawPolicy::Table {
                    time_bins,
                    state_edges,
                    sweeps,
                } => PolicyClass::Table {
                    time_bins: *time_bins,
                    state_edges: state_edges
                        .points()
                        .map_err(|e| cx.err("mfg", "policy", e))?,
                    sweeps: sweeps.unwrap_or(2),
                },
            };
        }
    }
    mfg.validate()
        .map_err(|e| cx.err("mfg", "", e.to_string()))?;

    let sweep = raw
        .sweep
        .as_ref()
        .map(|s| build_sweep(s, mode, seed, cx))
        .transpose()?;

    let certificate_samples = raw.certificate.as_ref().map_or(10_000, |c| c.samples);
    if certificate_samples == 0 {
        return Err(cx.err("certificate", "samples", "samples must be at least 1"));
    }

    let simulate = match &raw.simulate {
        None => None,
        Some(s) => {
            if s.n == 0 {
                return Err(cx.err("simulate", "n", "population size must be at least 1"));
            }
            Some(Simulate {
                n: s.n,
                replication: s.replication.unwrap_or(0),
                pin: s.pin,
            })
        }
    };

    let verify = match &raw.verify {
        None => None,
        Some(v) => {
            if !matches!(model, Model::Discrete(_)) {
                return Err(cx.err("verify", "", "[verify] needs a discrete model"));
            }
            if v.n.is_empty() || v.n.contains(&0) {
                return Err(cx.err("verify", "n", "n must list positive population sizes"));
            }
            let out = Verify {
                n: v.n.clone(),
                replications: v.replications.unwrap_or(2000),
                batches: v.batches.unwrap_or(50),
                lattice: v.lattice.unwrap_or(100),
                particles: v.particles.unwrap_or(2000),
                br_samples: v.br_samples.unwrap_or(256),
            };
            let probe = DeviationConfig {
                replications: out.replications,
                batches: out.batches,
                ..Default::default()
            };
            probe
                .validate()
                .map_err(|e| cx.err("verify", "replications", e.to_string()))?;
            if out.lattice == 0 || out.particles == 0 || out.br_samples == 0 {
                return Err(cx.err(
                    "verify",
                    "",
                    "lattice, particles and br_samples must be positive",
                ));
            }
            Some(out)
        }
    };

    Ok(Experiment {
        path: cx.path.to_string(),
        mode,
        seed,
        p,
        out: raw.out.map(PathBuf::from),
        workers: raw.workers,
        model,
        mfe,
        mfg,
        sweep,
        certificate_samples,
        simulate,
        verify,
    })
}

fn set<T: Copy>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn build_model(m: &RawModel, mode: Mode, cx: &Ctx) -> Result<Model, ConfigError> {
    let present = [
        ("rho", m.rho.is_some()),
        ("kappa", m.kappa.is_some()),
        ("sigma", m.sigma.is_some()),
        ("theta", m.theta.is_some()),
        ("horizon", m.horizon.is_some()),
        ("bias", m.bias.is_some()),
        ("clip_radius", m.clip_radius.is_some()),
        ("payoff_cap", m.payoff_cap.is_some()),
        ("actions", m.actions.is_some()),
        ("mu0", m.mu0.is_some()),
        ("instance", m.instance.is_some()),
    ];
    let allowed: &[&str] = match m.builtin.as_str() {
        "lq_static" => &["rho", "kappa", "sigma", "actions", "mu0"],
        "lq_continuous" => &["theta", "kappa", "horizon", "actions", "mu0", "clip_radius", "payoff_cap"],
        "discrete_flip" => &["bias", "mu0"],
        "discrete" => &["instance"],
        other => {
            return Err(cx.err(
                "model",
                "builtin",
                format!("unknown builtin `{other}`; expected lq_static, lq_continuous, discrete_flip or discrete"),
            ))
        }
    };
    for (key, is_set) in present {
        if is_set && !allowed.contains(&key) {
            let section = if key == "instance" {
                "model.instance"
            } else {
                "model"
            };
            return Err(cx.err(
                section,
                key,
                format!("key `{key}` does not apply to builtin `{}`", m.builtin),
            ));
        }
    }
    let continuous = m.builtin == "lq_continuous";
    if continuous != (mode == Mode::Continuous) {
        return Err(cx.err(
            "",
            "mode",
            format!("builtin `{}` cannot run in this mode", m.builtin),
        ));
    }
    let need = |key: &str, v: Option<f64>| {
        v.ok_or_else(|| cx.err("model", "builtin", format!("missing key `{key}`")))
    };
    let actions = || -> Result<ActionGrid, ConfigError> {
        let spec = m
            .actions
            .as_ref()
            .ok_or_else(|| cx.err("model", "builtin", "missing key `actions`"))?;
        let pts = spec.points().map_err(|e| cx.err("model", "actions", e))?;
        ActionGrid::new(pts).map_err(|e| cx.err("model", "actions", e.to_string()))
    };
    let mu0 = || -> Result<Option<Law>, ConfigError> {
        m.mu0
            .as_ref()
            .map(|l| l.law().map_err(|e| cx.err("model", "mu0", e)))
            .transpose()
    };
    let model = match m.builtin.as_str() {
        "lq_static" => {
            let law = mu0()?.unwrap_or_else(Law::standard_normal);
            LqStatic::new(
                need("rho", m.rho)?,
                need("kappa", m.kappa)?,
                need("sigma", m.sigma)?,
                actions()?,
                law,
            )
            .map(Model::LqStatic)
        }
        "lq_continuous" => {
            let law = mu0()?.unwrap_or_else(Law::standard_normal);
            let mut built = LqContinuous::new(
                need("theta", m.theta)?,
                need("kappa", m.kappa)?,
                m.horizon.unwrap_or(1.0),
                actions()?,
                law,
            );
            if let Some(r) = m.clip_radius {
                built = built.and_then(|b| b.with_clip_radius(r));
            }
            if let Some(c) = m.payoff_cap {
                built = built.and_then(|b| b.with_payoff_cap(c));
            }
            built.map(Model::LqContinuous)
        }
        "discrete_flip" => {
            let bias = need("bias", m.bias)?;
            match &m.mu0 {
                None => meanfield::model::builtin_discrete_flip(bias),
                Some(LawSpec::Discrete { values, probs }) if values == &[0.0, 1.0] => {
                    meanfield::model::flip_with_initial_law(bias, [probs[0], probs[1]])
                }
                Some(_) => {
                    return Err(cx.err(
                        "model",
                        "mu0",
                        "discrete_flip needs a discrete mu0 on the states [0, 1]",
                    ))
                }
            }
            .map(Model::Discrete)
        }
        _ => {
            let i = m.instance.as_ref().ok_or_else(|| {
                cx.err(
                    "model",
                    "builtin",
                    "builtin `discrete` needs a [model.instance] section",
                )
            })?;
            let inst = DiscreteInstance {
                name: i.name.clone(),
                states: i.states.clone(),
                actions: i.actions.clone(),
                noise: i.noise.clone(),
                noise_probs: i.noise_probs.clone(),
                xi_probs: i.xi_probs.clone(),
                mu0: i.mu0.clone(),
                summary: SummaryStat {
                    cells: i
                        .cells
                        .iter()
                        .map(|c| CellPattern {
                            x0: c.x0,
                            x1: c.x1,
                            a: c.a,
                        })
                        .collect(),
                    thresholds: i.thresholds.clone(),
                },
                table: i.table.clone(),
                utility: i.utility.clone(),
            };
            return DiscreteModel::new(inst)
                .map(Model::Discrete)
                .map_err(|e| cx.err("model.instance", "", e.to_string()));
        }
    };
    model.map_err(|e| cx.err("model", "builtin", e.to_string()))
}

fn build_sweep(s: &RawSweep, mode: Mode, seed: u64, cx: &Ctx) -> Result<Sweep, ConfigError> {
    if s.n.is_empty() {
        return Err(cx.err("sweep", "n", "n list is empty"));
    }
    if s.n.iter().any(|&n| n < 1) {
        return Err(cx.err("sweep", "n", "population sizes must be at least 1"));
    }
    if s.n.windows(2).any(|w| w[0] >= w[1]) {
        return Err(cx.err("sweep", "n", "n list must be strictly ascending"));
    }
    if s.delta.is_empty() {
        return Err(cx.err("sweep", "delta", "delta list is empty"));
    }
    let mut deltas = Vec::with_capacity(s.delta.len());
    for &d in &s.delta {
        if d == f64::INFINITY {
            deltas.push(None);
        } else if d > 0.0 && d.is_finite() {
            deltas.push(Some(d));
        } else {
            return Err(cx.err(
                "sweep",
                "delta",
                format!("delta = {d} must be positive or inf"),
            ));
        }
    }
    if !(s.epsilon > 0.0) || !s.epsilon.is_finite() {
        return Err(cx.err(
            "sweep",
            "epsilon",
            format!("epsilon = {} must be positive", s.epsilon),
        ));
    }
    let x0_grid = s
        .x0_grid
        .points()
        .map_err(|e| cx.err("sweep", "x0_grid", e))?;
    if x0_grid.is_empty() || x0_grid.iter().any(|x| !x.is_finite()) {
        return Err(cx.err(
            "sweep",
            "x0_grid",
            "evaluation grid must be nonempty and finite",
        ));
    }
    let mut deviation = DeviationConfig {
        seed,
        ..Default::default()
    };
    let mut ct_deviation = CtDeviationConfig {
        seed,
        ..Default::default()
    };
    set(&mut deviation.replications, s.replications);
    set(&mut deviation.batches, s.batches);
    set(&mut ct_deviation.replications, s.replications);
    set(&mut ct_deviation.batches, s.batches);
    deviation.picard = PicardConfig {
        tol: s.picard_tol.unwrap_or(deviation.picard.tol),
        max_iters: s.picard_max_iters.unwrap_or(deviation.picard.max_iters),
    };
    match (&s.deviation, mode) {
        (None, _) => {}
        (Some(RawDeviation::Incumbent), Mode::Static) => {
            deviation.class = DeviationClass::Incumbent
        }
        (Some(RawDeviation::Incumbent), Mode::Continuous) => ct_deviation.offsets = vec![0.0],
        (
            Some(RawDeviation::OwnInformation {
                window,
                max_enumeration,
            }),
            Mode::Static,
        ) => {
            deviation.class = DeviationClass::OwnInformation {
                window: *window,
                max_enumeration: max_enumeration.unwrap_or(10_000),
            }
        }
        (Some(RawDeviation::Offsets { offsets }), Mode::Continuous) => {
            ct_deviation.offsets = offsets
                .points()
                .map_err(|e| cx.err("sweep", "deviation", e))?
        }
        (Some(_), _) => {
            return Err(cx.err(
                "sweep",
                "deviation",
                "deviation class does not apply to this mode",
            ));
        }
    }
    match mode {
        Mode::Static => deviation.validate(),
        Mode::Continuous => ct_deviation.validate(),
    }
    .map_err(|e| cx.err("sweep", "replications", e.to_string()))?;
    Ok(Sweep {
        n: s.n.iter().map(|&n| n as usize).collect(),
        deltas,
        epsilon: s.epsilon,
        x0_grid,
        deviation,
        ct_deviation,
    })
}
