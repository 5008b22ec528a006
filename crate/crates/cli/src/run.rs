//! The `run`, `mfe` and `simulate` verbs, and the output directory they write.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use meanfield::continuous_game::{
    ct_deviation_report, simulate_n_player_openloop, solve_mfg_flow, FeedbackControl,
    MfgFlowSolution,
};
use meanfield::model::{check_assumptions, check_drift_bound, ContinuousModel, StaticModel};
use meanfield::rng::Streams;
use meanfield::static_game::{
    induce_profile, max_deviation, solve_mfe, solve_population_state, DeviationReport, Draws,
    MfeSolution, REPORT_COLUMNS,
};
use meanfield::Error;

use crate::config::{ConfigError, Experiment, Model, Sweep};
use crate::svg::{log_log_chart, Series};

/// `git describe`-style identifier of this build.
pub const BUILD: &str = env!("MEANFIELD_BUILD");

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    NotConverged(String),
    Disagreement(Vec<String>),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 3,
            Failure::NotConverged(_) => 2,
            Failure::Disagreement(_) => 4,
            Failure::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {e}"),
            Failure::NotConverged(m) => write!(f, "solver did not converge: {m}"),
            Failure::Disagreement(q) => write!(f, "oracle disagreement in: {}", q.join(", ")),
            Failure::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        fn picard(e: &Error) -> bool {
            match e {
                Error::PicardDiverged { .. } => true,
                Error::Replication { source, .. } => picard(source),
                _ => false,
            }
        }
        if picard(&e) {
            Failure::NotConverged(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("io error: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(format!("csv error: {e}"))
    }
}

pub type Outcome<T> = Result<T, Failure>;

fn usage(exp: &Experiment, message: &str) -> Failure {
    Failure::Config(ConfigError {
        path: exp.path.clone(),
        line: None,
        message: message.into(),
    })
}

/// Files are written to a staging directory inside the output directory and
/// moved into place only when the whole verb succeeds.
pub struct Staging {
    target: PathBuf,
    dir: PathBuf,
    created_target: bool,
}

impl Staging {
    pub fn new(target: &Path) -> Outcome<Self> {
        let created_target = !target.exists();
        fs::create_dir_all(target)?;
        let dir = target.join(".partial");
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self {
            target: target.to_path_buf(),
            dir,
            created_target,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn commit(self) -> Outcome<Vec<PathBuf>> {
        let mut moved = Vec::new();
        let mut entries: Vec<_> = fs::read_dir(&self.dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let dest = self.target.join(e.file_name());
            if dest.is_dir() {
                fs::remove_dir_all(&dest)?;
            }
            fs::rename(e.path(), &dest)?;
            moved.push(dest);
        }
        fs::remove_dir(&self.dir)?;
        Ok(moved)
    }

    pub fn abandon(self) {
        let _ = fs::remove_dir_all(&self.dir);
        if self.created_target {
            let _ = fs::remove_dir(&self.target);
        }
    }
}

fn tags(seed: u64) -> [(&'static str, String); 2] {
    [("seed", seed.to_string()), ("build", BUILD.to_string())]
}

fn csv_writer(path: &Path) -> Outcome<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn static_model(model: &Model) -> Option<&dyn StaticModel> {
    match model {
        Model::LqStatic(m) => Some(m),
        Model::Discrete(m) => Some(m),
        Model::LqContinuous(_) => None,
    }
}

fn continuous_model(model: &Model) -> Option<&dyn ContinuousModel> {
    match model {
        Model::LqContinuous(m) => Some(m),
        _ => None,
    }
}

pub fn write_certificate(exp: &Experiment, path: &Path) -> Outcome<bool> {
    let mut w = csv_writer(path)?;
    w.write_record(["model_id", "quantity", "value", "seed", "build"])?;
    let id = exp.model.id();
    let mut rows: Vec<(&str, String)> = Vec::new();
    let pass = if let Some(m) = static_model(&exp.model) {
        match check_assumptions(m, exp.p, exp.certificate_samples, exp.seed) {
            Ok(c) => {
                rows.push(("p", c.p.q().to_string()));
                rows.push(("c_mean", c.c_mean.to_string()));
                rows.push(("c_max", c.c_max.to_string()));
                rows.push(("integrability", c.integrability.to_string()));
                rows.push(("near_one", c.near_one.to_string()));
                rows.push(("growth_violations", c.growth_violations.to_string()));
                rows.push(("tail_count", c.tail_count.to_string()));
                rows.push(("sample_size", c.sample_size.to_string()));
                rows.push(("pass", c.pass.to_string()));
                c.pass
            }
            Err(Error::MissingCertificate(_)) => {
                rows.push(("contraction", "missing".into()));
                rows.push(("pass", "false".into()));
                false
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        let m = continuous_model(&exp.model).expect("model is static or continuous");
        let violations = check_drift_bound(m, exp.certificate_samples, exp.seed);
        rows.push(("drift_bound", m.drift_bound().to_string()));
        rows.push(("drift_violations", violations.to_string()));
        rows.push(("sample_size", exp.certificate_samples.to_string()));
        rows.push(("pass", (violations == 0).to_string()));
        violations == 0
    };
    let [(_, seed), (_, build)] = tags(exp.seed);
    for (q, v) in rows {
        w.write_record([id.as_str(), q, v.as_str(), seed.as_str(), build.as_str()])?;
    }
    w.flush()?;
    Ok(pass)
}

pub enum Solution {
    Static(MfeSolution),
    Continuous(MfgFlowSolution),
}

/// Solves for the equilibrium; non-convergence is a failure.
pub fn solve(exp: &Experiment) -> Outcome<Solution> {
    let sol = if let Some(m) = static_model(&exp.model) {
        let sol = solve_mfe(m, &exp.mfe)?;
        if !sol.converged {
            return Err(Failure::NotConverged(format!(
                "mean field iteration stopped after {} iterations with residual {:e}",
                sol.br_iterations, sol.fixed_point_residual
            )));
        }
        Solution::Static(sol)
    } else {
        let m = continuous_model(&exp.model).expect("model is static or continuous");
        let sol = solve_mfg_flow(m, &exp.mfg)?;
        if !sol.converged {
            return Err(Failure::NotConverged(format!(
                "flow iteration stopped after {} iterations with residual {:e}; history {:?}",
                sol.iterations, sol.residual, sol.residual_history
            )));
        }
        Solution::Continuous(sol)
    };
    Ok(sol)
}

fn policy_at(control: &FeedbackControl, k: usize) -> String {
    match control {
        FeedbackControl::LinearGains { gains, .. } => {
            format!("g1={};g0={}", gains[k].0, gains[k].1)
        }
        FeedbackControl::Table {
            x0_grid,
            cells,
            actions,
            ..
        } => {
            let row = cells.len() / x0_grid.len();
            cells[k * row..(k + 1) * row]
                .iter()
                .map(|&c| actions.get(c).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        }
    }
}

/// `mfe.csv`, plus the `flow/` directory for a continuous game.
pub fn write_solution(exp: &Experiment, sol: &Solution, staging: &Staging) -> Outcome<()> {
    let [(_, seed), (_, build)] = tags(exp.seed);
    let mut w = csv_writer(&staging.path("mfe.csv"))?;
    match sol {
        Solution::Static(s) => {
            w.write_record([
                "x0",
                "xi_bin",
                "action",
                "value",
                "value_se",
                "residual",
                "iterations",
                "converged",
                "seed",
                "build",
            ])?;
            let edges = s.strategy.xi_edges();
            let bins = edges.len() + 1;
            for e in &s.value_table {
                for b in 0..bins {
                    let lo = if b == 0 { 0.0 } else { edges[b - 1] };
                    let hi = if b + 1 == bins { 1.0 } else { edges[b] };
                    w.write_record([
                        e.x0.to_string(),
                        b.to_string(),
                        s.strategy.evaluate(e.x0, 0.5 * (lo + hi)).to_string(),
                        e.value.to_string(),
                        e.se.to_string(),
                        s.fixed_point_residual.to_string(),
                        s.br_iterations.to_string(),
                        s.converged.to_string(),
                        seed.clone(),
                        build.clone(),
                    ])?;
                }
            }
        }
        Solution::Continuous(s) => {
            w.write_record([
                "x0",
                "policy",
                "value",
                "value_se",
                "residual",
                "iterations",
                "converged",
                "seed",
                "build",
            ])?;
            for (k, e) in s.value_table.iter().enumerate() {
                w.write_record([
                    e.x0.to_string(),
                    policy_at(&s.control, k),
                    e.value.to_string(),
                    e.se.to_string(),
                    s.residual.to_string(),
                    s.iterations.to_string(),
                    s.converged.to_string(),
                    seed.clone(),
                    build.clone(),
                ])?;
            }
            s.flow.write_dir(&staging.path("flow"), &tags(exp.seed))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n: usize,
    pub delta: Option<f64>,
    pub dbar_delta: f64,
    pub dbar_se: f64,
    pub gbar_delta: f64,
    pub gbar_se: f64,
    pub classification: String,
    /// Ratio to the previous population size at the same `δ`.
    pub dbar_ratio: Option<f64>,
    pub gbar_ratio: Option<f64>,
    pub picard_max_ratio: Option<f64>,
}

pub struct SweepResult {
    /// One untruncated report per population size.
    pub reports: Vec<DeviationReport>,
    pub rows: Vec<SummaryRow>,
    pub wall: Vec<Duration>,
}

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "n",
    "delta",
    "dbar_delta",
    "dbar_se",
    "gbar_delta",
    "gbar_se",
    "classification",
    "dbar_ratio",
    "gbar_ratio",
    "picard_max_ratio",
    "seed",
    "build",
];

/// Standard error of the maximizer of `value` inside the truncation ball.
fn se_of_max(
    r: &DeviationReport,
    value: impl Fn(&meanfield::static_game::GainEstimate) -> f64,
    se: impl Fn(&meanfield::static_game::GainEstimate) -> f64,
    target: f64,
) -> f64 {
    let radius = meanfield::static_game::truncation_radius(r.n, r.delta);
    r.per_agent
        .iter()
        .find(|g| g.x0.abs() <= radius && value(g) == target)
        .map_or(0.0, se)
}

fn summarize(reports: &[DeviationReport], deltas: &[Option<f64>]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    for (k, base) in reports.iter().enumerate() {
        for &delta in deltas {
            let r = base.with_delta(delta);
            let prev = (k > 0).then(|| reports[k - 1].with_delta(delta));
            let ratio = |now: f64, before: Option<f64>| before.filter(|&b| b > 0.0).map(|b| now / b);
            rows.push(SummaryRow {
                n: r.n,
                delta,
                dbar_delta: r.dbar_delta,
                dbar_se: se_of_max(&r, |g| g.gain, |g| g.gain_se, r.dbar_delta),
                gbar_delta: r.gbar_delta,
                gbar_se: se_of_max(
                    &r,
                    |g| g.gap.unwrap_or(0.0),
                    |g| g.gap_se.unwrap_or(0.0),
                    r.gbar_delta,
                ),
                classification: r.classification.to_string(),
                dbar_ratio: ratio(r.dbar_delta, prev.as_ref().map(|p| p.dbar_delta)),
                gbar_ratio: ratio(r.gbar_delta, prev.as_ref().map(|p| p.gbar_delta)),
                picard_max_ratio: r.picard_max_ratio(),
            });
        }
    }
    rows
}

/// Deviation reports for every population size of the sweep.
pub fn sweep(
    exp: &Experiment,
    sweep: &Sweep,
    sol: &Solution,
    mut progress: impl FnMut(usize, Duration),
) -> Outcome<SweepResult> {
    let mut reports = Vec::with_capacity(sweep.n.len());
    let mut wall = Vec::with_capacity(sweep.n.len());
    for &n in &sweep.n {
        let start = Instant::now();
        let report = match sol {
            Solution::Static(s) => {
                let m = static_model(&exp.model).expect("static solution has a static model");
                max_deviation(
                    m,
                    s,
                    n,
                    None,
                    sweep.epsilon,
                    &sweep.x0_grid,
                    &sweep.deviation,
                )?
            }
            Solution::Continuous(s) => {
                let m = continuous_model(&exp.model)
                    .expect("continuous solution has a continuous model");
                ct_deviation_report(
                    m,
                    s,
                    n,
                    None,
                    sweep.epsilon,
                    &sweep.x0_grid,
                    s.grid(),
                    &sweep.ct_deviation,
                )?
            }
        };
        let elapsed = start.elapsed();
        progress(n, elapsed);
        wall.push(elapsed);
        reports.push(report);
    }
    let rows = summarize(&reports, &sweep.deltas);
    Ok(SweepResult {
        reports,
        rows,
        wall,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn fmt_delta(d: Option<f64>) -> String {
    d.map_or("inf".into(), |x| x.to_string())
}

pub fn write_sweep(
    exp: &Experiment,
    sweep: &Sweep,
    result: &SweepResult,
    staging: &Staging,
) -> Outcome<()> {
    let [(_, seed), (_, build)] = tags(exp.seed);
    let mut w = csv_writer(&staging.path("sweep.csv"))?;
    w.write_record(REPORT_COLUMNS)?;
    for base in &result.reports {
        for &delta in &sweep.deltas {
            for row in base.with_delta(delta).csv_rows(BUILD) {
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;

    let mut w = csv_writer(&staging.path("sweep_summary.csv"))?;
    w.write_record(SUMMARY_COLUMNS)?;
    for r in &result.rows {
        w.write_record([
            r.n.to_string(),
            fmt_delta(r.delta),
            r.dbar_delta.to_string(),
            r.dbar_se.to_string(),
            r.gbar_delta.to_string(),
            r.gbar_se.to_string(),
            r.classification.clone(),
            opt(r.dbar_ratio),
            opt(r.gbar_ratio),
            opt(r.picard_max_ratio),
            seed.clone(),
            build.clone(),
        ])?;
    }
    w.flush()?;

    let mut series = Vec::new();
    for &delta in &sweep.deltas {
        let of = |f: &dyn Fn(&SummaryRow) -> f64| {
            result
                .rows
                .iter()
                .filter(|r| r.delta == delta)
                .map(|r| (r.n as f64, f(r)))
                .collect::<Vec<_>>()
        };
        series.push(Series {
            label: format!("D delta={}", fmt_delta(delta)),
            dashed: false,
            points: of(&|r| r.dbar_delta),
        });
        series.push(Series {
            label: format!("G delta={}", fmt_delta(delta)),
            dashed: true,
            points: of(&|r| r.gbar_delta),
        });
    }
    let title = format!("{} (seed {})", exp.model.id(), exp.seed);
    fs::write(
        staging.path("decay.svg"),
        log_log_chart(&title, "n", "max deviation gain / gap", &series),
    )?;

    // Wall times vary between runs, so they stay out of the CSV files.
    let mut t = fs::File::create(staging.path("timing.txt"))?;
    for (n, d) in sweep.n.iter().zip(&result.wall) {
        writeln!(t, "n={n} seconds={:.3}", d.as_secs_f64())?;
    }
    Ok(())
}

/// One population realization under the equilibrium profile.
pub fn write_simulation(exp: &Experiment, sol: &Solution, staging: &Staging) -> Outcome<()> {
    let sim = exp
        .simulate
        .clone()
        .ok_or_else(|| usage(exp, "simulate needs a [simulate] section"))?;
    let tags = tags(exp.seed);
    match sol {
        Solution::Static(s) => {
            let m = static_model(&exp.model).expect("static solution has a static model");
            let profile = induce_profile(s, sim.n)?;
            let mut draws = Draws::sample(m, sim.n, &Streams::new(exp.seed), sim.replication);
            if let Some(pin) = sim.pin {
                draws.x0[0] = pin;
            }
            let state = solve_population_state(
                m,
                &profile,
                &draws,
                &exp.sweep
                    .as_ref()
                    .map(|s| s.deviation.picard.clone())
                    .unwrap_or_default(),
            )?;
            let mut w = csv_writer(&staging.path("population.csv"))?;
            w.write_record([
                "agent",
                "replication",
                "x0",
                "xi",
                "eta",
                "action",
                "x1",
                "residual",
                "picard_iters",
                "seed",
                "build",
            ])?;
            for i in 0..sim.n {
                w.write_record([
                    i.to_string(),
                    sim.replication.to_string(),
                    format!("{:?}", state.x0[i]),
                    format!("{:?}", state.xi[i]),
                    format!("{:?}", state.eta[i]),
                    format!("{:?}", state.actions[i]),
                    format!("{:?}", state.x1[i]),
                    state.residual.to_string(),
                    state.picard_iters.to_string(),
                    tags[0].1.clone(),
                    tags[1].1.clone(),
                ])?;
            }
            w.flush()?;
        }
        Solution::Continuous(s) => {
            let m =
                continuous_model(&exp.model).expect("continuous solution has a continuous model");
            let run = simulate_n_player_openloop(
                m,
                s,
                sim.n,
                s.grid(),
                exp.seed,
                sim.replication,
                sim.pin.map(|x| (0, x)),
            )?;
            let f = std::io::BufWriter::new(fs::File::create(staging.path("trajectories.csv"))?);
            run.write_trajectories(f, true, &tags)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Run,
    Mfe,
    Simulate,
}

/// Runs a verb into `out`; on failure nothing is left behind.
pub fn execute(
    exp: &Experiment,
    verb: Verb,
    out: &Path,
    log: &mut dyn Write,
) -> Outcome<Vec<PathBuf>> {
    let sweep_cfg = match verb {
        Verb::Run => Some(
            exp.sweep
                .clone()
                .ok_or_else(|| usage(exp, "run needs a [sweep] section"))?,
        ),
        _ => None,
    };
    if verb == Verb::Simulate && exp.simulate.is_none() {
        return Err(usage(exp, "simulate needs a [simulate] section"));
    }
    let staging = Staging::new(out)?;
    let result = (|| -> Outcome<()> {
        if verb == Verb::Run {
            let pass = write_certificate(exp, &staging.path("certificate.csv"))?;
            if !pass {
                let _ = writeln!(
                    log,
                    "warning: assumption certificate did not pass, see certificate.csv"
                );
            }
        }
        let start = Instant::now();
        let sol = solve(exp)?;
        let _ = writeln!(
            log,
            "equilibrium solved in {:.1}s",
            start.elapsed().as_secs_f64()
        );
        match verb {
            Verb::Run => {
                write_solution(exp, &sol, &staging)?;
                let sweep_cfg = sweep_cfg.as_ref().expect("checked above");
                let result = sweep(exp, sweep_cfg, &sol, |n, d| {
                    let _ = writeln!(log, "n = {n}: {:.1}s", d.as_secs_f64());
                })?;
                write_sweep(exp, sweep_cfg, &result, &staging)?;
            }
            Verb::Mfe => write_solution(exp, &sol, &staging)?,
            Verb::Simulate => write_simulation(exp, &sol, &staging)?,
        }
        Ok(())
    })();
    match result {
        Ok(()) => staging.commit(),
        Err(e) => {
            staging.abandon();
            Err(e)
        }
    }
}
