//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! when any criterion fails. The expensive runs go through the binary so the
//! criteria see exactly what a user sees.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use meanfield::continuous_game::{
    simulate_mean_field_sde, simulate_n_player_openloop, solve_mfg_flow, FeedbackControl, Initial,
    MeasureFlow, MfgConfig, PolicyClass, TimeGrid,
};
use meanfield::measures::{
    wasserstein, wasserstein_lp, EmpiricalMeasure, GroundMetric, WassersteinOrder,
};
use meanfield::model::{builtin_lq_continuous, ActionGrid, ContinuousModel};
use meanfield_cli::config::{self, Model};
use meanfield_cli::run::{self, Solution};
use meanfield_cli::verify;
use rand::{Rng, SeedableRng};

struct Verdict {
    id: &'static str,
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(id: &'static str, pass: bool, detail: String) -> Self {
        println!("{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
        Verdict { id, pass, detail }
    }
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// Runs the binary and returns its exit code.
fn meanfield(verb: &str, cfg: &Path, out: &Path, workers: usize) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_meanfield"))
        .args([verb, "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(["--workers", &workers.to_string()])
        .stdout(std::process::Stdio::null())
        .status()
        .expect("binary runs");
    status.code().unwrap_or(-1)
}

type Table = Vec<BTreeMap<String, String>>;

fn read_csv(path: &Path) -> Table {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    let h = r.headers().unwrap().clone();
    r.records()
        .map(|row| {
            let row = row.unwrap();
            h.iter()
                .zip(row.iter())
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

// ---------------------------------------------------------------------------

fn random_measure(rng: &mut impl Rng, max_support: usize) -> EmpiricalMeasure {
    let k = rng.random_range(1..=max_support);
    let pts: Vec<Vec<f64>> = (0..k)
        .map(|_| vec![rng.random_range(-3.0..3.0)])
        .collect();
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    EmpiricalMeasure::from_samples(&pts, Some(&w)).unwrap()
}

fn ac4() -> Verdict {
    let start = Instant::now();
    let mut rng = rand::rngs::StdRng::seed_from_u64(4);
    let orders = [
        WassersteinOrder::Zero,
        WassersteinOrder::One,
        WassersteinOrder::Two,
    ];
    let (mut sym, mut tri, mut lp) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    let mut order_bad = 0;
    let mut w0_bad = 0;
    for trial in 0..200 {
        let cap = if trial % 2 == 0 { 10 } else { 50 };
        let mu = random_measure(&mut rng, cap);
        let nu = random_measure(&mut rng, cap);
        let la = random_measure(&mut rng, cap);
        for q in orders {
            let d = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| wasserstein(q, a, b).unwrap();
            let (ab, ba) = (d(&mu, &nu), d(&nu, &mu));
            sym = sym.max((ab - ba).abs());
            tri = tri.max(ab - d(&mu, &la) - d(&la, &nu));
            if cap == 10 {
                let exact = wasserstein_lp(q, &mu, &nu, GroundMetric::Euclidean).unwrap();
                lp = lp.max((ab - exact).abs());
            }
        }
        let w = |q| wasserstein(q, &mu, &nu).unwrap();
        if w(WassersteinOrder::One) > w(WassersteinOrder::Two) {
            order_bad += 1;
        }
        if w(WassersteinOrder::Zero) > 1.0 {
            w0_bad += 1;
        }
    }
    let wall = start.elapsed();
    let pass = sym <= 1e-12
        && tri <= 1e-10
        && order_bad == 0
        && w0_bad == 0
        && lp <= 1e-10
        && wall < Duration::from_secs(30);
    Verdict::new(
        "AC4",
        pass,
        format!(
            "metric suite: asym {sym:.1e} (<=1e-12), triangle excess {tri:.1e} (<=1e-10), W1>W2 {order_bad}, W0>1 {w0_bad}, exact-vs-LP {lp:.1e} (<=1e-10), {} (<30s)",
            secs(wall)
        ),
    )
}

fn ac1() -> Verdict {
    let start = Instant::now();
    let exp = config::load(&config_path("lq_static.toy")).unwrap();
    let Ok(Solution::Static(sol)) = run::solve(&exp) else {
        return Verdict::new("AC1", false, "solver did not converge".into());
    };
    let wall = start.elapsed();
    let bins = sol.strategy.xi_bins();
    let mut policy_err = 0.0f64;
    for &x0 in exp.mfe.x0_grid.iter().filter(|x| x.abs() <= 2.0 + 1e-9) {
        for b in 0..bins {
            let xi = (b as f64 + 0.5) / bins as f64;
            policy_err = policy_err.max((sol.strategy.evaluate(x0, xi) + 0.3 * x0).abs());
        }
    }
    let m1 = sol.x1.iter().sum::<f64>() / sol.x1.len() as f64;
    let value_err = sol
        .value_table
        .iter()
        .filter(|v| v.x0.abs() <= 2.0 + 1e-9)
        .map(|v| (v.value + 1.0).abs())
        .fold(0.0, f64::max);
    let pass = policy_err <= 0.02
        && m1.abs() <= 0.01
        && value_err <= 0.05
        && wall < Duration::from_secs(120);
    Verdict::new(
        "AC1",
        pass,
        format!(
            "LQ static MFE: sup|a+0.3x0| {policy_err:.4} (<=0.02), |mean X1| {:.4} (<=0.01), sup|V+1| {value_err:.4} (<=0.05), {} (<120s)",
            m1.abs(),
            secs(wall)
        ),
    )
}

fn ou_check() -> (f64, f64, f64) {
    let m = builtin_lq_continuous(1.0, 0.0, 1.0, ActionGrid::uniform(-5.0, 5.0, 0.5).unwrap())
        .unwrap();
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let flow = MeasureFlow::frozen(&m, grid, vec![0.0]).unwrap();
    let zero = FeedbackControl::constant(0.0, m.action_bounds()).unwrap();
    let e = simulate_mean_field_sde(&m, &flow, &zero, Initial::Pinned(0.0), 20_000, grid, 7)
        .unwrap();
    let xs = e.terminal();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let se = ((m4 - var * var) / n).sqrt();
    (var, se, grid.dt())
}

fn ac7() -> Verdict {
    let start = Instant::now();
    let m = builtin_lq_continuous(1.0, 0.0, 1.0, ActionGrid::uniform(-5.0, 5.0, 0.5).unwrap())
        .unwrap();
    let cfg = MfgConfig {
        paths: 2000,
        eval_paths: 32,
        steps: 200,
        x0_grid: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        policy_class: PolicyClass::LinearGains {
            slopes: vec![-1.0, 0.0],
            intercepts: vec![-1.0, 0.0, 1.0],
            refinements: 1,
        },
        max_iters: 3,
        seed: 7,
        ..Default::default()
    };
    let sol = solve_mfg_flow(&m, &cfg).unwrap();
    let run = simulate_n_player_openloop(&m, &sol, 50, sol.grid(), 7, 0, None).unwrap();
    let bitwise = run.actual.len() == run.shadow.len()
        && run
            .actual
            .iter()
            .zip(&run.shadow)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    let (var, se, dt) = ou_check();
    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    let wall = start.elapsed();
    let tol = 3.0 * se + 2.0 * dt;
    let pass = bitwise && (var - exact).abs() <= tol && wall < Duration::from_secs(60);
    Verdict::new(
        "AC7",
        pass,
        format!(
            "continuous decoupling: actual==shadow bitwise {bitwise}, OU var {var:.5} vs {exact:.5} (|diff| {:.5} <= {tol:.5}), {} (<60s)",
            (var - exact).abs(),
            secs(wall)
        ),
    )
}

fn ac3() -> (Verdict, Verdict) {
    let start = Instant::now();
    let exp = config::load(&config_path("discrete_flip.toml")).unwrap();
    let Model::Discrete(model) = &exp.model else {
        unreachable!()
    };
    let v = exp.verify.clone().unwrap();
    let mut passes: BTreeMap<String, usize> = BTreeMap::new();
    let mut negative_gain = 0;
    for seed in 0..100 {
        for c in verify::checks(model, &v, seed, false).unwrap() {
            *passes.entry(c.key()).or_default() += c.pass as usize;
            if c.quantity == "gain" && c.estimate < 0.0 {
                negative_gain += 1;
            }
        }
    }
    let wall = start.elapsed();
    let (worst_key, worst) = passes
        .iter()
        .min_by_key(|(_, &p)| p)
        .map(|(k, &p)| (k.clone(), p))
        .unwrap();
    let per_quantity: BTreeMap<&str, usize> =
        passes.iter().fold(BTreeMap::new(), |mut acc, (k, &p)| {
            let q = k.split(' ').next().unwrap();
            let e = acc.entry(q).or_insert(100);
            *e = (*e).min(p);
            acc
        });
    let ac3 = Verdict::new(
        "AC3",
        worst >= 99 && wall < Duration::from_secs(300),
        format!(
            "oracle equivalence: {} comparisons, worst {worst}/100 ({worst_key}), per quantity min {per_quantity:?}, {} (<300s)",
            passes.len(),
            secs(wall)
        ),
    );
    let partial = Verdict {
        id: "AC5",
        pass: negative_gain == 0,
        detail: format!("{negative_gain} negative gains in verify runs"),
    };
    (ac3, partial)
}

struct SweepCheck {
    monotone: bool,
    detail: String,
}

/// Monotone up to one standard error: `v[k+1] <= v[k] + max(se[k], se[k+1])`.
fn monotone(v: &[(f64, f64)]) -> bool {
    v.windows(2).all(|w| w[1].0 <= w[0].0 + w[0].1.max(w[1].1))
}

/// Nonnegative gains and `D̄^δ <= D̄^∞` in a finished sweep directory.
fn truncation_facts(dir: &Path) -> (usize, usize) {
    let rows = read_csv(&dir.join("sweep.csv"));
    let negative = rows.iter().filter(|r| num(r, "gain") < 0.0).count();
    let summary = read_csv(&dir.join("sweep_summary.csv"));
    let mut inf = BTreeMap::new();
    for r in summary.iter().filter(|r| r["delta"] == "inf") {
        inf.insert(r["n"].clone(), num(r, "dbar_delta"));
    }
    let mut violations = 0;
    for r in &summary {
        let d = num(r, "dbar_delta");
        let bound = match inf.get(&r["n"]) {
            Some(&b) => b,
            // No untruncated row: recompute the untruncated maximum.
            None => rows
                .iter()
                .filter(|x| x["n"] == r["n"] && x["delta"] == r["delta"])
                .map(|x| num(x, "gain"))
                .fold(0.0, f64::max),
        };
        if d > bound {
            violations += 1;
        }
    }
    (negative, violations)
}

fn decay_at(dir: &Path, delta: &str) -> Vec<(usize, (f64, f64), (f64, f64), Option<f64>)> {
    read_csv(&dir.join("sweep_summary.csv"))
        .iter()
        .filter(|r| r["delta"] == delta)
        .map(|r| {
            (
                r["n"].parse().unwrap(),
                (num(r, "dbar_delta"), num(r, "dbar_se")),
                (num(r, "gbar_delta"), num(r, "gbar_se")),
                r["picard_max_ratio"].parse().ok(),
            )
        })
        .collect()
}

fn ac2(out: &Path) -> (Verdict, Verdict, (usize, usize)) {
    let start = Instant::now();
    let code = meanfield("run", &config_path("lq_static.toy"), out, 1);
    let wall = start.elapsed();
    if code != 0 {
        let v = Verdict::new("AC2", false, format!("run exited with {code}"));
        let w = Verdict::new("AC6", false, "no run".into());
        return (v, w, (0, 1));
    }
    let rows = decay_at(out, "0.4");
    let d: Vec<(f64, f64)> = rows.iter().map(|r| r.1).collect();
    let g: Vec<(f64, f64)> = rows.iter().map(|r| r.2).collect();
    let ns: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let first = 0;
    let last = rows.len() - 1;
    let check = SweepCheck {
        monotone: monotone(&d) && monotone(&g),
        detail: format!(
            "n {ns:?}: Dbar {:?}, Gbar {:?}",
            d.iter().map(|x| x.0).collect::<Vec<_>>(),
            g.iter().map(|x| x.0).collect::<Vec<_>>()
        ),
    };
    let pass = ns == [10, 100, 1000]
        && d[last].0 <= 0.25 * d[first].0
        && g[last].0 <= 0.25 * g[first].0
        && check.monotone
        && wall < Duration::from_secs(600);
    let ac2 = Verdict::new(
        "AC2",
        pass,
        format!(
            "static decay at delta=0.4: {}, Dbar ratio {:.3}, Gbar ratio {:.3} (<=0.25 each), monotone within 1 SE {}, {} (<600s)",
            check.detail,
            d[last].0 / d[first].0,
            g[last].0 / g[first].0,
            check.monotone,
            secs(wall)
        ),
    );
    let ratios: Vec<Option<f64>> = rows.iter().map(|r| r.3).collect();
    let ac6 = Verdict::new(
        "AC6",
        ratios.iter().all(|r| matches!(r, Some(x) if *x <= 0.55)),
        format!("Picard residual ratio per n {ratios:?} (<=0.55)"),
    );
    (ac2, ac6, truncation_facts(out))
}

fn ac8(out: &Path) -> Verdict {
    let start = Instant::now();
    let code = meanfield("run", &config_path("lq_continuous.toml"), out, 1);
    let wall = start.elapsed();
    if code != 0 {
        return Verdict::new("AC8", false, format!("run exited with {code}"));
    }
    let rows = decay_at(out, "0.4");
    let d: Vec<f64> = rows.iter().map(|r| r.1 .0).collect();
    let ns: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let pass = ns == [10, 100, 500] && d[2] <= 0.4 * d[0] && wall < Duration::from_secs(900);
    Verdict::new(
        "AC8",
        pass,
        format!(
            "continuous decay at delta=0.4: n {ns:?}, Dbar {d:?} (Dbar(500) <= 0.4 Dbar(10)), {} (<900s)",
            secs(wall)
        ),
    )
}

fn csv_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            csv_files(root, &p, out);
        } else if p.extension().is_some_and(|x| x == "csv") {
            out.push(p.strip_prefix(root).unwrap().to_path_buf());
        }
    }
}

/// Runs a bundled config with the given worker count into `out`.
fn run_bundled(cfg: &Path, out: &Path, workers: usize) -> Result<(), String> {
    let exp = config::load(cfg).map_err(|e| e.to_string())?;
    let verb = if exp.sweep.is_some() { "run" } else { "mfe" };
    if !out.join("mfe.csv").exists() {
        let code = meanfield(verb, cfg, out, workers);
        if code != 0 {
            return Err(format!("{verb} exited with {code}"));
        }
    }
    if exp.verify.is_some() {
        let code = meanfield("verify", cfg, out, workers);
        if code != 0 {
            return Err(format!("verify exited with {code}"));
        }
    }
    Ok(())
}

fn ac9(scratch: &Path, reuse: &[(&str, PathBuf)]) -> Verdict {
    let start = Instant::now();
    let mut names: Vec<String> = fs::read_dir(config_path(""))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut problems = Vec::new();
    let mut compared = 0;
    for name in &names {
        let cfg = config_path(name);
        let one = reuse
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(|| scratch.join(format!("{name}.w1")));
        let eight = scratch.join(format!("{name}.w8"));
        for (dir, workers) in [(&one, 1), (&eight, 8)] {
            if let Err(e) = run_bundled(&cfg, dir, workers) {
                problems.push(format!("{name} workers={workers}: {e}"));
            }
        }
        let mut files = Vec::new();
        csv_files(&one, &one, &mut files);
        files.sort();
        let mut other = Vec::new();
        csv_files(&eight, &eight, &mut other);
        other.sort();
        if files != other {
            problems.push(format!("{name}: file sets differ"));
        }
        for f in &files {
            compared += 1;
            if fs::read(one.join(f)).ok() != fs::read(eight.join(f)).ok() {
                problems.push(format!("{name}: {} differs", f.display()));
            }
        }
    }
    Verdict::new(
        "AC9",
        problems.is_empty() && compared > 0,
        format!(
            "determinism over {} configs, {compared} CSV files compared across workers 1 and 8, {} differences {problems:?}, {}",
            names.len(),
            problems.len(),
            secs(start.elapsed())
        ),
    )
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let mut verdicts = vec![ac4(), ac1(), ac7()];

    let (ac3, verify_facts) = ac3();
    verdicts.push(ac3);

    let static_out = scratch.path().join("lq_static.toy.w1");
    let (ac2, ac6, (negative, violations)) = ac2(&static_out);
    verdicts.push(ac2);
    let flip_out = scratch.path().join("discrete_flip.toml.w1");
    let (flip_negative, flip_violations) = if run_bundled(&config_path("discrete_flip.toml"), &flip_out, 1).is_ok() {
        truncation_facts(&flip_out)
    } else {
        (0, 1)
    };
    verdicts.push(Verdict::new(
        "AC5",
        verify_facts.pass && negative + flip_negative == 0 && violations + flip_violations == 0,
        format!(
            "exact signs: {}; sweeps: {} negative gains, {} rows with Dbar^delta > Dbar^inf",
            verify_facts.detail,
            negative + flip_negative,
            violations + flip_violations
        ),
    ));
    verdicts.push(ac6);

    let continuous_out = scratch.path().join("lq_continuous.toml.w1");
    verdicts.push(ac8(&continuous_out));

    verdicts.push(ac9(
        scratch.path(),
        &[
            ("lq_static.toy", static_out),
            ("discrete_flip.toml", flip_out),
            ("lq_continuous.toml", continuous_out),
        ],
    ));

    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {}/{} criteria pass",
        verdicts.len() - failed.len(),
        verdicts.len()
    );
    if !failed.is_empty() {
        for v in verdicts.iter().filter(|v| !v.pass) {
            eprintln!("failed {}: {}", v.id, v.detail);
        }
        std::process::exit(1);
    }
}
