use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_meanfield"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn meanfield(verb: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![verb, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(csv_files(&p));
        } else if p.extension().is_some_and(|x| x == "csv") {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn static_run_writes_every_output_with_seed_and_build() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = meanfield("run", &config("lq_static_small.toml"), &out, &["--workers", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["certificate.csv", "mfe.csv", "sweep.csv", "sweep_summary.csv", "decay.svg", "timing.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(!out.join(".partial").exists());
    for f in csv_files(&out) {
        let mut r = csv::Reader::from_path(&f).unwrap();
        let h = r.headers().unwrap().clone();
        let seed = h.iter().position(|c| c == "seed").expect("seed column");
        let build = h.iter().position(|c| c == "build").expect("build column");
        for row in r.records() {
            let row = row.unwrap();
            assert_eq!(&row[seed], "7");
            assert!(!row[build].is_empty());
        }
    }
    // 2 population sizes x 2 deltas.
    let summary = fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 4 * 3);
}

#[test]
fn same_seed_gives_identical_bytes_and_seed_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("lq_static_small.toml");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert!(meanfield("run", &cfg, &a, &["--workers", "1"]).status.success());
    assert!(meanfield("run", &cfg, &b, &["--workers", "3"]).status.success());
    assert!(meanfield("run", &cfg, &c, &["--seed", "8"]).status.success());
    for f in ["certificate.csv", "mfe.csv", "sweep.csv", "sweep_summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("sweep.csv")).unwrap(), fs::read(c.join("sweep.csv")).unwrap());
    assert!(fs::read_to_string(c.join("sweep.csv")).unwrap().lines().skip(1).all(|l| l.contains(",8,")));
}

#[test]
fn nonpositive_epsilon_exits_3_with_a_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("lq_static_small.toml")).unwrap();
    let line = text.lines().position(|l| l.starts_with("epsilon")).unwrap() + 1;
    let cfg = write_config(tmp.path(), "bad.toml", &text.replace("epsilon = 0.1", "epsilon = 0.0"));
    let out = tmp.path().join("o");
    let o = meanfield("run", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("bad.toml:{line}: epsilon")), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_key_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("lq_static_small.toml")).unwrap();
    let cfg = write_config(tmp.path(), "typo.toml", &text.replace("[mfe]\n", "[mfe]\nparticels = 10\n"));
    let o = meanfield("mfe", &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("particels"));
}

#[test]
fn non_convergence_exits_2_and_leaves_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "nc.toml",
        r#"
mode = "static"
seed = 1
[model]
builtin = "lq_static"
rho = 0.3
kappa = 0.9
sigma = 1.0
actions = { lo = -3.0, hi = 3.0, spacing = 0.05 }
mu0 = { kind = "normal", mean = 1.0, sd = 1.0 }
[mfe]
particles = 1000
br_samples = 64
x0_grid = [-1.0, 0.0, 1.0, 2.0, 3.0]
max_iters = 2
[sweep]
n = [5]
delta = [inf]
epsilon = 0.1
replications = 40
batches = 20
x0_grid = [0]
"#,
    );
    let out = tmp.path().join("o");
    let o = meanfield("run", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    // A preexisting directory keeps its files and gains nothing.
    fs::create_dir(&out).unwrap();
    fs::write(out.join("old.txt"), "x").unwrap();
    assert_eq!(meanfield("run", &cfg, &out, &[]).status.code(), Some(2));
    let left: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec!["old.txt"]);
}

#[test]
fn verify_passes_on_the_decoupled_flip() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("discrete_flip.toml")).unwrap();
    let cfg = write_config(tmp.path(), "flip.toml", &text.replace("bias = 0.5", "bias = 1.1"));
    let out = tmp.path().join("o");
    let o = meanfield("verify", &cfg, &out, &[]);
    let table = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{table}");
    assert!(!table.contains("FAIL"));
    assert!(out.join("verify.csv").exists());
}

#[test]
fn verify_seed_mismatch_exits_4_naming_the_quantity() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = meanfield("verify", &config("discrete_flip.toml"), &out, &["--seed-mismatch"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("law mfe n=2"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn verify_rejects_a_continuous_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = meanfield("verify", &config("lq_continuous_small.toml"), &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn continuous_mfe_writes_a_flow_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = meanfield("mfe", &config("lq_continuous_small.toml"), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(out.join("flow/manifest.csv")).unwrap();
    // 10 steps plus the initial time.
    assert_eq!(manifest.lines().count(), 1 + 11);
    assert!(manifest.starts_with("step,t,file,seed,build"));
    assert!(out.join("flow/flow_00010.txt").exists());
}

#[test]
fn simulate_dumps_one_population() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    assert!(meanfield("simulate", &config("lq_static_small.toml"), &out, &[]).status.success());
    let mut r = csv::Reader::from_path(out.join("population.csv")).unwrap();
    let rows: Vec<_> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 20);
    assert_eq!(&rows[0][2], "1.5");

    let out = tmp.path().join("t");
    assert!(meanfield("simulate", &config("lq_continuous_small.toml"), &out, &[]).status.success());
    let text = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert!(text.starts_with("agent,path,step,t,x,shadow_x,action,seed,build"));
    assert_eq!(text.lines().count(), 1 + 4 * 11);
}

#[test]
fn bad_arguments_exit_3() {
    assert_eq!(run(&["run", "--config"]).status.code(), Some(3));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}
