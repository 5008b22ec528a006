use meanfield::continuous_game::*;
use meanfield::measures::{wasserstein, WassersteinOrder};
use meanfield::model::*;

fn lq(theta: f64, kappa: f64) -> LqContinuous {
    builtin_lq_continuous(
        theta,
        kappa,
        1.0,
        ActionGrid::uniform(-5.0, 5.0, 0.5).unwrap(),
    )
    .unwrap()
}

/// Terminal variance of the Euler scheme for `dX = -θ X dt + dW`, `X_0 = 0`.
fn euler_ou_variance(theta: f64, horizon: f64, steps: usize) -> f64 {
    let dt = horizon / steps as f64;
    let r = (1.0 - theta * dt).powi(2);
    (0..steps).map(|j| dt * r.powi(j as i32)).sum()
}

fn sample_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (m2, ((m4 - m2 * m2) / n).sqrt())
}

fn ou_variance(steps: usize, paths: usize, seed: u64) -> (f64, f64) {
    let m = lq(1.0, 0.0);
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let flow = MeasureFlow::frozen(&m, grid, vec![0.0]).unwrap();
    let zero = FeedbackControl::constant(0.0, m.action_bounds()).unwrap();
    let e =
        simulate_mean_field_sde(&m, &flow, &zero, Initial::Pinned(0.0), paths, grid, seed).unwrap();
    sample_variance(&e.terminal())
}

fn linear_class() -> PolicyClass {
    PolicyClass::LinearGains {
        slopes: vec![-2.0, -1.0, 0.0],
        intercepts: (0..=12).map(|k| -3.0 + 0.5 * k as f64).collect(),
        refinements: 6,
    }
}

fn solve(kappa: f64, paths: usize) -> (LqContinuous, MfgFlowSolution) {
    let m = lq(1.0, kappa);
    let cfg = MfgConfig {
        paths,
        eval_paths: 128,
        steps: 20,
        x0_grid: (0..=12).map(|k| -3.0 + 0.5 * k as f64).collect(),
        policy_class: linear_class(),
        seed: 7,
        ..Default::default()
    };
    let sol = solve_mfg_flow(&m, &cfg).unwrap();
    (m, sol)
}

#[test]
fn ou_terminal_variance_matches_closed_form() {
    let (v, se) = ou_variance(100, 40_000, 1);
    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    assert!((v - exact).abs() <= 3.0 * se + 2.0 * 0.01, "{v} vs {exact}");
    assert!((v - euler_ou_variance(1.0, 1.0, 100)).abs() <= 3.0 * se);
}

#[test]
fn euler_weak_error_is_first_order() {
    // Closed-form first-order constant of the scheme, from its exact variance.
    let c = (euler_ou_variance(1.0, 1.0, 10) - euler_ou_variance(1.0, 1.0, 20)) / 0.1;
    let (coarse, se1) = ou_variance(10, 100_000, 2);
    let (fine, se2) = ou_variance(20, 100_000, 3);
    let slack = 1.5 * c * 0.1 + 3.0 * (se1 * se1 + se2 * se2).sqrt();
    assert!((coarse - fine).abs() <= slack, "{coarse} vs {fine}");
}

#[test]
fn decoupled_population_follows_its_shadow_exactly() {
    let (m, sol) = solve(0.0, 2000);
    let run = simulate_n_player_openloop(&m, &sol, 20, sol.grid(), 4, 0, None).unwrap();
    assert_eq!(run.actual, run.shadow);
    let k = sol.grid().steps();
    for i in 0..20 {
        let shadow = run.shadow_path(i);
        for s in 0..k {
            let expected = sol
                .control
                .evaluate(sol.grid().time(s), run.x0[i], shadow[s]);
            assert_eq!(run.action(i, s), expected);
        }
    }
}

#[test]
fn symmetric_equilibrium_flow_has_zero_mean() {
    let (_, sol) = solve(0.5, 4000);
    assert!(sol.converged);
    let bound = 3.0 / (sol.flow.particle_count() as f64).sqrt();
    for k in 0..=sol.grid().steps() {
        assert!(sol.flow.summary(k)[0].abs() <= bound);
    }
}

#[test]
fn empirical_terminal_law_approaches_the_flow() {
    let (m, sol) = solve(0.5, 4000);
    let target = sol.flow.marginal(sol.grid().steps());
    let mut last = f64::INFINITY;
    for n in [10, 100, 1000] {
        let mut total = 0.0;
        for r in 0..4 {
            let run = simulate_n_player_openloop(&m, &sol, n, sol.grid(), 8, r, None).unwrap();
            total += wasserstein(WassersteinOrder::One, &run.terminal_marginal(), &target).unwrap();
        }
        assert!(total < last, "n = {n}: {total} >= {last}");
        last = total;
    }
}

#[test]
fn incumbent_offset_only_is_a_nash_equilibrium() {
    let (m, sol) = solve(0.5, 1000);
    let cfg = CtDeviationConfig {
        replications: 40,
        batches: 20,
        offsets: vec![0.0],
        seed: 1,
    };
    let r = ct_deviation_report(&m, &sol, 5, None, 0.1, &[-1.0, 1.0], sol.grid(), &cfg).unwrap();
    assert!(r.per_agent.iter().all(|g| g.gain == 0.0));
    assert_eq!(r.classification.to_string(), "NE");
}

#[test]
fn decoupled_offsets_gain_at_most_the_class_resolution() {
    // With κ = 0 the shadow policy is optimal within the class up to the
    // resolution of the intercept search, so an offset gains at most what a
    // shift of the terminal mean by that resolution is worth.
    let (m, sol) = solve(0.0, 1000);
    let cfg = CtDeviationConfig {
        replications: 200,
        batches: 20,
        offsets: (0..=8).map(|k| -0.2 + 0.05 * k as f64).collect(),
        seed: 3,
    };
    let r =
        ct_deviation_report(&m, &sol, 10, None, 0.1, &[-2.0, 0.0, 2.0], sol.grid(), &cfg).unwrap();
    let resolution = 0.5 / 64.0;
    for g in &r.per_agent {
        assert!(g.gain >= 0.0);
        assert!(
            g.gain <= resolution * resolution,
            "gain {} at {}",
            g.gain,
            g.x0
        );
    }
}

#[test]
fn grid_mismatch_is_rejected() {
    let (m, sol) = solve(0.0, 200);
    let other = TimeGrid::new(1.0, 21).unwrap();
    assert!(simulate_n_player_openloop(&m, &sol, 3, other, 1, 0, None).is_err());
}

#[test]
fn flow_files_have_a_manifest() {
    let (_, sol) = solve(0.0, 50);
    let dir = tempfile::tempdir().unwrap();
    sol.flow
        .write_dir(dir.path(), &[("seed", "7".into())])
        .unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), sol.grid().steps() + 2);
    assert_eq!(manifest.lines().next().unwrap(), "step,t,file,seed");
    let first = std::fs::File::open(dir.path().join("flow_00000.txt")).unwrap();
    let mu = meanfield::measures::read_measure(std::io::BufReader::new(first)).unwrap();
    assert_eq!(mu.dim(), 2);
    assert_eq!(mu.len(), 50);
}
