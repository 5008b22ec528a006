//! Oracle against Monte Carlo on a discrete instance.

use std::io::Write;
use std::path::Path;

use meanfield::measures::exact_sum;
use meanfield::model::DiscreteModel;
use meanfield::oracle::{
    exact_conditional_law, exact_deviation_gain, exact_mfe, exact_payoff, DiscreteStrategy,
};
use meanfield::static_game::{
    estimate_conditional_law, estimate_deviation_gain, payoff, solve_mfe, DeviationClass,
    DeviationConfig, MfeConfig, PicardConfig,
};

use crate::config::Verify;
use crate::run::{Outcome, BUILD};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// `law`, `payoff`, `gain` or `mfe_mass`.
    pub quantity: String,
    pub profile: String,
    pub n: usize,
    pub x0: f64,
    /// Terminal state for `law` rows.
    pub x1: Option<f64>,
    pub exact: f64,
    pub estimate: f64,
    pub se: f64,
    pub pass: bool,
}

impl Check {
    /// Identifies the comparison independently of the seed.
    pub fn key(&self) -> String {
        let x1 = self.x1.map_or(String::new(), |v| format!(" x1={v}"));
        format!(
            "{} {} n={} x0={}{x1}",
            self.quantity, self.profile, self.n, self.x0
        )
    }
}

/// Agreement within three standard errors. A zero standard error demands
/// equality up to rounding.
fn agree(exact: f64, estimate: f64, se: f64) -> bool {
    (estimate - exact).abs() <= 3.0 * se + 1e-12
}

/// Compares oracle values with Monte Carlo estimates for the lattice
/// equilibrium profile and every constant profile. With `seed_mismatch` the
/// Monte Carlo side pins agent 0 at the next state instead, a negative
/// control that must fail.
pub fn checks(
    model: &DiscreteModel,
    v: &Verify,
    seed: u64,
    seed_mismatch: bool,
) -> Outcome<Vec<Check>> {
    let inst = model.instance();
    let ns = inst.num_states();
    let picard = PicardConfig::default();
    let fixed = exact_mfe(inst, v.lattice)?;
    let fp = fixed[0].clone();

    let mut profiles = vec![("mfe".to_string(), fp.strategy.clone())];
    for a in 0..inst.num_actions() {
        profiles.push((
            format!("constant_{}", inst.actions[a]),
            DiscreteStrategy::constant(inst, a)?,
        ));
    }

    let mut out = Vec::new();
    for (name, d) in &profiles {
        let s = d.to_strategy(inst)?;
        for &n in &v.n {
            let exact_profile = vec![d.clone(); n];
            let profile = vec![s.clone(); n];
            for x0 in 0..ns {
                let pin = if seed_mismatch { (x0 + 1) % ns } else { x0 };
                let law = exact_conditional_law(inst, n, &exact_profile, 0, x0)?;
                let mc = estimate_conditional_law(
                    model,
                    &profile,
                    0,
                    inst.states[pin],
                    n,
                    v.replications,
                    seed,
                    &picard,
                )?;
                let m = v.replications as f64;
                for (x1, &p) in law.iter().enumerate() {
                    let label = inst.states[x1];
                    let est = mc.integrate(|x| if x[0] == label { 1.0 } else { 0.0 });
                    let se = (p * (1.0 - p) / m).sqrt();
                    out.push(Check {
                        quantity: "law".into(),
                        profile: name.clone(),
                        n,
                        x0: inst.states[x0],
                        x1: Some(label),
                        exact: p,
                        estimate: est,
                        se,
                        pass: agree(p, est, se),
                    });
                }

                let exact_u = exact_payoff(inst, n, &exact_profile, 0, x0)?;
                let second = exact_sum(law.iter().zip(&inst.utility).map(|(p, u)| p * u * u));
                let se = ((second - exact_u * exact_u).max(0.0) / m).sqrt();
                let est = payoff(model, &mc);
                out.push(Check {
                    quantity: "payoff".into(),
                    profile: name.clone(),
                    n,
                    x0: inst.states[x0],
                    x1: None,
                    exact: exact_u,
                    estimate: est,
                    se,
                    pass: agree(exact_u, est, se),
                });

                let exact_g = exact_deviation_gain(inst, n, &exact_profile, 0, x0)?;
                let cfg = DeviationConfig {
                    replications: v.replications,
                    batches: v.batches,
                    class: DeviationClass::OwnInformation {
                        window: None,
                        max_enumeration: 10_000,
                    },
                    picard: picard.clone(),
                    seed,
                };
                let g = estimate_deviation_gain(model, &profile, 0, inst.states[pin], n, &cfg)?;
                out.push(Check {
                    quantity: "gain".into(),
                    profile: name.clone(),
                    n,
                    x0: inst.states[x0],
                    x1: None,
                    exact: exact_g.gain,
                    estimate: g.gain,
                    se: g.gain_se,
                    pass: agree(exact_g.gain, g.gain, g.gain_se),
                });
            }
        }
    }

    let cfg = MfeConfig {
        particles: v.particles,
        br_samples: v.br_samples,
        x0_grid: inst.states.clone(),
        seed,
        ..Default::default()
    };
    let sol = solve_mfe(model, &cfg)?;
    let hits = (0..sol.x0.len())
        .filter(|&i| {
            inst.summary.in_cells(
                inst.state_index(sol.x0[i]),
                inst.state_index(sol.x1[i]),
                inst.action_index(sol.actions[i]),
            )
        })
        .count();
    let est = hits as f64 / sol.x0.len() as f64;
    let se = (fp.mass * (1.0 - fp.mass) / sol.x0.len() as f64).sqrt();
    out.push(Check {
        quantity: "mfe_mass".into(),
        profile: "mfe".into(),
        n: sol.x0.len(),
        x0: f64::NAN,
        x1: None,
        exact: fp.mass,
        estimate: est,
        se,
        pass: sol.converged && agree(fp.mass, est, se),
    });
    Ok(out)
}

pub fn print_table(checks: &[Check], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<8} {:<12} {:>5} {:>4} {:>4} {:>12} {:>12} {:>10}  result",
        "quantity", "profile", "n", "x0", "x1", "exact", "estimate", "se"
    )?;
    for c in checks {
        let x0 = if c.x0.is_nan() {
            "-".into()
        } else {
            c.x0.to_string()
        };
        let x1 = c.x1.map_or("-".into(), |v| v.to_string());
        writeln!(
            out,
            "{:<8} {:<12} {:>5} {:>4} {:>4} {:>12.6} {:>12.6} {:>10.6}  {}",
            c.quantity,
            c.profile,
            c.n,
            x0,
            x1,
            c.exact,
            c.estimate,
            c.se,
            if c.pass { "PASS" } else { "FAIL" }
        )?;
    }
    Ok(())
}

pub fn write_csv(checks: &[Check], seed: u64, path: &Path) -> Outcome<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "quantity", "profile", "n", "x0", "x1", "exact", "estimate", "se", "pass", "seed", "build",
    ])?;
    for c in checks {
        w.write_record([
            c.quantity.clone(),
            c.profile.clone(),
            c.n.to_string(),
            if c.x0.is_nan() {
                String::new()
            } else {
                c.x0.to_string()
            },
            c.x1.map_or(String::new(), |v| v.to_string()),
            c.exact.to_string(),
            c.estimate.to_string(),
            c.se.to_string(),
            c.pass.to_string(),
            seed.to_string(),
            BUILD.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
