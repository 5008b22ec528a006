use meanfield::model::*;
use meanfield::oracle::*;
use meanfield::static_game::*;

fn flip(bias: f64) -> (DiscreteModel, DiscreteInstance) {
    let m = builtin_discrete_flip(bias).unwrap();
    let inst = m.instance().clone();
    (m, inst)
}

#[test]
fn probabilities_sum_to_one() {
    let (_, inst) = flip(0.5);
    let s = DiscreteStrategy::new(&inst, vec![0, 1]).unwrap();
    for n in 1..=4 {
        let law = exact_population_law(&inst, n, &vec![s.clone(); n], None).unwrap();
        assert!((law.total() - 1.0).abs() <= 1e-14);
    }
}

#[test]
fn two_agent_table_checked_by_hand() {
    let (_, inst) = flip(0.5);
    let s = DiscreteStrategy::new(&inst, vec![0, 1]).unwrap();
    let law = exact_population_law(&inst, 2, &[s.clone(), s], None).unwrap();
    let prob = |x0: [usize; 2], x1: [usize; 2]| {
        law.outcomes
            .iter()
            .find(|o| o.x0 == x0 && o.x1 == x1)
            .map_or(0.0, |o| o.prob)
    };
    // Agent 1 at 0 goes to 1 on the high noise (prob 1/2), carrying mass 1/2
    // into {x0 = 0, x1 = 1}; agent 2 at 1 plays 1 and is pushed back to 1.
    assert_eq!(prob([0, 1], [1, 1]), 0.25 * 0.5);
    // On the low noise agent 1 stays at 0, the mass is 0 and agent 2 lands on 0.
    assert_eq!(prob([0, 1], [0, 0]), 0.25 * 0.5);
    assert_eq!(prob([1, 1], [0, 0]), 0.25);
}

#[test]
fn decoupled_law_factorizes() {
    let (_, inst) = flip(1.1);
    let s = DiscreteStrategy::new(&inst, vec![1, 0]).unwrap();
    let single = exact_population_law(&inst, 1, &[s.clone()], None).unwrap();
    let pair = exact_population_law(&inst, 2, &[s.clone(), s], None).unwrap();
    for o in &pair.outcomes {
        let p = |i: usize| {
            single
                .outcomes
                .iter()
                .find(|u| u.x0[0] == o.x0[i] && u.x1[0] == o.x1[i])
                .unwrap()
                .prob
        };
        assert_eq!(o.prob, p(0) * p(1));
    }
}

#[test]
fn gain_is_zero_at_the_incumbent_argmax_of_a_decoupled_instance() {
    let (_, inst) = flip(1.1);
    let fp = exact_mfe(&inst, 100).unwrap();
    assert_eq!(fp.len(), 1);
    for s in 0..2 {
        let g = exact_deviation_gain(&inst, 3, &vec![fp[0].strategy.clone(); 3], 0, s).unwrap();
        assert_eq!(g.gain, 0.0);
    }
}

#[test]
fn gain_is_nonnegative_and_positive_off_equilibrium() {
    let (_, inst) = flip(0.5);
    let zero = DiscreteStrategy::constant(&inst, 0).unwrap();
    let g = exact_deviation_gain(&inst, 2, &[zero.clone(), zero], 0, 1).unwrap();
    assert!(g.gain > 0.0);
    assert_eq!(g.class_size, 4);
}

#[test]
fn zero_bias_fixed_point_by_two_branch_check() {
    // bias 0: agents at 1 are always pushed, so they play 0 and land on 0;
    // agents at 0 land on 1 with probability 1/2 whatever they play.
    let (_, inst) = flip(0.0);
    let fp = exact_mfe(&inst, 100).unwrap();
    assert_eq!(fp.len(), 1);
    assert_eq!(fp[0].mass, 0.25);
    assert_eq!(fp[0].strategy.cells, vec![0, 0]);
}

#[test]
fn monte_carlo_agrees_with_the_exact_conditional_law() {
    let (model, inst) = flip(0.5);
    let fp = exact_mfe(&inst, 100).unwrap().remove(0);
    let n = 3;
    let profile = vec![fp.strategy.to_strategy(&inst).unwrap(); n];
    let exact = exact_conditional_law(&inst, n, &vec![fp.strategy.clone(); n], 0, 1).unwrap();
    let reps = 2000;
    let law = estimate_conditional_law(
        &model,
        &profile,
        0,
        1.0,
        n,
        reps,
        4,
        &PicardConfig::default(),
    )
    .unwrap();
    let p0 = law.integrate(|x| if x[0] == 0.0 { 1.0 } else { 0.0 });
    let se = (exact[0] * (1.0 - exact[0]) / reps as f64).sqrt();
    assert!((p0 - exact[0]).abs() <= 3.0 * se, "{p0} vs {}", exact[0]);
}

#[test]
fn exact_csv_carries_the_flag() {
    let (_, inst) = flip(0.5);
    let fp = exact_mfe(&inst, 100).unwrap().remove(0);
    let report = exact_report(
        &inst,
        2,
        &vec![fp.strategy.clone(); 2],
        &[0, 1],
        Some(&fp),
        None,
        0.1,
        0,
    )
    .unwrap();
    let mut buf = Vec::new();
    write_exact_csv(&report, true, &mut buf, "b").unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",build,exact"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",b,true")));
    assert_eq!(report.per_agent[1].gap, Some(0.25));
}
