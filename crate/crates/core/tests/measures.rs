use meanfield::measures::*;
use proptest::prelude::*;

fn measure(values: Vec<f64>) -> EmpiricalMeasure {
    EmpiricalMeasure::from_values(&values).unwrap()
}

fn support(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(a in support(30), b in support(30), c in support(30)) {
        let (a, b, c) = (measure(a), measure(b), measure(c));
        for q in [WassersteinOrder::Zero, WassersteinOrder::One, WassersteinOrder::Two] {
            let ab = wasserstein(q, &a, &b).unwrap();
            let ba = wasserstein(q, &b, &a).unwrap();
            let bc = wasserstein(q, &b, &c).unwrap();
            let ac = wasserstein(q, &a, &c).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(ac <= ab + bc + 1e-10);
            prop_assert_eq!(wasserstein(q, &a, &a).unwrap(), 0.0);
        }
        prop_assert!(wasserstein(WassersteinOrder::Zero, &a, &b).unwrap() <= 1.0);
        prop_assert!(
            wasserstein(WassersteinOrder::One, &a, &b).unwrap()
                <= wasserstein(WassersteinOrder::Two, &a, &b).unwrap() + 1e-12
        );
    }

    #[test]
    fn sorted_pairing_matches_linear_program(a in support(10), b in support(10)) {
        let (mu, nu) = (measure(a), measure(b));
        for q in [WassersteinOrder::One, WassersteinOrder::Two] {
            let fast = wasserstein(q, &mu, &nu).unwrap();
            let lp = wasserstein_lp(q, &mu, &nu, GroundMetric::Euclidean).unwrap();
            prop_assert!((fast - lp).abs() <= 1e-10, "{:?}: {} vs {}", q, fast, lp);
        }
    }

    #[test]
    fn io_round_trip(a in support(20)) {
        let mu = measure(a);
        let mut buf = Vec::new();
        write_measure(&mu, &mut buf).unwrap();
        prop_assert_eq!(read_measure(buf.as_slice()).unwrap(), mu);
    }
}

#[test]
fn translation_shifts_w1_by_the_offset() {
    let a = measure(vec![0.0, 1.0, 5.0]);
    let b = measure(vec![2.5, 3.5, 7.5]);
    assert!((wasserstein(WassersteinOrder::One, &a, &b).unwrap() - 2.5).abs() < 1e-15);
    assert!((wasserstein(WassersteinOrder::Two, &a, &b).unwrap() - 2.5).abs() < 1e-15);
}

#[test]
fn two_dimensional_measures_use_the_linear_program() {
    let a = EmpiricalMeasure::uniform(vec![0.0, 0.0, 1.0, 1.0], 2).unwrap();
    let b = EmpiricalMeasure::uniform(vec![3.0, 4.0, 1.0, 1.0], 2).unwrap();
    let d = wasserstein_detailed(WassersteinOrder::One, &a, &b).unwrap();
    assert_eq!(d.method, Method::Exact);
    // The atom at (1, 1) stays put; the other moves a distance 5.
    assert!((d.value - 2.5).abs() < 1e-12);
}
