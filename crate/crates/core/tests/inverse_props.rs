use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;

use finpop::inverse::{
    exact_relerr_coverage, exact_relerr_failure, simulate_inverse, stopping_law, threshold_formula, RelMargin,
};
use finpop::{ExactProb, PopulationSpec};

fn instance() -> impl Strategy<Value = (u64, u64, u64)> {
    (1u64..80).prop_flat_map(|n| (Just(n), 0..=n, 1..=n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn law_is_a_distribution((n, m, r) in instance()) {
        let law = stopping_law::<ExactProb>(n, m, r).unwrap();
        let total = law.probs.iter().fold(law.exhaustion.clone(), |a, b| a + b.clone());
        prop_assert!(total.is_one());
        let floats = stopping_law::<f64>(n, m, r).unwrap();
        let s: f64 = floats.probs.iter().sum::<f64>() + floats.exhaustion;
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_and_failure_partition((n, m, r) in instance(), eps in 0.01f64..0.99) {
        let margin = RelMargin::new(eps, 0.1).unwrap();
        let c: ExactProb = exact_relerr_coverage(n, m, r, &margin).unwrap();
        let f: ExactProb = exact_relerr_failure(n, m, r, &margin).unwrap();
        prop_assert!((c + f).is_one());
    }

    #[test]
    fn simulation_stays_in_support((n, m, r) in instance(), seed in any::<u64>()) {
        let pop = PopulationSpec::with_successes(n, m).unwrap();
        let out = simulate_inverse(&pop, r, seed).unwrap();
        if m >= r {
            prop_assert_eq!(out.k_stop, r);
            prop_assert!(out.n_stop >= r && out.n_stop <= n - (m - r));
        } else {
            prop_assert_eq!(out.n_stop, n);
            prop_assert_eq!(out.k_stop, m);
        }
    }
}

#[test]
fn exhaustion_only_below_threshold() {
    for m in 0..10 {
        let law = stopping_law::<ExactProb>(20, m, 10).unwrap();
        assert!(law.exhaustion.is_one() && law.probs.is_empty());
    }
    let law = stopping_law::<ExactProb>(20, 10, 10).unwrap();
    assert!(law.exhaustion.is_zero());
}

/// Coverage need not grow with r in a finite population; the scan reports
/// the drops it finds instead of asserting monotonicity.
#[test]
fn coverage_in_threshold_scan() {
    let margin = RelMargin::new(0.2, 0.1).unwrap();
    let r_formula = threshold_formula(&margin);
    let mut drops = Vec::new();
    for m in [20u64, 50, 80] {
        let mut prev = 0.0;
        for r in 1..=40 {
            let c = exact_relerr_coverage::<ExactProb>(100, m, r, &margin).unwrap().to_f64().unwrap();
            if c < prev {
                drops.push((m, r, prev - c));
            }
            prev = c;
        }
    }
    println!("coverage drops in r (M, r, size): {drops:?}; formula threshold {r_formula}");
}
