use proptest::prelude::*;

use finpop::multistage::{
    build_stage_plan, coverage_report, limit_table, limits, run_multistage, CoverageReport, StagePlan,
};
use finpop::{EvalMode, ExactProb, PopulationSpec};

fn instance() -> impl Strategy<Value = (u64, u64, f64)> {
    (2u64..70)
        .prop_flat_map(|n| (Just(n), 1..=n, 0.01f64..0.5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn limits_bracket_the_sample((n, d, alpha) in instance()) {
        let table = limit_table::<f64>(n, d, alpha).unwrap();
        for (k, lim) in table.iter().enumerate() {
            let k = k as u64;
            prop_assert!(k <= lim.lower && lim.lower <= lim.upper && lim.upper <= k + n - d);
        }
        for w in table.windows(2) {
            prop_assert!(w[0].lower <= w[1].lower && w[0].upper <= w[1].upper);
        }
    }

    #[test]
    fn float_and_exact_tables_agree((n, d, alpha) in instance()) {
        let float = limit_table::<f64>(n, d, alpha).unwrap();
        let exact = limit_table::<ExactProb>(n, d, alpha).unwrap();
        prop_assert_eq!(float, exact);
    }

    #[test]
    fn smaller_alpha_widens((n, d, alpha) in instance(), k_frac in 0.0f64..=1.0) {
        let k = (d as f64 * k_frac).round() as u64;
        let wide = limits::<ExactProb>(n, d, k, alpha / 2.0).unwrap();
        let narrow = limits::<ExactProb>(n, d, k, alpha).unwrap();
        prop_assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
    }
}

fn plan() -> StagePlan {
    build_stage_plan(120, 0.15, 0.1, 0.5, 0.5).unwrap()
}

#[test]
fn plan_survives_json() {
    let p = plan();
    let text = serde_json::to_string(&p).unwrap();
    let back: StagePlan = serde_json::from_str(&text).unwrap();
    assert_eq!(back, p);
    back.validate().unwrap();
}

#[test]
fn report_survives_json() {
    let rep = coverage_report(&plan(), EvalMode::ExactRational, true).unwrap();
    let text = serde_json::to_string(&rep).unwrap();
    let back: CoverageReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, rep);
    assert!(rep.normalized);
    assert!(rep.per_m.iter().all(|v| v.exact.is_some()));
}

#[test]
fn tampered_plan_is_rejected() {
    let mut p = plan();
    p.stages.swap(0, 1);
    assert!(p.validate().is_err());
    let mut p = plan();
    p.schema_version += 1;
    assert!(p.validate().is_err());
}

#[test]
fn runs_stop_within_the_width() {
    let p = plan();
    for m in [0, 3, 60, 119, 120] {
        let pop = PopulationSpec::with_successes(120, m).unwrap();
        for seed in 0..50 {
            let out = run_multistage(&pop, &p, seed).unwrap();
            assert!(out.limits.width() <= p.width_limit);
            assert!(out.k_stop <= out.limits.lower && out.limits.upper <= out.k_stop + 120 - out.n_stop);
        }
    }
}
