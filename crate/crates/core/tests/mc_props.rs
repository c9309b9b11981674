use statrs::distribution::{ChiSquared, ContinuousCDF};

use finpop::hypergeom::logspace;
use finpop::mc::{draw_sequence_trial, DrawSequence, DrawStrategy, trial_rng};
use finpop::{HypergeomParams, PopulationSpec};

fn chi_square(observed: &[u64], expected: &[f64]) -> (f64, usize) {
    let mut stat = 0.0;
    let mut bins = 0;
    let (mut o, mut e) = (0.0, 0.0);
    for (&oi, &ei) in observed.iter().zip(expected) {
        o += oi as f64;
        e += ei;
        if e >= 5.0 {
            stat += (o - e).powi(2) / e;
            bins += 1;
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 {
        stat += (o - e).powi(2) / e.max(1e-300);
    }
    (stat, bins.max(2) - 1)
}

#[test]
fn sample_counts_follow_the_hypergeometric_law() {
    let (big_n, m, n) = (30, 12, 10);
    let pop = PopulationSpec::with_successes(big_n, m).unwrap();
    let trials = 50_000u64;
    let mut observed = vec![0u64; n + 1];
    for t in 0..trials {
        let k = draw_sequence_trial(&pop, 99, t).unwrap().take(n).filter(|&x| x).count();
        observed[k] += 1;
    }
    let params = HypergeomParams::new(big_n, m, n as u64).unwrap();
    let (lo, _) = params.support();
    let mut expected = vec![0.0; n + 1];
    for (i, p) in logspace::pmf_row::<f64>(&params).into_iter().enumerate() {
        expected[lo as usize + i] = p * trials as f64;
    }
    let (stat, dof) = chi_square(&observed, &expected);
    let critical = ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.99);
    assert!(stat <= critical, "chi-square {stat} > {critical} on {dof} dof");
}

#[test]
fn positions_are_exchangeable() {
    // Each position carries the attribute with probability M / N, for both
    // draw strategies.
    let (big_n, m) = (40u64, 10u64);
    let pop = PopulationSpec::with_successes(big_n, m).unwrap();
    let trials = 20_000u64;
    for strategy in [DrawStrategy::Shuffle, DrawStrategy::Sequential] {
        let mut hits = vec![0u64; big_n as usize];
        for t in 0..trials {
            let seq = DrawSequence::new(&pop, trial_rng(7, t), strategy).unwrap();
            for (i, x) in seq.enumerate() {
                hits[i] += u64::from(x);
            }
        }
        let p = m as f64 / big_n as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        for (i, &h) in hits.iter().enumerate() {
            let est = h as f64 / trials as f64;
            assert!((est - p).abs() < 4.5 * se, "{strategy:?} position {i}: {est}");
        }
    }
}

#[test]
fn sequences_hold_exactly_m_successes() {
    let pop = PopulationSpec::with_successes(25, 7).unwrap();
    for t in 0..200 {
        let seq: Vec<bool> = draw_sequence_trial(&pop, 3, t).unwrap().collect();
        assert_eq!(seq.len(), 25);
        assert_eq!(seq.iter().filter(|&&x| x).count(), 7);
    }
}
