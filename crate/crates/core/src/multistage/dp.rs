//! Joint law of the stopping stage and the success count at stopping.

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::binomial_row;
use crate::hypergeom::{HypergeomParams, PopulationSpec};
use crate::scalar::Probability;

use super::plan::StagePlan;

/// `probs[l][k]`: probability of stopping at stage `l` with `k` successes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingDistribution<P> {
    pub sizes: Vec<u64>,
    pub probs: Vec<Vec<P>>,
}

impl<P: Probability> StoppingDistribution<P> {
    pub fn stage_masses(&self) -> Vec<P> {
        self.probs
            .iter()
            .map(|row| row.iter().fold(P::zero(), |acc, v| acc + v.clone()))
            .collect()
    }

    pub fn total(&self) -> P {
        self.stage_masses().into_iter().fold(P::zero(), |acc, v| acc + v)
    }

    /// Sum of the stop probabilities accepted by `pred(stage, k)`.
    pub fn mass_where(&self, mut pred: impl FnMut(usize, u64) -> bool) -> P {
        let mut acc = P::zero();
        for (l, row) in self.probs.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                if pred(l, k as u64) {
                    acc = acc + v.clone();
                }
            }
        }
        acc
    }
}

/// Stopping law for a population with `M` successes, by forward dynamic
/// programming over the stages.
pub fn stopping_distribution<P: Probability>(pop: &PopulationSpec, plan: &StagePlan) -> Result<StoppingDistribution<P>> {
    let m = pop.require_successes()?;
    if pop.size != plan.population {
        return Err(Error::domain(format!(
            "population size {} does not match the plan's N = {}",
            pop.size, plan.population
        )));
    }
    let big_n = plan.population;
    let sizes = plan.sizes();
    let mut probs = Vec::with_capacity(sizes.len());

    let first = HypergeomParams::new(big_n, m, sizes[0])?;
    let (lo, _) = first.support();
    let mut alive = vec![P::zero(); sizes[0] as usize + 1];
    for (i, v) in P::hypergeom_row(&first).into_iter().enumerate() {
        alive[lo as usize + i] = v;
    }

    for (l, &n) in sizes.iter().enumerate() {
        let mut stop = vec![P::zero(); n as usize + 1];
        let mut carry = vec![P::zero(); n as usize + 1];
        let last = l + 1 == sizes.len();
        for (k, v) in alive.into_iter().enumerate() {
            if last || plan.stops(l, k as u64) {
                stop[k] = v;
            } else {
                carry[k] = v;
            }
        }
        probs.push(stop);
        if last {
            break;
        }
        let next = sizes[l + 1];
        let step = next - n;
        let mut grown = vec![P::zero(); next as usize + 1];
        for (k, v) in carry.into_iter().enumerate() {
            let k = k as u64;
            if v.is_zero() || k > m || n - k > big_n - m {
                continue;
            }
            let rest = HypergeomParams::new(big_n - n, m - k, step)?;
            let (lo, _) = rest.support();
            for (j, t) in P::hypergeom_row(&rest).into_iter().enumerate() {
                let idx = (k + lo) as usize + j;
                grown[idx] = grown[idx].clone() + v.clone() * t;
            }
        }
        alive = grown;
    }
    Ok(StoppingDistribution { sizes, probs })
}

/// Counts of 0/1 prefixes reaching each stop state, independent of `M`.
///
/// The probability of stopping at stage `l` with `k` successes is
/// `stops[l][k] * C(N - n_l, M - k) / C(N, M)`: every arrangement of the
/// population splits into a prefix of length `n_l` and an arbitrary suffix.
#[derive(Debug, Clone)]
pub struct PathCounts {
    pub population: u64,
    pub sizes: Vec<u64>,
    pub stops: Vec<Vec<BigUint>>,
    /// `C(N - n_l, j)` for each stage.
    suffix_rows: Vec<Vec<BigUint>>,
    /// `C(N, j)`.
    full_row: Vec<BigUint>,
}

impl PathCounts {
    pub fn new(plan: &StagePlan) -> Self {
        let big_n = plan.population;
        let sizes = plan.sizes();
        let mut stops = Vec::with_capacity(sizes.len());
        let mut alive = binomial_row(sizes[0]);
        for (l, &n) in sizes.iter().enumerate() {
            let last = l + 1 == sizes.len();
            let mut stop = vec![BigUint::zero(); n as usize + 1];
            let mut carry = vec![BigUint::zero(); n as usize + 1];
            for (k, w) in alive.into_iter().enumerate() {
                if last || plan.stops(l, k as u64) {
                    stop[k] = w;
                } else {
                    carry[k] = w;
                }
            }
            stops.push(stop);
            if last {
                break;
            }
            let step_row = binomial_row(sizes[l + 1] - n);
            let mut grown = vec![BigUint::zero(); sizes[l + 1] as usize + 1];
            for (k, w) in carry.iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                for (j, c) in step_row.iter().enumerate() {
                    grown[k + j] += w * c;
                }
            }
            alive = grown;
        }
        let suffix_rows = sizes.iter().map(|&n| binomial_row(big_n - n)).collect();
        PathCounts { population: big_n, sizes, stops, suffix_rows, full_row: binomial_row(big_n) }
    }

    /// `C(N, M)`, the shared denominator for population `M`.
    pub fn denominator(&self, m: u64) -> &BigUint {
        &self.full_row[m as usize]
    }

    /// Numerator of `Pr{stop at stage l with k successes | M}`.
    pub fn numerator(&self, stage: usize, k: u64, m: u64) -> BigUint {
        let rest = self.population - self.sizes[stage];
        if k > m || m - k > rest {
            return BigUint::zero();
        }
        &self.stops[stage][k as usize] * &self.suffix_rows[stage][(m - k) as usize]
    }

    /// Numerators for every stop state, indexed like [`StoppingDistribution`].
    pub fn numerators(&self, m: u64) -> Vec<Vec<BigUint>> {
        (0..self.sizes.len())
            .map(|l| (0..=self.sizes[l]).map(|k| self.numerator(l, k, m)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use num_rational::BigRational;
    use num_traits::One;

    use super::*;
    use crate::multistage::plan::build_stage_plan;
    use crate::ExactProb;

    fn pop(n: u64, m: u64) -> PopulationSpec {
        PopulationSpec::with_successes(n, m).unwrap()
    }

    #[test]
    fn exact_law_is_normalized() {
        let plan = build_stage_plan(60, 0.15, 0.1, 0.5, 0.5).unwrap();
        assert!(plan.stages.len() >= 2);
        for m in [0, 1, 17, 30, 59, 60] {
            let law = stopping_distribution::<ExactProb>(&pop(60, m), &plan).unwrap();
            assert_eq!(law.total(), BigRational::one());
        }
    }

    #[test]
    fn path_counts_match_dp() {
        let plan = build_stage_plan(50, 0.15, 0.1, 0.5, 0.5).unwrap();
        let counts = PathCounts::new(&plan);
        for m in 0..=50 {
            let law = stopping_distribution::<ExactProb>(&pop(50, m), &plan).unwrap();
            let den = counts.denominator(m);
            for (l, row) in law.probs.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    let expect = BigRational::new(counts.numerator(l, k as u64, m).into(), den.clone().into());
                    assert_eq!(*v, expect, "M = {m}, stage {l}, k = {k}");
                }
            }
        }
    }

    #[test]
    fn empty_population_stops_at_first_narrow_stage() {
        let plan = build_stage_plan(80, 0.1, 0.1, 0.5, 0.5).unwrap();
        let law = stopping_distribution::<f64>(&pop(80, 0), &plan).unwrap();
        let first = (0..plan.stages.len()).find(|&l| plan.stops(l, 0)).unwrap();
        let masses = law.stage_masses();
        assert!((masses[first] - 1.0).abs() < 1e-14);
        assert!((law.total() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn requires_matching_population() {
        let plan = build_stage_plan(40, 0.1, 0.1, 0.5, 0.5).unwrap();
        assert!(stopping_distribution::<f64>(&pop(41, 3), &plan).is_err());
        assert!(stopping_distribution::<f64>(&PopulationSpec::new(40).unwrap(), &plan).is_err());
    }
}
