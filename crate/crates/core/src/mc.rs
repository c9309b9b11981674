//! Seeded Monte Carlo engine for sampling without replacement.
//!
//! Random streams are ChaCha8 (`rand_chacha::ChaCha8Rng`): the generator is
//! seeded with the batch seed and trial `t` reads stream number `t`, so
//! every trial is reproducible on its own and trials can run in any order
//! or on any number of threads.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::dyadic;
use crate::fixed_size::AbsRelMargins;
use crate::hypergeom::PopulationSpec;
use crate::inverse::{simulate_inverse_trial, RelMargin};
use crate::multistage::{interval_covers, run_multistage_trial, StagePlan};

/// Populations up to this size are shuffled in memory; larger ones are
/// drawn unit by unit from the conditional success probability.
pub const SHUFFLE_LIMIT: u64 = 100_000;

/// Generator for trial `trial` of a batch seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawStrategy {
    /// Lazy Fisher-Yates over the 0/1 multiset.
    Shuffle,
    /// Draw `1` with probability (successes left) / (units left).
    Sequential,
}

#[derive(Debug, Clone)]
enum DrawState {
    Shuffle { units: Vec<bool>, pos: usize },
    Sequential { units_left: u64, successes_left: u64 },
}

/// Lazily generated indicators `X_1, X_2, ..., X_N`; every prefix follows
/// the exchangeable law of sampling without replacement.
#[derive(Debug, Clone)]
pub struct DrawSequence {
    rng: ChaCha8Rng,
    state: DrawState,
}

impl DrawSequence {
    pub fn new(pop: &PopulationSpec, rng: ChaCha8Rng, strategy: DrawStrategy) -> Result<Self> {
        let m = pop.require_successes()?;
        let state = match strategy {
            DrawStrategy::Shuffle => {
                let mut units = vec![false; pop.size as usize];
                units[..m as usize].fill(true);
                DrawState::Shuffle { units, pos: 0 }
            }
            DrawStrategy::Sequential => DrawState::Sequential { units_left: pop.size, successes_left: m },
        };
        Ok(DrawSequence { rng, state })
    }

    /// Number of draws still available.
    pub fn remaining(&self) -> u64 {
        match &self.state {
            DrawState::Shuffle { units, pos } => (units.len() - pos) as u64,
            DrawState::Sequential { units_left, .. } => *units_left,
        }
    }
}

impl Iterator for DrawSequence {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        match &mut self.state {
            DrawState::Shuffle { units, pos } => {
                if *pos == units.len() {
                    return None;
                }
                let j = self.rng.random_range(*pos..units.len());
                units.swap(*pos, j);
                *pos += 1;
                Some(units[*pos - 1])
            }
            DrawState::Sequential { units_left, successes_left } => {
                if *units_left == 0 {
                    return None;
                }
                let hit = self.rng.random_range(0..*units_left) < *successes_left;
                *units_left -= 1;
                if hit {
                    *successes_left -= 1;
                }
                Some(hit)
            }
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining() as usize;
        (n, Some(n))
    }
}

fn default_strategy(pop: &PopulationSpec) -> DrawStrategy {
    if pop.size <= SHUFFLE_LIMIT {
        DrawStrategy::Shuffle
    } else {
        DrawStrategy::Sequential
    }
}

/// Draw sequence for stream 0 of `seed`.
pub fn draw_sequence(pop: &PopulationSpec, seed: u64) -> Result<DrawSequence> {
    draw_sequence_trial(pop, seed, 0)
}

pub fn draw_sequence_trial(pop: &PopulationSpec, seed: u64, trial: u64) -> Result<DrawSequence> {
    DrawSequence::new(pop, trial_rng(seed, trial), default_strategy(pop))
}

/// Sampling scheme simulated by a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    FixedSize { n: u64 },
    Inverse { r: u64 },
    Multistage(Box<StagePlan>),
}

/// Coverage event counted by a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Always,
    /// `|p̂ - p| < eps_a or |p̂ - p| < eps_r p` (fixed size).
    Mixed(AbsRelMargins),
    /// `|p̃ - p| < eps p`, or `p̃ = p` exactly (inverse).
    Relative(RelMargin),
    /// `L < p < U` with the boundary convention of [`interval_covers`].
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialBatch {
    pub seed: u64,
    pub trials: u64,
    pub scheme: Scheme,
}

/// One simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub n_stop: u64,
    pub k_stop: u64,
    pub covered: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub trials: u64,
    pub hits: u64,
    pub estimate: f64,
    pub std_error: f64,
}

impl CoverageEstimate {
    pub fn from_counts(hits: u64, trials: u64) -> Self {
        let estimate = hits as f64 / trials as f64;
        let std_error = (estimate * (1.0 - estimate) / trials as f64).sqrt();
        CoverageEstimate { trials, hits, estimate, std_error }
    }

    /// `|estimate - exact| <= z * std_error`.
    pub fn agrees_with(&self, exact: f64, z: f64) -> bool {
        (self.estimate - exact).abs() <= z * self.std_error
    }
}

fn check_compatible(scheme: &Scheme, criterion: &Criterion) -> Result<()> {
    let ok = matches!(
        (scheme, criterion),
        (_, Criterion::Always)
            | (Scheme::FixedSize { .. }, Criterion::Mixed(_))
            | (Scheme::Inverse { .. }, Criterion::Relative(_))
            | (Scheme::Multistage(_), Criterion::Interval)
    );
    if ok {
        Ok(())
    } else {
        Err(Error::domain("coverage criterion does not match the sampling scheme"))
    }
}

fn mixed_covers(pop_size: u64, m: u64, n: u64, k: u64, margins: &AbsRelMargins) -> bool {
    let p = BigRational::new(BigInt::from(m), BigInt::from(pop_size));
    let err = (BigRational::new(BigInt::from(k), BigInt::from(n)) - &p).abs();
    err < dyadic(margins.eps_a) || err < dyadic(margins.eps_r) * p
}

fn relative_covers(pop_size: u64, m: u64, n: u64, k: u64, margin: &RelMargin) -> bool {
    let p = BigRational::new(BigInt::from(m), BigInt::from(pop_size));
    let err = (BigRational::new(BigInt::from(k), BigInt::from(n)) - &p).abs();
    err == BigRational::from_integer(0.into()) || err < dyadic(margin.eps) * p
}

/// Simulate trial `trial` of `batch`.
pub fn run_trial(batch: &TrialBatch, pop: &PopulationSpec, criterion: &Criterion, trial: u64) -> Result<TrialRecord> {
    let m = pop.require_successes()?;
    let size = pop.size;
    let record = match &batch.scheme {
        Scheme::FixedSize { n } => {
            if *n == 0 || *n > size {
                return Err(Error::domain(format!("sample size must satisfy 1 <= n <= N (n = {n})")));
            }
            let k = draw_sequence_trial(pop, batch.seed, trial)?
                .take(*n as usize)
                .filter(|&x| x)
                .count() as u64;
            let covered = match criterion {
                Criterion::Mixed(margins) => mixed_covers(size, m, *n, k, margins),
                _ => true,
            };
            TrialRecord { trial, n_stop: *n, k_stop: k, covered, lower: None, upper: None }
        }
        Scheme::Inverse { r } => {
            let out = simulate_inverse_trial(pop, *r, batch.seed, trial)?;
            let covered = match criterion {
                Criterion::Relative(margin) => relative_covers(size, m, out.n_stop, out.k_stop, margin),
                _ => true,
            };
            TrialRecord { trial, n_stop: out.n_stop, k_stop: out.k_stop, covered, lower: None, upper: None }
        }
        Scheme::Multistage(plan) => {
            let out = run_multistage_trial(pop, plan, batch.seed, trial)?;
            let covered = match criterion {
                Criterion::Interval => interval_covers(&out.limits, m, size),
                _ => true,
            };
            TrialRecord {
                trial,
                n_stop: out.n_stop,
                k_stop: out.k_stop,
                covered,
                lower: Some(out.limits.lower),
                upper: Some(out.limits.upper),
            }
        }
    };
    Ok(record)
}

fn check_batch(batch: &TrialBatch, criterion: &Criterion) -> Result<()> {
    if batch.trials == 0 {
        return Err(Error::domain("a batch needs at least one trial"));
    }
    check_compatible(&batch.scheme, criterion)
}

/// Every trial of the batch, in trial order.
pub fn run_trials(batch: &TrialBatch, pop: &PopulationSpec, criterion: &Criterion) -> Result<Vec<TrialRecord>> {
    check_batch(batch, criterion)?;
    (0..batch.trials)
        .into_par_iter()
        .map(|t| run_trial(batch, pop, criterion, t))
        .collect()
}

/// Empirical coverage with its binomial standard error.
pub fn estimate_coverage(batch: &TrialBatch, pop: &PopulationSpec, criterion: &Criterion) -> Result<CoverageEstimate> {
    check_batch(batch, criterion)?;
    let hits = (0..batch.trials)
        .into_par_iter()
        .map(|t| run_trial(batch, pop, criterion, t).map(|r| u64::from(r.covered)))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(CoverageEstimate::from_counts(hits, batch.trials))
}
