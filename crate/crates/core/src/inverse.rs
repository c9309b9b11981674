//! Inverse sampling: draw without replacement until `r` units with the
//! attribute have been found or the population is exhausted, then estimate
//! `p` by `k / n`.
//!
//! Thresholds come from the `Q(eps, r)` bound in [`crate::bounds`]. The
//! exact verifier uses the stopping-time law: the `r`-th success lands on
//! draw `m` with probability `pmf(N, M, m - 1, r - 1) (M - r + 1) / (N - m + 1)`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::bounds::{q, xlog1p_minus};
use crate::error::{check_open_unit, Error, Result};
use crate::exact::dyadic;
use crate::hypergeom::{HypergeomParams, PopulationSpec};
use crate::scalar::Probability;

/// Relative margin `eps` and confidence parameter `delta`, both in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelMargin {
    pub eps: f64,
    pub delta: f64,
}

impl RelMargin {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        check_open_unit("eps", eps)?;
        check_open_unit("delta", delta)?;
        Ok(RelMargin { eps, delta })
    }
}

/// `(1 + eps) ln(2/delta) / ((1 + eps) ln(1 + eps) - eps)`.
pub fn threshold_bound(margin: &RelMargin) -> f64 {
    let RelMargin { eps, delta } = *margin;
    (1.0 + eps) * (2.0 / delta).ln() / xlog1p_minus(eps)
}

/// Smallest integer `r` strictly above [`threshold_bound`].
pub fn threshold_formula(margin: &RelMargin) -> u64 {
    threshold_bound(margin).floor() as u64 + 1
}

/// Open interval known to contain the root `r*` of `Q(eps, r) = delta`.
pub fn r_star_bracket(margin: &RelMargin) -> (f64, f64) {
    let RelMargin { eps, delta } = *margin;
    let lower_a = (1.0 + eps) * (1.0 / delta).ln() / xlog1p_minus(eps);
    let lower_b = (1.0 - eps) * (2.0 / delta).ln() / xlog1p_minus(-eps);
    (lower_a.max(lower_b), threshold_bound(margin))
}

/// Root of `Q(eps, r) = delta` by bisection on [`r_star_bracket`], stopping
/// once `|Q(eps, r) - delta| <= tol`.
pub fn solve_r_star(margin: &RelMargin, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let (mut lo, mut hi) = r_star_bracket(margin);
    let delta = margin.delta;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        let value = q(margin.eps, mid)?;
        if (value - delta).abs() <= tol {
            return Ok(mid);
        }
        if value > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Smallest integer `r` with `Q(eps, r) <= delta`.
pub fn r_exact_int(margin: &RelMargin) -> Result<u64> {
    let start = solve_r_star(margin, 1e-12)?;
    let mut r = (start.floor() as u64).saturating_sub(2);
    while q(margin.eps, r as f64)? > margin.delta {
        r += 1;
    }
    Ok(r)
}

/// Both threshold choices for a relative margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversePlan {
    pub schema_version: u32,
    pub margin: RelMargin,
    pub r_bound: f64,
    pub r_formula: u64,
    pub r_star: f64,
    pub bracket: (f64, f64),
    pub r_exact_int: u64,
    pub tol: f64,
}

pub fn plan_inverse(margin: &RelMargin, tol: f64) -> Result<InversePlan> {
    let r_star = solve_r_star(margin, tol)?;
    Ok(InversePlan {
        schema_version: crate::SCHEMA_VERSION,
        margin: *margin,
        r_bound: threshold_bound(margin),
        r_formula: threshold_formula(margin),
        r_star,
        bracket: r_star_bracket(margin),
        r_exact_int: r_exact_int(margin)?,
        tol,
    })
}

/// Law of the sample size at termination.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingLaw<P> {
    /// `probs[i]` is `Pr{n = r + i, stopped by reaching r}`.
    pub threshold: u64,
    pub probs: Vec<P>,
    /// `Pr{population exhausted before the r-th success}`.
    pub exhaustion: P,
}

/// Stopping-time law for threshold `r` on a population with `M` known.
pub fn stopping_law<P: Probability>(population: u64, successes: u64, r: u64) -> Result<StoppingLaw<P>> {
    if r == 0 {
        return Err(Error::domain("threshold r must be at least 1"));
    }
    HypergeomParams::new(population, successes, 0)?;
    if successes < r {
        // Fewer than r units carry the attribute: every unit is examined.
        return Ok(StoppingLaw { threshold: r, probs: Vec::new(), exhaustion: P::one() });
    }
    // M >= r: the r-th success occurs by draw N - (M - r).
    let last = population - (successes - r);
    let probs = (r..=last)
        .map(|m| {
            let params = HypergeomParams { population, successes, draws: m - 1 };
            P::hypergeom_pmf(&params, r - 1) * P::from_ratio(successes - r + 1, population - m + 1)
        })
        .collect();
    Ok(StoppingLaw { threshold: r, probs, exhaustion: P::zero() })
}

/// Exact form of `|r/m - p| < eps p` for `m` in the stopping range.
struct RelEvent {
    p: BigRational,
    bound: BigRational,
}

impl RelEvent {
    fn new(population: u64, successes: u64, eps: f64) -> Self {
        let p = BigRational::new(BigInt::from(successes), BigInt::from(population));
        let bound = dyadic(eps) * &p;
        RelEvent { p, bound }
    }

    fn covers(&self, r: u64, m: u64) -> bool {
        let est = BigRational::new(BigInt::from(r), BigInt::from(m));
        (est - &self.p).abs() < self.bound
    }
}

/// `Pr{|p̃ - p| < eps p}` for threshold `r`.
///
/// When `M < r`, `M = N` or `r = N` the estimate equals `p` exactly and the
/// coverage is one; this includes `p = 0`, where the strict inequality would
/// otherwise read `0 < 0`.
pub fn exact_relerr_coverage<P: Probability>(
    population: u64,
    successes: u64,
    r: u64,
    margin: &RelMargin,
) -> Result<P> {
    if r == 0 {
        return Err(Error::domain("threshold r must be at least 1"));
    }
    HypergeomParams::new(population, successes, 0)?;
    if successes < r || successes == population || r == population {
        return Ok(P::one());
    }
    let law = stopping_law::<P>(population, successes, r)?;
    let event = RelEvent::new(population, successes, margin.eps);
    let mut acc = P::zero();
    for (i, prob) in law.probs.into_iter().enumerate() {
        if event.covers(r, r + i as u64) {
            acc = acc + prob;
        }
    }
    Ok(acc)
}

/// `Pr{|p̃ - p| >= eps p}`, the quantity bounded by `Q(eps, r)`; summed
/// directly over the failing stopping sizes.
pub fn exact_relerr_failure<P: Probability>(
    population: u64,
    successes: u64,
    r: u64,
    margin: &RelMargin,
) -> Result<P> {
    if r == 0 {
        return Err(Error::domain("threshold r must be at least 1"));
    }
    HypergeomParams::new(population, successes, 0)?;
    if successes < r || successes == population || r == population {
        return Ok(P::zero());
    }
    let law = stopping_law::<P>(population, successes, r)?;
    let event = RelEvent::new(population, successes, margin.eps);
    let mut acc = P::zero();
    for (i, prob) in law.probs.into_iter().enumerate() {
        if !event.covers(r, r + i as u64) {
            acc = acc + prob;
        }
    }
    Ok(acc)
}

/// Result of one inverse-sampling run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InverseOutcome {
    pub n_stop: u64,
    pub k_stop: u64,
}

impl InverseOutcome {
    pub fn p_tilde(&self) -> f64 {
        self.k_stop as f64 / self.n_stop as f64
    }
}

/// Draw one trajectory (stream 0 of `seed`) until `r` successes or `n = N`.
pub fn simulate_inverse(pop: &PopulationSpec, r: u64, seed: u64) -> Result<InverseOutcome> {
    simulate_inverse_trial(pop, r, seed, 0)
}

pub(crate) fn simulate_inverse_trial(
    pop: &PopulationSpec,
    r: u64,
    seed: u64,
    trial: u64,
) -> Result<InverseOutcome> {
    if r == 0 {
        return Err(Error::domain("threshold r must be at least 1"));
    }
    pop.require_successes()?;
    let mut n_stop = 0;
    let mut k_stop = 0;
    for x in crate::mc::draw_sequence_trial(pop, seed, trial)? {
        n_stop += 1;
        k_stop += u64::from(x);
        if k_stop == r {
            break;
        }
    }
    Ok(InverseOutcome { n_stop, k_stop })
}
