//! Exact hypergeometric confidence limits and the sample-size range of the
//! stage grid.
//!
//! For `k` successes in `n` draws, the lower limit is the smallest `M` with
//! `Pr{K >= k | M} > alpha / 2` and the upper limit the largest `M` with
//! `Pr{K <= k | M} > alpha / 2`. Both tails are monotone in `M`, so the
//! limits are found by integer bisection over `[k, k + N - n]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergeom::{EvalMode, HypergeomParams};
use crate::scalar::Probability;
use crate::ExactProb;

/// Integer confidence limits `lower <= M <= upper` on the success count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfidenceLimits {
    pub lower: u64,
    pub upper: u64,
}

impl ConfidenceLimits {
    pub fn width(&self) -> u64 {
        self.upper - self.lower
    }

    /// Limits as proportions of the population.
    pub fn as_proportions(&self, population: u64) -> (f64, f64) {
        (self.lower as f64 / population as f64, self.upper as f64 / population as f64)
    }
}

/// `floor(2 eps N)`: the widest integer interval accepted by the width test.
///
/// A product within `1e-9` (relative) of an integer is taken as that
/// integer, so `eps = 0.3, N = 100` gives 60 although the double nearest
/// 0.3 lies slightly below it.
pub fn width_limit(population: u64, eps: f64) -> u64 {
    let x = 2.0 * eps * population as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.floor() as u64
    }
}

/// Decides the two threshold comparisons that define the limits.
pub(crate) trait TailTest: Sync {
    /// `Pr{K >= k} > alpha / 2`.
    fn upper_exceeds(&self, params: &HypergeomParams, k: u64) -> bool;
    /// `Pr{K <= k} > alpha / 2`.
    fn lower_exceeds(&self, params: &HypergeomParams, k: u64) -> bool;
}

struct Generic<P> {
    half: P,
}

impl<P: Probability> TailTest for Generic<P> {
    fn upper_exceeds(&self, params: &HypergeomParams, k: u64) -> bool {
        P::upper_tail(params, k) > self.half
    }
    fn lower_exceeds(&self, params: &HypergeomParams, k: u64) -> bool {
        P::lower_tail(params, k) > self.half
    }
}

/// Floating screen with an exact decision inside a narrow band around the
/// threshold. Produces the same answers as the big-rational test.
struct Screened {
    half: f64,
    half_exact: ExactProb,
}

const SCREEN_BAND: f64 = 1e-9;

impl Screened {
    fn decide(&self, approx: f64, exact: impl FnOnce() -> ExactProb) -> bool {
        if (approx - self.half).abs() > SCREEN_BAND * self.half {
            approx > self.half
        } else {
            exact() > self.half_exact
        }
    }
}

impl TailTest for Screened {
    fn upper_exceeds(&self, params: &HypergeomParams, k: u64) -> bool {
        self.decide(f64::upper_tail(params, k), || ExactProb::upper_tail(params, k))
    }
    fn lower_exceeds(&self, params: &HypergeomParams, k: u64) -> bool {
        self.decide(f64::lower_tail(params, k), || ExactProb::lower_tail(params, k))
    }
}

fn half_alpha<P: Probability>(alpha: f64) -> P {
    P::from_f64(alpha) / P::from_ratio(2, 1)
}

fn generic<P: Probability>(alpha: f64) -> Generic<P> {
    Generic { half: half_alpha::<P>(alpha) }
}

/// Tail test for an evaluation mode. The exact mode screens in `f64` and
/// settles near-ties in rational arithmetic.
pub(crate) fn tail_test(alpha: f64, mode: EvalMode) -> Box<dyn TailTest> {
    match mode {
        EvalMode::LogSpace => Box::new(generic::<f64>(alpha)),
        EvalMode::ExactRational => Box::new(Screened {
            half: alpha / 2.0,
            half_exact: half_alpha::<ExactProb>(alpha),
        }),
    }
}

fn check(population: u64, draws: u64, k: u64, alpha: f64) -> Result<()> {
    crate::error::check_open_unit("alpha", alpha)?;
    if population == 0 || draws > population || k > draws {
        return Err(Error::domain(format!(
            "confidence limits need 0 <= k <= n <= N with N >= 1 (N = {population}, n = {draws}, k = {k})"
        )));
    }
    Ok(())
}

fn params(population: u64, m: u64, draws: u64) -> HypergeomParams {
    HypergeomParams { population, successes: m, draws }
}

/// Smallest `M` in `[lo, hi]` passing the upper-tail test; `hi` must pass.
fn search_lower(t: &dyn TailTest, population: u64, draws: u64, k: u64, mut lo: u64, mut hi: u64) -> u64 {
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if t.upper_exceeds(&params(population, mid, draws), k) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Largest `M` in `[lo, hi]` passing the lower-tail test; `lo` must pass.
fn search_upper(t: &dyn TailTest, population: u64, draws: u64, k: u64, mut lo: u64, mut hi: u64) -> u64 {
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if t.lower_exceeds(&params(population, mid, draws), k) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

pub(crate) fn limits_with(t: &dyn TailTest, population: u64, draws: u64, k: u64) -> ConfidenceLimits {
    let top = k + (population - draws);
    ConfidenceLimits {
        lower: search_lower(t, population, draws, k, k, top),
        upper: search_upper(t, population, draws, k, k, top),
    }
}

/// Limits for every `k` in `0..=n`, reusing the monotone bracket from `k - 1`.
pub(crate) fn table_with(t: &dyn TailTest, population: u64, draws: u64) -> Vec<ConfidenceLimits> {
    let mut out: Vec<ConfidenceLimits> = Vec::with_capacity(draws as usize + 1);
    for k in 0..=draws {
        let top = k + (population - draws);
        let (lo_l, lo_u) = match out.last() {
            Some(prev) => (prev.lower.max(k), prev.upper.max(k)),
            None => (k, k),
        };
        out.push(ConfidenceLimits {
            lower: search_lower(t, population, draws, k, lo_l, top),
            upper: search_upper(t, population, draws, k, lo_u, top),
        });
    }
    out
}

/// Smallest `M` with `Pr{K >= k | M} > alpha / 2`.
pub fn limit_lower<P: Probability>(population: u64, draws: u64, k: u64, alpha: f64) -> Result<u64> {
    check(population, draws, k, alpha)?;
    let t = generic::<P>(alpha);
    Ok(search_lower(&t, population, draws, k, k, k + (population - draws)))
}

/// Largest `M` with `Pr{K <= k | M} > alpha / 2`.
pub fn limit_upper<P: Probability>(population: u64, draws: u64, k: u64, alpha: f64) -> Result<u64> {
    check(population, draws, k, alpha)?;
    let t = generic::<P>(alpha);
    Ok(search_upper(&t, population, draws, k, k, k + (population - draws)))
}

pub fn limits<P: Probability>(population: u64, draws: u64, k: u64, alpha: f64) -> Result<ConfidenceLimits> {
    check(population, draws, k, alpha)?;
    Ok(limits_with(&generic::<P>(alpha), population, draws, k))
}

/// Limits for `k = 0..=n`.
pub fn limit_table<P: Probability>(population: u64, draws: u64, alpha: f64) -> Result<Vec<ConfidenceLimits>> {
    check(population, draws, 0, alpha)?;
    Ok(table_with(&generic::<P>(alpha), population, draws))
}

/// [`limit_table`] with the engine chosen at run time.
pub fn limit_table_mode(population: u64, draws: u64, alpha: f64, mode: EvalMode) -> Result<Vec<ConfidenceLimits>> {
    check(population, draws, 0, alpha)?;
    Ok(table_with(tail_test(alpha, mode).as_ref(), population, draws))
}

/// Which `k` must have a wide interval for `n` to count below the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NMinRule {
    /// Width exceeds the limit for every `k`: stopping at `n` is impossible.
    #[default]
    AllK,
    /// Width exceeds the limit for some `k`.
    ExistsK,
}

fn check_range(population: u64, alpha: f64, eps: f64) -> Result<()> {
    crate::error::check_open_unit("alpha", alpha)?;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::domain(format!("eps must lie in (0, 1/2), got {eps}")));
    }
    if population == 0 {
        return Err(Error::domain("population size must be at least 1"));
    }
    Ok(())
}

fn narrow_everywhere(t: &dyn TailTest, population: u64, n: u64, w: u64) -> bool {
    // the widest interval sits near k = n / 2; test it before the full table
    if limits_with(t, population, n, n / 2).width() > w {
        return false;
    }
    table_with(t, population, n).iter().all(|l| l.width() <= w)
}

pub(crate) fn n_max_with(t: &dyn TailTest, population: u64, eps: f64) -> u64 {
    let w = width_limit(population, eps);
    (1..=population)
        .find(|&n| narrow_everywhere(t, population, n, w))
        .unwrap_or(population)
}

pub(crate) fn n_min_with(t: &dyn TailTest, population: u64, eps: f64, n_max: u64, rule: NMinRule) -> Option<u64> {
    let w = width_limit(population, eps);
    let wide = |n: u64| -> bool {
        match rule {
            NMinRule::AllK => {
                // the narrowest intervals sit at the extremes
                limits_with(t, population, n, 0).width() > w
                    && limits_with(t, population, n, n).width() > w
                    && table_with(t, population, n).iter().all(|l| l.width() > w)
            }
            NMinRule::ExistsK => {
                limits_with(t, population, n, n / 2).width() > w
                    || table_with(t, population, n).iter().any(|l| l.width() > w)
            }
        }
    };
    (1..n_max).rev().find(|&n| wide(n))
}

/// Smallest `n` whose interval width is at most `floor(2 eps N)` for every
/// `k`. The census `n = N` always qualifies.
pub fn n_max(population: u64, alpha: f64, eps: f64, mode: EvalMode) -> Result<u64> {
    check_range(population, alpha, eps)?;
    Ok(n_max_with(tail_test(alpha, mode).as_ref(), population, eps))
}

/// Largest `n < n_max` whose widths exceed `floor(2 eps N)` under `rule`,
/// or `None` when no such `n` exists.
pub fn n_min(population: u64, alpha: f64, eps: f64, n_max: u64, rule: NMinRule, mode: EvalMode) -> Result<Option<u64>> {
    check_range(population, alpha, eps)?;
    if n_max == 0 || n_max > population {
        return Err(Error::domain(format!("n_max must lie in [1, N], got {n_max}")));
    }
    Ok(n_min_with(tail_test(alpha, mode).as_ref(), population, eps, n_max, rule))
}

#[cfg(test)]
mod tests {
    use num_rational::BigRational;

    use super::*;
    use crate::exact::dyadic;

    #[test]
    fn trivial_limits() {
        for n in [1u64, 5, 30] {
            assert_eq!(limit_lower::<f64>(30, n, 0, 0.1).unwrap(), 0);
            assert_eq!(limit_upper::<f64>(30, n, n, 0.1).unwrap(), 30);
        }
        assert_eq!(limit_lower::<ExactProb>(20, 20, 7, 0.1).unwrap(), 7);
        assert_eq!(limit_upper::<ExactProb>(20, 20, 7, 0.1).unwrap(), 7);
    }

    #[test]
    fn bisection_matches_linear_scan() {
        let (big_n, n, alpha) = (30u64, 10u64, 0.05);
        let half = dyadic(alpha) / BigRational::from_integer(2.into());
        for k in 0..=n {
            let scan_l = (0..=big_n)
                .find(|&m| ExactProb::upper_tail(&params(big_n, m, n), k) > half)
                .unwrap();
            let scan_u = (0..=big_n)
                .rev()
                .find(|&m| ExactProb::lower_tail(&params(big_n, m, n), k) > half)
                .unwrap();
            let lim = limits::<ExactProb>(big_n, n, k, alpha).unwrap();
            assert_eq!((lim.lower, lim.upper), (scan_l, scan_u), "k = {k}");
            assert!(lim.lower <= lim.upper);
        }
    }

    #[test]
    fn table_agrees_with_pointwise_limits() {
        let table = limit_table::<f64>(80, 25, 0.02).unwrap();
        for (k, lim) in table.iter().enumerate() {
            assert_eq!(*lim, limits::<f64>(80, 25, k as u64, 0.02).unwrap());
        }
        let exact = limit_table_mode(80, 25, 0.02, EvalMode::ExactRational).unwrap();
        assert_eq!(table, exact);
    }

    #[test]
    fn width_limit_is_exact() {
        assert_eq!(width_limit(200, 0.1), 40);
        assert_eq!(width_limit(10, 0.04), 0);
        assert_eq!(width_limit(100, 0.3), 60);
    }

    #[test]
    fn n_range_is_ordered() {
        let nmax = n_max(100, 0.05, 0.1, EvalMode::LogSpace).unwrap();
        assert!(nmax < 100);
        let nmin = n_min(100, 0.05, 0.1, nmax, NMinRule::AllK, EvalMode::LogSpace).unwrap().unwrap();
        assert!(nmin < nmax);
        let loose = n_min(100, 0.05, 0.1, nmax, NMinRule::ExistsK, EvalMode::LogSpace).unwrap().unwrap();
        assert!(loose >= nmin);
    }

    #[test]
    fn wide_margin_terminates() {
        // 2 eps N >= N - 1 is met by the trivial bracket almost immediately
        let nmax = n_max(10, 0.1, 0.49, EvalMode::LogSpace).unwrap();
        assert!((1..=10).contains(&nmax));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(limit_lower::<f64>(10, 11, 0, 0.1).is_err());
        assert!(limit_upper::<f64>(10, 5, 6, 0.1).is_err());
        assert!(limits::<f64>(10, 5, 2, 1.0).is_err());
        assert!(n_max(10, 0.1, 0.5, EvalMode::LogSpace).is_err());
    }
}
