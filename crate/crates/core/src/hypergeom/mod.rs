//! Hypergeometric probabilities for sampling without replacement.
//!
//! Drawing `n` units without replacement from `N` units of which `M` carry
//! the attribute yields a hypergeometric count `K`. Every other module is
//! built on the pmf, the two tails, and the stage transition law below.

pub mod logspace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Probability;
use crate::ExactProb;

/// A finite population: `size` units, `successes` of them (when known) with
/// the attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub size: u64,
    pub successes: Option<u64>,
}

impl PopulationSpec {
    pub fn new(size: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::domain("population size must be at least 1"));
        }
        Ok(PopulationSpec { size, successes: None })
    }

    pub fn with_successes(size: u64, successes: u64) -> Result<Self> {
        let mut pop = Self::new(size)?;
        if successes > size {
            return Err(Error::domain(format!(
                "success count M = {successes} exceeds population size N = {size}"
            )));
        }
        pop.successes = Some(successes);
        Ok(pop)
    }

    /// `M`, or a domain error when the population was specified without it.
    pub fn require_successes(&self) -> Result<u64> {
        self.successes
            .ok_or_else(|| Error::domain("this operation needs the success count M"))
    }

    /// `p = M / N` when `M` is known.
    pub fn proportion(&self) -> Option<f64> {
        self.successes.map(|m| m as f64 / self.size as f64)
    }
}

/// Parameters `(N, M, n)` of a hypergeometric law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HypergeomParams {
    pub population: u64,
    pub successes: u64,
    pub draws: u64,
}

impl HypergeomParams {
    pub fn new(population: u64, successes: u64, draws: u64) -> Result<Self> {
        if successes > population || draws > population {
            return Err(Error::domain(format!(
                "hypergeometric parameters need M <= N and n <= N (N = {population}, M = {successes}, n = {draws})"
            )));
        }
        Ok(HypergeomParams { population, successes, draws })
    }

    /// Inclusive support `[max(0, n - (N - M)), min(n, M)]`.
    pub fn support(&self) -> (u64, u64) {
        let lo = self.draws.saturating_sub(self.population - self.successes);
        let hi = self.draws.min(self.successes);
        (lo, hi)
    }

    pub fn in_support(&self, k: u64) -> bool {
        let (lo, hi) = self.support();
        lo <= k && k <= hi
    }
}

fn check_outcome(params: &HypergeomParams, k: u64) -> Result<()> {
    if k > params.draws {
        return Err(Error::domain(format!(
            "outcome k = {k} exceeds the number of draws n = {}",
            params.draws
        )));
    }
    Ok(())
}

/// `C(M, k) C(N - M, n - k) / C(N, n)`; zero outside the support.
pub fn pmf<P: Probability>(params: &HypergeomParams, k: u64) -> Result<P> {
    check_outcome(params, k)?;
    Ok(P::hypergeom_pmf(params, k))
}

/// `Pr{K >= k}`.
pub fn upper_tail<P: Probability>(params: &HypergeomParams, k: u64) -> Result<P> {
    check_outcome(params, k)?;
    Ok(P::upper_tail(params, k))
}

/// `Pr{K <= k}`.
pub fn lower_tail<P: Probability>(params: &HypergeomParams, k: u64) -> Result<P> {
    check_outcome(params, k)?;
    Ok(P::lower_tail(params, k))
}

/// Conditional law of the count after `n2` draws given `k` successes in the
/// first `n` draws: the remaining `n2 - n` draws are hypergeometric on the
/// `N - n` units left, `M - k` of which carry the attribute.
pub fn stage_transition<P: Probability>(
    population: u64,
    successes: u64,
    n: u64,
    k: u64,
    n2: u64,
    k2: u64,
) -> Result<P> {
    if !(n < n2 && n2 <= population) {
        return Err(Error::domain(format!(
            "stage transition needs n < n' <= N (n = {n}, n' = {n2}, N = {population})"
        )));
    }
    if successes > population || k > successes || k > n || k2 < k || k2 - k > n2 - n {
        return Err(Error::domain(format!(
            "stage transition needs k <= M, k <= n and k <= k' <= k + (n' - n) \
             (M = {successes}, k = {k}, k' = {k2})"
        )));
    }
    if n - k > population - successes {
        return Err(Error::domain("prior state (n, k) is impossible for this population"));
    }
    let rest = HypergeomParams::new(population - n, successes - k, n2 - n)?;
    Ok(P::hypergeom_pmf(&rest, k2 - k))
}

/// Runtime choice between the two evaluation engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    LogSpace,
    ExactRational,
}

impl EvalMode {
    pub fn pmf(self, params: &HypergeomParams, k: u64) -> Result<f64> {
        match self {
            EvalMode::LogSpace => pmf::<f64>(params, k),
            EvalMode::ExactRational => pmf::<ExactProb>(params, k).map(|v| v.to_f64()),
        }
    }

    pub fn upper_tail(self, params: &HypergeomParams, k: u64) -> Result<f64> {
        match self {
            EvalMode::LogSpace => upper_tail::<f64>(params, k),
            EvalMode::ExactRational => upper_tail::<ExactProb>(params, k).map(|v| v.to_f64()),
        }
    }

    pub fn lower_tail(self, params: &HypergeomParams, k: u64) -> Result<f64> {
        match self {
            EvalMode::LogSpace => lower_tail::<f64>(params, k),
            EvalMode::ExactRational => lower_tail::<ExactProb>(params, k).map(|v| v.to_f64()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_traits::{One, Zero};

    fn rat(n: i64, d: i64) -> ExactProb {
        ExactProb::new(BigInt::from(n), BigInt::from(d))
    }

    fn hp(big_n: u64, m: u64, n: u64) -> HypergeomParams {
        HypergeomParams::new(big_n, m, n).unwrap()
    }

    #[test]
    fn pmf_examples() {
        assert!(pmf::<ExactProb>(&hp(10, 5, 10), 5).unwrap().is_one());
        assert!(pmf::<ExactProb>(&hp(10, 0, 4), 0).unwrap().is_one());
        assert_eq!(pmf::<ExactProb>(&hp(10, 5, 4), 2).unwrap(), rat(100, 210));
        let f = pmf::<f64>(&hp(10, 5, 4), 2).unwrap();
        assert!((f - 0.476_190_476_190_476_2).abs() < 1e-15);
        assert!(pmf::<ExactProb>(&hp(10, 5, 4), 0).unwrap() == rat(5, 210));
    }

    #[test]
    fn pmf_rejects_bad_params() {
        assert!(HypergeomParams::new(10, 11, 3).is_err());
        assert!(HypergeomParams::new(10, 3, 11).is_err());
        assert!(pmf::<f64>(&hp(10, 3, 4), 5).is_err());
    }

    #[test]
    fn tail_examples() {
        assert!(upper_tail::<ExactProb>(&hp(10, 5, 4), 0).unwrap().is_one());
        assert!(upper_tail::<ExactProb>(&hp(20, 20, 5), 5).unwrap().is_one());
        assert_eq!(upper_tail::<ExactProb>(&hp(10, 5, 4), 3).unwrap(), rat(55, 210));
        assert!(lower_tail::<ExactProb>(&hp(10, 5, 4), 4).unwrap().is_one());
        assert!(lower_tail::<ExactProb>(&hp(10, 10, 3), 2).unwrap().is_zero());
        assert_eq!(lower_tail::<ExactProb>(&hp(10, 5, 4), 1).unwrap(), rat(55, 210));
        let f = upper_tail::<f64>(&hp(10, 5, 4), 3).unwrap();
        assert!((f - 0.261_904_761_904_761_9).abs() < 1e-15);
    }

    #[test]
    fn transition_examples() {
        let t: ExactProb = stage_transition(10, 5, 0, 0, 4, 2).unwrap();
        assert_eq!(t, rat(100, 210));
        let t: ExactProb = stage_transition(10, 5, 5, 5, 6, 6).unwrap();
        assert!(t.is_zero());
        let t: ExactProb = stage_transition(12, 6, 4, 2, 8, 5).unwrap();
        assert_eq!(t, rat(16, 70));
        assert!(stage_transition::<f64>(12, 6, 4, 2, 4, 2).is_err());
        assert!(stage_transition::<f64>(12, 6, 4, 3, 8, 2).is_err());
    }

    #[test]
    fn eval_modes_agree() {
        let p = hp(60, 23, 31);
        for k in 0..=31 {
            let a = EvalMode::LogSpace.pmf(&p, k).unwrap();
            let b = EvalMode::ExactRational.pmf(&p, k).unwrap();
            assert!((a - b).abs() <= 1e-13 * b, "k = {k}");
        }
    }
}
