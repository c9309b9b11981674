//! Fixed-sample-size planning under the mixed absolute/relative criterion
//! `|p̂ - p| < eps_a  or  |p̂ - p| < eps_r p`.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::g;
use crate::error::{check_open_unit, Error, Result};
use crate::exact::{dyadic, ExactRow};
use crate::hypergeom::HypergeomParams;
use crate::scalar::Probability;

/// Absolute margin, relative margin and confidence parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsRelMargins {
    pub eps_a: f64,
    pub eps_r: f64,
    pub delta: f64,
}

impl AbsRelMargins {
    /// Each of the three values must lie in `(0, 1)`. Admissibility for the
    /// closed-form sample size is checked separately by
    /// [`AbsRelMargins::check_admissible`].
    pub fn new(eps_a: f64, eps_r: f64, delta: f64) -> Result<Self> {
        check_open_unit("eps_a", eps_a)?;
        check_open_unit("eps_r", eps_r)?;
        check_open_unit("delta", delta)?;
        Ok(AbsRelMargins { eps_a, eps_r, delta })
    }

    pub fn admissibility_value(&self) -> f64 {
        self.eps_a / self.eps_r + self.eps_a
    }

    /// `eps_a / eps_r + eps_a <= 1/2`.
    pub fn check_admissible(&self) -> Result<()> {
        let value = self.admissibility_value();
        if value <= 0.5 {
            Ok(())
        } else {
            Err(Error::Inadmissible { value })
        }
    }
}

/// Real-valued right-hand side of the sample size condition; any `n`
/// strictly above it guarantees the mixed criterion.
pub fn sample_size_bound(margins: &AbsRelMargins) -> Result<f64> {
    margins.check_admissible()?;
    let AbsRelMargins { eps_a, eps_r, delta } = *margins;
    let den = (eps_a + eps_a * eps_r) * eps_r.ln_1p()
        + (eps_r - eps_a - eps_a * eps_r) * (-(eps_a * eps_r) / (eps_r - eps_a)).ln_1p();
    Ok(eps_r * (2.0 / delta).ln() / den)
}

/// The same bound written as `ln(2/delta) / -g(eps_a, eps_a/eps_r)`.
pub fn sample_size_bound_via_g(margins: &AbsRelMargins) -> Result<f64> {
    margins.check_admissible()?;
    let rate = g(margins.eps_a, margins.eps_a / margins.eps_r)?;
    Ok((2.0 / margins.delta).ln() / -rate)
}

/// Smallest integer strictly greater than [`sample_size_bound`].
pub fn sample_size_formula(margins: &AbsRelMargins) -> Result<u64> {
    let bound = sample_size_bound(margins)?;
    Ok(bound.floor() as u64 + 1)
}

/// Exact integer form of the coverage event for one population.
struct MixedEvent {
    abs_bound: BigRational,
    rel_bound: BigRational,
    p: BigRational,
    n: BigRational,
}

impl MixedEvent {
    fn new(population: u64, successes: u64, draws: u64, margins: &AbsRelMargins) -> Self {
        let p = BigRational::new(BigInt::from(successes), BigInt::from(population));
        MixedEvent {
            abs_bound: dyadic(margins.eps_a),
            rel_bound: dyadic(margins.eps_r) * &p,
            p,
            n: BigRational::from_integer(BigInt::from(draws)),
        }
    }

    fn covers(&self, k: u64) -> bool {
        let err = (BigRational::from_integer(BigInt::from(k)) / &self.n - &self.p).abs();
        err < self.abs_bound || err < self.rel_bound
    }
}

fn check_draws(population: u64, draws: u64) -> Result<()> {
    if draws == 0 || draws > population {
        return Err(Error::domain(format!(
            "sample size must satisfy 1 <= n <= N (n = {draws}, N = {population})"
        )));
    }
    Ok(())
}

/// `Pr{|K/n - p| < eps_a or |K/n - p| < eps_r p}` for a known `M`.
pub fn exact_mixed_coverage<P: Probability>(
    population: u64,
    successes: u64,
    draws: u64,
    margins: &AbsRelMargins,
) -> Result<P> {
    check_draws(population, draws)?;
    let params = HypergeomParams::new(population, successes, draws)?;
    let event = MixedEvent::new(population, successes, draws, margins);
    Ok(P::hypergeom_mass(&params, &mut |k| event.covers(k)))
}

/// Exact coverage as (numerator, denominator `C(N, n)`).
fn coverage_fraction(
    population: u64,
    successes: u64,
    draws: u64,
    margins: &AbsRelMargins,
) -> (BigUint, BigUint) {
    let params = HypergeomParams { population, successes, draws };
    let row = ExactRow::new(&params);
    let event = MixedEvent::new(population, successes, draws, margins);
    (row.mass_numerator(|k| event.covers(k)), row.denominator)
}

/// `num / den > 1 - delta`, decided exactly.
fn exceeds_confidence(num: &BigUint, den: &BigUint, delta: f64) -> bool {
    let target = BigRational::one() - dyadic(delta);
    BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone())) > target
}

/// Coverage check for one `(N, M, n)`: a cheap float screen with an exact
/// decision whenever the float lands near the threshold.
fn covers_exactly(population: u64, successes: u64, draws: u64, margins: &AbsRelMargins) -> bool {
    let approx: f64 = exact_mixed_coverage(population, successes, draws, margins).unwrap_or(0.0);
    let target = 1.0 - margins.delta;
    if approx > target + 1e-9 {
        return true;
    }
    if approx < target - 1e-9 {
        return false;
    }
    let (num, den) = coverage_fraction(population, successes, draws, margins);
    exceeds_confidence(&num, &den, margins.delta)
}

/// Whether `n` meets the criterion for every `M` in `0..=N`.
pub fn all_m_feasible(population: u64, draws: u64, margins: &AbsRelMargins) -> bool {
    (0..=population)
        .into_par_iter()
        .all(|m| covers_exactly(population, m, draws, margins))
}

/// Options for [`exact_min_sample_size`].
#[derive(Debug, Clone, Copy)]
pub struct ExactSearch {
    /// Largest population the enumeration accepts.
    pub cap: u64,
    /// After the first feasible `n`, how many larger sizes to re-check.
    pub widen: u64,
}

impl Default for ExactSearch {
    fn default() -> Self {
        ExactSearch { cap: 5000, widen: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactMinReport {
    pub n_min: u64,
    /// Sizes above `n_min` found to fail during the widened scan. Non-empty
    /// means coverage is not monotone in `n` for this instance.
    pub failures_above: Vec<u64>,
}

/// Smallest `n` whose exact coverage exceeds `1 - delta` for every `M`.
/// The scan goes upward and does not assume coverage is monotone in `n`.
pub fn exact_min_sample_size(
    population: u64,
    margins: &AbsRelMargins,
    search: ExactSearch,
) -> Result<ExactMinReport> {
    if population == 0 {
        return Err(Error::domain("population size must be at least 1"));
    }
    if population > search.cap {
        return Err(Error::EnumerationCap { population, cap: search.cap });
    }
    // n = N is a census and always feasible.
    let n_min = (1..=population)
        .find(|&n| all_m_feasible(population, n, margins))
        .unwrap_or(population);
    let upper = population.min(n_min.saturating_add(search.widen));
    let failures_above = (n_min + 1..=upper)
        .filter(|&n| !all_m_feasible(population, n, margins))
        .collect();
    Ok(ExactMinReport { n_min, failures_above })
}

/// Output of fixed-size planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedSizePlan {
    pub schema_version: u32,
    pub margins: AbsRelMargins,
    pub n_bound: f64,
    pub n_formula: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<u64>,
    /// `min(n_formula, N)` when the population size is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_effective: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_min: Option<ExactMinReport>,
}

pub fn plan_fixed_size(
    margins: &AbsRelMargins,
    population: Option<u64>,
    exact: Option<ExactSearch>,
) -> Result<FixedSizePlan> {
    let n_bound = sample_size_bound(margins)?;
    let n_formula = sample_size_formula(margins)?;
    if population == Some(0) {
        return Err(Error::domain("population size must be at least 1"));
    }
    let n_effective = population.map(|pop| n_formula.min(pop));
    let note = match population {
        Some(pop) if n_formula >= pop => {
            Some(format!("formula size {n_formula} reaches N = {pop}; a census gives p exactly"))
        }
        _ => None,
    };
    let exact_min = match (population, exact) {
        (Some(pop), Some(search)) => Some(exact_min_sample_size(pop, margins, search)?),
        (None, Some(_)) => {
            return Err(Error::domain("exact minimum sample size needs the population size"))
        }
        _ => None,
    };
    Ok(FixedSizePlan {
        schema_version: crate::SCHEMA_VERSION,
        margins: *margins,
        n_bound,
        n_formula,
        population,
        n_effective,
        note,
        exact_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ExactProb;

    fn margins(a: f64, r: f64, d: f64) -> AbsRelMargins {
        AbsRelMargins::new(a, r, d).unwrap()
    }

    #[test]
    fn formula_golden_value() {
        let m = margins(0.02, 0.1, 0.05);
        assert_eq!(sample_size_formula(&m).unwrap(), 3023);
        // 50-digit evaluation: 3022.8061472496237200920...
        let b = sample_size_bound(&m).unwrap();
        assert!(((b - 3_022.806_147_249_624) / b).abs() < 1e-13);
        let via_g = sample_size_bound_via_g(&m).unwrap();
        assert!(((b - via_g) / b).abs() <= 1e-12);
    }

    #[test]
    fn inadmissible_margins_are_rejected() {
        let m = margins(0.05, 0.1, 0.05);
        assert!(matches!(sample_size_formula(&m), Err(Error::Inadmissible { .. })));
        assert!(AbsRelMargins::new(0.0, 0.1, 0.05).is_err());
        assert!(AbsRelMargins::new(0.1, 1.0, 0.05).is_err());
    }

    #[test]
    fn degenerate_populations_cover_fully() {
        let m = margins(0.02, 0.1, 0.05);
        let c: ExactProb = exact_mixed_coverage(10, 0, 5, &m).unwrap();
        assert!(c.is_one());
        let c: ExactProb = exact_mixed_coverage(10, 10, 5, &m).unwrap();
        assert!(c.is_one());
        assert!(exact_mixed_coverage::<f64>(10, 3, 0, &m).is_err());
        assert!(exact_mixed_coverage::<f64>(10, 3, 11, &m).is_err());
    }

    #[test]
    fn coverage_uses_strict_inequalities() {
        // N = 4, M = 2, n = 2: p = 1/2; k = 0 or 2 gives error exactly 1/2.
        let m = margins(0.5, 0.5, 0.1);
        let c: ExactProb = exact_mixed_coverage(4, 2, 2, &m).unwrap();
        // only k = 1 covers: C(2,1)^2 / C(4,2) = 4/6
        assert_eq!(c, ExactProb::new(2.into(), 3.into()));
    }

    #[test]
    fn plan_truncates_to_census() {
        let m = margins(0.02, 0.1, 0.05);
        let plan = plan_fixed_size(&m, Some(500), None).unwrap();
        assert_eq!(plan.n_formula, 3023);
        assert_eq!(plan.n_effective, Some(500));
        assert!(plan.note.is_some());
        let plan = plan_fixed_size(&m, None, None).unwrap();
        assert_eq!(plan.n_effective, None);
    }

    #[test]
    fn exact_search_respects_cap() {
        let m = margins(0.02, 0.1, 0.05);
        let err = exact_min_sample_size(6000, &m, ExactSearch::default()).unwrap_err();
        assert!(matches!(err, Error::EnumerationCap { .. }));
    }
}
