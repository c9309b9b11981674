//! Coverage verification over every population composition, and tuning of
//! the per-stage confidence factor.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{dyadic, ratio_to_f64};
use crate::hypergeom::{EvalMode, PopulationSpec};
use crate::scalar::Probability;
use crate::SCHEMA_VERSION;

use super::dp::{stopping_distribution, PathCounts, StoppingDistribution};
use super::limits::ConfidenceLimits;
use super::plan::{build_stage_plan_with, PlanOptions, StagePlan};

/// `L >= M`. At `M = 0` the lower limit cannot lie below the truth, so the
/// event only counts for `M > 0`.
pub fn lower_miss(lim: &ConfidenceLimits, m: u64) -> bool {
    m > 0 && lim.lower >= m
}

/// `U <= M`, counted only for `M < N`.
pub fn upper_miss(lim: &ConfidenceLimits, m: u64, population: u64) -> bool {
    m < population && lim.upper <= m
}

/// `L < p < U`, with the open end dropped at `p = 0` and `p = 1`.
pub fn interval_covers(lim: &ConfidenceLimits, m: u64, population: u64) -> bool {
    !lower_miss(lim, m) && !upper_miss(lim, m, population)
}

fn two_d2_mass<P: Probability>(law: &StoppingDistribution<P>, plan: &StagePlan, m: u64) -> P {
    let n = plan.population;
    law.mass_where(|l, k| lower_miss(&plan.limits(l, k), m)) + law.mass_where(|l, k| upper_miss(&plan.limits(l, k), m, n))
}

/// Left-hand side of the sufficient coverage condition for one `M`: the
/// probability of stopping with `L >= M` plus that of stopping with `U <= M`.
pub fn verify_2d2<P: Probability>(pop: &PopulationSpec, plan: &StagePlan) -> Result<P> {
    let m = pop.require_successes()?;
    let law = stopping_distribution::<P>(pop, plan)?;
    Ok(two_d2_mass(&law, plan, m))
}

/// `Pr{L < p < U | M}`.
pub fn coverage<P: Probability>(pop: &PopulationSpec, plan: &StagePlan) -> Result<P> {
    let m = pop.require_successes()?;
    let law = stopping_distribution::<P>(pop, plan)?;
    Ok(law.mass_where(|l, k| interval_covers(&plan.limits(l, k), m, plan.population)))
}

/// Numerators over `C(N, M)` in exact reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactFractions {
    pub denominator: String,
    pub two_d2: String,
    pub coverage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MVerdict {
    pub m: u64,
    pub two_d2: f64,
    pub coverage: f64,
    /// Probability of stopping at each stage.
    pub stop_stage: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactFractions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub schema_version: u32,
    pub mode: EvalMode,
    pub population: u64,
    pub eps: f64,
    pub delta: f64,
    pub zeta: f64,
    pub stages: Vec<u64>,
    pub per_m: Vec<MVerdict>,
    pub worst_two_d2: f64,
    pub worst_two_d2_m: u64,
    pub worst_coverage: f64,
    pub worst_coverage_m: u64,
    /// `(2D2) < delta` for every `M`.
    pub certified: bool,
    /// Coverage `> 1 - delta` for every `M`.
    pub coverage_ok: bool,
    /// Coverage `>= 1 - (2D2)` for every `M`.
    pub containment_ok: bool,
    /// Stop probabilities sum to one for every `M` (exactly in exact mode).
    pub normalized: bool,
    /// Largest `U - L` over stop states, against `floor(2 eps N)`.
    pub max_stop_width: u64,
    pub width_limit: u64,
}

struct Row {
    verdict: MVerdict,
    certified: bool,
    covered: bool,
    contained: bool,
    normalized: bool,
}

fn exact_row(counts: &PathCounts, plan: &StagePlan, m: u64, fractions: bool, delta: &BigRational) -> Row {
    let big_n = plan.population;
    let den = counts.denominator(m);
    let mut miss = BigUint::zero();
    let mut cover = BigUint::zero();
    let mut total = BigUint::zero();
    let mut stage_nums = Vec::with_capacity(counts.sizes.len());
    for (l, &n) in counts.sizes.iter().enumerate() {
        let mut stage = BigUint::zero();
        for k in 0..=n {
            let num = counts.numerator(l, k, m);
            if num.is_zero() {
                continue;
            }
            let lim = plan.limits(l, k);
            if lower_miss(&lim, m) {
                miss += &num;
            }
            if upper_miss(&lim, m, big_n) {
                miss += &num;
            }
            if interval_covers(&lim, m, big_n) {
                cover += &num;
            }
            stage += num;
        }
        total += &stage;
        stage_nums.push(stage);
    }
    let frac = |num: &BigUint| BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone()));
    let two_d2 = frac(&miss);
    let cov = frac(&cover);
    let one = BigRational::one();
    Row {
        certified: two_d2 < *delta,
        covered: cov > &one - delta,
        contained: cov >= &one - &two_d2,
        normalized: &total == den,
        verdict: MVerdict {
            m,
            two_d2: ratio_to_f64(&miss, den),
            coverage: ratio_to_f64(&cover, den),
            stop_stage: stage_nums.iter().map(|s| ratio_to_f64(s, den)).collect(),
            exact: fractions.then(|| ExactFractions {
                denominator: den.to_string(),
                two_d2: miss.to_string(),
                coverage: cover.to_string(),
            }),
        },
    }
}

fn float_row(plan: &StagePlan, m: u64) -> Result<Row> {
    let big_n = plan.population;
    let pop = PopulationSpec::with_successes(big_n, m)?;
    let law = stopping_distribution::<f64>(&pop, plan)?;
    let two_d2 = two_d2_mass(&law, plan, m);
    let cov = law.mass_where(|l, k| interval_covers(&plan.limits(l, k), m, big_n));
    let stages = law.stage_masses();
    let total: f64 = stages.iter().sum();
    Ok(Row {
        certified: two_d2 < plan.delta,
        covered: cov > 1.0 - plan.delta,
        contained: cov >= 1.0 - two_d2 - 1e-12,
        normalized: (total - 1.0).abs() <= 1e-9,
        verdict: MVerdict { m, two_d2, coverage: cov, stop_stage: stages, exact: None },
    })
}

/// Largest interval width among states where sampling can stop.
pub fn max_stop_width(plan: &StagePlan) -> u64 {
    let last = plan.stages.len() - 1;
    plan.stages
        .iter()
        .enumerate()
        .flat_map(|(l, s)| {
            (0..=s.size)
                .filter(move |&k| l == last || plan.stops(l, k))
                .map(move |k| s.limits[k as usize].width())
        })
        .max()
        .unwrap_or(0)
}

/// Verifies the plan for every `M` in `0..=N`. Exact mode works with
/// integer path counts and decides every comparison exactly; `fractions`
/// adds the numerators and denominators to each entry.
pub fn coverage_report(plan: &StagePlan, mode: EvalMode, fractions: bool) -> Result<CoverageReport> {
    plan.validate()?;
    let big_n = plan.population;
    let rows: Vec<Row> = match mode {
        EvalMode::ExactRational => {
            let counts = PathCounts::new(plan);
            let delta = dyadic(plan.delta);
            (0..=big_n)
                .into_par_iter()
                .map(|m| exact_row(&counts, plan, m, fractions, &delta))
                .collect()
        }
        EvalMode::LogSpace => (0..=big_n)
            .into_par_iter()
            .map(|m| float_row(plan, m))
            .collect::<Result<_>>()?,
    };
    let worst_d2 = rows
        .iter()
        .max_by(|a, b| a.verdict.two_d2.total_cmp(&b.verdict.two_d2))
        .expect("at least one M");
    let worst_cov = rows
        .iter()
        .min_by(|a, b| a.verdict.coverage.total_cmp(&b.verdict.coverage))
        .expect("at least one M");
    Ok(CoverageReport {
        schema_version: SCHEMA_VERSION,
        mode,
        population: big_n,
        eps: plan.eps,
        delta: plan.delta,
        zeta: plan.zeta,
        stages: plan.sizes(),
        worst_two_d2: worst_d2.verdict.two_d2,
        worst_two_d2_m: worst_d2.verdict.m,
        worst_coverage: worst_cov.verdict.coverage,
        worst_coverage_m: worst_cov.verdict.m,
        certified: rows.iter().all(|r| r.certified),
        coverage_ok: rows.iter().all(|r| r.covered),
        containment_ok: rows.iter().all(|r| r.contained),
        normalized: rows.iter().all(|r| r.normalized),
        max_stop_width: max_stop_width(plan),
        width_limit: plan.width_limit,
        per_m: rows.into_iter().map(|r| r.verdict).collect(),
    })
}

/// Settings for [`tune_zeta`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub zeta_hi: f64,
    /// Smallest factor probed before giving up.
    pub zeta_min: f64,
    /// Stop bisecting once failing / certified factors are within this ratio.
    pub ratio_tol: f64,
    pub plan: PlanOptions,
    pub verify_mode: EvalMode,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            zeta_hi: 1.0,
            zeta_min: 1e-6,
            ratio_tol: 1.05,
            plan: PlanOptions::default(),
            verify_mode: EvalMode::ExactRational,
        }
    }
}

/// A certified plan and its verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedPlan {
    pub plan: StagePlan,
    pub report: CoverageReport,
}

/// Finds a large `zeta` whose plan satisfies `(2D2) < delta` for every `M`.
///
/// Probes `zeta_hi, zeta_hi / 2, ...` until a plan certifies, then bisects
/// geometrically between the last failure and the first success.
pub fn tune_zeta(population: u64, eps: f64, delta: f64, rho: f64, opts: TuneOptions) -> Result<TunedPlan> {
    if !(opts.zeta_hi > 0.0 && opts.zeta_min > 0.0 && opts.ratio_tol > 1.0) {
        return Err(Error::domain("tuning needs zeta_hi > 0, zeta_min > 0 and a ratio tolerance above 1"));
    }
    let zeta_hi = opts.zeta_hi.min(0.999_999 / delta);
    let attempt = |zeta: f64| -> Result<TunedPlan> {
        let plan = build_stage_plan_with(population, eps, delta, zeta, rho, opts.plan)?;
        let report = coverage_report(&plan, opts.verify_mode, false)?;
        Ok(TunedPlan { plan, report })
    };

    let mut zeta = zeta_hi;
    let mut failed: Option<f64> = None;
    let mut best = loop {
        let tuned = attempt(zeta)?;
        if tuned.report.certified {
            break tuned;
        }
        failed = Some(zeta);
        let next = zeta / 2.0;
        if next < opts.zeta_min {
            return Err(Error::NotCertified {
                zeta,
                worst: tuned.report.worst_two_d2,
                worst_m: tuned.report.worst_two_d2_m,
                delta,
            });
        }
        zeta = next;
    };

    if let Some(mut hi) = failed {
        let mut lo = best.plan.zeta;
        while hi / lo > opts.ratio_tol {
            let mid = (hi * lo).sqrt();
            let tuned = attempt(mid)?;
            if tuned.report.certified {
                lo = mid;
                best = tuned;
            } else {
                hi = mid;
            }
        }
    }
    Ok(best)
}
