//! Multistage sampling with a fixed-width confidence interval.
//!
//! Sampling proceeds through cumulative sizes `n_1 < ... < n_s` and stops at
//! the first stage where the exact limits for the observed count are at
//! most `2 eps N` apart. The last stage is the smallest size at which every
//! count passes, so the interval always has width at most `2 eps`. Coverage
//! is then verified exactly for every `M`, and the per-stage level
//! `zeta * delta` is tuned until the verification succeeds.

mod dp;
mod limits;
mod plan;
mod verify;

pub use dp::{stopping_distribution, PathCounts, StoppingDistribution};
pub use limits::{
    limit_lower, limit_table, limit_table_mode, limit_upper, limits, n_max, n_min, width_limit, ConfidenceLimits,
    NMinRule,
};
pub use plan::{
    build_stage_plan, build_stage_plan_with, geometric_grid, plan_from_sizes, PlanOptions, Stage, StagePlan,
    DEFAULT_RHO,
};
pub use verify::{
    coverage, coverage_report, interval_covers, lower_miss, max_stop_width, tune_zeta, upper_miss, verify_2d2,
    CoverageReport, ExactFractions, MVerdict, TuneOptions, TunedPlan,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergeom::PopulationSpec;
use crate::mc::draw_sequence_trial;

/// Result of one simulated multistage run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultistageOutcome {
    /// 1-based stage at which sampling stopped.
    pub stage: usize,
    pub n_stop: u64,
    pub k_stop: u64,
    pub limits: ConfidenceLimits,
}

impl MultistageOutcome {
    /// Interval `(L, U)` as proportions.
    pub fn interval(&self, population: u64) -> (f64, f64) {
        self.limits.as_proportions(population)
    }
}

/// Simulates one run of the plan on stream 0 of `seed`.
pub fn run_multistage(pop: &PopulationSpec, plan: &StagePlan, seed: u64) -> Result<MultistageOutcome> {
    run_multistage_trial(pop, plan, seed, 0)
}

pub(crate) fn run_multistage_trial(pop: &PopulationSpec, plan: &StagePlan, seed: u64, trial: u64) -> Result<MultistageOutcome> {
    if pop.size != plan.population {
        return Err(Error::domain(format!(
            "population size {} does not match the plan's N = {}",
            pop.size, plan.population
        )));
    }
    let mut draws = draw_sequence_trial(pop, seed, trial)?;
    let last = plan.stages.len() - 1;
    let (mut n, mut k) = (0u64, 0u64);
    for (l, stage) in plan.stages.iter().enumerate() {
        for _ in n..stage.size {
            k += u64::from(draws.next().expect("stage sizes never exceed N"));
        }
        n = stage.size;
        if l == last || plan.stops(l, k) {
            let limits = plan.limits(l, k);
            debug_assert!(limits.width() <= plan.width_limit);
            return Ok(MultistageOutcome { stage: l + 1, n_stop: n, k_stop: k, limits });
        }
    }
    unreachable!("the last stage always stops")
}
