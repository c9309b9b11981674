//! Stage grids and their stopping tables.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};
use crate::hypergeom::EvalMode;
use crate::SCHEMA_VERSION;

use super::limits::{n_max_with, n_min_with, table_with, tail_test, width_limit, ConfidenceLimits, NMinRule};

/// Default growth parameter of the stage grid.
pub const DEFAULT_RHO: f64 = 0.5;

const SNAP: f64 = 1e-9;

/// One stage: its cumulative sample size and the limits for each count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub size: u64,
    /// `limits[k]` for `k = 0..=size`.
    pub limits: Vec<ConfidenceLimits>,
}

/// A multistage sampling plan with its precomputed decision tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub schema_version: u32,
    pub population: u64,
    pub eps: f64,
    pub delta: f64,
    pub zeta: f64,
    /// Grid growth parameter; absent for user-supplied grids.
    pub rho: Option<f64>,
    pub tau: Option<u64>,
    pub n_min: Option<u64>,
    pub n_max: u64,
    pub n_min_rule: NMinRule,
    /// Engine that decided the limit thresholds.
    pub limits_mode: EvalMode,
    /// `floor(2 eps N)`.
    pub width_limit: u64,
    pub stages: Vec<Stage>,
    pub degenerate: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl StagePlan {
    /// Per-stage confidence parameter `zeta * delta`.
    pub fn alpha(&self) -> f64 {
        self.zeta * self.delta
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.stages.iter().map(|s| s.size).collect()
    }

    /// Whether sampling stops at stage `stage` (0-based) after `k` successes.
    pub fn stops(&self, stage: usize, k: u64) -> bool {
        self.stages[stage].limits[k as usize].width() <= self.width_limit
    }

    pub fn limits(&self, stage: usize, k: u64) -> ConfidenceLimits {
        self.stages[stage].limits[k as usize]
    }

    /// Structural checks: ascending sizes within the population, full
    /// tables with ordered limits, and a last stage that stops for every `k`.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::domain(format!(
                "plan schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        check_inputs(self.population, self.eps, self.delta, self.zeta)?;
        if self.stages.is_empty() {
            return Err(Error::domain("plan has no stages"));
        }
        if self.width_limit != width_limit(self.population, self.eps) {
            return Err(Error::domain("plan width limit does not match eps and N"));
        }
        let mut prev = 0;
        for stage in &self.stages {
            if stage.size <= prev || stage.size > self.population {
                return Err(Error::domain("stage sizes must be strictly ascending within [1, N]"));
            }
            prev = stage.size;
            if stage.limits.len() as u64 != stage.size + 1 {
                return Err(Error::domain(format!("stage {} needs limits for k = 0..=n", stage.size)));
            }
            let slack = self.population - stage.size;
            for (k, lim) in stage.limits.iter().enumerate() {
                let k = k as u64;
                if !(lim.lower <= lim.upper && k <= lim.upper && lim.lower <= k + slack && lim.upper <= k + slack) {
                    return Err(Error::domain(format!(
                        "limits at stage {} and k = {k} are outside [k, k + N - n]",
                        stage.size
                    )));
                }
            }
        }
        let last = self.stages.len() - 1;
        if let Some(k) = (0..=self.stages[last].size).find(|&k| !self.stops(last, k)) {
            return Err(Error::domain(format!(
                "the last stage must stop for every count, but k = {k} fails the width test"
            )));
        }
        Ok(())
    }
}

fn check_inputs(population: u64, eps: f64, delta: f64, zeta: f64) -> Result<()> {
    if population == 0 {
        return Err(Error::domain("population size must be at least 1"));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::domain(format!("eps must lie in (0, 1/2), got {eps}")));
    }
    check_open_unit("delta", delta)?;
    if !(zeta > 0.0) {
        return Err(Error::domain(format!("zeta must be positive, got {zeta}")));
    }
    check_open_unit("zeta * delta", zeta * delta)
}

fn snap_ceil(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= SNAP * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Exponent count and ascending distinct sizes of the geometric bridge from
/// `n_min` to `n_max`.
pub fn geometric_grid(n_min: u64, n_max: u64, rho: f64) -> Result<(u64, Vec<u64>)> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::domain(format!("rho must be positive, got {rho}")));
    }
    if n_min == 0 || n_min >= n_max {
        return Err(Error::domain(format!("grid needs 1 <= n_min < n_max (got {n_min}, {n_max})")));
    }
    let ratio = n_max as f64 / n_min as f64;
    let tau = snap_ceil(ratio.ln() / rho.ln_1p()).max(1);
    let mut sizes: Vec<u64> = (0..=tau)
        .map(|i| match i {
            0 => n_min,
            i if i == tau => n_max,
            i => snap_ceil(ratio.powf(i as f64 / tau as f64) * n_min as f64).clamp(n_min, n_max),
        })
        .collect();
    sizes.dedup();
    Ok((tau, sizes))
}

/// Options for [`build_stage_plan_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlanOptions {
    pub n_min_rule: NMinRule,
    pub limits_mode: EvalMode,
}

/// Plan with the geometric grid at level `zeta * delta`, default options.
pub fn build_stage_plan(population: u64, eps: f64, delta: f64, zeta: f64, rho: f64) -> Result<StagePlan> {
    build_stage_plan_with(population, eps, delta, zeta, rho, PlanOptions::default())
}

pub fn build_stage_plan_with(
    population: u64,
    eps: f64,
    delta: f64,
    zeta: f64,
    rho: f64,
    opts: PlanOptions,
) -> Result<StagePlan> {
    check_inputs(population, eps, delta, zeta)?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::domain(format!("rho must be positive, got {rho}")));
    }
    let alpha = zeta * delta;
    let test = tail_test(alpha, opts.limits_mode);
    let nmax = n_max_with(test.as_ref(), population, eps);
    let nmin = n_min_with(test.as_ref(), population, eps, nmax, opts.n_min_rule);
    let mut warnings = Vec::new();
    let wl = width_limit(population, eps);
    if wl == 0 {
        warnings.push(format!(
            "2 eps N = {} < 1: intervals must pin M exactly and the plan tends to a census",
            2.0 * eps * population as f64
        ));
    }
    let (tau, sizes, degenerate) = match nmin {
        Some(lo) => {
            let (tau, sizes) = geometric_grid(lo, nmax, rho)?;
            (Some(tau), sizes, false)
        }
        None => {
            warnings.push(format!("no sample size below n_max = {nmax} is wide for every count; single-stage plan"));
            (None, vec![nmax], true)
        }
    };
    let stages = sizes
        .iter()
        .map(|&size| Stage { size, limits: table_with(test.as_ref(), population, size) })
        .collect();
    let plan = StagePlan {
        schema_version: SCHEMA_VERSION,
        population,
        eps,
        delta,
        zeta,
        rho: Some(rho),
        tau,
        n_min: nmin,
        n_max: nmax,
        n_min_rule: opts.n_min_rule,
        limits_mode: opts.limits_mode,
        width_limit: wl,
        stages,
        degenerate,
        warnings,
    };
    plan.validate()?;
    Ok(plan)
}

/// Plan on a user-supplied ascending grid. The last size must stop for
/// every count.
pub fn plan_from_sizes(
    population: u64,
    eps: f64,
    delta: f64,
    zeta: f64,
    sizes: &[u64],
    limits_mode: EvalMode,
) -> Result<StagePlan> {
    check_inputs(population, eps, delta, zeta)?;
    let test = tail_test(zeta * delta, limits_mode);
    if sizes.iter().any(|&n| n == 0 || n > population) {
        return Err(Error::domain("stage sizes must lie in [1, N]"));
    }
    let stages = sizes
        .iter()
        .map(|&size| Stage { size, limits: table_with(test.as_ref(), population, size) })
        .collect();
    let plan = StagePlan {
        schema_version: SCHEMA_VERSION,
        population,
        eps,
        delta,
        zeta,
        rho: None,
        tau: None,
        n_min: None,
        n_max: sizes.last().copied().unwrap_or(0),
        n_min_rule: NMinRule::default(),
        limits_mode,
        width_limit: width_limit(population, eps),
        stages,
        degenerate: sizes.len() == 1,
        warnings: Vec::new(),
    };
    plan.validate()?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_are_exact() {
        let (tau, sizes) = geometric_grid(10, 100, 0.5).unwrap();
        assert_eq!(tau, 6);
        assert_eq!(sizes.first(), Some(&10));
        assert_eq!(sizes.last(), Some(&100));
        assert!(sizes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn wide_rho_gives_two_points() {
        let (tau, sizes) = geometric_grid(10, 40, 10.0).unwrap();
        assert_eq!(tau, 1);
        assert_eq!(sizes, vec![10, 40]);
    }

    #[test]
    fn exact_power_ratio_does_not_add_a_stage() {
        // ln 8 / ln 2 evaluates a hair above 3 in floating point
        let (tau, sizes) = geometric_grid(5, 40, 1.0).unwrap();
        assert_eq!(tau, 3);
        assert_eq!(sizes, vec![5, 10, 20, 40]);
    }

    #[test]
    fn built_plan_is_valid() {
        let plan = build_stage_plan(200, 0.1, 0.1, 0.5, DEFAULT_RHO).unwrap();
        plan.validate().unwrap();
        assert_eq!(plan.stages.last().unwrap().size, plan.n_max);
        assert_eq!(plan.stages[0].size, plan.n_min.unwrap());
        assert!(!plan.degenerate);
    }

    #[test]
    fn custom_grid_needs_total_last_stage() {
        let plan = build_stage_plan(60, 0.1, 0.1, 0.5, DEFAULT_RHO).unwrap();
        let ok = plan_from_sizes(60, 0.1, 0.1, 0.5, &[5, plan.n_max], EvalMode::LogSpace);
        assert!(ok.is_ok());
        assert!(plan_from_sizes(60, 0.1, 0.1, 0.5, &[5, 10], EvalMode::LogSpace).is_err());
        assert!(plan_from_sizes(60, 0.1, 0.1, 0.5, &[10, 5, 60], EvalMode::LogSpace).is_err());
    }

    #[test]
    fn tiny_margin_warns() {
        let plan = build_stage_plan(10, 0.04, 0.1, 0.5, DEFAULT_RHO).unwrap();
        assert_eq!(plan.width_limit, 0);
        assert!(!plan.warnings.is_empty());
        assert_eq!(plan.n_max, 10);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_stage_plan(100, 0.5, 0.1, 0.5, 0.5).is_err());
        assert!(build_stage_plan(100, 0.1, 0.1, 0.0, 0.5).is_err());
        assert!(build_stage_plan(100, 0.1, 0.1, 20.0, 0.5).is_err());
        assert!(build_stage_plan(100, 0.1, 0.1, 0.5, 0.0).is_err());
    }
}
