//! `finpop`: plan, verify and simulate sampling schemes for estimating the
//! proportion of a finite population.
//!
//! Exit status is 0 on success, 1 when a plan fails certification or
//! verification, and 2 for usage and validation errors. Errors are printed
//! to stderr as a JSON object.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use finpop::fixed_size::{exact_mixed_coverage, plan_fixed_size, AbsRelMargins, ExactSearch, FixedSizePlan};
use finpop::inverse::{exact_relerr_coverage, plan_inverse, InversePlan, RelMargin};
use finpop::mc::{estimate_coverage, run_trials, CoverageEstimate, Criterion, Scheme, TrialBatch, TrialRecord};
use finpop::multistage::{
    build_stage_plan_with, coverage, coverage_report, run_multistage, tune_zeta, CoverageReport, MultistageOutcome,
    NMinRule, PlanOptions, StagePlan, TuneOptions, DEFAULT_RHO,
};
use finpop::report::{round_sig, REPORT_DIGITS};
use finpop::{EvalMode, ExactProb, PopulationSpec, Prob, Probability, SCHEMA_VERSION};

use output::{plan_json, report_json, write_csv, write_text, Format, Sink};

/// Largest population verified in exact arithmetic when `--mode auto`.
const AUTO_EXACT_LIMIT: u64 = 2000;

#[derive(Debug, Parser)]
#[command(name = "finpop", version, about = "Sampling plans for estimating a finite-population proportion")]
struct Cli {
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Worker threads for sweeps and simulations.
    #[arg(long, global = true, env = "FINPOP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fixed sample size for the mixed absolute/relative error criterion.
    FixedSize(FixedSizeArgs),
    /// Threshold for inverse sampling with a relative error criterion.
    Inverse(InverseArgs),
    /// Multistage fixed-width confidence intervals.
    #[command(subcommand)]
    Multistage(MultistageCommand),
    /// Monte Carlo coverage of fixed-size and inverse sampling.
    #[command(subcommand)]
    Simulate(SimulateCommand),
}

#[derive(Debug, Args)]
struct FixedSizeArgs {
    #[arg(long)]
    eps_a: f64,
    #[arg(long)]
    eps_r: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    population: Option<u64>,
    /// Also find the smallest n with exact coverage above 1 - delta for every M.
    #[arg(long, requires = "population")]
    exact: bool,
    #[arg(long, default_value_t = 5000)]
    exact_cap: u64,
    /// Sizes above the exact minimum to re-check for non-monotone coverage.
    #[arg(long, default_value_t = 0)]
    widen: u64,
}

#[derive(Debug, Args)]
struct InverseArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    /// Echo the bound at the exact integer root and one below it.
    #[arg(long)]
    exact_root: bool,
    /// Bisection tolerance for the real root.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Exact up to N = 2000, log space above.
    Auto,
    Exact,
    LogSpace,
}

impl ModeArg {
    fn resolve(self, population: u64) -> EvalMode {
        match self {
            ModeArg::Exact => EvalMode::ExactRational,
            ModeArg::LogSpace => EvalMode::LogSpace,
            ModeArg::Auto if population <= AUTO_EXACT_LIMIT => EvalMode::ExactRational,
            ModeArg::Auto => EvalMode::LogSpace,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    AllK,
    ExistsK,
}

#[derive(Debug, Subcommand)]
enum MultistageCommand {
    /// Tune zeta and emit a certified plan.
    Plan(PlanArgs),
    /// Exact all-M verification of a saved plan, or Monte Carlo with --mc.
    Verify(VerifyArgs),
    /// Simulate the plan on a population with M successes.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long)]
    population: u64,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    zeta_hi: f64,
    /// Use this zeta instead of tuning.
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long, value_enum, default_value_t = RuleArg::AllK)]
    n_min_rule: RuleArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    /// Also write the verification report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    /// Include exact numerators and denominators.
    #[arg(long)]
    fractions: bool,
    /// Monte Carlo trials per M, compared with the exact coverage.
    #[arg(long)]
    mc: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restrict the Monte Carlo check to one M.
    #[arg(long)]
    m: Option<u64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    m: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Per-trial CSV dump.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum SimulateCommand {
    FixedSize(SimFixedArgs),
    Inverse(SimInverseArgs),
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[arg(long)]
    population: u64,
    #[arg(long)]
    m: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-trial CSV dump.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimFixedArgs {
    #[command(flatten)]
    batch: BatchArgs,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    eps_a: f64,
    #[arg(long)]
    eps_r: f64,
    #[arg(long)]
    delta: f64,
}

#[derive(Debug, Args)]
struct SimInverseArgs {
    #[command(flatten)]
    batch: BatchArgs,
    #[arg(long)]
    r: u64,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
}

#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
    exit: u8,
    details: Option<serde_json::Value>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { kind: "usage", message: message.into(), exit: 2, details: None }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError { kind: "io", message: format!("{}: {err}", path.display()), exit: 2, details: None }
    }

    pub fn internal(err: impl std::fmt::Display) -> Self {
        CliError { kind: "internal", message: err.to_string(), exit: 2, details: None }
    }

    fn failed(kind: &'static str, message: impl Into<String>, details: serde_json::Value) -> Self {
        CliError { kind, message: message.into(), exit: 1, details: Some(details) }
    }

    fn print(&self) {
        let mut body = json!({ "kind": self.kind, "message": self.message });
        if let Some(d) = &self.details {
            body["details"] = d.clone();
        }
        eprintln!("{}", json!({ "error": body }));
    }
}

impl From<finpop::Error> for CliError {
    fn from(err: finpop::Error) -> Self {
        use finpop::Error as E;
        let message = err.to_string();
        match err {
            E::Domain(_) => CliError { kind: "domain", message, exit: 2, details: None },
            E::Inadmissible { value } => CliError {
                kind: "inadmissible",
                message,
                exit: 2,
                details: Some(json!({ "eps_a_over_eps_r_plus_eps_a": value })),
            },
            E::EnumerationCap { population, cap } => CliError {
                kind: "enumeration_cap",
                message,
                exit: 2,
                details: Some(json!({ "population": population, "cap": cap })),
            },
            E::NotCertified { zeta, worst, worst_m, delta } => CliError::failed(
                "not_certified",
                message,
                json!({ "zeta": zeta, "worst_two_d2": worst, "worst_m": worst_m, "delta": delta }),
            ),
        }
    }
}

type CliResult = Result<(), CliError>;

fn load_plan(path: &Path) -> Result<StagePlan, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let plan: StagePlan = serde_json::from_str(&text).map_err(|e| CliError {
        kind: "invalid_plan",
        message: format!("{}: {e}", path.display()),
        exit: 2,
        details: None,
    })?;
    plan.validate()?;
    Ok(plan)
}

fn cmd_fixed_size(args: &FixedSizeArgs, sink: &Sink) -> CliResult {
    let margins = AbsRelMargins::new(args.eps_a, args.eps_r, args.delta)?;
    let search = args.exact.then_some(ExactSearch { cap: args.exact_cap, widen: args.widen });
    let plan: FixedSizePlan = plan_fixed_size(&margins, args.population, search)?;
    sink.emit::<_, ()>(&plan, None)
}

#[derive(Serialize)]
struct InverseOutput {
    #[serde(flatten)]
    plan: InversePlan,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound_at_r_exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound_below_r_exact: Option<f64>,
}

fn cmd_inverse(args: &InverseArgs, sink: &Sink) -> CliResult {
    let margin = RelMargin::new(args.eps, args.delta)?;
    let plan = plan_inverse(&margin, args.tol)?;
    let (at, below) = if args.exact_root {
        let r = plan.r_exact_int;
        let below = if r > 0 { Some(finpop::bounds::q(args.eps, (r - 1) as f64)?) } else { None };
        (Some(finpop::bounds::q(args.eps, r as f64)?), below)
    } else {
        (None, None)
    };
    sink.emit::<_, ()>(&InverseOutput { plan, bound_at_r_exact: at, bound_below_r_exact: below }, None)
}

fn not_certified(report: &CoverageReport) -> CliError {
    CliError::failed(
        "not_certified",
        format!(
            "plan is not certified: worst (2D2) value {} at M = {} (delta = {})",
            report.worst_two_d2, report.worst_two_d2_m, report.delta
        ),
        json!({
            "zeta": report.zeta,
            "worst_two_d2": report.worst_two_d2,
            "worst_m": report.worst_two_d2_m,
            "worst_coverage": report.worst_coverage,
            "worst_coverage_m": report.worst_coverage_m,
            "delta": report.delta,
        }),
    )
}

fn cmd_plan(args: &PlanArgs, sink: &Sink) -> CliResult {
    if sink.format == Format::Csv {
        return Err(CliError::usage("plans are written as JSON"));
    }
    let mode = args.mode.resolve(args.population);
    let plan_opts = PlanOptions {
        n_min_rule: match args.n_min_rule {
            RuleArg::AllK => NMinRule::AllK,
            RuleArg::ExistsK => NMinRule::ExistsK,
        },
        limits_mode: mode,
    };
    let (plan, report) = match args.zeta {
        Some(zeta) => {
            let plan = build_stage_plan_with(args.population, args.eps, args.delta, zeta, args.rho, plan_opts)?;
            let report = coverage_report(&plan, mode, false)?;
            (plan, report)
        }
        None => {
            let opts = TuneOptions { zeta_hi: args.zeta_hi, plan: plan_opts, verify_mode: mode, ..TuneOptions::default() };
            let tuned = tune_zeta(args.population, args.eps, args.delta, args.rho, opts)?;
            (tuned.plan, tuned.report)
        }
    };
    write_text(sink.out.as_deref(), &plan_json(&plan)?)?;
    if let Some(path) = &args.report {
        write_text(Some(path), &report_json(&report)?)?;
    }
    if report.certified {
        Ok(())
    } else {
        Err(not_certified(&report))
    }
}

#[derive(Serialize)]
struct McRow {
    m: u64,
    exact_coverage: f64,
    mc_coverage: f64,
    std_error: f64,
    trials: u64,
    within_3se: bool,
}

#[derive(Serialize)]
struct McVerify {
    schema_version: u32,
    population: u64,
    seed: u64,
    trials_per_m: u64,
    rows: Vec<McRow>,
    disagreements: usize,
}

fn cmd_verify(args: &VerifyArgs, sink: &Sink) -> CliResult {
    let plan = load_plan(&args.plan)?;
    let mode = args.mode.resolve(plan.population);
    let report = coverage_report(&plan, mode, args.fractions)?;
    match args.mc {
        None => {
            sink.emit(&report, Some(&report_rows(&report)))?;
        }
        Some(trials) => {
            let ms: Vec<u64> = match args.m {
                Some(m) if m <= plan.population => vec![m],
                Some(m) => return Err(CliError::usage(format!("--m {m} exceeds N = {}", plan.population))),
                None => (0..=plan.population).collect(),
            };
            let batch = TrialBatch { seed: args.seed, trials, scheme: Scheme::Multistage(Box::new(plan.clone())) };
            let mut rows = Vec::with_capacity(ms.len());
            for m in ms {
                let pop = PopulationSpec::with_successes(plan.population, m)?;
                let est = estimate_coverage(&batch, &pop, &Criterion::Interval)?;
                let exact = report.per_m[m as usize].coverage;
                rows.push(McRow {
                    m,
                    exact_coverage: round_sig(exact, REPORT_DIGITS),
                    mc_coverage: est.estimate,
                    std_error: round_sig(est.std_error, REPORT_DIGITS),
                    trials,
                    within_3se: agrees(&est, exact),
                });
            }
            let out = McVerify {
                schema_version: SCHEMA_VERSION,
                population: plan.population,
                seed: args.seed,
                trials_per_m: trials,
                disagreements: rows.iter().filter(|r| !r.within_3se).count(),
                rows,
            };
            sink.emit(&out, Some(&out.rows))?;
        }
    }
    if report.certified {
        Ok(())
    } else {
        Err(not_certified(&report))
    }
}

/// Within three standard errors, treating a zero standard error as exact
/// agreement only when the exact value is 0 or 1.
fn agrees(est: &CoverageEstimate, exact: f64) -> bool {
    if est.std_error == 0.0 {
        (est.estimate - exact).abs() < 1e-12 || (exact > 0.0 && exact < 1.0 && est.trials < 100)
    } else {
        est.agrees_with(exact, 3.0)
    }
}

#[derive(Serialize)]
struct ReportRow {
    m: u64,
    two_d2: f64,
    coverage: f64,
    stages_used: usize,
}

fn report_rows(report: &CoverageReport) -> Vec<ReportRow> {
    report
        .per_m
        .iter()
        .map(|v| ReportRow {
            m: v.m,
            two_d2: round_sig(v.two_d2, REPORT_DIGITS),
            coverage: round_sig(v.coverage, REPORT_DIGITS),
            stages_used: v.stop_stage.iter().filter(|&&p| p > 0.0).count(),
        })
        .collect()
}

#[derive(Serialize)]
struct RunOne {
    schema_version: u32,
    population: u64,
    m: u64,
    seed: u64,
    #[serde(flatten)]
    outcome: MultistageOutcome,
    lower_prop: f64,
    upper_prop: f64,
    width: f64,
    eps: f64,
    covered: bool,
}

#[derive(Serialize)]
struct RunMany {
    schema_version: u32,
    population: u64,
    m: u64,
    seed: u64,
    #[serde(flatten)]
    estimate: CoverageEstimate,
    exact_coverage: f64,
    max_width: u64,
    width_limit: u64,
}

fn cmd_run(args: &RunArgs, sink: &Sink) -> CliResult {
    let plan = load_plan(&args.plan)?;
    let pop = PopulationSpec::with_successes(plan.population, args.m)?;
    if args.trials == 1 {
        let outcome = run_multistage(&pop, &plan, args.seed)?;
        let (lo, hi) = outcome.interval(plan.population);
        let out = RunOne {
            schema_version: SCHEMA_VERSION,
            population: plan.population,
            m: args.m,
            seed: args.seed,
            outcome,
            lower_prop: lo,
            upper_prop: hi,
            width: hi - lo,
            eps: plan.eps,
            covered: finpop::multistage::interval_covers(&outcome.limits, args.m, plan.population),
        };
        return sink.emit::<_, ()>(&out, None);
    }
    let batch = TrialBatch { seed: args.seed, trials: args.trials, scheme: Scheme::Multistage(Box::new(plan.clone())) };
    let records = run_trials(&batch, &pop, &Criterion::Interval)?;
    let hits = records.iter().filter(|r| r.covered).count() as u64;
    let exact = if plan.population <= AUTO_EXACT_LIMIT {
        coverage::<ExactProb>(&pop, &plan)?.to_f64()
    } else {
        coverage::<Prob>(&pop, &plan)?
    };
    let max_width = records
        .iter()
        .map(|r| r.upper.unwrap_or(0) - r.lower.unwrap_or(0))
        .max()
        .unwrap_or(0);
    if let Some(path) = &args.dump {
        write_csv(Some(path), &records)?;
    }
    let out = RunMany {
        schema_version: SCHEMA_VERSION,
        population: plan.population,
        m: args.m,
        seed: args.seed,
        estimate: CoverageEstimate::from_counts(hits, args.trials),
        exact_coverage: exact,
        max_width,
        width_limit: plan.width_limit,
    };
    sink.emit(&out, Some(&records))
}

#[derive(Serialize)]
struct BatchSummary {
    schema_version: u32,
    scheme: Scheme,
    population: u64,
    m: u64,
    seed: u64,
    #[serde(flatten)]
    estimate: CoverageEstimate,
    exact_coverage: f64,
    within_3se: bool,
}

fn run_batch(args: &BatchArgs, scheme: Scheme, criterion: Criterion, exact: f64, sink: &Sink) -> CliResult {
    let pop = PopulationSpec::with_successes(args.population, args.m)?;
    let batch = TrialBatch { seed: args.seed, trials: args.trials, scheme };
    let records: Vec<TrialRecord> = run_trials(&batch, &pop, &criterion)?;
    if let Some(path) = &args.dump {
        write_csv(Some(path), &records)?;
    }
    let hits = records.iter().filter(|r| r.covered).count() as u64;
    let estimate = CoverageEstimate::from_counts(hits, args.trials);
    let out = BatchSummary {
        schema_version: SCHEMA_VERSION,
        scheme: batch.scheme,
        population: args.population,
        m: args.m,
        seed: args.seed,
        within_3se: agrees(&estimate, exact),
        estimate,
        exact_coverage: exact,
    };
    sink.emit::<_, ()>(&out, None)
}

fn exact_or_float<F, G>(population: u64, exact: F, float: G) -> Result<f64, CliError>
where
    F: FnOnce() -> finpop::Result<ExactProb>,
    G: FnOnce() -> finpop::Result<Prob>,
{
    Ok(if population <= AUTO_EXACT_LIMIT { exact()?.to_f64() } else { float()? })
}

fn cmd_simulate(cmd: &SimulateCommand, sink: &Sink) -> CliResult {
    match cmd {
        SimulateCommand::FixedSize(a) => {
            let margins = AbsRelMargins::new(a.eps_a, a.eps_r, a.delta)?;
            let b = &a.batch;
            let exact = exact_or_float(
                b.population,
                || exact_mixed_coverage::<ExactProb>(b.population, b.m, a.n, &margins),
                || exact_mixed_coverage::<Prob>(b.population, b.m, a.n, &margins),
            )?;
            run_batch(b, Scheme::FixedSize { n: a.n }, Criterion::Mixed(margins), exact, sink)
        }
        SimulateCommand::Inverse(a) => {
            let margin = RelMargin::new(a.eps, a.delta)?;
            let b = &a.batch;
            let exact = exact_or_float(
                b.population,
                || exact_relerr_coverage::<ExactProb>(b.population, b.m, a.r, &margin),
                || exact_relerr_coverage::<Prob>(b.population, b.m, a.r, &margin),
            )?;
            run_batch(b, Scheme::Inverse { r: a.r }, Criterion::Relative(margin), exact, sink)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::internal)?;
    }
    let sink = Sink { out: cli.out, format: cli.format };
    match &cli.command {
        Command::FixedSize(a) => cmd_fixed_size(a, &sink),
        Command::Inverse(a) => cmd_inverse(a, &sink),
        Command::Multistage(MultistageCommand::Plan(a)) => cmd_plan(a, &sink),
        Command::Multistage(MultistageCommand::Verify(a)) => cmd_verify(a, &sink),
        Command::Multistage(MultistageCommand::Run(a)) => cmd_run(a, &sink),
        Command::Simulate(c) => cmd_simulate(c, &sink),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            CliError::usage(e.render().to_string().trim_end()).print();
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.print();
            ExitCode::from(e.exit)
        }
    }
}
