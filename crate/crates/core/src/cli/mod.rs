//! Command-line experiment runner.
//!
//! Subcommands: `sample` (late-initialized walk, writes samples.csv and
//! report.json), `verify` (analytic identity battery, writes verify.json),
//! `bounds` (closed-form bound table), `bench` (oracle rejection-round
//! histograms).
//!
//! Exit codes are a stable contract: 0 success, 1 validation error (bad
//! flags, malformed config, constraint violations), 2 runtime or budget
//! error (iteration caps, I/O failures, failed verification checks, or any
//! run cut short by `max_total_queries`).
//!
//! Determinism: a fixed (config, seed) pair produces byte-identical
//! samples.csv and report.json. Per-run RNG streams come from the
//! documented `(seed, chain_index, run_index)` splitting rule; wall-clock
//! timing goes to stderr only, never into report files. `LOCSAMP_THREADS`
//! caps the worker pool without affecting output bytes.

pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;

use crate::diagnostics::{default_edges, run_identity_battery, tv_histogram, CheckRecord};
use crate::dynamics::{chain_rng, run_batch, ChainRun};
use crate::linalg::SpdMatrix;
use crate::poincare::{
    conservation_bound, pi_concatenation, pi_initial_subgaussian, pi_mixture_general,
    pi_mixture_identity, pi_rgd_bound, pi_subgaussian_final, BoundValue, PiBound,
};
use crate::potential::QueryCounts;
use crate::processes::SmoothnessProfile;
use crate::rgo::{rgo_sample, RgoOptions, RgoQuery};
use crate::{Error, Result};
use config::{parse_config, ExperimentConfig, ResolvedTarget};

#[derive(Debug, Parser)]
#[command(name = "locsamp", version, about = "Late-initialized restricted Gaussian dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw samples from a configured target and write samples.csv + report.json
    Sample(SampleArgs),
    /// Run the analytic identity battery and write verify.json
    Verify(VerifyArgs),
    /// Evaluate the closed-form Poincare bound table
    Bounds(BoundsArgs),
    /// Oracle rejection-round histograms on the built-in targets
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// TOML experiment configuration
    #[arg(long)]
    pub config: PathBuf,
    /// Override run.seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override output.dir
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override run.chains
    #[arg(long)]
    pub chains: Option<u32>,
    /// Override run.runs
    #[arg(long)]
    pub runs: Option<u32>,
    /// Override run.max_total_queries
    #[arg(long = "max-queries")]
    pub max_queries: Option<u64>,
    /// Override run.epsilon
    #[arg(long)]
    pub eps: Option<f64>,
    /// Attach a first-coordinate TV estimate vs the analytic marginal
    /// (needs at least 10^4 samples)
    #[arg(long)]
    pub report: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Directory for verify.json (default ".")
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Evaluate the identity-covariance mixture bound, e.g. --mixture R=1
    #[arg(long)]
    pub mixture: Option<String>,
    /// Emit JSON instead of the aligned table
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Optional TOML config selecting the target (defaults to both built-ins)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Number of oracle calls per target
    #[arg(long, default_value_t = 10_000)]
    pub calls: usize,
    /// Oracle variance (defaults to the efficient regime 1/(2 L d))
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Directory for per-target histogram CSVs (stdout only when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Entry point for the binary: honors `LOCSAMP_THREADS`, then dispatches.
pub fn main_entry() -> i32 {
    if let Ok(raw) = std::env::var("LOCSAMP_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring LOCSAMP_THREADS={raw:?} (want a positive integer)"),
        }
    }
    dispatch(std::env::args_os())
}

/// Parses argv and runs the selected subcommand, returning the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests land here too; they are not errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Sample(args) => cmd_sample(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Invalid { .. }
        | Error::DimensionMismatch { .. }
        | Error::UnsupportedDimension(_) => 1,
        _ => 2,
    }
}

#[derive(Debug, Serialize)]
struct MarginalTvReport {
    coordinate: usize,
    tv: f64,
    empirical_outside: f64,
    analytic_outside: f64,
    bins: usize,
}

/// report.json payload. Wall time is skipped on purpose: identical
/// (config, seed) must produce identical bytes.
#[derive(Debug, Serialize)]
struct SampleReport {
    target: String,
    dim: usize,
    seed: u64,
    chains: u32,
    runs: u32,
    epsilon: f64,
    samples: usize,
    k_truncated_runs: usize,
    budget_truncated_runs: usize,
    efficiency_warning_runs: usize,
    mean_planned_iterations: f64,
    mean_executed_iterations: f64,
    mean_rejection_rounds_per_step: f64,
    mean_agm_iterations_per_step: f64,
    total_queries: QueryCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    marginal_tv: Option<MarginalTvReport>,
    config: ExperimentConfig,
    #[serde(skip)]
    wall_time: std::time::Duration,
}

fn cmd_sample(args: SampleArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(chains) = args.chains {
        config.run.chains = chains;
    }
    if let Some(runs) = args.runs {
        config.run.runs = runs;
    }
    if let Some(budget) = args.max_queries {
        config.run.max_total_queries = Some(budget);
    }
    if let Some(eps) = args.eps {
        config.run.epsilon = eps;
    }
    if let Some(out) = &args.out {
        config.output.dir = out.display().to_string();
    }
    config.validate()?;

    let resolved = config.resolve_target()?;
    let run_config = config.run_config()?;
    let started = Instant::now();
    let runs = run_batch(
        &resolved.potential,
        &resolved.profile,
        &run_config,
        config.run.chains,
        config.run.runs,
        config.run.seed,
    )?;

    let out_dir = PathBuf::from(&config.output.dir);
    std::fs::create_dir_all(&out_dir)?;
    write_samples_csv(&out_dir.join("samples.csv"), &runs)?;
    let report = build_report(&config, &resolved, &runs, args.report, started.elapsed())?;
    write_json(&out_dir.join("report.json"), &report)?;
    eprintln!(
        "sample: {} draws from {} in {:.2?}",
        runs.len(),
        resolved.label,
        report.wall_time
    );
    if report.budget_truncated_runs > 0 {
        eprintln!(
            "warning: {} runs hit the query budget; outputs are flagged",
            report.budget_truncated_runs
        );
        return Ok(2);
    }
    Ok(0)
}

fn write_samples_csv(path: &Path, runs: &[ChainRun]) -> Result<()> {
    let mut out = String::new();
    for run in runs {
        let mut first = true;
        for v in &run.sample {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .expect("report payloads contain only finite numbers and strings");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn build_report(
    config: &ExperimentConfig,
    resolved: &ResolvedTarget,
    runs: &[ChainRun],
    with_tv: bool,
    wall_time: std::time::Duration,
) -> Result<SampleReport> {
    let n = runs.len().max(1) as f64;
    let total_steps: u64 = runs.iter().map(|r| r.executed_iterations).sum();
    let steps = total_steps.max(1) as f64;
    let total_queries = runs.iter().fold(
        QueryCounts {
            value: 0,
            gradient: 0,
        },
        |acc, r| QueryCounts {
            value: acc.value + r.queries.value,
            gradient: acc.gradient + r.queries.gradient,
        },
    );
    let marginal_tv = if with_tv {
        let firsts: Vec<f64> = runs.iter().map(|r| r.sample[0]).collect();
        if firsts.len() < 10_000 {
            return Err(Error::invalid(
                "--report",
                format!("needs at least 10000 samples, got {}", firsts.len()),
            ));
        }
        let edges = default_edges(&firsts)?;
        let density = resolved.marginal_density.clone();
        let estimate = tv_histogram(&firsts, move |x| density(x), &edges)?;
        Some(MarginalTvReport {
            coordinate: 0,
            tv: estimate.tv,
            empirical_outside: estimate.empirical_outside,
            analytic_outside: estimate.analytic_outside,
            bins: edges.len() - 1,
        })
    } else {
        None
    };
    Ok(SampleReport {
        target: resolved.label.clone(),
        dim: resolved.potential.dim(),
        seed: config.run.seed,
        chains: config.run.chains,
        runs: config.run.runs,
        epsilon: config.run.epsilon,
        samples: runs.len(),
        k_truncated_runs: runs.iter().filter(|r| r.k_truncated).count(),
        budget_truncated_runs: runs.iter().filter(|r| r.budget_truncated).count(),
        efficiency_warning_runs: runs.iter().filter(|r| r.efficiency_warning).count(),
        mean_planned_iterations: runs.iter().map(|r| r.planned_iterations as f64).sum::<f64>()
            / n,
        mean_executed_iterations: total_steps as f64 / n,
        mean_rejection_rounds_per_step: runs.iter().map(|r| r.rejection_rounds as f64).sum::<f64>()
            / steps,
        mean_agm_iterations_per_step: runs.iter().map(|r| r.agm_iterations as f64).sum::<f64>()
            / steps,
        total_queries,
        marginal_tv,
        config: config.clone(),
        wall_time,
    })
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    total: usize,
    passed: usize,
    failed: usize,
    checks: Vec<CheckRecord>,
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let started = Instant::now();
    let checks = run_identity_battery()?;
    let passed = checks.iter().filter(|c| c.pass).count();
    let report = VerifyReport {
        total: checks.len(),
        passed,
        failed: checks.len() - passed,
        checks,
    };
    let out_dir = args.out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    write_json(&out_dir.join("verify.json"), &report)?;
    for check in &report.checks {
        let status = if check.pass { "PASS" } else { "FAIL" };
        println!(
            "[{status}] {} lhs={:+.6e} rhs={:+.6e} tol={:.1e}",
            check.check, check.lhs, check.rhs, check.tol
        );
    }
    println!("{} / {} checks passed", report.passed, report.total);
    eprintln!("verify: {:.2?}", started.elapsed());
    Ok(if report.failed == 0 { 0 } else { 2 })
}

fn demo_bounds() -> Result<Vec<PiBound>> {
    let flat = SmoothnessProfile::constant(1.0)?;
    let divergent = SmoothnessProfile::from_fn(|s| 1.0 / s);
    let initial = pi_initial_subgaussian(0.1, 1.0)?;
    Ok(vec![
        conservation_bound(&flat, 2.0)?,
        // the motivating obstruction: theta ~ 1/s is not integrable at 0
        conservation_bound(&divergent, 0.5)?,
        pi_rgd_bound(1.0, 1.0, &flat)?,
        initial.clone(),
        pi_concatenation(1.0, 0.1, &initial, &flat)?,
        pi_subgaussian_final(1.0, 1.0, &flat, 200)?,
        pi_mixture_identity(1.0)?,
        pi_mixture_general(2.0, &SpdMatrix::scaled_identity(2, 4.0)?)?,
    ])
}

fn parse_mixture_spec(spec: &str) -> Result<f64> {
    let radius = spec
        .trim()
        .strip_prefix("R=")
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| {
            Error::Config(format!("--mixture: expected R=<radius>, got {spec:?}"))
        })?;
    Ok(radius)
}

fn cmd_bounds(args: BoundsArgs) -> Result<i32> {
    let bounds = match &args.mixture {
        Some(spec) => vec![pi_mixture_identity(parse_mixture_spec(spec)?)?],
        None => demo_bounds()?,
    };
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&bounds).expect("bounds serialize cleanly")
        );
        return Ok(0);
    }
    let rows: Vec<(String, String, String)> = bounds
        .iter()
        .map(|b| {
            let value = match &b.value {
                BoundValue::Finite { value } => format!("{value:.6}"),
                BoundValue::Infinite { reason } => format!("infinite ({reason})"),
            };
            let inputs =
                serde_json::to_string(&b.inputs).expect("input snapshots serialize cleanly");
            (b.formula.as_str().to_string(), value, inputs)
        })
        .collect();
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("formula".len());
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max("value".len());
    println!("{:<w0$}  {:<w1$}  inputs", "formula", "value");
    for (formula, value, inputs) in &rows {
        println!("{formula:<w0$}  {value:<w1$}  {inputs}");
    }
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let targets: Vec<ResolvedTarget> = match &args.config {
        Some(path) => {
            let config = parse_config(&std::fs::read_to_string(path)?)?;
            vec![config.resolve_target()?]
        }
        None => {
            let gaussian = parse_config(BUILTIN_GAUSSIAN)?.resolve_target()?;
            let mixture = parse_config(BUILTIN_MIXTURE)?.resolve_target()?;
            vec![gaussian, mixture]
        }
    };
    if args.calls == 0 {
        return Err(Error::invalid("--calls", "must be positive"));
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
    }
    let options = RgoOptions::default();
    for (index, target) in targets.iter().enumerate() {
        let potential = &target.potential;
        let d = potential.dim() as f64;
        let l = potential.smoothness();
        let sigma2 = match args.sigma2 {
            Some(s) => s,
            // the efficient regime; a smoothness-free target has no such
            // threshold, fall back to unit variance
            None if l > 0.0 => 1.0 / (2.0 * l * d),
            None => 1.0,
        };
        // centers spread like a chain would see them: target scale + noise
        let center_sd = (potential.second_moment_bound() / d + sigma2).sqrt();
        let mut rng = chain_rng(args.seed, index as u32, 0);
        let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
        let mut total_rounds = 0u64;
        for _ in 0..args.calls {
            let center: Vec<f64> = (0..potential.dim())
                .map(|_| center_sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let query = RgoQuery::new(center, sigma2)?;
            let draw = rgo_sample(potential, &query, &options, &mut rng)?;
            total_rounds += draw.rejection_rounds;
            *histogram.entry(draw.rejection_rounds).or_insert(0) += 1;
        }
        let mean = total_rounds as f64 / args.calls as f64;
        println!(
            "{}: sigma2={sigma2:.6} calls={} mean rejection rounds={mean:.4}",
            target.label, args.calls
        );
        for (rounds, count) in &histogram {
            println!("  {rounds} {count}");
        }
        if let Some(dir) = &args.out {
            let mut csv = String::from("rounds,count\n");
            for (rounds, count) in &histogram {
                csv.push_str(&format!("{rounds},{count}\n"));
            }
            let name = format!("bench_{}.csv", slug(&target.label));
            std::fs::write(dir.join(name), csv)?;
        }
    }
    Ok(0)
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

const BUILTIN_GAUSSIAN: &str = r#"
[target]
kind = "gaussian"
dim = 1

[run]
epsilon = 0.1
seed = 0
"#;

const BUILTIN_MIXTURE: &str = r#"
[target]
kind = "mixture"
weights = [0.5, 0.5]
centers = [[-1.0], [1.0]]

[run]
epsilon = 0.1
seed = 0
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(dispatch(["locsamp", "frobnicate"]), 1);
        assert_eq!(dispatch(["locsamp"]), 1);
    }

    #[test]
    fn help_is_not_an_error() {
        assert_eq!(dispatch(["locsamp", "--help"]), 0);
    }

    #[test]
    fn mixture_spec_parsing() {
        assert_eq!(parse_mixture_spec("R=1").unwrap(), 1.0);
        assert_eq!(parse_mixture_spec(" R=2.5 ").unwrap(), 2.5);
        assert!(parse_mixture_spec("radius=1").is_err());
        assert!(parse_mixture_spec("R=abc").is_err());
    }

    #[test]
    fn bounds_demo_table_is_well_formed() {
        let bounds = demo_bounds().unwrap();
        assert_eq!(bounds.len(), 8);
        // exactly one demo entry is the divergent obstruction
        let infinite = bounds.iter().filter(|b| !b.is_finite()).count();
        assert_eq!(infinite, 1);
    }

    #[test]
    fn sample_writes_deterministic_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("c.toml");
        std::fs::write(
            &config_path,
            format!(
                "{BUILTIN_GAUSSIAN}\n[output]\ndir = {:?}\n",
                dir.path().join("out").display().to_string()
            ),
        )
        .unwrap();
        let args = [
            "locsamp",
            "sample",
            "--config",
            config_path.to_str().unwrap(),
            "--runs",
            "4",
            "--seed",
            "11",
        ];
        assert_eq!(dispatch(args), 0);
        let first = std::fs::read(dir.path().join("out/samples.csv")).unwrap();
        let first_report = std::fs::read(dir.path().join("out/report.json")).unwrap();
        assert_eq!(dispatch(args), 0);
        let second = std::fs::read(dir.path().join("out/samples.csv")).unwrap();
        let second_report = std::fs::read(dir.path().join("out/report.json")).unwrap();
        assert_eq!(first, second);
        assert_eq!(first_report, second_report);
        assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 4);
    }

    #[test]
    fn sample_rejects_bad_epsilon_via_flag() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("c.toml");
        std::fs::write(&config_path, BUILTIN_GAUSSIAN).unwrap();
        let code = dispatch([
            "locsamp",
            "sample",
            "--config",
            config_path.to_str().unwrap(),
            "--eps",
            "1.5",
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn budget_truncation_exits_with_budget_code() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("c.toml");
        std::fs::write(
            &config_path,
            format!(
                "{BUILTIN_GAUSSIAN}\n[output]\ndir = {:?}\n",
                dir.path().join("out").display().to_string()
            ),
        )
        .unwrap();
        let code = dispatch([
            "locsamp",
            "sample",
            "--config",
            config_path.to_str().unwrap(),
            "--max-queries",
            "15",
        ]);
        assert_eq!(code, 2);
        // outputs still exist, flagged
        let report = std::fs::read_to_string(dir.path().join("out/report.json")).unwrap();
        assert!(report.contains("\"budget_truncated_runs\": 1"), "{report}");
    }
}
