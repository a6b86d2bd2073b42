use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use msmd::experiment::harness::{GroupSummary, RunReport};
use msmd::experiment::{
    bound_report, cmd_audit, cmd_deviation, cmd_run, cmd_sweep_k, write_csv_file, write_json_file,
    ExperimentConfig,
};
use msmd::Error;
use serde::Serialize;

/// Residual below which an audited step counts as a violation.
const AUDIT_TOLERANCE: f64 = -1e-7;

#[derive(Parser, Debug)]
#[command(
    name = "msmd",
    version,
    about = "Stochastic mirror descent experiments for multiclass margin classifiers"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for results.csv and report.json.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for replicates (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override run.base_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Compare empirical results against the bounds; exit 4 on violation.
    #[arg(long, global = true)]
    check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run all replicates of the configured experiment.
    Run,
    /// Repeat the run across class counts at fixed n and d.
    SweepK {
        /// Strictly increasing class counts, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        k_grid: Vec<usize>,
    },
    /// Print closed-form bounds without sampling.
    Bounds,
    /// Measure how often the excess exceeds the large-deviation threshold.
    Deviation {
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
    },
    /// Run with the per-step audit enabled and report the worst residual.
    Audit,
}

enum Outcome {
    Ok,
    CheckFailed(String),
    NumericalFailure(usize),
}

fn load_config(cli: &Cli) -> msmd::Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.run.base_seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.run.workers = w;
    }
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn print_summary(summary: &[GroupSummary]) {
    println!(
        "{:>6} {:>18} {:>4} {:>12} {:>10} {:>12} {:>12} {:>12}",
        "k", "geometry", "R", "mean_excess", "mc_se", "bound_eq2", "bound_rate", "audit_min"
    );
    for s in summary {
        println!(
            "{:>6} {:>18} {:>4} {:>12.6} {:>10.6} {:>12.6} {:>12.6} {:>12}",
            s.k,
            s.geometry.to_string(),
            s.replicates,
            s.mean_excess,
            s.pooled_std_error,
            s.bound_eq2,
            s.bound_rate,
            fmt_opt(s.audit_min_residual)
        );
    }
}

fn check_summary(summary: &[GroupSummary]) -> Option<String> {
    summary.iter().find_map(|s| {
        let limit = s.bound_rate + 3.0 * s.pooled_std_error;
        (s.mean_excess > limit).then(|| {
            format!(
                "k = {}: mean excess {:.6} exceeds bound {:.6} + 3 se",
                s.k, s.mean_excess, s.bound_rate
            )
        })
    })
}

fn write_outputs<T: Serialize>(
    out: &Path,
    rows: &[msmd::experiment::ResultRow],
    report: &T,
) -> msmd::Result<()> {
    write_csv_file(&out.join("results.csv"), rows)?;
    write_json_file(&out.join("report.json"), report)
}

fn finish_run(cli: &Cli, report: &RunReport, audit: bool) -> msmd::Result<Outcome> {
    write_outputs(&cli.out, &report.rows, report)?;
    print_summary(&report.summary);
    println!("U = {:.6}  G = {:.6}", report.bounds.u, report.bounds.g);
    println!("excess measured against: {:?}", report.comparator);
    for f in &report.failures {
        eprintln!(
            "replicate {} (seed {}) failed: {}",
            f.replicate, f.seed, f.message
        );
    }
    if !report.failures.is_empty() {
        return Ok(Outcome::NumericalFailure(report.failures.len()));
    }
    if audit {
        let worst = report
            .summary
            .iter()
            .filter_map(|s| s.audit_min_residual)
            .fold(f64::INFINITY, f64::min);
        println!("worst audit residual: {worst:.3e}");
        if cli.check && worst < AUDIT_TOLERANCE {
            return Ok(Outcome::CheckFailed(format!(
                "audit residual {worst:.3e} below {AUDIT_TOLERANCE:e}"
            )));
        }
    }
    if cli.check {
        if let Some(msg) = check_summary(&report.summary) {
            return Ok(Outcome::CheckFailed(msg));
        }
    }
    Ok(Outcome::Ok)
}

fn execute(cli: &Cli) -> msmd::Result<Outcome> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Run => finish_run(cli, &cmd_run(&cfg)?, false),
        Command::Audit => finish_run(cli, &cmd_audit(&cfg)?, true),
        Command::SweepK { k_grid } => {
            let sweep = cmd_sweep_k(&cfg, k_grid)?;
            write_outputs(&cli.out, &sweep.rows, &sweep)?;
            print_summary(&sweep.summary);
            println!("excess measured against: {:?}", sweep.comparators);
            match &sweep.fit {
                Some(f) => println!(
                    "log-log slope of mean excess vs k: {:.4} +/- {:.4}",
                    f.slope, f.slope_std_error
                ),
                None => println!("log-log slope unavailable (non-positive mean excess)"),
            }
            if !sweep.ok() {
                for f in &sweep.failures {
                    eprintln!(
                        "k = {} replicate {} failed: {}",
                        f.k, f.replicate, f.message
                    );
                }
                return Ok(Outcome::NumericalFailure(sweep.failures.len()));
            }
            if cli.check {
                if let Some(msg) = check_summary(&sweep.summary) {
                    return Ok(Outcome::CheckFailed(msg));
                }
            }
            Ok(Outcome::Ok)
        }
        Command::Bounds => {
            let report = bound_report(&cfg)?;
            write_json_file(&cli.out.join("report.json"), &report)?;
            println!("U            {:.6}", report.u);
            println!("G            {:.6}", report.g);
            println!("alpha        {:.6}", report.alpha);
            println!("eq2_bound    {:.6}", report.eq2_bound);
            println!("rate         {:.6}", report.constant_rate);
            println!("psi_range    {:.6}", report.psi_range);
            println!("B            {}", fmt_opt(report.b));
            println!("weighted     {}", fmt_opt(report.weighted_rate));
            println!("dev_thresh   {}", fmt_opt(report.deviation_threshold));
            println!("dev_prob     {}", fmt_opt(report.deviation_prob));
            Ok(Outcome::Ok)
        }
        Command::Deviation { theta, replicates } => {
            let tail = cmd_deviation(&cfg, *theta, *replicates)?;
            write_outputs(&cli.out, &tail.rows, &tail)?;
            let sd = (tail.prob_bound.min(1.0) * (1.0 - tail.prob_bound.min(1.0))
                / tail.replicates.max(1) as f64)
                .sqrt();
            let limit = tail.prob_bound + 3.0 * sd;
            println!("theta        {:.4}", tail.theta);
            println!("threshold    {:.6}", tail.threshold);
            println!("g_bar (est)  {:.6}", tail.g_bar_estimate);
            println!("exceedances  {}/{}", tail.exceedances, tail.replicates);
            println!("fraction     {:.4}", tail.fraction);
            println!("bound        {:.4} (+3 sd: {:.4})", tail.prob_bound, limit);
            if !tail.failures.is_empty() {
                return Ok(Outcome::NumericalFailure(tail.failures.len()));
            }
            if cli.check && tail.fraction > limit {
                return Ok(Outcome::CheckFailed(format!(
                    "exceedance fraction {:.4} above {:.4}",
                    tail.fraction, limit
                )));
            }
            Ok(Outcome::Ok)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) | Error::Construction(_) => 2,
        Error::Numerical { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli).with_context(|| format!("msmd {:?}", cli.command)) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(4)
        }
        Ok(Outcome::NumericalFailure(n)) => {
            eprintln!("{n} replicate(s) hit a numerical failure; outputs are partial");
            ExitCode::from(3)
        }
        Err(e) => {
            let code = e.downcast_ref::<Error>().map(exit_code).unwrap_or(1);
            eprintln!("error: {}", e.root_cause());
            ExitCode::from(code)
        }
    }
}
