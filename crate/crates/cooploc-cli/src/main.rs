//! Command-line front end for the cooploc toolkit: run scenarios, fit
//! channel models from measured data, and compare formations.
//!
//! Exit status is 0 on success, 2 for usage, config, or data errors, and 3
//! when every Monte Carlo trial diverged. Output files are written to a
//! temporary sibling and renamed into place, so a failed command never
//! leaves a partial file behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Parser, Subcommand};
use cooploc::channel::{fit_log_model, RssSample};
use cooploc::config::{load_scenario, RunDefaults};
use cooploc::sim::{
    builtin_scenario, run_monte_carlo, ErrorReport, SimError, TraceRow, BUILTIN_SCENARIOS,
    DEFAULT_SEED, DEFAULT_TRIALS,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "cooploc",
    version,
    about = "Cooperative RSS positioning: simulate, fit, compare"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario's Monte Carlo batch and write summary.json
    Run(RunArgs),
    /// Fit a log-distance channel model to a distance/RSS CSV
    Fit(FitArgs),
    /// Run two builtin scenarios with matched seeds and compare them
    Compare(CompareArgs),
    /// List the builtin scenario ids
    Scenarios,
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("source").required(true).args(["builtin", "config"])))]
struct RunArgs {
    /// Builtin scenario id (see `cooploc scenarios`)
    #[arg(long)]
    builtin: Option<String>,

    /// TOML scenario file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Monte Carlo trial count
    #[arg(long)]
    trials: Option<usize>,

    /// Base seed; trial k runs with seed + k
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Also write trace_trial0.csv with the first trial's track
    #[arg(long)]
    trace: bool,
}

#[derive(clap::Args)]
struct FitArgs {
    /// CSV of samples with header `distance_m,rss_dbm`
    csv: PathBuf,

    /// Where to write the fit JSON
    #[arg(long, default_value = "fit.json")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct CompareArgs {
    /// First builtin scenario id
    first: String,

    /// Second builtin scenario id
    second: String,

    /// Monte Carlo trial count for both runs
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,

    /// Base seed, shared by both runs
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let diverged = err
                .downcast_ref::<SimError>()
                .is_some_and(|e| matches!(e, SimError::AllTrialsDiverged(_)));
            ExitCode::from(if diverged { 3 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Scenarios => cmd_scenarios(),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (scenario, file_defaults) = match (&args.builtin, &args.config) {
        (Some(id), None) => (
            builtin_scenario(id)?,
            RunDefaults { trials: None, base_seed: None },
        ),
        (None, Some(path)) => {
            load_scenario(path).with_context(|| format!("loading {}", path.display()))?
        }
        _ => unreachable!("clap enforces exactly one scenario source"),
    };
    let trials = args.trials.or(file_defaults.trials).unwrap_or(DEFAULT_TRIALS);
    let seed = args.seed.or(file_defaults.base_seed).unwrap_or(DEFAULT_SEED);

    let (report, trace) = run_monte_carlo(&scenario, trials, seed, args.trace)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_json(&args.out.join("summary.json"), &report)?;
    if args.trace {
        let rows = trace.as_deref().unwrap_or(&[]);
        write_trace(&args.out.join("trace_trial0.csv"), rows, report.dimension)?;
    }

    println!(
        "{}: grand mean error {:.4} \u{b1} {:.4} m over {} trials ({} steps each)",
        report.scenario,
        report.grand_mean_m,
        report.std_m,
        report.completed_trials,
        report.steps_per_trial
    );
    if !report.diverged.is_empty() {
        println!("  {} of {} trials diverged", report.diverged.len(), report.trials);
    }
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&args.csv)
        .with_context(|| format!("opening {}", args.csv.display()))?;

    let headers = reader
        .headers()
        .with_context(|| format!("reading header of {}", args.csv.display()))?;
    if headers.iter().collect::<Vec<_>>() != ["distance_m", "rss_dbm"] {
        bail!(
            "{}: expected header `distance_m,rss_dbm`, found `{}`",
            args.csv.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        );
    }

    let mut samples: Vec<RssSample> = Vec::new();
    for row in reader.deserialize() {
        // csv's own error text carries the record and line number.
        samples.push(row.with_context(|| format!("in {}", args.csv.display()))?);
    }

    let fit = fit_log_model(&samples)?;
    write_json(&args.out, &fit)?;
    println!(
        "a = {:.4} dBm, n = {:.4}, sigma = {:.4} dB ({} samples)",
        fit.a, fit.n, fit.sigma, fit.n_samples
    );
    Ok(())
}

/// Matched-seed comparison of two scenarios.
#[derive(Serialize)]
struct Comparison {
    first: ErrorReport,
    second: ErrorReport,
    ratio_second_over_first: f64,
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let one = builtin_scenario(&args.first)?;
    let two = builtin_scenario(&args.second)?;
    if one.dimension() != two.dimension() {
        bail!(
            "cannot compare {} ({}D) with {} ({}D)",
            args.first,
            one.dimension(),
            args.second,
            two.dimension()
        );
    }

    let (first, _) = run_monte_carlo(&one, args.trials, args.seed, false)?;
    let (second, _) = run_monte_carlo(&two, args.trials, args.seed, false)?;
    let ratio = second.grand_mean_m / first.grand_mean_m;

    println!(
        "{:<16} {:>14} {:>10} {:>8}",
        "scenario", "grand_mean_m", "std_m", "ratio"
    );
    println!(
        "{:<16} {:>14.5} {:>10.5} {:>8.3}",
        first.scenario, first.grand_mean_m, first.std_m, 1.0
    );
    println!(
        "{:<16} {:>14.5} {:>10.5} {:>8.3}",
        second.scenario, second.grand_mean_m, second.std_m, ratio
    );

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let comparison = Comparison { first, second, ratio_second_over_first: ratio };
    write_json(&args.out.join("comparison.json"), &comparison)
}

fn cmd_scenarios() -> Result<()> {
    for id in BUILTIN_SCENARIOS {
        let scenario = builtin_scenario(id).expect("builtin ids resolve");
        println!(
            "{:<14} {}D, {} mobile, {} references",
            id,
            scenario.dimension(),
            scenario.node_count(),
            scenario.references.len()
        );
    }
    Ok(())
}

// ─── file output ───

/// Writes through a temporary sibling so failures cannot leave a partial
/// file at `path`.
fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path
        .file_name()
        .with_context(|| format!("{} has no file name", path.display()))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing json")?;
    text.push('\n');
    write_atomically(path, text.as_bytes())
}

fn write_trace(path: &Path, rows: &[TraceRow], dimension: usize) -> Result<()> {
    let with_buddy = rows.first().is_some_and(|r| r.buddy_err_m.is_some());
    let mut writer = csv::Writer::from_writer(Vec::new());

    let axes = ["x", "y", "z"];
    let mut header = vec!["t".to_string()];
    header.extend(axes.iter().take(dimension).map(|a| format!("true_{a}")));
    header.extend(axes.iter().take(dimension).map(|a| format!("est_{a}")));
    header.push("err_m".to_string());
    header.push("p_trace".to_string());
    if with_buddy {
        header.push("buddy1_err_m".to_string());
    }
    writer.write_record(&header)?;

    for row in rows {
        let mut record = vec![row.t.to_string()];
        record.extend(row.truth.iter().map(f64::to_string));
        record.extend(row.estimate.iter().map(f64::to_string));
        record.push(row.err_m.to_string());
        record.push(row.p_trace.to_string());
        if with_buddy {
            record.push(row.buddy_err_m.expect("buddy column is uniform").to_string());
        }
        writer.write_record(&record)?;
    }

    let bytes = writer.into_inner().context("flushing csv")?;
    write_atomically(path, &bytes)
}
