mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use opclim_core::engine::{
    run_with_seeds, write_replicate_summary_csv, write_snapshots_csv, write_timeseries_csv, Snapshot,
};
use opclim_core::metrics::write_run_summaries_csv;
use opclim_core::params::{load_document, ConfigDocument};
use opclim_core::sweep::{write_calibration_csv, write_heatmap_csv, write_long_csv, CALIBRATED_PARAMETERS};
use opclim_core::{
    calibrate_peak_year, run_replicates, run_sweep, summarize, CalibrationSpec, Metric, ReplicateSet, SweepResult,
    SweepSpec,
};

use output::Output;
use plot::Series;

/// Coupled opinion-dynamics and climate simulator.
#[derive(Parser)]
#[command(name = "opclim", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario config (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Master seed, replacing the config's.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Replicate count, replacing the config's.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    replicates: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N", env = "OPCLIM_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    plot: bool,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    /// Parameter override, applied after the config; repeatable.
    #[arg(long = "set", global = true, value_name = "NAME=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, f64)>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario: timeseries.csv, snapshots.csv, summary.csv.
    Run,
    /// Sensitivity sweep from the config's [sweep] table.
    Sweep,
    /// Grid search of (m_cost, r_max, alpha) for a target peak-emission year.
    Calibrate,
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("{value:?} is not a number"))?;
    Ok((name.trim().to_string(), value))
}

fn load(common: &Common) -> Result<ConfigDocument> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => String::new(),
    };
    let mut doc = load_document(&text).with_context(|| match &common.config {
        Some(path) => format!("loading {}", path.display()),
        None => "loading defaults".to_string(),
    })?;
    if let Some(seed) = common.seed {
        doc.scenario.seed = seed;
    }
    for (name, value) in &common.overrides {
        doc.scenario = doc
            .scenario
            .with_override(name, *value)
            .with_context(|| format!("--set {name}={value}"))?;
    }
    Ok(doc)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = (|| {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.common.threads {
            pool = pool.num_threads(n as usize);
        }
        let pool = pool.build().context("starting worker threads")?;
        pool.install(|| match cli.command {
            Command::Run => cmd_run(&cli.common),
            Command::Sweep => cmd_sweep(&cli.common),
            Command::Calibrate => cmd_calibrate(&cli.common),
        })
    })();
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(common: &Common) -> Result<ExitCode> {
    let doc = load(common)?;
    let config = doc.scenario;
    let reps = common.replicates.map(|n| n as usize).or(doc.replicates).unwrap_or(1);

    let mut files = vec!["timeseries.csv", "snapshots.csv", "summary.csv", "config.toml"];
    if reps > 1 {
        files.push("timeseries_mean.csv");
    }
    if common.plot {
        files.extend(["opinion.svg", "temperature.svg", "emissions.svg", "snapshots.svg"]);
    }
    let out = Output::prepare(&common.out, common.force, &files)?;

    // A single run uses the master seed itself; replicates derive theirs.
    let set = if reps == 1 {
        run_with_seeds(&config, &[config.seed])?
    } else {
        run_replicates(&config, reps)?
    };
    let first = &set.runs[0];
    out.write("timeseries.csv", |w| write_timeseries_csv(first, w))?;
    out.write("snapshots.csv", |w| write_snapshots_csv(first, w))?;
    out.write("summary.csv", |w| {
        write_run_summaries_csv(&set.runs, config.params.strong_threshold, w)
    })?;
    out.write_text("config.toml", &config.to_toml())?;
    if reps > 1 {
        out.write("timeseries_mean.csv", |w| write_replicate_summary_csv(&set.summary, w))?;
    }
    if common.plot {
        plot_run(&out, &set)?;
    }

    let sums: Vec<_> = set.runs.iter().map(summarize).collect();
    let avg = |f: fn(&opclim_core::RunSummary) -> f64| sums.iter().map(f).sum::<f64>() / sums.len() as f64;
    println!("runs: {reps} (seed {})", config.seed);
    println!("mean opinion final: {:.4}", avg(|s| s.mean_opinion_final));
    println!("peak anomaly: {:.4} C", avg(|s| s.peak_anomaly));
    println!("peak emission year: {:.1}", avg(|s| s.peak_emission_year as f64));
    println!("outputs: {}", out.dir().display());
    Ok(ExitCode::SUCCESS)
}

fn plot_run(out: &Output, set: &ReplicateSet) -> Result<()> {
    let years: Vec<f64> = set.summary.years.iter().map(|&y| y as f64).collect();
    let line = |label: &str, values: &[f64]| Series {
        label: label.to_string(),
        points: years.iter().copied().zip(values.iter().copied()).collect(),
    };
    let replicate_lines = |field: fn(&opclim_core::TimeSeries) -> &Vec<f64>, mean: &[f64]| {
        let mut lines: Vec<Series> = Vec::new();
        if set.runs.len() > 1 {
            lines.push(line("replicate mean", mean));
        }
        lines.extend(
            set.runs
                .iter()
                .take(7)
                .enumerate()
                .map(|(i, r)| line(&format!("run {i}"), field(r))),
        );
        lines
    };
    let s = &set.summary;
    out.write_text(
        "opinion.svg",
        &plot::line_plot(
            "Mean opinion",
            "year",
            "mean opinion",
            &replicate_lines(|r| &r.mean_opinion, &s.mean_opinion.mean),
        ),
    )?;
    out.write_text(
        "temperature.svg",
        &plot::line_plot(
            "Temperature anomaly",
            "year",
            "anomaly (C)",
            &replicate_lines(|r| &r.anomaly, &s.anomaly.mean),
        ),
    )?;
    out.write_text(
        "emissions.svg",
        &plot::line_plot(
            "Emissions",
            "year",
            "GtCO2 / yr (display scale)",
            &replicate_lines(|r| &r.emissions_display, &s.emissions_display.mean),
        ),
    )?;
    let hist: Vec<Series> = set.runs[0]
        .snapshots
        .iter()
        .map(|snap| Series {
            label: snap.year.to_string(),
            points: snap
                .fractions
                .iter()
                .enumerate()
                .map(|(b, &f)| {
                    let (lo, hi) = Snapshot::bin_edges(b);
                    (0.5 * (lo + hi), f)
                })
                .collect(),
        })
        .collect();
    out.write_text(
        "snapshots.svg",
        &plot::line_plot("Opinion distribution", "opinion", "fraction of agents", &hist),
    )
}

fn heatmap_name(metric: Metric, ext: &str) -> String {
    format!("heatmap_{}.{ext}", metric.name())
}

fn cmd_sweep(common: &Common) -> Result<ExitCode> {
    let doc = load(common)?;
    let table = doc.sweep.ok_or_else(|| anyhow!("the config has no [sweep] table"))?;
    let mut spec = SweepSpec::from_table(table, doc.scenario, doc.replicates.unwrap_or(20))?;
    if let Some(n) = common.replicates {
        spec.replicates = n as usize;
    }

    let mut files = vec!["sweep_long.csv".to_string()];
    files.extend(spec.metrics.iter().map(|&m| heatmap_name(m, "csv")));
    if common.plot {
        files.extend(spec.metrics.iter().map(|&m| heatmap_name(m, "svg")));
    }
    let out = Output::prepare(&common.out, common.force, &files)?;

    let result = run_sweep(&spec)?;
    out.write("sweep_long.csv", |w| write_long_csv(&result, w))?;
    for &metric in &result.metrics {
        out.write(&heatmap_name(metric, "csv"), |w| write_heatmap_csv(&result, metric, w))?;
        if common.plot {
            out.write_text(&heatmap_name(metric, "svg"), &plot_sweep(&result, metric))?;
        }
    }

    let failed = result.cells.len() - result.succeeded();
    println!(
        "cells: {} ({} failed), replicates per cell: {}",
        result.cells.len(),
        failed,
        result.replicates
    );
    for cell in result.cells.iter().filter(|c| c.outcome.is_err()) {
        eprintln!("cell {:?} failed: {}", cell.coords, cell.outcome.as_ref().unwrap_err());
    }
    println!("outputs: {}", out.dir().display());
    if result.succeeded() == 0 {
        bail!("every sweep cell failed");
    }
    Ok(ExitCode::SUCCESS)
}

fn plot_sweep(result: &SweepResult, metric: Metric) -> String {
    let means = result.means(metric);
    match result.axes.as_slice() {
        [a] => plot::line_plot(
            &format!("{} vs {}", metric.name(), a.parameter),
            &a.parameter,
            metric.name(),
            &[Series {
                label: String::new(),
                points: a.values().into_iter().zip(means).collect(),
            }],
        ),
        [a, b] => plot::heatmap(
            metric.name(),
            &a.parameter,
            &a.values(),
            &b.parameter,
            &b.values(),
            &means,
        ),
        _ => unreachable!("validated axis count"),
    }
}

fn cmd_calibrate(common: &Common) -> Result<ExitCode> {
    let doc = load(common)?;
    let mut spec = match doc.calibration {
        Some(table) => CalibrationSpec::from_table(table, doc.scenario)?,
        None => CalibrationSpec::around_base(doc.scenario, 2040),
    };
    if let Some(n) = common.replicates {
        spec.replicates = n as usize;
    }
    spec.validate()?;

    let mut files = vec!["calibration_trace.csv", "best_params.toml"];
    if common.plot {
        files.push("calibration_trace.svg");
    }
    let out = Output::prepare(&common.out, common.force, &files)?;

    let result = calibrate_peak_year(&spec)?;
    out.write("calibration_trace.csv", |w| write_calibration_csv(&result, w))?;
    let mut best = spec.base.clone();
    for (name, value) in CALIBRATED_PARAMETERS.iter().zip(result.best) {
        best = best.with_override(name, value)?;
    }
    let note = format!(
        "# mean peak emission year {} over {} replicates (target {}, {} evaluations)\n",
        opclim_core::fmt_num(result.achieved_year),
        spec.replicates,
        spec.target_year,
        result.trace.len()
    );
    out.write_text("best_params.toml", &(note + &best.to_toml()))?;
    if common.plot {
        let points = |f: fn(&opclim_core::sweep::CalibrationPoint) -> f64| {
            result
                .trace
                .iter()
                .enumerate()
                .map(|(i, p)| (i as f64, f(p)))
                .collect::<Vec<_>>()
        };
        out.write_text(
            "calibration_trace.svg",
            &plot::line_plot(
                "Calibration trace",
                "evaluation",
                "mean peak emission year",
                &[
                    Series {
                        label: "evaluated".into(),
                        points: points(|p| p.mean_peak_year),
                    },
                    Series {
                        label: "target".into(),
                        points: points(|_| 0.0)
                            .into_iter()
                            .map(|(i, _)| (i, spec.target_year as f64))
                            .collect(),
                    },
                ],
            ),
        )?;
    }

    println!(
        "best m_cost={} r_max={} alpha={}",
        opclim_core::fmt_num(result.best[0]),
        opclim_core::fmt_num(result.best[1]),
        opclim_core::fmt_num(result.best[2])
    );
    println!(
        "achieved peak emission year: {:.2} (target {})",
        result.achieved_year, spec.target_year
    );
    println!("evaluations: {}", result.trace.len());
    println!("outputs: {}", out.dir().display());
    if !result.within_tolerance {
        eprintln!(
            "budget exhausted: best point misses the target by {:.2} years (tolerance {})",
            result.error, spec.tolerance
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
