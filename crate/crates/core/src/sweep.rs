//! Parameter sweeps and peak-emission-year calibration.
//!
//! Every cell of a sweep runs the same replicate seeds
//! (`derive_run_seed(base.seed, i)`), so neighbouring cells differ only by
//! their parameter values. Cells run concurrently and are merged by grid
//! index, which makes the result independent of scheduling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Deserialize;

use crate::engine::run_replicates;
use crate::error::{Error, Result};
use crate::metrics::{summarize_with_threshold, RunSummary, SUMMARY_HEADER};
use crate::params::ScenarioConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    MeanOpinionFinal,
    PeakAnomaly,
    PeakEmissionYear,
    BcFinal,
    FracStrongMitigative,
    FracStrongNonmitigative,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::MeanOpinionFinal,
        Metric::PeakAnomaly,
        Metric::PeakEmissionYear,
        Metric::BcFinal,
        Metric::FracStrongMitigative,
        Metric::FracStrongNonmitigative,
    ];

    pub fn name(self) -> &'static str {
        SUMMARY_HEADER[self as usize]
    }

    /// NaN when the metric is undefined for this run.
    pub fn of(self, s: &RunSummary) -> f64 {
        s.values()[self as usize]
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Metric> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("metrics", format!("unknown metric {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub parameter: String,
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Axis {
    pub fn linear(parameter: &str, min: f64, max: f64, n_points: usize) -> Axis {
        Axis {
            parameter: parameter.to_string(),
            min,
            max,
            n_points,
            spacing: Spacing::Linear,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let last = (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| {
                if i + 1 == self.n_points {
                    return self.max;
                }
                let f = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.min + f * (self.max - self.min),
                    Spacing::Log => self.min * (self.max / self.min).powf(f),
                }
            })
            .collect()
    }

    fn validate(&self, base: &ScenarioConfig) -> Result<()> {
        base.params.get(&self.parameter)?;
        if self.n_points < 2 {
            return Err(Error::invalid("n_points", "must be at least 2"));
        }
        if !self.min.is_finite() || !self.max.is_finite() || self.min >= self.max {
            return Err(Error::invalid(&self.parameter, "axis needs finite min < max"));
        }
        if self.spacing == Spacing::Log && self.min <= 0.0 {
            return Err(Error::invalid(&self.parameter, "log spacing needs min > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// One or two axes; the first varies slowest.
    pub axes: Vec<Axis>,
    pub replicates: usize,
    pub base: ScenarioConfig,
    pub metrics: Vec<Metric>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axes: Vec<Axis>,
    replicates: Option<usize>,
    metrics: Option<Vec<String>>,
}

impl SweepSpec {
    /// Reads a `[sweep]` config table.
    pub fn from_table(table: toml::Table, base: ScenarioConfig, default_replicates: usize) -> Result<SweepSpec> {
        let raw: RawSweep = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(format!("[sweep]: {e}")))?;
        let metrics = match raw.metrics {
            None => Metric::ALL.to_vec(),
            Some(names) => names.iter().map(|s| s.parse()).collect::<Result<_>>()?,
        };
        let spec = SweepSpec {
            axes: raw.axes,
            replicates: raw.replicates.unwrap_or(default_replicates),
            base,
            metrics,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.axes.len()) {
            return Err(Error::invalid("axes", "a sweep needs one or two axes"));
        }
        if self.axes.len() == 2 && self.axes[0].parameter == self.axes[1].parameter {
            return Err(Error::invalid("axes", "both axes vary the same parameter"));
        }
        for axis in &self.axes {
            axis.validate(&self.base)?;
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be at least 1"));
        }
        if self.metrics.is_empty() {
            return Err(Error::invalid("metrics", "at least one metric is required"));
        }
        Ok(())
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n_points).collect()
    }

    /// Grid indices in row-major order.
    fn cell_indices(&self) -> Vec<Vec<usize>> {
        match self.shape()[..] {
            [n] => (0..n).map(|i| vec![i]).collect(),
            [n, m] => (0..n).flat_map(|i| (0..m).map(move |j| vec![i, j])).collect(),
            _ => unreachable!("validated axis count"),
        }
    }
}

/// Replicate mean and standard deviation of each requested metric.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Replicates contributing to each metric (undefined values are skipped).
    pub count: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub index: Vec<usize>,
    pub coords: Vec<f64>,
    /// Statistics, or the diagnostic of a failed cell.
    pub outcome: std::result::Result<CellStats, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub axes: Vec<Axis>,
    pub metrics: Vec<Metric>,
    pub replicates: usize,
    /// Row-major over the axes.
    pub cells: Vec<Cell>,
}

impl SweepResult {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n_points).collect()
    }

    pub fn cell(&self, index: &[usize]) -> Option<&Cell> {
        self.cells.iter().find(|c| c.index == index)
    }

    /// Replicate mean of `metric` in every cell, row-major; NaN for failed
    /// cells.
    pub fn means(&self, metric: Metric) -> Vec<f64> {
        let Some(k) = self.metrics.iter().position(|&m| m == metric) else {
            return vec![f64::NAN; self.cells.len()];
        };
        self.cells
            .iter()
            .map(|c| c.outcome.as_ref().map_or(f64::NAN, |s| s.mean[k]))
            .collect()
    }

    pub fn succeeded(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_ok()).count()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64, usize) {
    let defined: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if defined.is_empty() {
        return (f64::NAN, f64::NAN, 0);
    }
    let n = defined.len() as f64;
    let m = defined.iter().sum::<f64>() / n;
    let v = defined.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt(), defined.len())
}

/// Applies axis values to the base config and runs the replicates.
fn evaluate_cell(spec: &SweepSpec, index: &[usize]) -> Cell {
    let coords: Vec<f64> = spec.axes.iter().zip(index).map(|(a, &i)| a.values()[i]).collect();
    let outcome = (|| -> Result<CellStats> {
        let mut config = spec.base.clone();
        for (axis, &v) in spec.axes.iter().zip(&coords) {
            config = config.with_override(&axis.parameter, v)?;
        }
        let summaries = replicate_summaries(&config, spec.replicates)?;
        let mut stats = CellStats {
            mean: vec![],
            std: vec![],
            count: vec![],
        };
        for &metric in &spec.metrics {
            let values: Vec<f64> = summaries.iter().map(|s| metric.of(s)).collect();
            let (m, sd, n) = mean_std(&values);
            stats.mean.push(m);
            stats.std.push(sd);
            stats.count.push(n);
        }
        Ok(stats)
    })()
    .map_err(|e| e.to_string());
    Cell {
        index: index.to_vec(),
        coords,
        outcome,
    }
}

/// Summaries of `n` replicates of `config`.
pub fn replicate_summaries(config: &ScenarioConfig, n: usize) -> Result<Vec<RunSummary>> {
    let set = run_replicates(config, n)?;
    Ok(set
        .runs
        .iter()
        .map(|r| summarize_with_threshold(r, config.params.strong_threshold))
        .collect())
}

/// Runs every grid cell. Cell failures are recorded, not propagated; an
/// invalid spec is rejected before anything runs.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cells = spec
        .cell_indices()
        .par_iter()
        .map(|idx| evaluate_cell(spec, idx))
        .collect();
    Ok(SweepResult {
        axes: spec.axes.clone(),
        metrics: spec.metrics.clone(),
        replicates: spec.replicates,
        cells,
    })
}

/// Runs cells in the given order, then restores grid order. Exists to check
/// that evaluation order cannot leak into the result.
pub fn run_sweep_in_order(spec: &SweepSpec, order: &[usize]) -> Result<SweepResult> {
    spec.validate()?;
    let indices = spec.cell_indices();
    let mut slots: Vec<Option<Cell>> = vec![None; indices.len()];
    for &k in order {
        slots[k] = Some(evaluate_cell(spec, &indices[k]));
    }
    let cells = slots
        .into_iter()
        .enumerate()
        .map(|(k, c)| c.unwrap_or_else(|| evaluate_cell(spec, &indices[k])))
        .collect();
    Ok(SweepResult {
        axes: spec.axes.clone(),
        metrics: spec.metrics.clone(),
        replicates: spec.replicates,
        cells,
    })
}

/// Univariate sweep over the opinion noise standard deviation.
pub fn univariate_noise_sweep(
    base: &ScenarioConfig,
    sigma_min: f64,
    sigma_max: f64,
    n_points: usize,
    replicates: usize,
) -> Result<SweepResult> {
    run_sweep(&SweepSpec {
        axes: vec![Axis::linear("noise_sigma", sigma_min, sigma_max, n_points)],
        replicates,
        base: base.clone(),
        metrics: Metric::ALL.to_vec(),
    })
}

/// Long format: `cell,<axis names>,metric,mean,std,n,error`, one row per
/// cell and metric. Failed cells get one row per metric with empty
/// statistics and the diagnostic in `error`.
pub fn write_long_csv<W: Write>(result: &SweepResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["cell".to_string()];
    header.extend(result.axes.iter().map(|a| a.parameter.clone()));
    header.extend(["metric", "mean", "std", "n", "error"].map(String::from));
    out.write_record(&header)?;
    for (k, cell) in result.cells.iter().enumerate() {
        for (m, metric) in result.metrics.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(cell.coords.iter().map(|&c| crate::fmt_num(c)));
            row.push(metric.name().to_string());
            match &cell.outcome {
                Ok(s) => row.extend([
                    crate::fmt_num(s.mean[m]),
                    crate::fmt_num(s.std[m]),
                    s.count[m].to_string(),
                    String::new(),
                ]),
                Err(e) => row.extend([String::new(), String::new(), "0".into(), e.clone()]),
            }
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Rectangular grid of replicate means for one metric. Two axes: first row
/// is `<axis0>\<axis1>` followed by the second axis values, then one row per
/// first-axis value. One axis: columns `<axis0>,<metric>`.
pub fn write_heatmap_csv<W: Write>(result: &SweepResult, metric: Metric, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let means = result.means(metric);
    match result.axes.as_slice() {
        [a] => {
            out.write_record([a.parameter.as_str(), metric.name()])?;
            for (v, m) in a.values().iter().zip(&means) {
                out.write_record([crate::fmt_num(*v), crate::fmt_num(*m)])?;
            }
        }
        [a, b] => {
            let mut header = vec![format!("{}\\{}", a.parameter, b.parameter)];
            header.extend(b.values().iter().map(|&v| crate::fmt_num(v)));
            out.write_record(&header)?;
            for (i, v) in a.values().iter().enumerate() {
                let mut row = vec![crate::fmt_num(*v)];
                row.extend(
                    means[i * b.n_points..(i + 1) * b.n_points]
                        .iter()
                        .map(|&m| crate::fmt_num(m)),
                );
                out.write_record(&row)?;
            }
        }
        _ => return Err(Error::invalid("axes", "a sweep needs one or two axes")),
    }
    out.flush()?;
    Ok(())
}

/// Search box and settings for [`calibrate_peak_year`].
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSpec {
    pub target_year: i32,
    pub base: ScenarioConfig,
    /// `(min, max)` for `m_cost`, `r_max` and `alpha`, in that order.
    pub bounds: [(f64, f64); 3],
    /// Maximum number of parameter triples evaluated.
    pub budget: usize,
    pub replicates: usize,
    /// Grid points per parameter in each refinement round.
    pub points_per_axis: usize,
    /// Acceptable distance from the target, in years.
    pub tolerance: f64,
}

pub const CALIBRATED_PARAMETERS: [&str; 3] = ["m_cost", "r_max", "alpha"];

impl CalibrationSpec {
    /// Box centred on the base config's triple, spanning `[0, 2v]` for each
    /// value `v` (or `[v - 1, v + 1]` where `v` is not positive).
    pub fn around_base(base: ScenarioConfig, target_year: i32) -> CalibrationSpec {
        let p = &base.params;
        let span = |v: f64| if v > 0.0 { (0.0, 2.0 * v) } else { (v - 1.0, v + 1.0) };
        let bounds = [span(p.m_cost), span(p.r_max), span(p.alpha)];
        CalibrationSpec {
            target_year,
            base,
            bounds,
            budget: 100,
            replicates: 10,
            points_per_axis: 3,
            tolerance: 5.0,
        }
    }

    /// Reads a `[calibration]` table; omitted keys fall back to
    /// [`Self::around_base`] with a 2040 target.
    pub fn from_table(table: toml::Table, base: ScenarioConfig) -> Result<CalibrationSpec> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            target_year: Option<i32>,
            m_cost: Option<(f64, f64)>,
            r_max: Option<(f64, f64)>,
            alpha: Option<(f64, f64)>,
            budget: Option<usize>,
            replicates: Option<usize>,
            points_per_axis: Option<usize>,
            tolerance: Option<f64>,
        }
        let raw: Raw = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(format!("[calibration]: {e}")))?;
        let mut spec = CalibrationSpec::around_base(base, raw.target_year.unwrap_or(2040));
        for (slot, v) in spec.bounds.iter_mut().zip([raw.m_cost, raw.r_max, raw.alpha]) {
            if let Some(b) = v {
                *slot = b;
            }
        }
        if let Some(b) = raw.budget {
            spec.budget = b;
        }
        if let Some(r) = raw.replicates {
            spec.replicates = r;
        }
        if let Some(g) = raw.points_per_axis {
            spec.points_per_axis = g;
        }
        if let Some(t) = raw.tolerance {
            spec.tolerance = t;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.base.params;
        if self.target_year < p.start_year || self.target_year > p.end_year() {
            return Err(Error::invalid(
                "target_year",
                format!("must lie within {}..={}", p.start_year, p.end_year()),
            ));
        }
        for (name, (lo, hi)) in CALIBRATED_PARAMETERS.iter().zip(self.bounds) {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::invalid(*name, "bounds need finite min <= max"));
            }
        }
        if self.budget == 0 {
            return Err(Error::invalid("budget", "must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be at least 1"));
        }
        if self.points_per_axis < 2 {
            return Err(Error::invalid("points_per_axis", "must be at least 2"));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::invalid("tolerance", "must be non-negative"));
        }
        Ok(())
    }
}

/// One evaluated parameter triple.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationPoint {
    pub round: usize,
    pub params: [f64; 3],
    /// Replicate mean of the per-run peak emission year; NaN if the runs
    /// failed.
    pub mean_peak_year: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult {
    pub best: [f64; 3],
    pub achieved_year: f64,
    pub error: f64,
    /// False when the budget ran out without getting within tolerance.
    pub within_tolerance: bool,
    pub trace: Vec<CalibrationPoint>,
}

/// Mean peak emission year over replicates for one triple.
pub fn mean_peak_year(base: &ScenarioConfig, triple: [f64; 3], replicates: usize) -> Result<f64> {
    let mut config = base.clone();
    for (name, v) in CALIBRATED_PARAMETERS.iter().zip(triple) {
        config = config.with_override(name, v)?;
    }
    let summaries = replicate_summaries(&config, replicates)?;
    Ok(summaries.iter().map(|s| s.peak_emission_year as f64).sum::<f64>() / summaries.len() as f64)
}

fn axis_points((lo, hi): (f64, f64), g: usize) -> Vec<f64> {
    (0..g)
        .map(|i| {
            if i + 1 == g {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (g - 1) as f64
            }
        })
        .collect()
}

fn grid_points(axes: &[Vec<f64>; 3]) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(axes.iter().map(Vec::len).product());
    for &x in &axes[0] {
        for &y in &axes[1] {
            for &z in &axes[2] {
                out.push([x, y, z]);
            }
        }
    }
    out
}

/// Grid cell whose corner years straddle the target, preferring the cell
/// with the corner closest to it. Returns the cell's bounds.
fn bracketing_cell(axes: &[Vec<f64>; 3], years: &[f64], target: f64) -> Option<[(f64, f64); 3]> {
    let g = axes[0].len();
    let at = |i: usize, j: usize, k: usize| years[(i * g + j) * g + k];
    let mut best: Option<(f64, [usize; 3])> = None;
    for i in 0..g - 1 {
        for j in 0..g - 1 {
            for k in 0..g - 1 {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let mut closest = f64::INFINITY;
                let mut failed = false;
                for c in 0..8 {
                    let y = at(i + (c & 1), j + ((c >> 1) & 1), k + (c >> 2));
                    failed |= y.is_nan();
                    lo = lo.min(y);
                    hi = hi.max(y);
                    closest = closest.min((y - target).abs());
                }
                if !failed && lo <= target && target <= hi && best.is_none_or(|(e, _)| closest < e) {
                    best = Some((closest, [i, j, k]));
                }
            }
        }
    }
    best.map(|(_, idx)| std::array::from_fn(|d| (axes[d][idx[d]], axes[d][idx[d] + 1])))
}

/// Coarse-to-fine grid search for the `(m_cost, r_max, alpha)` triple whose
/// replicate-mean peak emission year is closest to the target.
///
/// The box centre is evaluated first. Each round evaluates a
/// `points_per_axis^3` grid over the current box (in parallel, merged in grid
/// order, reusing points already evaluated). The next box is the grid cell
/// whose corners bracket the target year; when no cell does, it is the cell
/// around the best point so far, one grid spacing either side. The search
/// stops when the budget is spent or the best error drops below half a year.
/// Ties keep the earlier point.
pub fn calibrate_peak_year(spec: &CalibrationSpec) -> Result<CalibrationResult> {
    spec.validate()?;
    let target = spec.target_year as f64;
    let g = spec.points_per_axis;
    let centre = spec.bounds.map(|(lo, hi)| 0.5 * (lo + hi));
    let evaluate = |round: usize, triple: [f64; 3]| -> CalibrationPoint {
        let year = mean_peak_year(&spec.base, triple, spec.replicates).unwrap_or(f64::NAN);
        let error = if year.is_nan() {
            f64::INFINITY
        } else {
            (year - target).abs()
        };
        CalibrationPoint {
            round,
            params: triple,
            mean_peak_year: year,
            error,
        }
    };

    let mut trace = vec![evaluate(0, centre)];
    let mut best = 0;
    let mut bounds = spec.bounds;
    let mut round = 1;
    while trace.len() < spec.budget && trace[best].error >= 0.5 {
        let axes = bounds.map(|b| axis_points(b, g));
        let grid = grid_points(&axes);
        let mut fresh: Vec<[f64; 3]> = grid
            .iter()
            .copied()
            .filter(|p| !trace.iter().any(|t| t.params == *p))
            .collect();
        if fresh.is_empty() {
            break;
        }
        let complete = fresh.len() <= spec.budget - trace.len();
        fresh.truncate(spec.budget - trace.len());
        let evaluated: Vec<CalibrationPoint> = fresh.par_iter().map(|&p| evaluate(round, p)).collect();
        for point in evaluated {
            trace.push(point);
            if trace.last().unwrap().error < trace[best].error {
                best = trace.len() - 1;
            }
        }
        if !complete {
            break;
        }
        let years: Vec<f64> = grid
            .iter()
            .map(|p| {
                trace
                    .iter()
                    .find(|t| t.params == *p)
                    .map_or(f64::NAN, |t| t.mean_peak_year)
            })
            .collect();
        bounds = bracketing_cell(&axes, &years, target).unwrap_or_else(|| {
            std::array::from_fn(|k| {
                let step = (bounds[k].1 - bounds[k].0) / (g - 1) as f64;
                let c = trace[best].params[k];
                let (lo, hi) = spec.bounds[k];
                ((c - step).max(lo), (c + step).min(hi))
            })
        });
        round += 1;
    }

    let b = &trace[best];
    Ok(CalibrationResult {
        best: b.params,
        achieved_year: b.mean_peak_year,
        error: b.error,
        within_tolerance: b.error <= spec.tolerance,
        trace,
    })
}

/// `round,m_cost,r_max,alpha,mean_peak_year,error`
pub fn write_calibration_csv<W: Write>(result: &CalibrationResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["round", "m_cost", "r_max", "alpha", "mean_peak_year", "error"])?;
    for p in &result.trace {
        out.write_record([
            p.round.to_string(),
            crate::fmt_num(p.params[0]),
            crate::fmt_num(p.params[1]),
            crate::fmt_num(p.params[2]),
            crate::fmt_num(p.mean_peak_year),
            crate::fmt_num(p.error),
        ])?;
    }
    out.flush()?;
    Ok(())
}
