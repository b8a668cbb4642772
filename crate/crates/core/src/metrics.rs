//! Run summaries and the bimodality coefficient.

use std::io::Write;

use crate::engine::TimeSeries;
use crate::error::{Error, Result};

/// Sarle's bimodality coefficient
///
/// ```text
/// BC = (G1^2 + 1) / (G2 + 3 (n-1)^2 / ((n-2)(n-3)))
/// ```
///
/// with the bias-adjusted sample skewness and excess kurtosis
///
/// ```text
/// G1 = sqrt(n(n-1)) / (n-2) * m3 / m2^(3/2)
/// G2 = (n-1) / ((n-2)(n-3)) * ((n+1) m4 / m2^2 - 3(n-1))
/// ```
///
/// where `m_k` are central moments with divisor `n`. Values above 5/9 (the
/// uniform distribution) point to bimodality; 0.5 is the usual cut-off.
pub fn bimodality_coefficient(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::DegenerateSample);
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    if lo == hi || !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::DegenerateSample);
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 <= f64::EPSILON * f64::EPSILON * (hi - lo) * (hi - lo) {
        return Err(Error::DegenerateSample);
    }
    let g1 = (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * m3 / m2.powf(1.5);
    let denom = (nf - 2.0) * (nf - 3.0);
    let g2 = (nf - 1.0) / denom * ((nf + 1.0) * m4 / (m2 * m2) - 3.0 * (nf - 1.0));
    Ok((g1 * g1 + 1.0) / (g2 + 3.0 * (nf - 1.0).powi(2) / denom))
}

/// Year of maximum model emissions; the earliest year wins ties.
pub fn peak_emission_year(series: &TimeSeries) -> i32 {
    series.years[argmax_first(&series.emissions_model)]
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub mean_opinion_final: f64,
    pub peak_anomaly: f64,
    pub peak_emission_year: i32,
    /// `None` when the final opinions have zero variance.
    pub bc_final: Option<f64>,
    pub frac_strong_mitigative: f64,
    pub frac_strong_nonmitigative: f64,
}

/// Column order of [`write_summary_csv`].
pub const SUMMARY_HEADER: [&str; 6] = [
    "mean_opinion_final",
    "peak_anomaly",
    "peak_emission_year",
    "bc_final",
    "frac_strong_mitigative",
    "frac_strong_nonmitigative",
];

/// Summary of one run. Strong opinions are those beyond `±threshold`.
pub fn summarize_with_threshold(series: &TimeSeries, threshold: f64) -> RunSummary {
    let finals = &series.final_opinions;
    let n = finals.len().max(1) as f64;
    RunSummary {
        mean_opinion_final: *series.mean_opinion.last().expect("non-empty series"),
        peak_anomaly: series.anomaly.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        peak_emission_year: peak_emission_year(series),
        bc_final: bimodality_coefficient(finals).ok(),
        frac_strong_mitigative: finals.iter().filter(|&&o| o > threshold).count() as f64 / n,
        frac_strong_nonmitigative: finals.iter().filter(|&&o| o < -threshold).count() as f64 / n,
    }
}

/// [`summarize_with_threshold`] with the default ±2/3 cluster cut-off.
pub fn summarize(series: &TimeSeries) -> RunSummary {
    summarize_with_threshold(series, 2.0 / 3.0)
}

impl RunSummary {
    pub fn values(&self) -> [f64; 6] {
        [
            self.mean_opinion_final,
            self.peak_anomaly,
            self.peak_emission_year as f64,
            self.bc_final.unwrap_or(f64::NAN),
            self.frac_strong_mitigative,
            self.frac_strong_nonmitigative,
        ]
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let mut fields: Vec<String> = self.values().iter().map(|&v| crate::fmt_num(v)).collect();
        fields[2] = self.peak_emission_year.to_string();
        fields
    }
}

/// One header row, then one row per summary. Undefined BC is written `NaN`.
pub fn write_summary_csv<W: Write>(summaries: &[RunSummary], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        out.write_record(s.csv_fields())?;
    }
    out.flush()?;
    Ok(())
}

/// One row per run, led by `replicate` and `seed` columns, then
/// [`SUMMARY_HEADER`].
pub fn write_run_summaries_csv<W: Write>(runs: &[TimeSeries], threshold: f64, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["replicate", "seed"];
    header.extend(SUMMARY_HEADER);
    out.write_record(&header)?;
    for (i, run) in runs.iter().enumerate() {
        let mut row = vec![i.to_string(), run.seed.to_string()];
        row.extend(summarize_with_threshold(run, threshold).csv_fields());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
