//! The coupled yearly loop.
//!
//! Row `t` of a [`TimeSeries`] is the state at the start of year
//! `start_year + t`. Advancing from row `t` to `t + 1`:
//!
//! 1. `R = temperature_response(T(t))`, shared by every agent;
//! 2. synchronous opinion update of all agents (skipped when opinions are
//!    frozen);
//! 3. deaths and births (likewise);
//! 4. `C(t+1) = C(t) + E(t) - delta C(t)` with `E(t) = 0.5 e0 (1 - mean(t))`;
//! 5. both temperature boxes step with `F(C(t+1))`.
//!
//! `emissions_model[t]` is therefore exactly the flux added to the carbon
//! stock between rows `t` and `t + 1`.

use std::io::Write;

use rayon::prelude::*;

use crate::climate::{radiative_forcing, step_carbon, step_temperature, ClimateState};
use crate::coupling::{emission_rate, temperature_response, ResponseParams};
use crate::error::{Error, Result};
use crate::metrics::bimodality_coefficient;
use crate::opinion::{init_population, step_opinions, vital_dynamics, Population};
use crate::params::{ScenarioConfig, DISPLAY_EMISSIONS_AT_START};
use crate::rng::{self, derive_run_seed};

/// Number of equal-width histogram bins on `[-1, 1]`.
pub const HISTOGRAM_BINS: usize = 40;

pub const TIMESERIES_HEADER: [&str; 7] = [
    "year",
    "mean_opinion",
    "emissions_model",
    "emissions_display",
    "carbon",
    "anomaly",
    "response",
];

pub const SNAPSHOT_HEADER: [&str; 4] = ["year", "bin_left", "bin_right", "fraction"];

/// Opinion histogram at one year.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub year: i32,
    /// Fraction of agents per bin; bin `b` covers
    /// `[-1 + b * 0.05, -1 + (b + 1) * 0.05)`, the last bin also holds `1`.
    pub fractions: Vec<f64>,
}

impl Snapshot {
    pub fn from_opinions(year: i32, opinions: &[f64]) -> Snapshot {
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for &o in opinions {
            let b = ((o + 1.0) / 2.0 * HISTOGRAM_BINS as f64).floor() as isize;
            counts[b.clamp(0, HISTOGRAM_BINS as isize - 1) as usize] += 1;
        }
        let n = opinions.len() as f64;
        Snapshot {
            year,
            fractions: counts.into_iter().map(|c| c as f64 / n).collect(),
        }
    }

    pub fn bin_edges(bin: usize) -> (f64, f64) {
        let w = 2.0 / HISTOGRAM_BINS as f64;
        (-1.0 + bin as f64 * w, -1.0 + (bin + 1) as f64 * w)
    }
}

/// Yearly record of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub years: Vec<i32>,
    pub mean_opinion: Vec<f64>,
    /// GtCO2/yr as used by the carbon update.
    pub emissions_model: Vec<f64>,
    /// `emissions_model * display_scale`.
    pub emissions_display: Vec<f64>,
    pub carbon: Vec<f64>,
    pub anomaly: Vec<f64>,
    pub response: Vec<f64>,
    /// Bimodality coefficient of the opinions each year; `None` when the
    /// opinions are all equal.
    pub bimodality: Vec<Option<f64>>,
    pub snapshots: Vec<Snapshot>,
    /// Opinions in the final year.
    pub final_opinions: Vec<f64>,
    pub display_scale: f64,
    pub seed: u64,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    /// Row index of a calendar year.
    pub fn index_of(&self, year: i32) -> Option<usize> {
        let first = *self.years.first()?;
        let i = usize::try_from(year - first).ok()?;
        (i < self.years.len()).then_some(i)
    }

    fn with_capacity(n: usize, seed: u64) -> TimeSeries {
        TimeSeries {
            years: Vec::with_capacity(n),
            mean_opinion: Vec::with_capacity(n),
            emissions_model: Vec::with_capacity(n),
            emissions_display: Vec::with_capacity(n),
            carbon: Vec::with_capacity(n),
            anomaly: Vec::with_capacity(n),
            response: Vec::with_capacity(n),
            bimodality: Vec::with_capacity(n),
            snapshots: Vec::new(),
            final_opinions: Vec::new(),
            display_scale: 1.0,
            seed,
        }
    }
}

fn display_scale(config: &ScenarioConfig, initial_emissions: f64) -> f64 {
    let p = &config.params;
    if let Some(s) = p.emission_display_scale {
        return s;
    }
    if initial_emissions > 0.0 {
        DISPLAY_EMISSIONS_AT_START / initial_emissions
    } else if p.e0 > 0.0 {
        // Zero initial emissions (everyone fully mitigative): scale as if the
        // mean opinion were neutral.
        DISPLAY_EMISSIONS_AT_START / emission_rate(0.0, p.e0)
    } else {
        1.0
    }
}

fn finite(value: f64, year: i32, quantity: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { year, quantity })
    }
}

/// Runs one coupled simulation with `config.seed` as the run seed.
pub fn run_simulation(config: &ScenarioConfig) -> Result<TimeSeries> {
    config.validate()?;
    let p = &config.params;
    let response_params = ResponseParams::from(p);
    let run_seed = config.seed;

    let mut pop: Population = init_population(config, &mut rng::init_rng(run_seed));
    let mut climate = ClimateState::initial(p)?;
    let mut out = TimeSeries::with_capacity(p.horizon_years + 1, run_seed);

    let record = |out: &mut TimeSeries, year: i32, pop: &Population, climate: &ClimateState| -> Result<f64> {
        let opinions = pop.opinions();
        let mean = finite(pop.mean_opinion(), year, "mean opinion")?;
        let anomaly = finite(climate.anomaly(), year, "temperature anomaly")?;
        finite(climate.carbon, year, "carbon stock")?;
        out.years.push(year);
        out.mean_opinion.push(mean);
        out.emissions_model.push(emission_rate(mean, p.e0));
        out.carbon.push(climate.carbon);
        out.anomaly.push(anomaly);
        out.response.push(temperature_response(anomaly, &response_params));
        out.bimodality.push(bimodality_coefficient(&opinions).ok());
        if p.snapshot_years.contains(&year) {
            out.snapshots.push(Snapshot::from_opinions(year, &opinions));
        }
        Ok(mean)
    };

    let mut mean = record(&mut out, p.start_year, &pop, &climate)?;
    for t in 0..p.horizon_years {
        let year = p.start_year + t as i32;
        let response = out.response[t];
        let seed = rng::year_seed(run_seed, t as u64);

        if !config.freeze_opinions {
            pop = step_opinions(&pop, response, p, seed)?;
            vital_dynamics(&mut pop, p, &mut rng::vital_rng(seed));
        }

        let carbon = step_carbon(climate.carbon, mean, p);
        let forcing = finite(radiative_forcing(carbon, p)?, year + 1, "radiative forcing")?;
        climate = step_temperature(&ClimateState { carbon, ..climate }, forcing, p);

        mean = record(&mut out, year + 1, &pop, &climate)?;
    }

    out.display_scale = display_scale(config, out.emissions_model[0]);
    out.emissions_display = out.emissions_model.iter().map(|e| e * out.display_scale).collect();
    out.final_opinions = pop.opinions();
    Ok(out)
}

/// Pointwise statistics of one quantity across replicates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    /// Population standard deviation (divides by the replicate count).
    pub std: Vec<f64>,
}

impl SeriesStats {
    fn from_columns<'a>(columns: impl Iterator<Item = &'a [f64]> + Clone) -> SeriesStats {
        let n = columns.clone().count() as f64;
        let len = columns.clone().map(|c| c.len()).min().unwrap_or(0);
        let mut stats = SeriesStats::default();
        for i in 0..len {
            let m = columns.clone().map(|c| c[i]).sum::<f64>() / n;
            let v = columns.clone().map(|c| (c[i] - m).powi(2)).sum::<f64>() / n;
            stats.mean.push(m);
            stats.std.push(v.sqrt());
        }
        stats
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateSummary {
    pub years: Vec<i32>,
    pub mean_opinion: SeriesStats,
    pub emissions_model: SeriesStats,
    pub emissions_display: SeriesStats,
    pub carbon: SeriesStats,
    pub anomaly: SeriesStats,
    pub response: SeriesStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateSet {
    pub runs: Vec<TimeSeries>,
    pub summary: ReplicateSummary,
}

/// Runs `n` replicates with seeds `derive_run_seed(config.seed, i)`.
pub fn run_replicates(config: &ScenarioConfig, n: usize) -> Result<ReplicateSet> {
    if n == 0 {
        return Err(Error::invalid("replicates", "must be at least 1"));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| derive_run_seed(config.seed, i)).collect();
    run_with_seeds(config, &seeds)
}

/// Runs one replicate per explicit run seed.
pub fn run_with_seeds(config: &ScenarioConfig, seeds: &[u64]) -> Result<ReplicateSet> {
    if seeds.is_empty() {
        return Err(Error::invalid("replicates", "must be at least 1"));
    }
    let runs = seeds
        .par_iter()
        .map(|&seed| run_simulation(&ScenarioConfig { seed, ..config.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let stats = |f: fn(&TimeSeries) -> &Vec<f64>| SeriesStats::from_columns(runs.iter().map(move |r| f(r).as_slice()));
    let summary = ReplicateSummary {
        years: runs[0].years.clone(),
        mean_opinion: stats(|r| &r.mean_opinion),
        emissions_model: stats(|r| &r.emissions_model),
        emissions_display: stats(|r| &r.emissions_display),
        carbon: stats(|r| &r.carbon),
        anomaly: stats(|r| &r.anomaly),
        response: stats(|r| &r.response),
    };
    Ok(ReplicateSet { runs, summary })
}

/// `year,mean_opinion,emissions_model,emissions_display,carbon,anomaly,response`
pub fn write_timeseries_csv<W: Write>(series: &TimeSeries, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TIMESERIES_HEADER)?;
    for i in 0..series.len() {
        out.write_record([
            series.years[i].to_string(),
            crate::fmt_num(series.mean_opinion[i]),
            crate::fmt_num(series.emissions_model[i]),
            crate::fmt_num(series.emissions_display[i]),
            crate::fmt_num(series.carbon[i]),
            crate::fmt_num(series.anomaly[i]),
            crate::fmt_num(series.response[i]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `year,bin_left,bin_right,fraction`, one row per snapshot bin.
pub fn write_snapshots_csv<W: Write>(series: &TimeSeries, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SNAPSHOT_HEADER)?;
    for snap in &series.snapshots {
        for (b, frac) in snap.fractions.iter().enumerate() {
            let (lo, hi) = Snapshot::bin_edges(b);
            out.write_record([
                snap.year.to_string(),
                crate::fmt_num(lo),
                crate::fmt_num(hi),
                crate::fmt_num(*frac),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Replicate mean and standard deviation per year, one `_mean`/`_std`
/// column pair per quantity of [`TIMESERIES_HEADER`].
pub fn write_replicate_summary_csv<W: Write>(summary: &ReplicateSummary, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["year".to_string()];
    for name in &TIMESERIES_HEADER[1..] {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    out.write_record(&header)?;
    let cols = [
        &summary.mean_opinion,
        &summary.emissions_model,
        &summary.emissions_display,
        &summary.carbon,
        &summary.anomaly,
        &summary.response,
    ];
    for (i, year) in summary.years.iter().enumerate() {
        let mut row = vec![year.to_string()];
        for c in cols {
            row.push(crate::fmt_num(c.mean[i]));
            row.push(crate::fmt_num(c.std[i]));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::InitialOpinions;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.params.n_agents = 120;
        c.params.k_neighbors = 20;
        c.params.horizon_years = 30;
        c
    }

    #[test]
    fn zero_horizon_is_initial_state() {
        let mut c = small();
        c.params.horizon_years = 0;
        let s = run_simulation(&c).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.years, vec![2022]);
        let init = ClimateState::initial(&c.params).unwrap();
        assert_eq!(s.carbon[0], init.carbon);
        assert_eq!(s.anomaly[0], init.anomaly());
        assert_eq!(s.snapshots.len(), 1);
    }

    #[test]
    fn lengths_and_display_scale() {
        let s = run_simulation(&small()).unwrap();
        assert_eq!(s.len(), 31);
        assert_eq!(s.bimodality.len(), 31);
        assert!((s.emissions_display[0] - 40.0).abs() < 1e-9);
        assert!((s.anomaly[0] - 1.2).abs() < 1e-12);
        let years: Vec<i32> = s.snapshots.iter().map(|x| x.year).collect();
        assert_eq!(years, vec![2022, 2026, 2027, 2040]);
        for snap in &s.snapshots {
            assert!((snap.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_series() {
        let a = run_simulation(&small()).unwrap();
        let b = run_simulation(&small()).unwrap();
        assert_eq!(a, b);
        let mut c = small();
        c.seed = 1;
        assert_ne!(a.mean_opinion, run_simulation(&c).unwrap().mean_opinion);
    }

    #[test]
    fn fully_mitigative_population_emits_nothing() {
        let mut c = small();
        c.initial_opinions = InitialOpinions::AllFixed(1.0);
        c.params.noise_sigma = 0.0;
        c.params.death_rate = 0.0;
        c.params.r_max = 2.0;
        c.params.m_cost = 0.0;
        let s = run_simulation(&c).unwrap();
        // Opinions stay at 1 only if the update keeps them clamped there.
        assert!(s.mean_opinion.iter().all(|&m| m <= 1.0));
        assert!(s.bimodality[0].is_none());
        assert!(s.display_scale.is_finite());
    }

    #[test]
    fn single_replicate_has_zero_spread() {
        let set = run_replicates(&small(), 1).unwrap();
        assert!(set.summary.mean_opinion.std.iter().all(|&v| v == 0.0));
        assert_eq!(set.summary.anomaly.mean, set.runs[0].anomaly);
    }

    #[test]
    fn repeated_seed_has_zero_spread() {
        let set = run_with_seeds(&small(), &[11, 11]).unwrap();
        assert!(set.summary.carbon.std.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_headers() {
        let s = run_simulation(&small()).unwrap();
        let mut buf = Vec::new();
        write_timeseries_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("year,mean_opinion,emissions_model,emissions_display,carbon,anomaly,response\n"));
        assert_eq!(text.lines().count(), 32);
        let mut buf = Vec::new();
        write_snapshots_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("year,bin_left,bin_right,fraction\n"));
        assert_eq!(text.lines().count(), 1 + 4 * HISTOGRAM_BINS);
    }

    #[test]
    fn histogram_edges() {
        let s = Snapshot::from_opinions(0, &[-1.0, 1.0, 0.0, 0.999]);
        assert_eq!(s.fractions[0], 0.25);
        assert_eq!(s.fractions[HISTOGRAM_BINS - 1], 0.5);
        assert_eq!(s.fractions[HISTOGRAM_BINS / 2], 0.25);
        assert_eq!(Snapshot::bin_edges(0), (-1.0, -0.95));
    }
}
