//! Model constants, scenario configuration and the config file format.
//!
//! The config file is flat TOML. Every model constant has a key named after
//! its symbol in snake_case (`r_max`, `m_cost`, `q1`, ...). Omitted keys take
//! the baseline values below. Optional `[sweep]` and `[calibration]` tables
//! are kept aside for the [`crate::sweep`] module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reported emissions at the start year, in GtCO2/yr, used to derive the
/// default display scale.
pub const DISPLAY_EMISSIONS_AT_START: f64 = 40.0;

/// How agent susceptibilities are assigned at birth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaMode {
    /// Independent draws from the open unit interval.
    UniformRandom,
    /// Every agent gets the same value. `Fixed(0.0)` is the stubborn scenario.
    Fixed(f64),
}

/// Initial opinion distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialOpinions {
    /// Normal draws rejected until they land in `[-1, 1]`.
    TruncatedNormal {
        mean: f64,
        std: f64,
    },
    AllFixed(f64),
    Explicit(Vec<f64>),
}

impl Default for InitialOpinions {
    fn default() -> Self {
        InitialOpinions::TruncatedNormal {
            mean: 0.0,
            std: 1.0 / 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Population size.
    pub n_agents: usize,
    /// Peers sampled by each agent every year.
    pub k_neighbors: usize,
    pub lambda_mode: LambdaMode,
    /// Width of the similarity kernel `exp(-|d| / A)`.
    pub a_influence: f64,
    /// Time-scale factor on the deterministic part of the update.
    pub psi: f64,
    /// Standard deviation of the per-agent yearly opinion noise.
    pub noise_sigma: f64,
    /// Per-agent yearly death probability.
    pub death_rate: f64,
    pub m_cost: f64,
    pub r_max: f64,
    pub alpha: f64,
    /// Reference anomaly of the response sigmoid, degC.
    pub t_ref: f64,
    /// Pre-industrial carbon stock, GtCO2.
    pub c0: f64,
    /// Forcing for a doubling of carbon, W/m^2.
    pub f2x: f64,
    /// Deep-ocean box response, K W^-1 m^2.
    pub q1: f64,
    /// Upper-ocean box response, K W^-1 m^2.
    pub q2: f64,
    /// Deep-ocean box time scale, years.
    pub d1: f64,
    /// Upper-ocean box time scale, years.
    pub d2: f64,
    /// Baseline emissions, GtCO2/yr.
    pub e0: f64,
    /// Carbon dissipation rate, 1/yr.
    pub delta: f64,
    pub start_year: i32,
    /// Number of yearly steps; a run records `horizon_years + 1` years.
    pub horizon_years: usize,
    /// Multiplier applied to reported emissions only. `None` picks the value
    /// that makes start-year reported emissions equal 40 GtCO2/yr.
    pub emission_display_scale: Option<f64>,
    /// Carbon stock above pre-industrial at the start year. `None` puts the
    /// climate in equilibrium at `t_ref`.
    pub initial_carbon: Option<f64>,
    /// Years at which opinion histograms are recorded.
    pub snapshot_years: Vec<i32>,
    /// `|o|` above which an opinion counts as strong.
    pub strong_threshold: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            n_agents: 1000,
            k_neighbors: 100,
            lambda_mode: LambdaMode::UniformRandom,
            a_influence: 0.35,
            psi: 0.7,
            noise_sigma: 0.03,
            death_rate: 0.014,
            m_cost: 0.778,
            r_max: 1.37,
            alpha: 5.7,
            t_ref: 1.2,
            c0: 38.9,
            f2x: 4.5,
            q1: 0.33,
            q2: 0.41,
            d1: 239.0,
            d2: 4.1,
            e0: 4.8339,
            delta: 0.06,
            start_year: 2022,
            horizon_years: 128,
            emission_display_scale: None,
            initial_carbon: None,
            snapshot_years: vec![2022, 2026, 2027, 2040, 2100, 2150],
            strong_threshold: 2.0 / 3.0,
        }
    }
}

/// Names accepted by [`ModelParams::set`] and [`ModelParams::get`].
pub const PARAMETER_NAMES: &[&str] = &[
    "n_agents",
    "k_neighbors",
    "lambda",
    "a_influence",
    "psi",
    "noise_sigma",
    "death_rate",
    "m_cost",
    "r_max",
    "alpha",
    "t_ref",
    "c0",
    "f2x",
    "q1",
    "q2",
    "d1",
    "d2",
    "e0",
    "delta",
    "start_year",
    "horizon_years",
    "emission_display_scale",
    "initial_carbon",
    "strong_threshold",
];

fn as_count(name: &str, value: f64) -> Result<usize> {
    if value.is_finite() && value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(Error::invalid(
            name,
            format!("expected a non-negative integer, got {value}"),
        ))
    }
}

impl ModelParams {
    /// Sets a scalar parameter by name. `lambda` switches to a fixed
    /// susceptibility. The result is not validated; call [`Self::validate`].
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "n_agents" => self.n_agents = as_count(name, value)?,
            "k_neighbors" => self.k_neighbors = as_count(name, value)?,
            "lambda" => self.lambda_mode = LambdaMode::Fixed(value),
            "a_influence" => self.a_influence = value,
            "psi" => self.psi = value,
            "noise_sigma" => self.noise_sigma = value,
            "death_rate" => self.death_rate = value,
            "m_cost" => self.m_cost = value,
            "r_max" => self.r_max = value,
            "alpha" => self.alpha = value,
            "t_ref" => self.t_ref = value,
            "c0" => self.c0 = value,
            "f2x" => self.f2x = value,
            "q1" => self.q1 = value,
            "q2" => self.q2 = value,
            "d1" => self.d1 = value,
            "d2" => self.d2 = value,
            "e0" => self.e0 = value,
            "delta" => self.delta = value,
            "start_year" => {
                if value.fract() != 0.0 || value.abs() > 1e6 {
                    return Err(Error::invalid(name, format!("expected a year, got {value}")));
                }
                self.start_year = value as i32
            }
            "horizon_years" => self.horizon_years = as_count(name, value)?,
            "emission_display_scale" => self.emission_display_scale = Some(value),
            "initial_carbon" => self.initial_carbon = Some(value),
            "strong_threshold" => self.strong_threshold = value,
            _ => return Err(Error::UnknownParameter(name.to_string())),
        }
        Ok(())
    }

    /// Current value of a scalar parameter. Unset optional values read as NaN;
    /// `lambda` reads as NaN under uniform assignment.
    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "n_agents" => self.n_agents as f64,
            "k_neighbors" => self.k_neighbors as f64,
            "lambda" => match self.lambda_mode {
                LambdaMode::Fixed(v) => v,
                LambdaMode::UniformRandom => f64::NAN,
            },
            "a_influence" => self.a_influence,
            "psi" => self.psi,
            "noise_sigma" => self.noise_sigma,
            "death_rate" => self.death_rate,
            "m_cost" => self.m_cost,
            "r_max" => self.r_max,
            "alpha" => self.alpha,
            "t_ref" => self.t_ref,
            "c0" => self.c0,
            "f2x" => self.f2x,
            "q1" => self.q1,
            "q2" => self.q2,
            "d1" => self.d1,
            "d2" => self.d2,
            "e0" => self.e0,
            "delta" => self.delta,
            "start_year" => self.start_year as f64,
            "horizon_years" => self.horizon_years as f64,
            "emission_display_scale" => self.emission_display_scale.unwrap_or(f64::NAN),
            "initial_carbon" => self.initial_carbon.unwrap_or(f64::NAN),
            "strong_threshold" => self.strong_threshold,
            _ => return Err(Error::UnknownParameter(name.to_string())),
        })
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.horizon_years as i32
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, field: &str, reason: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(field, reason))
            }
        }
        check(self.k_neighbors >= 1, "k_neighbors", "must be at least 1")?;
        check(self.n_agents > self.k_neighbors, "n_agents", "must exceed k_neighbors")?;
        if let LambdaMode::Fixed(v) = self.lambda_mode {
            check((0.0..1.0).contains(&v), "lambda", "must lie in [0, 1)")?;
        }
        check(
            self.a_influence > 0.0 && self.a_influence.is_finite(),
            "a_influence",
            "must be positive",
        )?;
        check(self.psi > 0.0 && self.psi <= 1.0, "psi", "must lie in (0, 1]")?;
        check(
            self.noise_sigma >= 0.0 && self.noise_sigma.is_finite(),
            "noise_sigma",
            "must be non-negative",
        )?;
        check(
            (0.0..1.0).contains(&self.death_rate),
            "death_rate",
            "must lie in [0, 1)",
        )?;
        check(
            self.m_cost >= 0.0 && self.m_cost.is_finite(),
            "m_cost",
            "must be non-negative",
        )?;
        check(
            self.r_max >= 0.0 && self.r_max.is_finite(),
            "r_max",
            "must be non-negative",
        )?;
        check(self.alpha.is_finite(), "alpha", "must be finite")?;
        check(self.t_ref > 0.0 && self.t_ref.is_finite(), "t_ref", "must be positive")?;
        check(self.c0 > 0.0 && self.c0.is_finite(), "c0", "must be positive")?;
        check(self.f2x.is_finite(), "f2x", "must be finite")?;
        check(self.q1.is_finite(), "q1", "must be finite")?;
        check(self.q2.is_finite(), "q2", "must be finite")?;
        check(self.d1 > 0.0 && self.d1.is_finite(), "d1", "must be positive")?;
        check(self.d2 > 0.0 && self.d2.is_finite(), "d2", "must be positive")?;
        check(self.e0 >= 0.0 && self.e0.is_finite(), "e0", "must be non-negative")?;
        check(self.delta > 0.0 && self.delta < 1.0, "delta", "must lie in (0, 1)")?;
        if let Some(s) = self.emission_display_scale {
            check(s > 0.0 && s.is_finite(), "emission_display_scale", "must be positive")?;
        }
        if let Some(c) = self.initial_carbon {
            check(c >= 0.0 && c.is_finite(), "initial_carbon", "must be non-negative")?;
        }
        check(
            self.strong_threshold > 0.0 && self.strong_threshold < 1.0,
            "strong_threshold",
            "must lie in (0, 1)",
        )?;
        Ok(())
    }
}

/// A validated scenario: model constants, initial opinions and master seed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioConfig {
    pub params: ModelParams,
    pub initial_opinions: InitialOpinions,
    pub seed: u64,
    /// Hold every opinion at its initial value for the whole run (no social
    /// update, no births or deaths). Used for the best-case scenario.
    pub freeze_opinions: bool,
    /// Overrides applied on top of the loaded values, in order.
    pub overrides: Vec<(String, f64)>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        match &self.initial_opinions {
            InitialOpinions::TruncatedNormal { mean, std } => {
                if !(mean.is_finite() && *std > 0.0 && std.is_finite()) {
                    return Err(Error::invalid("initial_std", "must be positive with a finite mean"));
                }
                // Rejection sampling needs non-negligible mass inside [-1, 1].
                if (mean.abs() - 1.0) / std > 5.0 {
                    return Err(Error::invalid("initial_mean", "too far outside [-1, 1]"));
                }
            }
            InitialOpinions::AllFixed(v) => {
                if !(-1.0..=1.0).contains(v) {
                    return Err(Error::invalid("initial_value", "must lie in [-1, 1]"));
                }
            }
            InitialOpinions::Explicit(list) => {
                if list.len() != self.params.n_agents {
                    return Err(Error::invalid(
                        "initial_opinions",
                        format!("expected {} entries, got {}", self.params.n_agents, list.len()),
                    ));
                }
                if list.iter().any(|o| !(-1.0..=1.0).contains(o)) {
                    return Err(Error::invalid("initial_opinions", "entries must lie in [-1, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Applies a named override and revalidates.
    pub fn with_override(mut self, name: &str, value: f64) -> Result<Self> {
        self.params.set(name, value)?;
        self.overrides.push((name.to_string(), value));
        self.validate()?;
        Ok(self)
    }

    /// Serializes to the config format. Overrides are already folded into
    /// the written values, so reloading reproduces the same runs.
    pub fn to_toml(&self) -> String {
        let p = &self.params;
        let raw = RawConfig {
            seed: Some(SeedValue::from_u64(self.seed)),
            freeze_opinions: self.freeze_opinions.then_some(true),
            n_agents: Some(p.n_agents),
            k_neighbors: Some(p.k_neighbors),
            lambda_mode: Some(match p.lambda_mode {
                LambdaMode::UniformRandom => "uniform_random".into(),
                LambdaMode::Fixed(_) => "fixed".into(),
            }),
            lambda_value: match p.lambda_mode {
                LambdaMode::Fixed(v) => Some(v),
                LambdaMode::UniformRandom => None,
            },
            a_influence: Some(p.a_influence),
            psi: Some(p.psi),
            noise_sigma: Some(p.noise_sigma),
            death_rate: Some(p.death_rate),
            m_cost: Some(p.m_cost),
            r_max: Some(p.r_max),
            alpha: Some(p.alpha),
            t_ref: Some(p.t_ref),
            c0: Some(p.c0),
            f2x: Some(p.f2x),
            q1: Some(p.q1),
            q2: Some(p.q2),
            d1: Some(p.d1),
            d2: Some(p.d2),
            e0: Some(p.e0),
            delta: Some(p.delta),
            start_year: Some(p.start_year),
            horizon_years: Some(p.horizon_years),
            emission_display_scale: p.emission_display_scale,
            initial_carbon: p.initial_carbon,
            snapshot_years: Some(p.snapshot_years.clone()),
            strong_threshold: Some(p.strong_threshold),
            initial_opinion: Some(
                match self.initial_opinions {
                    InitialOpinions::TruncatedNormal { .. } => "truncated_normal",
                    InitialOpinions::AllFixed(_) => "all_fixed",
                    InitialOpinions::Explicit(_) => "explicit",
                }
                .into(),
            ),
            initial_mean: match self.initial_opinions {
                InitialOpinions::TruncatedNormal { mean, .. } => Some(mean),
                _ => None,
            },
            initial_std: match self.initial_opinions {
                InitialOpinions::TruncatedNormal { std, .. } => Some(std),
                _ => None,
            },
            initial_value: match self.initial_opinions {
                InitialOpinions::AllFixed(v) => Some(v),
                _ => None,
            },
            initial_opinions: match &self.initial_opinions {
                InitialOpinions::Explicit(v) => Some(v.clone()),
                _ => None,
            },
        };
        toml::to_string(&raw).expect("flat config always serializes")
    }
}

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are written
/// as decimal strings. Both forms are accepted on input.
#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum SeedValue {
    Int(i64),
    Text(String),
}

impl SeedValue {
    fn from_u64(seed: u64) -> SeedValue {
        i64::try_from(seed).map_or_else(|_| SeedValue::Text(seed.to_string()), SeedValue::Int)
    }

    fn to_u64(&self) -> Result<u64> {
        match self {
            SeedValue::Int(v) => u64::try_from(*v).map_err(|_| Error::invalid("seed", "must be non-negative")),
            SeedValue::Text(s) => s
                .trim()
                .parse()
                .map_err(|_| Error::invalid("seed", format!("{s:?} is not an unsigned 64-bit integer"))),
        }
    }
}

/// Flat on-disk form of a scenario. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<SeedValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    freeze_opinions: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_agents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_neighbors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a_influence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    death_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f2x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    e0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    start_year: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon_years: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    emission_display_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_carbon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshot_years: Option<Vec<i32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    strong_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_opinion: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_opinions: Option<Vec<f64>>,
}

impl RawConfig {
    fn into_scenario(self) -> Result<ScenarioConfig> {
        let mut p = ModelParams::default();
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        take!(
            n_agents,
            k_neighbors,
            a_influence,
            psi,
            noise_sigma,
            death_rate,
            m_cost,
            r_max,
            alpha,
            t_ref,
            c0,
            f2x,
            q1,
            q2,
            d1,
            d2,
            e0,
            delta,
            start_year,
            horizon_years,
            snapshot_years,
            strong_threshold
        );
        p.emission_display_scale = self.emission_display_scale;
        p.initial_carbon = self.initial_carbon;
        p.lambda_mode = match (self.lambda_mode.as_deref(), self.lambda_value) {
            (None | Some("uniform_random"), None) => LambdaMode::UniformRandom,
            (None | Some("fixed"), Some(v)) => LambdaMode::Fixed(v),
            (Some("uniform_random"), Some(_)) => {
                return Err(Error::invalid(
                    "lambda_value",
                    "only allowed with lambda_mode = \"fixed\"",
                ))
            }
            (Some("fixed"), None) => {
                return Err(Error::invalid("lambda_value", "required with lambda_mode = \"fixed\""))
            }
            (Some(other), _) => {
                return Err(Error::invalid(
                    "lambda_mode",
                    format!("expected \"uniform_random\" or \"fixed\", got {other:?}"),
                ))
            }
        };
        let initial_opinions = match self.initial_opinion.as_deref() {
            None | Some("truncated_normal") => {
                if self.initial_value.is_some() || self.initial_opinions.is_some() {
                    return Err(Error::invalid(
                        "initial_opinion",
                        "initial_value/initial_opinions need a matching initial_opinion mode",
                    ));
                }
                InitialOpinions::TruncatedNormal {
                    mean: self.initial_mean.unwrap_or(0.0),
                    std: self.initial_std.unwrap_or(1.0 / 3.0),
                }
            }
            Some("all_fixed") => InitialOpinions::AllFixed(
                self.initial_value
                    .ok_or_else(|| Error::invalid("initial_value", "required with all_fixed"))?,
            ),
            Some("explicit") => InitialOpinions::Explicit(
                self.initial_opinions
                    .ok_or_else(|| Error::invalid("initial_opinions", "required with explicit"))?,
            ),
            Some(other) => return Err(Error::invalid("initial_opinion", format!("unknown mode {other:?}"))),
        };
        let config = ScenarioConfig {
            params: p,
            initial_opinions,
            seed: self.seed.as_ref().map_or(Ok(0), SeedValue::to_u64)?,
            freeze_opinions: self.freeze_opinions.unwrap_or(false),
            overrides: Vec::new(),
        };
        config.validate()?;
        Ok(config)
    }
}

/// A parsed config file: the scenario plus the optional run-level settings
/// and the raw sweep/calibration tables.
#[derive(Clone, Debug)]
pub struct ConfigDocument {
    pub scenario: ScenarioConfig,
    pub replicates: Option<usize>,
    pub sweep: Option<toml::Table>,
    pub calibration: Option<toml::Table>,
}

pub fn load_document(text: &str) -> Result<ConfigDocument> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let replicates = match table.remove("replicates") {
        None => None,
        Some(toml::Value::Integer(n)) if n >= 1 => Some(n as usize),
        Some(_) => return Err(Error::invalid("replicates", "must be a positive integer")),
    };
    let take_table = |table: &mut toml::Table, key: &str| -> Result<Option<toml::Table>> {
        match table.remove(key) {
            None => Ok(None),
            Some(toml::Value::Table(t)) => Ok(Some(t)),
            Some(_) => Err(Error::invalid(key, "must be a table")),
        }
    };
    let sweep = take_table(&mut table, "sweep")?;
    let calibration = take_table(&mut table, "calibration")?;
    let raw: RawConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    Ok(ConfigDocument {
        scenario: raw.into_scenario()?,
        replicates,
        sweep,
        calibration,
    })
}

/// Parses and validates a scenario config.
pub fn load_config(text: &str) -> Result<ScenarioConfig> {
    Ok(load_document(text)?.scenario)
}
