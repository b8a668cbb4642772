//! Two-box energy-balance model with logarithmic CO2 forcing and a single
//! dissipating carbon stock. Both are stepped once per year with explicit
//! Euler updates.

use std::f64::consts::LN_2;

use crate::coupling::emission_rate;
use crate::error::{Error, Result};
use crate::params::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClimateState {
    /// Deep-ocean box anomaly, degC.
    pub t_deep: f64,
    /// Upper-ocean box anomaly, degC.
    pub t_upper: f64,
    /// Carbon above pre-industrial, GtCO2.
    pub carbon: f64,
}

impl ClimateState {
    pub fn anomaly(&self) -> f64 {
        total_anomaly(self)
    }

    /// Start-of-run state: carbon from `initial_carbon`, or the stock whose
    /// equilibrium anomaly equals `t_ref`; both boxes at their equilibrium
    /// share of that forcing.
    pub fn initial(p: &ModelParams) -> Result<ClimateState> {
        let carbon = p.initial_carbon.unwrap_or_else(|| equilibrium_carbon(p.t_ref, p));
        let f = radiative_forcing(carbon, p)?;
        Ok(ClimateState {
            t_deep: p.q1 * f,
            t_upper: p.q2 * f,
            carbon,
        })
    }
}

/// Carbon stock whose equilibrium anomaly `(q1 + q2) F(C)` equals `anomaly`.
pub fn equilibrium_carbon(anomaly: f64, p: &ModelParams) -> f64 {
    p.c0 * ((anomaly / ((p.q1 + p.q2) * p.f2x)).exp2() - 1.0)
}

/// `F = F2x / ln 2 * ln((C0 + C) / C0)`, in W/m^2.
pub fn radiative_forcing(carbon: f64, p: &ModelParams) -> Result<f64> {
    if carbon < 0.0 || carbon.is_nan() {
        return Err(Error::NegativeCarbon(carbon));
    }
    // log2 first so that C = C0 gives exactly F2x.
    Ok(p.f2x * ((carbon / p.c0).ln_1p() / LN_2))
}

/// One year of `T_j += (q_j F - T_j) / d_j`.
pub fn step_temperature(state: &ClimateState, forcing: f64, p: &ModelParams) -> ClimateState {
    ClimateState {
        t_deep: state.t_deep + (p.q1 * forcing - state.t_deep) / p.d1,
        t_upper: state.t_upper + (p.q2 * forcing - state.t_upper) / p.d2,
        carbon: state.carbon,
    }
}

/// One year of `C += 0.5 e0 (1 - mean) - delta C`, floored at zero.
pub fn step_carbon(carbon: f64, mean_opinion: f64, p: &ModelParams) -> f64 {
    let next = carbon + emission_rate(mean_opinion, p.e0) - p.delta * carbon;
    next.max(0.0)
}

pub fn total_anomaly(state: &ClimateState) -> f64 {
    state.t_deep + state.t_upper
}
