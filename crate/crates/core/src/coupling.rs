//! The two bridges between the social and physical halves of the model.

use crate::params::ModelParams;

/// Parameters of the sigmoid temperature response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResponseParams {
    pub m_cost: f64,
    pub r_max: f64,
    pub alpha: f64,
    pub t_ref: f64,
}

impl From<&ModelParams> for ResponseParams {
    fn from(p: &ModelParams) -> Self {
        ResponseParams {
            m_cost: p.m_cost,
            r_max: p.r_max,
            alpha: p.alpha,
            t_ref: p.t_ref,
        }
    }
}

/// Opinion pressure from a temperature anomaly:
/// `-m_cost + r_max / (1 + exp(-alpha (T - T_ref) / T_ref))`.
///
/// Ranges over `(-m_cost, r_max - m_cost)`.
pub fn temperature_response(anomaly: f64, p: &ResponseParams) -> f64 {
    let x = -p.alpha * (anomaly - p.t_ref) / p.t_ref;
    -p.m_cost + p.r_max / (1.0 + x.exp())
}

/// Emissions in GtCO2/yr for a population mean opinion: `0.5 e0 (1 - mean)`.
pub fn emission_rate(mean_opinion: f64, e0: f64) -> f64 {
    0.5 * e0 * (1.0 - mean_opinion)
}
