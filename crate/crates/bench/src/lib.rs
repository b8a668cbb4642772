//! Fixtures shared by the benchmarks.

use opclim_core::ScenarioConfig;

/// Baseline scenario shortened to `horizon` years.
pub fn baseline(horizon: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.params.horizon_years = horizon;
    c
}
