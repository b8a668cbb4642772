//! Coupled social-climate simulation.
//!
//! Continuous opinions in `[-1, 1]` evolve under a Friedkin-Johnsen style
//! update with stubbornness, similarity-weighted peer influence, noise and
//! births/deaths. The population mean drives CO2 emissions into a two-box
//! energy-balance model, whose temperature anomaly feeds back into every
//! agent's update through a sigmoid response term.
//!
//! Module map:
//!
//! * [`params`]: model constants, scenario configuration and config files.
//! * [`opinion`]: agents, neighbour sampling and the opinion update.
//! * [`climate`]: forcing, two-box temperature and carbon stock.
//! * [`coupling`]: temperature response and emission rate.
//! * [`engine`]: the yearly coupled loop and replicate runs.
//! * [`metrics`]: bimodality coefficient and run summaries.
//! * [`sweep`]: parameter sweeps and peak-year calibration.

pub mod climate;
pub mod coupling;
pub mod engine;
mod error;
pub mod metrics;
pub mod opinion;
pub mod params;
pub mod rng;
pub mod sweep;

pub use climate::ClimateState;
pub use coupling::ResponseParams;
pub use engine::{run_replicates, run_simulation, ReplicateSet, Snapshot, TimeSeries};
pub use error::{Error, Result};
pub use metrics::{bimodality_coefficient, peak_emission_year, summarize, RunSummary};
pub use opinion::{AgentState, Population};
pub use params::{InitialOpinions, LambdaMode, ModelParams, ScenarioConfig};
pub use rng::derive_run_seed;
pub use sweep::{
    calibrate_peak_year, run_sweep, Axis, CalibrationResult, CalibrationSpec, Metric, Spacing, SweepResult, SweepSpec,
};

/// Formats a number with 17 significant digits, enough to round-trip any
/// `f64`.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}
