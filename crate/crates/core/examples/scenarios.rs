//! Prints replicate-mean headline numbers for the four named scenarios.
//!
//! `cargo run --release -p opclim-core --example scenarios [replicates]`

use opclim_core::params::{InitialOpinions, LambdaMode};
use opclim_core::{run_replicates, summarize, ScenarioConfig};

fn main() -> opclim_core::Result<()> {
    let reps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);

    let baseline = ScenarioConfig::default();
    let mut stubborn = baseline.clone();
    stubborn.params.lambda_mode = LambdaMode::Fixed(0.0);
    let worst = baseline.clone().with_override("r_max", 0.0)?;
    let mut best = baseline.clone();
    best.initial_opinions = InitialOpinions::AllFixed(1.0);
    best.params.noise_sigma = 0.0;
    best.params.death_rate = 0.0;
    best.freeze_opinions = true;

    println!("scenario   final_o  peak_T  T_2100  peak_year  final/initial_E  bc_final");
    for (name, cfg) in [
        ("baseline", baseline),
        ("stubborn", stubborn),
        ("worst", worst),
        ("best", best),
    ] {
        let set = run_replicates(&cfg, reps)?;
        let n = set.runs.len() as f64;
        let sums: Vec<_> = set.runs.iter().map(summarize).collect();
        let avg = |f: &dyn Fn(usize) -> f64| (0..set.runs.len()).map(f).sum::<f64>() / n;
        let i2100 = set.runs[0].index_of(2100).unwrap_or(set.runs[0].len() - 1);
        let e = &set.summary.emissions_model.mean;
        println!(
            "{name:<10} {:>7.3} {:>7.3} {:>7.3} {:>10.1} {:>16.3} {:>9.3}",
            avg(&|i| sums[i].mean_opinion_final),
            avg(&|i| sums[i].peak_anomaly),
            avg(&|i| set.runs[i].anomaly[i2100]),
            avg(&|i| sums[i].peak_emission_year as f64),
            if e[0] > 0.0 { e[e.len() - 1] / e[0] } else { f64::NAN },
            avg(&|i| sums[i].bc_final.unwrap_or(f64::NAN)),
        );
    }
    Ok(())
}
