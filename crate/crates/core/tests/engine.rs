use opclim_core::engine::{write_snapshots_csv, write_timeseries_csv};
use opclim_core::metrics::write_summary_csv;
use opclim_core::params::InitialOpinions;
use opclim_core::sweep::{run_sweep_in_order, write_heatmap_csv, write_long_csv};
use opclim_core::{
    run_replicates, run_simulation, run_sweep, summarize, Axis, Metric, ScenarioConfig, SweepSpec, TimeSeries,
};

fn small(seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig {
        seed,
        ..ScenarioConfig::default()
    };
    c.params.n_agents = 200;
    c.params.k_neighbors = 30;
    c.params.horizon_years = 40;
    c
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn csv_bytes(s: &TimeSeries) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let mut ts = Vec::new();
    let mut snaps = Vec::new();
    let mut summary = Vec::new();
    write_timeseries_csv(s, &mut ts).unwrap();
    write_snapshots_csv(s, &mut snaps).unwrap();
    write_summary_csv(&[summarize(s)], &mut summary).unwrap();
    (ts, snaps, summary)
}

#[test]
fn serial_and_parallel_runs_are_bit_identical() {
    let mut c = ScenarioConfig {
        seed: 7,
        ..ScenarioConfig::default()
    };
    c.params.horizon_years = 30;
    c.params.noise_sigma = 0.05;
    let serial = in_pool(1, || run_simulation(&c).unwrap());
    let parallel = in_pool(4, || run_simulation(&c).unwrap());
    assert_eq!(serial, parallel);
    assert_eq!(csv_bytes(&serial), csv_bytes(&parallel));
    assert_eq!(serial, run_simulation(&c).unwrap());
}

#[test]
fn replicates_are_order_independent() {
    let c = small(3);
    let serial = in_pool(1, || run_replicates(&c, 4).unwrap());
    let parallel = in_pool(3, || run_replicates(&c, 4).unwrap());
    assert_eq!(serial, parallel);
    // Different replicates see different noise.
    assert_ne!(serial.runs[0].mean_opinion, serial.runs[1].mean_opinion);
}

#[test]
fn different_seeds_differ() {
    assert_ne!(
        run_simulation(&small(1)).unwrap().mean_opinion,
        run_simulation(&small(2)).unwrap().mean_opinion
    );
}

#[test]
fn carbon_budget_balances_every_year() {
    let c = small(11);
    let s = run_simulation(&c).unwrap();
    assert_eq!(s.len(), c.params.horizon_years + 1);
    for t in 0..s.len() - 1 {
        let lhs = s.carbon[t + 1] - s.carbon[t];
        let rhs = s.emissions_model[t] - c.params.delta * s.carbon[t];
        assert!((lhs - rhs).abs() < 1e-12, "year {}: {lhs} vs {rhs}", s.years[t]);
    }
}

#[test]
fn series_are_consistent() {
    let c = small(12);
    let s = run_simulation(&c).unwrap();
    assert_eq!(s.years.first(), Some(&2022));
    assert_eq!(s.years.last(), Some(&(2022 + c.params.horizon_years as i32)));
    assert_eq!(s.final_opinions.len(), c.params.n_agents);
    for t in 0..s.len() {
        assert!((s.emissions_display[t] - s.display_scale * s.emissions_model[t]).abs() < 1e-12);
        assert!((s.emissions_model[t] - 0.5 * c.params.e0 * (1.0 - s.mean_opinion[t])).abs() < 1e-12);
        assert!(s.carbon[t] >= 0.0 && (-1.0..=1.0).contains(&s.mean_opinion[t]));
    }
    assert!((s.emissions_display[0] - 40.0).abs() < 1e-9);
    for snap in &s.snapshots {
        assert!((snap.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn best_case_decays_geometrically() {
    let mut c = ScenarioConfig {
        initial_opinions: InitialOpinions::AllFixed(1.0),
        ..ScenarioConfig::default()
    };
    c.params.noise_sigma = 0.0;
    c.params.death_rate = 0.0;
    c.freeze_opinions = true;
    let s = run_simulation(&c).unwrap();
    let c0 = s.carbon[0];
    for t in 0..s.len() {
        assert_eq!(s.emissions_model[t], 0.0);
        let expected = c0 * (1.0 - c.params.delta).powi(t as i32);
        assert!((s.carbon[t] - expected).abs() < 1e-12, "t={t}");
    }
    let from = s.index_of(2027).unwrap();
    assert!(s.anomaly[from..].windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn frozen_population_keeps_initial_opinions() {
    let mut c = small(5);
    c.freeze_opinions = true;
    c.params.noise_sigma = 0.2;
    let s = run_simulation(&c).unwrap();
    assert!(s.mean_opinion.iter().all(|&m| m == s.mean_opinion[0]));
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn emissions_fall_as_opinions_rise() {
    let s = run_simulation(&ScenarioConfig {
        seed: 9,
        ..ScenarioConfig::default()
    })
    .unwrap();
    assert!(pearson(&s.mean_opinion, &s.emissions_model) < -0.99);
}

#[test]
fn noise_draws_opinions_towards_zero() {
    // Noise spreads opinions towards the clamps symmetrically, which lowers
    // the magnitude of the mean.
    let base = ScenarioConfig {
        seed: 4,
        ..ScenarioConfig::default()
    };
    let quiet = run_replicates(&base, 4).unwrap();
    let noisy = run_replicates(&base.clone().with_override("noise_sigma", 0.5).unwrap(), 4).unwrap();
    let end = |set: &opclim_core::ReplicateSet| set.summary.mean_opinion.mean.last().copied().unwrap();
    assert!(
        end(&noisy).abs() < end(&quiet).abs(),
        "{} vs {}",
        end(&noisy),
        end(&quiet)
    );
}

fn sweep_spec() -> SweepSpec {
    SweepSpec {
        axes: vec![Axis::linear("r_max", 0.0, 2.0, 3), Axis::linear("m_cost", 0.0, 2.0, 3)],
        replicates: 2,
        base: small(21),
        metrics: Metric::ALL.to_vec(),
    }
}

fn sweep_bytes(r: &opclim_core::SweepResult) -> Vec<u8> {
    let mut out = Vec::new();
    write_long_csv(r, &mut out).unwrap();
    for m in &r.metrics {
        write_heatmap_csv(r, *m, &mut out).unwrap();
    }
    out
}

#[test]
fn sweep_is_deterministic_and_order_independent() {
    let spec = sweep_spec();
    let a = in_pool(1, || run_sweep(&spec).unwrap());
    let b = in_pool(4, || run_sweep(&spec).unwrap());
    let reversed: Vec<usize> = (0..9).rev().collect();
    let c = run_sweep_in_order(&spec, &reversed).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(sweep_bytes(&a), sweep_bytes(&c));
    assert_eq!(a.succeeded(), 9);
}

#[test]
fn bivariate_grid_corners() {
    // Low r_max with high m_cost is the warmest corner; high r_max with low
    // m_cost the coolest.
    let r = run_sweep(&sweep_spec()).unwrap();
    let peak = r.means(Metric::PeakAnomaly);
    let at = |i: usize, j: usize| peak[i * 3 + j];
    assert!(at(0, 2) > at(2, 0));
    assert!(at(0, 2) >= at(0, 0));
    assert!(at(2, 2) >= at(2, 0));
    assert!(at(0, 0) >= at(2, 0));
}
