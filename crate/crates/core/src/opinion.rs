//! Agent opinions and the yearly social update.
//!
//! Each year every agent samples `k` distinct peers uniformly at random and
//! moves to
//!
//! ```text
//! clamp(psi * (w_self * o_i + lambda_i * (S + R) + (1 - lambda_i) * anchor_i) + noise, -1, 1)
//! ```
//!
//! where `S` is the similarity-weighted sum of the peers' opinions. Raw
//! weights are `exp(-|o_j - o_i| / A)` for peers and `1` for the agent itself;
//! all of them are divided by their total, so `w_self + sum_j w_j = 1`.
//!
//! Updates are synchronous. Agent `i` in year `t` draws from its own ChaCha
//! stream keyed on `(run seed, t, i)`: first the neighbour sample, then one
//! normal draw for the noise when `noise_sigma > 0`. Serial and parallel
//! execution are therefore identical.

use rand::distr::Open01;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{InitialOpinions, LambdaMode, ModelParams, ScenarioConfig};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    pub opinion: f64,
    /// Initial opinion the agent is permanently pulled back towards.
    pub anchor: f64,
    /// Susceptibility `lambda` in `[0, 1)`; `1 - lambda` is stubbornness.
    pub susceptibility: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub agents: Vec<AgentState>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn opinions(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.opinion).collect()
    }

    pub fn mean_opinion(&self) -> f64 {
        self.agents.iter().map(|a| a.opinion).sum::<f64>() / self.agents.len() as f64
    }
}

#[inline]
pub fn influence_weight(o_i: f64, o_j: f64, a: f64) -> f64 {
    (-(o_j - o_i).abs() / a).exp()
}

/// Normalized `(self weight, neighbour weights)`; they sum to one.
pub fn normalized_weights(opinion: f64, neighbours: &[f64], a: f64) -> (f64, Vec<f64>) {
    let raw: Vec<f64> = neighbours.iter().map(|&o| influence_weight(opinion, o, a)).collect();
    let total = 1.0 + raw.iter().sum::<f64>();
    (1.0 / total, raw.into_iter().map(|w| w / total).collect())
}

/// `k` distinct indices from `0..n` excluding `self_index`, uniformly without
/// replacement.
///
/// Sparse samples (`k <= (n - 1) / 4`) redraw uniform indices until `k`
/// distinct ones are found, tracked in a bitset; denser ones go to
/// [`rand::seq::index::sample`]. The rejection path avoids building the full
/// index vector for every agent every year.
pub fn sample_neighbors<R: Rng + ?Sized>(self_index: usize, n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 || k > n - 1 || self_index >= n {
        return Err(Error::InvalidNeighbourCount { n, k });
    }
    let pool = n - 1;
    let raw: Vec<usize> = if k <= pool / 4 && pool <= u32::MAX as usize {
        let mut seen = vec![0u64; pool.div_ceil(64)];
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let j = rng.random_range(0..pool as u32) as usize;
            let (word, bit) = (j / 64, 1u64 << (j % 64));
            if seen[word] & bit == 0 {
                seen[word] |= bit;
                out.push(j);
            }
        }
        out
    } else {
        index::sample(rng, pool, k).into_vec()
    };
    Ok(raw
        .into_iter()
        .map(|j| if j >= self_index { j + 1 } else { j })
        .collect())
}

/// New opinion for one agent given its sampled peers' current opinions, the
/// year's temperature response and a pre-drawn noise term.
pub fn update_opinion(
    agent: &AgentState,
    neighbour_opinions: &[f64],
    response: f64,
    params: &ModelParams,
    noise: f64,
) -> f64 {
    let o = agent.opinion;
    let mut total = 1.0;
    let mut weighted = 0.0;
    for &oj in neighbour_opinions {
        let w = influence_weight(o, oj, params.a_influence);
        total += w;
        weighted += w * oj;
    }
    let social = weighted / total;
    let own = o / total;
    let lambda = agent.susceptibility;
    let value = params.psi * (own + lambda * (social + response) + (1.0 - lambda) * agent.anchor) + noise;
    value.clamp(-1.0, 1.0)
}

fn draw_lambda<R: Rng + ?Sized>(mode: LambdaMode, rng: &mut R) -> f64 {
    match mode {
        LambdaMode::UniformRandom => rng.sample(Open01),
        LambdaMode::Fixed(v) => v,
    }
}

/// Fresh population from the configured initial opinions. Anchors start at
/// the initial opinions.
pub fn init_population<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Population {
    let p = &config.params;
    let n = p.n_agents;
    let opinions: Vec<f64> = match &config.initial_opinions {
        InitialOpinions::TruncatedNormal { mean, std } => {
            let normal = Normal::new(*mean, *std).expect("validated std");
            (0..n)
                .map(|_| loop {
                    let x = normal.sample(rng);
                    if (-1.0..=1.0).contains(&x) {
                        break x;
                    }
                })
                .collect()
        }
        InitialOpinions::AllFixed(v) => vec![*v; n],
        InitialOpinions::Explicit(list) => list.clone(),
    };
    let agents = opinions
        .into_iter()
        .map(|o| AgentState {
            opinion: o,
            anchor: o,
            susceptibility: draw_lambda(p.lambda_mode, rng),
        })
        .collect();
    Population { agents }
}

/// One synchronous opinion update of the whole population.
///
/// `year_seed` keys the per-agent random streams.
pub fn step_opinions(pop: &Population, response: f64, params: &ModelParams, year_seed: u64) -> Result<Population> {
    let n = pop.len();
    let current = pop.opinions();
    let noise = if params.noise_sigma > 0.0 {
        Some(Normal::new(0.0, params.noise_sigma).expect("validated sigma"))
    } else {
        None
    };
    let agents = pop
        .agents
        .par_iter()
        .enumerate()
        .map(|(i, agent)| {
            let mut rng = rng::agent_rng(year_seed, i);
            let peers = sample_neighbors(i, n, params.k_neighbors, &mut rng)?;
            let peer_opinions: Vec<f64> = peers.iter().map(|&j| current[j]).collect();
            let eps = noise.map_or(0.0, |d| d.sample(&mut rng));
            Ok(AgentState {
                opinion: update_opinion(agent, &peer_opinions, response, params, eps),
                ..*agent
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Population { agents })
}

/// Deaths and births for one year.
///
/// Each agent dies independently with probability `death_rate` and is replaced
/// in place by a newcomer that copies the opinion and anchor of a uniformly
/// chosen survivor and draws a fresh susceptibility. Returns the number of
/// deaths.
pub fn vital_dynamics<R: Rng + ?Sized>(pop: &mut Population, params: &ModelParams, rng: &mut R) -> usize {
    if params.death_rate <= 0.0 {
        return 0;
    }
    let dead: Vec<bool> = (0..pop.len())
        .map(|_| rng.random::<f64>() < params.death_rate)
        .collect();
    let survivors: Vec<usize> = (0..pop.len()).filter(|&i| !dead[i]).collect();
    let deaths = pop.len() - survivors.len();
    if deaths == 0 {
        return 0;
    }
    // Nobody left to copy from: fall back to the pre-death population.
    let donors: Vec<usize> = if survivors.is_empty() {
        (0..pop.len()).collect()
    } else {
        survivors
    };
    let before = pop.agents.clone();
    for (i, _) in dead.iter().enumerate().filter(|(_, &d)| d) {
        let donor = &before[donors[rng.random_range(0..donors.len())]];
        pop.agents[i] = AgentState {
            opinion: donor.opinion,
            anchor: donor.anchor,
            susceptibility: draw_lambda(params.lambda_mode, rng),
        };
    }
    deaths
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(o: f64, anchor: f64, lambda: f64) -> AgentState {
        AgentState {
            opinion: o,
            anchor,
            susceptibility: lambda,
        }
    }

    #[test]
    fn weight_values() {
        assert_eq!(influence_weight(0.3, 0.3, 0.35), 1.0);
        assert_relative_eq!(
            influence_weight(-1.0, 1.0, 0.35),
            (-2.0f64 / 0.35).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(influence_weight(-1.0, 1.0, 0.35), 3.30e-3, epsilon = 1e-5);
        assert_relative_eq!(influence_weight(0.1, 0.45, 0.35), (-1.0f64).exp(), epsilon = 1e-12);
        assert_eq!(influence_weight(0.1, 0.6, 0.35), influence_weight(0.6, 0.1, 0.35));
    }

    #[test]
    fn forced_neighbour_choices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_neighbors(0, 2, 1, &mut rng).unwrap(), vec![1]);
        let mut s = sample_neighbors(2, 5, 4, &mut rng).unwrap();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 3, 4]);
        assert!(matches!(
            sample_neighbors(0, 5, 5, &mut rng),
            Err(Error::InvalidNeighbourCount { n: 5, k: 5 })
        ));
    }

    #[test]
    fn neighbour_sample_is_distinct_and_excludes_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for me in [0, 500, 999] {
            let mut s = sample_neighbors(me, 1000, 100, &mut rng).unwrap();
            assert_eq!(s.len(), 100);
            assert!(!s.contains(&me));
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 100);
            assert!(s.iter().all(|&j| j < 1000));
        }
    }

    #[test]
    fn consensus_is_fixed_point() {
        let p = ModelParams {
            psi: 1.0,
            ..ModelParams::default()
        };
        let a = agent(0.4, -0.9, 1.0);
        assert_relative_eq!(update_opinion(&a, &[0.4], 0.0, &p, 0.0), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn stubborn_agent_example() {
        let p = ModelParams::default();
        let a = agent(0.5, 0.5, 0.0);
        let peers = vec![0.5; 100];
        let expected = 0.7 * (0.5 / 101.0 + 0.5);
        for r in [-5.0, 0.0, 3.0] {
            assert_relative_eq!(update_opinion(&a, &peers, r, &p, 0.0), expected, epsilon = 1e-15);
        }
        assert_relative_eq!(expected, 0.3535, epsilon = 1e-4);
    }

    #[test]
    fn clamps() {
        let p = ModelParams {
            psi: 1.0,
            ..ModelParams::default()
        };
        // psi * (0.5 * 1 + 0.5 * 1) + 0.4 = 1.4
        let a = agent(1.0, 1.0, 0.5);
        assert_eq!(update_opinion(&a, &[1.0], 0.0, &p, 0.4), 1.0);
        let b = agent(-1.0, -1.0, 0.5);
        assert_eq!(update_opinion(&b, &[-1.0], 0.0, &p, -0.4), -1.0);
    }

    #[test]
    fn fixed_initial_opinions_and_lambda() {
        let mut cfg = ScenarioConfig {
            initial_opinions: InitialOpinions::AllFixed(1.0),
            ..ScenarioConfig::default()
        };
        cfg.params.lambda_mode = LambdaMode::Fixed(0.0);
        let pop = init_population(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(pop.len(), 1000);
        assert!(pop
            .agents
            .iter()
            .all(|a| a.opinion == 1.0 && a.anchor == 1.0 && a.susceptibility == 0.0));
    }

    #[test]
    fn uniform_lambda_in_open_interval() {
        let pop = init_population(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        assert!(pop
            .agents
            .iter()
            .all(|a| a.susceptibility > 0.0 && a.susceptibility < 1.0));
        let mean = pop.agents.iter().map(|a| a.susceptibility).sum::<f64>() / 1000.0;
        assert!((mean - 0.5).abs() < 0.05);
    }

    #[test]
    fn no_deaths_at_zero_rate() {
        let p = ModelParams {
            death_rate: 0.0,
            ..ModelParams::default()
        };
        let mut pop = init_population(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        let before = pop.clone();
        assert_eq!(vital_dynamics(&mut pop, &p, &mut ChaCha8Rng::seed_from_u64(4)), 0);
        assert_eq!(pop, before);
    }

    #[test]
    fn newcomers_copy_a_survivor() {
        let p = ModelParams {
            death_rate: 0.5,
            ..ModelParams::default()
        };
        let mut pop = init_population(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(5));
        let before = pop.clone();
        let deaths = vital_dynamics(&mut pop, &p, &mut ChaCha8Rng::seed_from_u64(6));
        assert!(deaths > 300 && deaths < 700);
        assert_eq!(pop.len(), 1000);
        let changed = pop.agents.iter().zip(&before.agents).filter(|(a, b)| a != b).count();
        assert_eq!(changed, deaths);
        for (a, b) in pop.agents.iter().zip(&before.agents) {
            if a != b {
                assert!(before
                    .agents
                    .iter()
                    .any(|d| d.opinion == a.opinion && d.anchor == a.anchor));
            }
        }
    }
}
