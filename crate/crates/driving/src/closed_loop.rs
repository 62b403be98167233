//! Receding-horizon episodes: the AV replans from a precomputed policy while
//! the human driver follows a Boltzmann-rational choice of steering.

use gpmro::domain::{MixedStrategy, PayoffTable};
use gpmro::{Error, Result};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::policy::{DrivingPolicy, ScenarioTables};
use crate::scenario::{Scenario, World};
use crate::vehicle::{bicycle_step, VehicleState};

/// `P[θ_i] ∝ exp(r · E_{x~P} f_H(θ_i, x))` with rationality `r`, and
/// `hv_table` laid out `(x, θ)`. `r = 1` is the plain Boltzmann policy.
pub fn hv_boltzmann_probabilities(strategy: &MixedStrategy, hv_table: &PayoffTable, rationality: f64) -> Result<Vec<f64>> {
    if !(rationality.is_finite() && rationality >= 0.0) {
        return Err(Error::Domain(format!("rationality must be finite and nonnegative, got {rationality}")));
    }
    let m = hv_table.num_params();
    let mut utility = vec![0.0; m];
    for &(x, p) in strategy.support() {
        if x >= hv_table.num_points() {
            return Err(Error::Domain(format!("strategy index {x} outside the action grid")));
        }
        for (u, f) in utility.iter_mut().zip(hv_table.row(x)) {
            *u += rationality * p * f;
        }
    }
    let top = utility.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = utility.iter().map(|u| (u - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Draws a human-driver steering index by inverse CDF.
pub fn hv_boltzmann_sample(strategy: &MixedStrategy, hv_table: &PayoffTable, rationality: f64, rng: &mut dyn RngCore) -> Result<usize> {
    let probs = hv_boltzmann_probabilities(strategy, hv_table, rationality)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopConfig {
    pub duration: f64,
    pub replan_every: f64,
    pub av_start: VehicleState,
    pub hv_start: VehicleState,
    /// Scale on the human driver's expected utility in the Boltzmann policy.
    pub hv_rationality: f64,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        Self {
            duration: 10.0,
            replan_every: 2.0,
            av_start: VehicleState::new(0.0, -1.75, 0.0, 20.0),
            hv_start: VehicleState::new(40.0, -1.75, 0.0, 10.0),
            hv_rationality: 20.0,
        }
    }
}

impl ClosedLoopConfig {
    pub fn plans(&self) -> usize {
        (self.duration / self.replan_every).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub overtake: bool,
    pub av_final_x: f64,
    pub hv_final_x: f64,
    pub min_separation: f64,
    pub plans: usize,
}

/// One episode. The policy and `tables` must describe the same scenarios.
pub fn closed_loop(world: &World, policy: &DrivingPolicy, tables: &ScenarioTables, config: &ClosedLoopConfig, seed: u64) -> Result<EpisodeStats> {
    if policy.is_empty() {
        return Err(Error::Domain("closed loop needs a nonempty policy".into()));
    }
    if tables.hv.len() != policy.len() {
        return Err(Error::Dimension {
            expected: policy.len(),
            got: tables.hv.len(),
        });
    }
    let avs = world.av_actions();
    let hvs = world.hv_actions();
    let steps = (config.replan_every / world.dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut av, mut hv) = (config.av_start, config.hv_start);
    let mut min_separation = separation(&av, &hv);
    let plans = config.plans();
    for _ in 0..plans {
        let k = policy
            .nearest(&Scenario::from_states(&av, &hv))
            .expect("policy is nonempty");
        let strategy = &policy.strategies[k];
        let x = avs[strategy.sample(&mut rng)];
        let theta = hvs[hv_boltzmann_sample(strategy, &tables.hv[k], config.hv_rationality, &mut rng)?];
        for _ in 0..steps {
            av = bicycle_step(av, x.steering, x.accel, world.dt, world.wheelbase);
            hv = bicycle_step(hv, theta.steering, 0.0, world.dt, world.wheelbase);
            min_separation = min_separation.min(separation(&av, &hv));
        }
    }
    Ok(EpisodeStats {
        overtake: av.pos_x > hv.pos_x,
        av_final_x: av.pos_x,
        hv_final_x: hv.pos_x,
        min_separation,
        plans,
    })
}

fn separation(a: &VehicleState, b: &VehicleState) -> f64 {
    (a.pos_x - b.pos_x).hypot(a.pos_y - b.pos_y)
}

/// Aggregate of a batch of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub episodes: usize,
    pub overtakes: usize,
    pub mean_av_final_x: f64,
    pub mean_hv_final_x: f64,
}

/// Episodes with seeds `seed, seed + 1, ...`, run in parallel.
pub fn run_batch(
    world: &World,
    policy: &DrivingPolicy,
    tables: &ScenarioTables,
    config: &ClosedLoopConfig,
    episodes: usize,
    seed: u64,
) -> Result<(Vec<EpisodeStats>, BatchStats)> {
    let stats: Vec<EpisodeStats> = (0..episodes)
        .into_par_iter()
        .map(|e| closed_loop(world, policy, tables, config, seed.wrapping_add(e as u64)))
        .collect::<Result<_>>()?;
    let n = episodes.max(1) as f64;
    let batch = BatchStats {
        episodes,
        overtakes: stats.iter().filter(|s| s.overtake).count(),
        mean_av_final_x: stats.iter().map(|s| s.av_final_x).sum::<f64>() / n,
        mean_hv_final_x: stats.iter().map(|s| s.hv_final_x).sum::<f64>() / n,
    };
    Ok((stats, batch))
}
