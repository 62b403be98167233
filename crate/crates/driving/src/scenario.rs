//! Scenarios, action grids and the per-scenario payoff tables.

use std::f64::consts::PI;

use gpmro::domain::{DecisionGrid, DecisionPoint, ParamSet, PayoffTable};
use gpmro::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{extract_features, FeatureVector, ScoreModel};
use crate::vehicle::{rollout, AvAction, HvAction, VehicleState};

/// Starting situation `[gap, av_y, hv_y, av_speed, hv_speed]`: the human
/// driver's lead in x, both lateral positions and both speeds. Headings
/// start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario(pub [f64; 5]);

impl Scenario {
    pub fn from_states(av: &VehicleState, hv: &VehicleState) -> Self {
        Scenario([hv.pos_x - av.pos_x, av.pos_y, hv.pos_y, av.speed, hv.speed])
    }

    /// Starting states with the AV at `x = 0`.
    pub fn states(&self) -> (VehicleState, VehicleState) {
        let [gap, av_y, hv_y, av_v, hv_v] = self.0;
        (VehicleState::new(0.0, av_y, 0.0, av_v), VehicleState::new(gap, hv_y, 0.0, hv_v))
    }

    pub fn distance(&self, other: &Scenario) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

/// Evenly spaced values on `[lo, hi]`; a single value sits at `lo`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Axis-aligned grid of scenarios, enumerated lexicographically with the
/// last coordinate varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBox {
    pub lo: [f64; 5],
    pub hi: [f64; 5],
    pub counts: [usize; 5],
}

impl ScenarioBox {
    pub fn scenarios(&self) -> Vec<Scenario> {
        let axes: Vec<Vec<f64>> = (0..5).map(|k| linspace(self.lo[k], self.hi[k], self.counts[k])).collect();
        let total: usize = self.counts.iter().product();
        (0..total)
            .map(|mut index| {
                let mut s = [0.0; 5];
                for k in (0..5).rev() {
                    s[k] = axes[k][index % self.counts[k]];
                    index /= self.counts[k];
                }
                Scenario(s)
            })
            .collect()
    }
}

/// Everything about the simulated world that is not a learning parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub wheelbase: f64,
    pub dt: f64,
    /// Length of one plan, seconds.
    pub plan_horizon: f64,
    pub av_steering: (f64, f64),
    pub av_accel: (f64, f64),
    pub av_steering_points: usize,
    pub av_accel_points: usize,
    pub hv_steering: (f64, f64),
    pub hv_steering_points: usize,
    pub av_score: ScoreModel,
    pub hv_score: ScoreModel,
}

impl Default for World {
    fn default() -> Self {
        Self {
            wheelbase: 2.7,
            dt: 0.04,
            plan_horizon: 8.0,
            av_steering: (-PI / 60.0, PI / 60.0),
            av_accel: (-10.0, 1.0),
            av_steering_points: 11,
            av_accel_points: 11,
            hv_steering: (-PI / 30.0, PI / 30.0),
            hv_steering_points: 11,
            av_score: ScoreModel::default(),
            hv_score: ScoreModel::default(),
        }
    }
}

impl World {
    pub fn plan_steps(&self) -> usize {
        (self.plan_horizon / self.dt).round() as usize
    }

    /// AV actions, steering-major: index `s * accel_points + a`.
    pub fn av_actions(&self) -> Vec<AvAction> {
        let accels = linspace(self.av_accel.0, self.av_accel.1, self.av_accel_points);
        linspace(self.av_steering.0, self.av_steering.1, self.av_steering_points)
            .into_iter()
            .flat_map(|steering| accels.iter().map(move |&accel| AvAction { steering, accel }))
            .collect()
    }

    pub fn hv_actions(&self) -> Vec<HvAction> {
        linspace(self.hv_steering.0, self.hv_steering.1, self.hv_steering_points)
            .into_iter()
            .map(|steering| HvAction { steering })
            .collect()
    }

    pub fn decision_grid(&self) -> Result<DecisionGrid> {
        DecisionGrid::new(
            self.av_actions()
                .iter()
                .map(|a| DecisionPoint::new(vec![a.steering, a.accel]))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn param_set(&self) -> Result<ParamSet> {
        ParamSet::new(self.hv_actions().iter().map(|h| vec![h.steering]).collect())
    }

    pub fn roll(&self, start: VehicleState, steering: f64, accel: f64) -> Vec<VehicleState> {
        rollout(start, steering, accel, self.dt, self.plan_steps(), self.wheelbase)
    }

    /// Both rollouts for one scenario and action pair.
    pub fn simulate_pair(&self, scenario: &Scenario, av: AvAction, hv: HvAction) -> (Vec<VehicleState>, Vec<VehicleState>) {
        let (a, h) = scenario.states();
        (self.roll(a, av.steering, av.accel), self.roll(h, hv.steering, 0.0))
    }

    /// AV and HV features for every `(x, θ)` pair, row-major.
    pub fn feature_table(&self, scenario: &Scenario) -> ScenarioFeatures {
        let avs = self.av_actions();
        let hvs = self.hv_actions();
        let (a0, h0) = scenario.states();
        let hv_trajs: Vec<Vec<VehicleState>> = hvs.iter().map(|h| self.roll(h0, h.steering, 0.0)).collect();
        let pairs: Vec<(FeatureVector, FeatureVector)> = avs
            .par_iter()
            .flat_map_iter(|x| {
                let av = self.roll(a0, x.steering, x.accel);
                hv_trajs
                    .iter()
                    .map(|hv| (extract_features(&av, hv), extract_features(hv, &av)))
                    .collect::<Vec<_>>()
            })
            .collect();
        let (av, hv) = pairs.into_iter().unzip();
        ScenarioFeatures {
            rows: avs.len(),
            cols: hvs.len(),
            av,
            hv,
        }
    }
}

/// Features of every AV/HV action pair in one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFeatures {
    pub rows: usize,
    pub cols: usize,
    pub av: Vec<FeatureVector>,
    pub hv: Vec<FeatureVector>,
}

impl ScenarioFeatures {
    /// The AV's true score table `f(x, θ)`.
    pub fn av_table(&self, model: &ScoreModel) -> Result<PayoffTable> {
        PayoffTable::from_fn(self.rows, self.cols, |x, i| model.score(&self.av[x * self.cols + i]))
    }

    /// The human driver's score `f_H(θ, x)`, laid out like the AV table.
    pub fn hv_table(&self, model: &ScoreModel) -> Result<PayoffTable> {
        PayoffTable::from_fn(self.rows, self.cols, |x, i| model.score(&self.hv[x * self.cols + i]))
    }
}
