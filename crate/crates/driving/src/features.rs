//! Trajectory features and the hand-written score model standing in for a
//! human rater.

use serde::{Deserialize, Serialize};

use crate::vehicle::VehicleState;

/// `z1`: longitudinal distance travelled, `z2`: largest absolute lateral
/// position, `z3`: smallest distance to the other car. All in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub progress: f64,
    pub max_lateral: f64,
    pub min_distance: f64,
}

impl FeatureVector {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.progress, self.max_lateral, self.min_distance]
    }
}

/// Features of `own` against `other`, matched state by state in time.
///
/// # Panics
/// If either trajectory is empty or the lengths differ.
pub fn extract_features(own: &[VehicleState], other: &[VehicleState]) -> FeatureVector {
    assert!(!own.is_empty() && own.len() == other.len(), "trajectories must be nonempty and time-aligned");
    let progress = (own[own.len() - 1].pos_x - own[0].pos_x).max(0.0);
    let max_lateral = own.iter().map(|s| s.pos_y.abs()).fold(0.0, f64::max);
    let min_distance = own
        .iter()
        .zip(other)
        .map(|(a, b)| (a.pos_x - b.pos_x).hypot(a.pos_y - b.pos_y))
        .fold(f64::INFINITY, f64::min);
    FeatureVector {
        progress,
        max_lateral,
        min_distance,
    }
}

/// `0.5 + f_p(z1) + f_r(z2) + f_eb(z3)` clamped to `[0, 1]`, with
/// `f_p = progress_weight · min(z1 / progress_ref, 1)`,
/// `f_r = -road_weight · min(max(0, (z2 - road_start) / road_ramp), 1)` and
/// `f_eb = -proximity_weight · max(0, (safe_distance - z3) / safe_distance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub base: f64,
    pub progress_weight: f64,
    pub progress_ref: f64,
    pub road_weight: f64,
    pub road_start: f64,
    pub road_ramp: f64,
    pub proximity_weight: f64,
    pub safe_distance: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        Self {
            base: 0.5,
            progress_weight: 0.5,
            progress_ref: 160.0,
            road_weight: 0.4,
            road_start: 2.8,
            road_ramp: 0.7,
            proximity_weight: 0.6,
            safe_distance: 6.0,
        }
    }
}

impl ScoreModel {
    pub fn progress(&self, z1: f64) -> f64 {
        self.progress_weight * (z1 / self.progress_ref).clamp(0.0, 1.0)
    }

    pub fn road(&self, z2: f64) -> f64 {
        -self.road_weight * ((z2 - self.road_start) / self.road_ramp).clamp(0.0, 1.0)
    }

    pub fn proximity(&self, z3: f64) -> f64 {
        -self.proximity_weight * ((self.safe_distance - z3) / self.safe_distance).clamp(0.0, 1.0)
    }

    pub fn score(&self, z: &FeatureVector) -> f64 {
        (self.base + self.progress(z.progress) + self.road(z.max_lateral) + self.proximity(z.min_distance)).clamp(0.0, 1.0)
    }
}
