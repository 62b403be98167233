//! Overtaking case study: an autonomous car (AV) plans constant-input
//! trajectories against a human-driven car (HV) whose steering is uncertain.

pub mod closed_loop;
pub mod config;
pub mod features;
pub mod policy;
pub mod scenario;
pub mod vehicle;

pub use closed_loop::{closed_loop, hv_boltzmann_probabilities, hv_boltzmann_sample, run_batch, BatchStats, ClosedLoopConfig, EpisodeStats};
pub use config::DrivingConfig;
pub use features::{extract_features, FeatureVector, ScoreModel};
pub use policy::{driving_kernel, maxmin_policy, precompute_policy, DrivingPolicy, PolicyConfig, Precomputed, ScenarioTables};
pub use scenario::{linspace, Scenario, ScenarioBox, World};
pub use vehicle::{bicycle_step, rollout, AvAction, HvAction, VehicleState};
