//! One serializable bundle for a full driving experiment.

use serde::{Deserialize, Serialize};

use crate::closed_loop::ClosedLoopConfig;
use crate::policy::PolicyConfig;
use crate::scenario::{ScenarioBox, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrivingConfig {
    pub world: World,
    pub scenarios: ScenarioBox,
    pub policy: PolicyConfig,
    pub closed_loop: ClosedLoopConfig,
    pub episodes: usize,
    pub episode_seed: u64,
}

impl Default for DrivingConfig {
    fn default() -> Self {
        Self {
            world: World::default(),
            scenarios: ScenarioBox::desk(),
            policy: PolicyConfig::default(),
            closed_loop: ClosedLoopConfig::default(),
            episodes: 200,
            episode_seed: 0,
        }
    }
}

impl ScenarioBox {
    /// 200 scenarios: gap -20..60 m, either lane for the AV, the HV anywhere
    /// from the right road edge to the center line, AV at 5..20 m/s, HV at 10.
    pub fn desk() -> Self {
        Self {
            lo: [-20.0, -1.75, -3.5, 5.0, 10.0],
            hi: [60.0, 1.75, 0.0, 20.0, 10.0],
            counts: [5, 2, 5, 4, 1],
        }
    }

    /// About 8000 scenarios over a wider box.
    pub fn paper() -> Self {
        Self {
            lo: [-20.0, -1.75, -3.5, 5.0, 8.0],
            hi: [60.0, 1.75, 0.0, 20.0, 12.0],
            counts: [10, 3, 8, 11, 3],
        }
    }
}
