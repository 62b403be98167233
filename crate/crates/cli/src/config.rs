//! Experiment configuration: built-in defaults per benchmark and profile,
//! overridden field by field from a JSON document.

use std::path::Path;

use anyhow::{bail, Context};
use gpmro::algorithms::AlgorithmKind;
use gpmro::benchmarks::HyperGrid;
use gpmro_driving::{DrivingConfig, ScenarioBox};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    Synth1d,
    SynthPoly,
    Drive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synth1dSettings {
    pub grid_x: usize,
    pub grid_theta: usize,
    /// Lengthscale of the squared-exponential factor.
    pub lengthscale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolySettings {
    /// Decision points, a perfect square.
    pub grid_x: usize,
    pub num_theta: usize,
    /// Noisy pilot observations for the maximum-likelihood fit.
    pub pilot: usize,
    pub hyper_grid: HyperGrid,
}

/// One experiment. `horizon`, `beta`, `eta`, `noise_sigma`, `algorithms` and
/// `checkpoints` apply to the synthetic benchmarks; the driving study reads
/// its own section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub profile: Profile,
    pub algorithms: Vec<AlgorithmKind>,
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub beta: f64,
    /// MWU step size; `√(8 ln m / T)` when absent.
    pub eta: Option<f64>,
    /// Observation noise on the raw objective scale.
    pub noise_sigma: f64,
    /// Iterations at which curves are evaluated; every iteration when absent.
    pub checkpoints: Option<Vec<usize>>,
    pub synth_1d: Synth1dSettings,
    pub synth_poly: PolySettings,
    pub drive: DrivingConfig,
}

impl ExperimentConfig {
    pub fn defaults(benchmark: Benchmark, profile: Profile) -> Self {
        let paper = profile == Profile::Paper;
        let (horizon, seeds) = match benchmark {
            Benchmark::Synth1d => (40, (0..50).collect()),
            Benchmark::SynthPoly => (if paper { 200 } else { 100 }, (0..5).collect()),
            Benchmark::Drive => (100, vec![0]),
        };
        let mut drive = DrivingConfig::default();
        if paper {
            drive.scenarios = ScenarioBox::paper();
            drive.episodes = 1000;
        }
        Self {
            benchmark,
            profile,
            algorithms: AlgorithmKind::ALL.to_vec(),
            seeds,
            horizon,
            beta: 2.0,
            eta: None,
            noise_sigma: 1.0,
            checkpoints: None,
            synth_1d: Synth1dSettings {
                grid_x: 100,
                grid_theta: 30,
                lengthscale: 0.2,
            },
            synth_poly: PolySettings {
                grid_x: if paper { 10_000 } else { 400 },
                num_theta: if paper { 100 } else { 20 },
                pilot: 100,
                hyper_grid: HyperGrid::default(),
            },
            drive,
        }
    }

    /// Defaults, then the JSON document at `path` merged over them, then
    /// `seeds` if given. The result is validated.
    pub fn load(benchmark: Benchmark, profile: Option<Profile>, path: Option<&Path>, seeds: Option<Vec<u64>>) -> anyhow::Result<Self> {
        let overrides: Option<Value> = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Some(serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?)
            }
            None => None,
        };
        let file_profile = match overrides.as_ref().and_then(|v| v.get("profile")) {
            Some(v) => Some(serde_json::from_value::<Profile>(v.clone()).context("profile")?),
            None => None,
        };
        let profile = profile.or(file_profile).unwrap_or_default();
        let mut value = serde_json::to_value(Self::defaults(benchmark, profile))?;
        if let Some(mut o) = overrides {
            if let Some(obj) = o.as_object_mut() {
                // The command line wins over the file for the profile.
                obj.insert("profile".into(), serde_json::to_value(profile)?);
            }
            merge(&mut value, o);
        }
        let mut config: Self = serde_path_to_error::deserialize(value).map_err(|e| anyhow::anyhow!("config field `{}`: {}", e.path(), e.inner()))?;
        if config.benchmark != benchmark {
            bail!("config field `benchmark`: file is for {:?} but the command runs {:?}", config.benchmark, benchmark);
        }
        if let Some(s) = seeds {
            config.seeds = s;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        fn check(ok: bool, path: &str, msg: &str) -> anyhow::Result<()> {
            if ok {
                Ok(())
            } else {
                bail!("config field `{path}`: {msg}")
            }
        }
        check(!self.seeds.is_empty(), "seeds", "at least one seed is required")?;
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        check(seeds.len() == self.seeds.len(), "seeds", "seeds must be distinct")?;
        if self.benchmark == Benchmark::Drive {
            return self.validate_drive();
        }
        check(!self.algorithms.is_empty(), "algorithms", "at least one algorithm is required")?;
        let mut algs = self.algorithms.clone();
        algs.sort_unstable();
        algs.dedup();
        check(algs.len() == self.algorithms.len(), "algorithms", "algorithms must be distinct")?;
        check(self.horizon >= 1, "horizon", "must be at least 1")?;
        check(self.beta.is_finite() && self.beta >= 0.0, "beta", "must be finite and >= 0")?;
        check(self.eta.is_none_or(|e| e.is_finite() && e > 0.0), "eta", "must be finite and > 0")?;
        check(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0, "noise_sigma", "must be finite and >= 0")?;
        if let Some(c) = &self.checkpoints {
            check(!c.is_empty(), "checkpoints", "must not be empty")?;
            check(c.windows(2).all(|w| w[0] < w[1]), "checkpoints", "must be strictly increasing")?;
            check(c.iter().all(|&t| (1..=self.horizon).contains(&t)), "checkpoints", "must lie in 1..=horizon")?;
        }
        match self.benchmark {
            Benchmark::Synth1d => {
                let s = &self.synth_1d;
                check(s.grid_x >= 1, "synth_1d.grid_x", "must be at least 1")?;
                check(s.grid_theta >= 1, "synth_1d.grid_theta", "must be at least 1")?;
                check(s.lengthscale.is_finite() && s.lengthscale > 0.0, "synth_1d.lengthscale", "must be > 0")?;
                check(self.noise_sigma > 0.0, "noise_sigma", "the generating prior needs positive noise")?;
            }
            Benchmark::SynthPoly => {
                let s = &self.synth_poly;
                let side = (s.grid_x as f64).sqrt().round() as usize;
                check(s.grid_x >= 1 && side * side == s.grid_x, "synth_poly.grid_x", "must be a positive perfect square")?;
                check(s.num_theta >= 1, "synth_poly.num_theta", "must be at least 1")?;
                check(s.pilot >= 2, "synth_poly.pilot", "must be at least 2")?;
                let g = &s.hyper_grid;
                check(
                    !(g.nus.is_empty() || g.lengthscales.is_empty() || g.output_scales.is_empty() || g.lambdas.is_empty()),
                    "synth_poly.hyper_grid",
                    "every candidate list must be nonempty",
                )?;
            }
            Benchmark::Drive => unreachable!(),
        }
        Ok(())
    }

    fn validate_drive(&self) -> anyhow::Result<()> {
        fn check(ok: bool, path: &str, msg: &str) -> anyhow::Result<()> {
            if ok {
                Ok(())
            } else {
                bail!("config field `drive.{path}`: {msg}")
            }
        }
        let d = &self.drive;
        check(d.scenarios.counts.iter().all(|&c| c >= 1), "scenarios.counts", "every count must be at least 1")?;
        check(d.world.dt > 0.0, "world.dt", "must be > 0")?;
        check(d.world.plan_horizon >= d.world.dt, "world.plan_horizon", "must cover at least one step")?;
        check(d.policy.horizon >= 1, "policy.horizon", "must be at least 1")?;
        check(d.policy.variance_gate >= 0.0, "policy.variance_gate", "must be >= 0")?;
        check(d.closed_loop.replan_every >= d.world.dt, "closed_loop.replan_every", "must cover at least one step")?;
        check(d.closed_loop.duration >= d.closed_loop.replan_every, "closed_loop.duration", "must cover at least one plan")?;
        check(d.closed_loop.hv_rationality >= 0.0, "closed_loop.hv_rationality", "must be >= 0")?;
        check(d.episodes >= 1, "episodes", "must be at least 1")?;
        Ok(())
    }

    /// Canonical JSON text; the manifest hash is taken over exactly these
    /// bytes.
    pub fn canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Recursive object merge; anything other than an object replaces.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Seeds written `a,b,c`; an empty string is an empty list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl std::str::FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(SeedList(Vec::new()));
        }
        s.split(',')
            .map(|p| p.trim().parse::<u64>().map_err(|e| format!("bad seed `{p}`: {e}")))
            .collect::<Result<_, _>>()
            .map(SeedList)
    }
}
