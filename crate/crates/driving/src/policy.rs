//! Offline policy precomputation: one robust mixed strategy per scenario,
//! learned with a single GP over trajectory features shared by all scenarios.

use std::io::{Read, Write};

use gpmro::algorithms::{run_gp_mro_with, AlgorithmConfig, JointInputs, RobustProblem, RunTrace};
use gpmro::domain::{MixedStrategy, PayoffTable, TableOracle};
use gpmro::gp::{BetaSchedule, GpModel, GpState};
use gpmro::kernels::KernelSpec;
use gpmro::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::{Scenario, World};

/// `((k1(z1) + k2(z2)) / 2 + k3(z3)) / 2` with Matérn factors, one per feature.
pub fn driving_kernel(nu: f64, lengthscales: [f64; 3]) -> Result<KernelSpec> {
    Ok(KernelSpec::sum(
        KernelSpec::sum(
            KernelSpec::matern(nu, lengthscales[0], 0..1)?,
            KernelSpec::matern(nu, lengthscales[1], 1..2)?,
        ),
        KernelSpec::matern(nu, lengthscales[2], 2..3)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub horizon: usize,
    pub beta: f64,
    pub eta: f64,
    pub variance_gate: f64,
    pub nu: f64,
    pub lengthscales: [f64; 3],
    pub prior_mean: f64,
    pub output_scale: f64,
    /// Latent noise variance of the GP.
    pub lambda: f64,
    /// Standard deviation of the simulated rater's noise.
    pub rater_noise: f64,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            horizon: 100,
            beta: 0.5,
            eta: 0.5,
            variance_gate: 0.005,
            nu: 2.5,
            lengthscales: [30.0, 2.0, 3.0],
            prior_mean: 0.5,
            output_scale: 0.5,
            lambda: 1e-4,
            rater_noise: 0.0,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn model(&self) -> Result<GpModel> {
        GpModel::new(driving_kernel(self.nu, self.lengthscales)?, self.lambda)?.with_output(self.prior_mean, self.output_scale)
    }

    pub fn algorithm(&self, seed: u64) -> AlgorithmConfig {
        let mut c = AlgorithmConfig::new(self.horizon, BetaSchedule::Constant { beta: self.beta }, seed);
        c.eta = Some(self.eta);
        c.variance_gate = Some(self.variance_gate);
        c
    }
}

/// True AV and human-driver score tables for each scenario.
#[derive(Debug, Clone)]
pub struct ScenarioTables {
    pub av: Vec<PayoffTable>,
    pub hv: Vec<PayoffTable>,
    /// AV features as GP inputs, row-major per scenario.
    pub inputs: Vec<JointInputs>,
}

impl ScenarioTables {
    pub fn build(world: &World, scenarios: &[Scenario]) -> Result<Self> {
        let built: Vec<(PayoffTable, PayoffTable, JointInputs)> = scenarios
            .par_iter()
            .map(|s| {
                let f = world.feature_table(s);
                let inputs = JointInputs::from_fn(f.rows, f.cols, |x, i| f.av[x * f.cols + i].to_vec())?;
                Ok((f.av_table(&world.av_score)?, f.hv_table(&world.hv_score)?, inputs))
            })
            .collect::<Result<_>>()?;
        let mut out = Self {
            av: Vec::with_capacity(built.len()),
            hv: Vec::with_capacity(built.len()),
            inputs: Vec::with_capacity(built.len()),
        };
        for (a, h, i) in built {
            out.av.push(a);
            out.hv.push(h);
            out.inputs.push(i);
        }
        Ok(out)
    }
}

/// Scenario-indexed mixed strategies over the AV action grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingPolicy {
    pub scenarios: Vec<Scenario>,
    pub strategies: Vec<MixedStrategy>,
}

impl DrivingPolicy {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Index of the closest scenario, lowest index on ties. `None` when empty.
    pub fn nearest(&self, s: &Scenario) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, c) in self.scenarios.iter().enumerate() {
            let d = c.distance(s);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((k, d));
            }
        }
        best.map(|(k, _)| k)
    }

    /// `scenario,gap,av_y,hv_y,av_speed,hv_speed,point_index,probability`,
    /// one row per support point.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scenario", "gap", "av_y", "hv_y", "av_speed", "hv_speed", "point_index", "probability"])?;
        for (k, (s, p)) in self.scenarios.iter().zip(&self.strategies).enumerate() {
            for &(x, prob) in p.support() {
                let mut row = vec![k.to_string()];
                row.extend(s.0.iter().map(|v| v.to_string()));
                row.push(x.to_string());
                row.push(prob.to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut scenarios: Vec<Scenario> = Vec::new();
        let mut masses: Vec<Vec<(usize, f64)>> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> { rec[i].parse().map_err(|e| Error::Parse(format!("column {i}: {e}"))) };
            let k: usize = rec[0].parse().map_err(|e| Error::Parse(format!("scenario: {e}")))?;
            if k == scenarios.len() {
                scenarios.push(Scenario([num(1)?, num(2)?, num(3)?, num(4)?, num(5)?]));
                masses.push(Vec::new());
            } else if k + 1 != scenarios.len() {
                return Err(Error::Parse(format!("scenario ids must be contiguous, got {k}")));
            }
            let x: usize = rec[6].parse().map_err(|e| Error::Parse(format!("point_index: {e}")))?;
            masses[k].push((x, num(7)?));
        }
        let strategies = masses.into_iter().map(MixedStrategy::new).collect::<Result<_>>()?;
        Ok(Self { scenarios, strategies })
    }
}

/// Policy, per-scenario traces and the shared posterior after precomputation.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub policy: DrivingPolicy,
    pub traces: Vec<RunTrace>,
    pub gp: GpState,
}

impl Precomputed {
    /// Oracle queries over all scenarios.
    pub fn queries(&self) -> usize {
        self.traces.iter().map(RunTrace::queries).sum()
    }
}

/// Runs gated GP-MRO once per scenario, in order, feeding one shared GP.
pub fn precompute_policy(world: &World, scenarios: &[Scenario], tables: &ScenarioTables, config: &PolicyConfig) -> Result<Precomputed> {
    if tables.av.len() != scenarios.len() {
        return Err(Error::Dimension {
            expected: scenarios.len(),
            got: tables.av.len(),
        });
    }
    let grid = world.decision_grid()?;
    let params = world.param_set()?;
    let model = config.model()?;
    let mut gp = GpState::new(model.clone());
    let mut strategies = Vec::with_capacity(scenarios.len());
    let mut traces = Vec::with_capacity(scenarios.len());
    for (k, table) in tables.av.iter().enumerate() {
        let oracle = TableOracle::new(table.clone(), config.rater_noise)?;
        let problem = RobustProblem::new(grid.clone(), params.clone(), Box::new(oracle), tables.inputs[k].clone(), model.clone())?;
        let (strategy, trace) = run_gp_mro_with(&problem, &config.algorithm(config.seed.wrapping_add(k as u64)), &mut gp)?;
        strategies.push(strategy);
        traces.push(trace);
    }
    Ok(Precomputed {
        policy: DrivingPolicy {
            scenarios: scenarios.to_vec(),
            strategies,
        },
        traces,
        gp,
    })
}

/// The deterministic comparator: a Dirac at `argmax_x min_θ f(x, θ)` on each
/// scenario's true table.
pub fn maxmin_policy(scenarios: &[Scenario], tables: &ScenarioTables) -> DrivingPolicy {
    DrivingPolicy {
        scenarios: scenarios.to_vec(),
        strategies: tables.av.iter().map(|t| MixedStrategy::dirac(t.pure_maximin().0)).collect(),
    }
}
