//! The synthetic protocols: every `(algorithm, seed)` pair is one run with
//! its own trace, strategy and curve files.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use gpmro::algorithms::{run_clss, run_gp_mro, run_gp_ucb, run_randmaxmin, run_stableopt, AlgorithmConfig, AlgorithmKind, RunTrace};
use gpmro::benchmarks::{evaluate_run, lin_se_kernel, Benchmark, SyntheticSpec};
use gpmro::domain::{maximin_value, MixedStrategy};
use gpmro::gp::{BetaSchedule, GpModel};
use rayon::prelude::*;

use crate::config::{Benchmark as Kind, ExperimentConfig};
use crate::output::{create_file, relative, write_config, Manifest, RunRecord, SeedRecord};

/// Accuracy of the maximin oracle reported next to each seed.
const TAU_EPS: f64 = 1e-3;

/// The objective and GP model for one seed.
pub struct Instance {
    pub benchmark: Benchmark,
    pub model: GpModel,
}

pub fn build_instance(config: &ExperimentConfig, seed: u64) -> gpmro::Result<Instance> {
    match config.benchmark {
        Kind::Synth1d => {
            let s = &config.synth_1d;
            let kernel = lin_se_kernel(s.lengthscale)?;
            let spec = SyntheticSpec::RandomGpSample {
                kernel: kernel.clone(),
                grid_x: s.grid_x,
                grid_theta: s.grid_theta,
                seed,
            };
            let benchmark = Benchmark::build(&spec, config.noise_sigma)?;
            // The true prior, with the raw noise variance.
            let model = benchmark.raw_prior_model(kernel, config.noise_sigma * config.noise_sigma)?;
            Ok(Instance { benchmark, model })
        }
        Kind::SynthPoly => {
            let s = &config.synth_poly;
            let spec = SyntheticSpec::PolyRobust {
                grid_x: s.grid_x,
                num_theta: s.num_theta,
                ball_seed: seed,
            };
            let benchmark = Benchmark::build(&spec, config.noise_sigma)?;
            let model = benchmark.fit_matern(&s.hyper_grid, s.pilot, seed)?;
            Ok(Instance { benchmark, model })
        }
        Kind::Drive => Err(gpmro::Error::Domain("the driving study has its own commands".into())),
    }
}

pub fn algorithm_config(config: &ExperimentConfig, seed: u64) -> AlgorithmConfig {
    let mut c = AlgorithmConfig::new(config.horizon, BetaSchedule::Constant { beta: config.beta }, seed);
    c.eta = config.eta;
    c
}

pub fn run_algorithm(kind: AlgorithmKind, instance: &Instance, cfg: &AlgorithmConfig) -> gpmro::Result<(MixedStrategy, RunTrace)> {
    if kind == AlgorithmKind::Clss {
        return run_clss(&instance.benchmark.table, cfg.horizon, cfg.eta);
    }
    let problem = instance.benchmark.problem(instance.model.clone())?;
    match kind {
        AlgorithmKind::GpMro => run_gp_mro(&problem, cfg),
        AlgorithmKind::StableOpt => run_stableopt(&problem, cfg),
        AlgorithmKind::GpUcb => run_gp_ucb(&problem, cfg),
        AlgorithmKind::RandMaxMin => run_randmaxmin(&problem, cfg),
        AlgorithmKind::Clss => unreachable!(),
    }
}

/// Performance curve of one run.
pub struct Curve {
    pub algorithm: AlgorithmKind,
    pub seed: u64,
    pub points: Vec<(usize, f64)>,
}

impl Curve {
    pub fn final_performance(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    /// `algorithm,seed,t,performance`.
    pub fn write_csv<W: Write>(&self, writer: W) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["algorithm", "seed", "t", "performance"])?;
        for &(t, p) in &self.points {
            w.write_record([self.algorithm.name().to_string(), self.seed.to_string(), t.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of one `(algorithm, seed)` run.
pub struct RunResult {
    pub strategy: MixedStrategy,
    pub trace: RunTrace,
    pub curve: Curve,
}

pub fn execute_run(config: &ExperimentConfig, instance: &Instance, kind: AlgorithmKind, seed: u64) -> gpmro::Result<RunResult> {
    let cfg = algorithm_config(config, seed);
    let (strategy, trace) = run_algorithm(kind, instance, &cfg)?;
    let checkpoints: Vec<usize> = match &config.checkpoints {
        Some(c) => c.iter().copied().filter(|&t| t <= trace.len()).collect(),
        None => (1..=trace.len()).collect(),
    };
    let oracle = instance.benchmark.oracle()?;
    let points = evaluate_run(&trace, &oracle, &checkpoints)?;
    Ok(RunResult {
        strategy,
        trace,
        curve: Curve { algorithm: kind, seed, points },
    })
}

fn write_run(out: &Path, result: &RunResult) -> anyhow::Result<Vec<String>> {
    let stem = format!("{}_seed{}", result.curve.algorithm.name(), result.curve.seed);
    let runs = out.join("runs");
    let trace = runs.join(format!("{stem}_trace.csv"));
    let strategy = runs.join(format!("{stem}_strategy.csv"));
    let curve = runs.join(format!("{stem}_curve.csv"));
    result.trace.write_csv(create_file(&trace)?)?;
    result.strategy.write_csv(create_file(&strategy)?)?;
    result.curve.write_csv(create_file(&curve)?)?;
    Ok([trace, strategy, curve].iter().map(|p| relative(out, p)).collect())
}

/// Runs every `(algorithm, seed)` pair and writes the result bundle into
/// `out`. Failed runs are recorded in the manifest; the others continue.
pub fn run_synthetic(config: &ExperimentConfig, out: &Path, command: &str) -> anyhow::Result<Manifest> {
    config.validate()?;
    let hash = write_config(out, config)?;
    let instances: Vec<(u64, gpmro::Result<Instance>)> = config.seeds.par_iter().map(|&s| (s, build_instance(config, s))).collect();

    let mut manifest = Manifest::new(command, hash);
    manifest.seeds = instances
        .par_iter()
        .map(|(seed, inst)| match inst {
            Ok(i) => {
                let tau = maximin_value(&i.benchmark.table, TAU_EPS);
                SeedRecord {
                    seed: *seed,
                    normalization: Some(i.benchmark.normalization),
                    tau: tau.as_ref().ok().map(|t| t.value),
                    tau_upper_bound: tau.as_ref().ok().map(|t| t.upper_bound),
                    pure_maximin: Some(i.benchmark.table.pure_maximin().1),
                    error: tau.err().map(|e| e.to_string()),
                }
            }
            Err(e) => SeedRecord {
                seed: *seed,
                normalization: None,
                tau: None,
                tau_upper_bound: None,
                pure_maximin: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let jobs: Vec<(AlgorithmKind, usize)> = config
        .algorithms
        .iter()
        .flat_map(|&a| (0..instances.len()).map(move |k| (a, k)))
        .collect();
    manifest.runs = jobs
        .par_iter()
        .map(|&(kind, k)| {
            let (seed, inst) = &instances[k];
            let result = inst
                .as_ref()
                .map_err(|e| anyhow::anyhow!("building the objective: {e}"))
                .and_then(|i| execute_run(config, i, kind, *seed).map_err(anyhow::Error::from))
                .and_then(|r| Ok((write_run(out, &r)?, r)));
            match result {
                Ok((files, r)) => RunRecord {
                    label: kind.name().to_string(),
                    seed: *seed,
                    ok: true,
                    error: None,
                    final_performance: r.curve.final_performance(),
                    queries: Some(r.trace.queries()),
                    files,
                },
                Err(e) => RunRecord {
                    label: kind.name().to_string(),
                    seed: *seed,
                    ok: false,
                    error: Some(format!("{e:#}")),
                    final_performance: None,
                    queries: None,
                    files: Vec::new(),
                },
            }
        })
        .collect();
    write_summary(out, &manifest).context("writing summary.csv")?;
    manifest.write(out)?;
    Ok(manifest)
}

/// `algorithm,seed,final_performance,queries,tau`, one row per successful run.
fn write_summary(out: &Path, manifest: &Manifest) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create_file(&out.join("summary.csv"))?);
    w.write_record(["algorithm", "seed", "final_performance", "queries", "tau"])?;
    for r in manifest.runs.iter().filter(|r| r.ok) {
        let tau = manifest.seeds.iter().find(|s| s.seed == r.seed).and_then(|s| s.tau);
        w.write_record([
            r.label.clone(),
            r.seed.to_string(),
            r.final_performance.map(|v| v.to_string()).unwrap_or_default(),
            r.queries.map(|v| v.to_string()).unwrap_or_default(),
            tau.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Median of the final performances per algorithm, in config order.
pub fn final_medians(config: &ExperimentConfig, manifest: &Manifest) -> Vec<(AlgorithmKind, f64)> {
    config
        .algorithms
        .iter()
        .map(|&a| {
            let values: Vec<f64> = manifest
                .runs
                .iter()
                .filter(|r| r.ok && r.label == a.name())
                .filter_map(|r| r.final_performance)
                .collect();
            (a, crate::plot::quantile(&values, 0.5))
        })
        .collect()
}
