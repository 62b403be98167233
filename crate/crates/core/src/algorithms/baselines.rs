//! Comparison strategies: StableOpt (deterministic max-min), GP-UCB
//! (non-robust global optimum), RandMaxMin (coin flip between the two) and
//! CLSS (GP-MRO's game dynamics with exact access to `f`).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trace::{AlgorithmKind, IterationRecord, RunTrace};
use super::{joint_ucb_argmax, maxmin_optimistic, maxmin_pessimistic, AlgorithmConfig, BoundsTable, MwuState, RobustProblem};
use crate::domain::{argmax, argmin, MixedStrategy, PayoffTable};
use crate::error::Result;
use crate::gp::{beta, GpState, PosteriorCache};

/// Stream id for RandMaxMin's coin, kept apart from the observation noise.
const COIN_STREAM: u64 = 1;

struct GpLoop<'a> {
    problem: &'a RobustProblem,
    config: &'a AlgorithmConfig,
    gp: GpState,
    cache: PosteriorCache<'a>,
    noise: ChaCha8Rng,
}

impl<'a> GpLoop<'a> {
    fn new(problem: &'a RobustProblem, config: &'a AlgorithmConfig) -> Result<Self> {
        config.validate(problem.num_params())?;
        let gp = GpState::new(problem.model.clone());
        let cache = PosteriorCache::new(&problem.model.kernel, problem.inputs.as_slice())?;
        Ok(Self {
            problem,
            config,
            gp,
            cache,
            noise: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    /// Bounds under the current posterior with `β_t`, where `t - 1`
    /// observations have been made.
    fn bounds(&mut self, t: usize) -> Result<(f64, BoundsTable)> {
        self.cache.sync(&self.gp);
        let b = beta(&self.config.beta, t, self.gp.info_gain_observed(), self.gp.lambda())?;
        let table = BoundsTable::from_cache(&self.cache, b, self.problem.num_points(), self.problem.num_params())?;
        Ok((b, table))
    }

    fn query(&mut self, x: usize, theta: usize) -> Result<f64> {
        let y = self.problem.oracle.noisy(x, theta, &mut self.noise);
        self.gp.observe(self.problem.inputs.get(x, theta), y)?;
        Ok(y)
    }

    fn finish(self, kind: AlgorithmKind, records: Vec<IterationRecord>, info_gain: Vec<f64>, started: Instant) -> Result<(MixedStrategy, RunTrace)> {
        let strategy = if kind.reports_history() {
            MixedStrategy::uniform_over(&records.iter().map(|r| r.x).collect::<Vec<_>>())?
        } else {
            MixedStrategy::uniform_over(&records.last().expect("horizon >= 1").report)?
        };
        Ok((
            strategy.clone(),
            RunTrace {
                algorithm: kind,
                num_params: self.problem.num_params(),
                records,
                strategy,
                info_gain,
                elapsed: started.elapsed(),
            },
        ))
    }
}

fn record(t: usize, x: usize, theta: usize, y: f64, beta: f64, sigma: f64, report: Vec<usize>) -> IterationRecord {
    IterationRecord {
        t,
        weights: Vec::new(),
        x,
        theta,
        y: Some(y),
        beta,
        sigma,
        queried: true,
        report,
    }
}

/// GP-UCB over the joint domain; reports a Dirac at the latest selection.
pub fn run_gp_ucb(problem: &RobustProblem, config: &AlgorithmConfig) -> Result<(MixedStrategy, RunTrace)> {
    let started = Instant::now();
    let mut lp = GpLoop::new(problem, config)?;
    let mut records = Vec::with_capacity(config.horizon);
    let mut info_gain = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        let (b, bounds) = lp.bounds(t)?;
        let (x, theta) = joint_ucb_argmax(&bounds);
        let sigma = bounds.var(x, theta).sqrt();
        let y = lp.query(x, theta)?;
        info_gain.push(lp.gp.info_gain_observed());
        records.push(record(t, x, theta, y, b, sigma, vec![x]));
    }
    lp.finish(AlgorithmKind::GpUcb, records, info_gain, started)
}

/// StableOpt: `x_t = argmax_x min_θ oucb`, `θ_t = argmin_θ olcb(x_t, θ)`, and
/// after each round the report `argmax_x min_θ olcb` under the updated
/// posterior.
pub fn run_stableopt(problem: &RobustProblem, config: &AlgorithmConfig) -> Result<(MixedStrategy, RunTrace)> {
    let started = Instant::now();
    let mut lp = GpLoop::new(problem, config)?;
    let mut records = Vec::with_capacity(config.horizon);
    let mut info_gain = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        let (b, bounds) = lp.bounds(t)?;
        let x = maxmin_optimistic(&bounds);
        let theta = argmin(bounds.olcb_row(x));
        let sigma = bounds.var(x, theta).sqrt();
        let y = lp.query(x, theta)?;
        let (_, after) = lp.bounds(t + 1)?;
        info_gain.push(lp.gp.info_gain_observed());
        records.push(record(t, x, theta, y, b, sigma, vec![maxmin_pessimistic(&after)]));
    }
    lp.finish(AlgorithmKind::StableOpt, records, info_gain, started)
}

/// RandMaxMin: each round a fair coin decides whether StableOpt's or GP-UCB's
/// rule picks the query; both rules read one shared posterior. Reports the
/// 50/50 mixture of StableOpt's pessimistic max-min point and GP-UCB's
/// current selection.
pub fn run_randmaxmin(problem: &RobustProblem, config: &AlgorithmConfig) -> Result<(MixedStrategy, RunTrace)> {
    let started = Instant::now();
    let mut lp = GpLoop::new(problem, config)?;
    let mut coin = ChaCha8Rng::seed_from_u64(config.seed);
    coin.set_stream(COIN_STREAM);
    let mut records = Vec::with_capacity(config.horizon);
    let mut info_gain = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        let (b, bounds) = lp.bounds(t)?;
        let stable_x = maxmin_optimistic(&bounds);
        let stable_theta = argmin(bounds.olcb_row(stable_x));
        let (ucb_x, ucb_theta) = joint_ucb_argmax(&bounds);
        let (x, theta) = if coin.random::<bool>() {
            (stable_x, stable_theta)
        } else {
            (ucb_x, ucb_theta)
        };
        let sigma = bounds.var(x, theta).sqrt();
        let y = lp.query(x, theta)?;
        let (_, after) = lp.bounds(t + 1)?;
        info_gain.push(lp.gp.info_gain_observed());
        records.push(record(t, x, theta, y, b, sigma, vec![maxmin_pessimistic(&after), ucb_x]));
    }
    lp.finish(AlgorithmKind::RandMaxMin, records, info_gain, started)
}

/// CLSS: multiplicative weights over `Θ` against an exact best response on the
/// true table, returning the uniform distribution over the responses.
pub fn run_clss(table: &PayoffTable, horizon: usize, eta: Option<f64>) -> Result<(MixedStrategy, RunTrace)> {
    let started = Instant::now();
    table.check_unit_range()?;
    if horizon == 0 {
        return Err(crate::error::Error::domain("horizon must be at least 1"));
    }
    let (n, m) = (table.num_points(), table.num_params());
    let mut mwu = MwuState::new(m, eta.unwrap_or_else(|| super::default_eta(m, horizon)))?;
    let mut records = Vec::with_capacity(horizon);
    let mut scores = vec![0.0; n];
    for t in 1..=horizon {
        let weights = mwu.weights().to_vec();
        for (x, s) in scores.iter_mut().enumerate() {
            *s = table.row(x).iter().zip(&weights).map(|(f, w)| f * w).sum();
        }
        let x = argmax(&scores);
        let theta = argmin(table.row(x));
        mwu.update(table.row(x))?;
        records.push(IterationRecord {
            t,
            weights,
            x,
            theta,
            y: Some(table.get(x, theta)),
            beta: 0.0,
            sigma: 0.0,
            queried: true,
            report: Vec::new(),
        });
    }
    let xs: Vec<usize> = records.iter().map(|r| r.x).collect();
    let strategy = MixedStrategy::uniform_over(&xs)?;
    Ok((
        strategy.clone(),
        RunTrace {
            algorithm: AlgorithmKind::Clss,
            num_params: m,
            records,
            strategy,
            info_gain: vec![0.0; horizon],
            elapsed: started.elapsed(),
        },
    ))
}
