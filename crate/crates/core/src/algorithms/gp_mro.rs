//! The GP-MRO loop: a simulated zero-sum game in which a multiplicative-weights
//! adversary over `Θ` plays against a learner that best-responds to the
//! truncated upper confidence bound, while the GP learns `f` from one noisy
//! query per round.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::trace::{AlgorithmKind, IterationRecord, RunTrace};
use super::{best_response, best_response_tradeoff, select_theta, AlgorithmConfig, BoundsTable, MwuState, RobustProblem};
use crate::domain::MixedStrategy;
use crate::error::Result;
use crate::gp::{beta, GpState, PosteriorCache};

/// Runs GP-MRO from an empty posterior.
pub fn run_gp_mro(problem: &RobustProblem, config: &AlgorithmConfig) -> Result<(MixedStrategy, RunTrace)> {
    let mut gp = GpState::new(problem.model.clone());
    run_gp_mro_with(problem, config, &mut gp)
}

/// Runs GP-MRO against an existing posterior, which receives every query made.
/// Lets several problems share one model of `f`.
pub fn run_gp_mro_with(
    problem: &RobustProblem,
    config: &AlgorithmConfig,
    gp: &mut GpState,
) -> Result<(MixedStrategy, RunTrace)> {
    let started = Instant::now();
    let (n, m) = (problem.num_points(), problem.num_params());
    config.validate(m)?;
    let mut mwu = MwuState::new(m, config.eta_for(m))?;
    let mut cache = PosteriorCache::new(gp.kernel(), problem.inputs.as_slice())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::with_capacity(config.horizon);
    let mut info_gain = Vec::with_capacity(config.horizon);
    let tradeoff = config.prior_q.as_ref().filter(|_| config.chi < 1.0);

    for t in 1..=config.horizon {
        cache.sync(gp);
        let beta_t = beta(&config.beta, t, gp.info_gain_observed(), gp.lambda())?;
        let bounds = BoundsTable::from_cache(&cache, beta_t, n, m)?;
        let weights = mwu.weights().to_vec();

        let x = match tradeoff {
            Some(q) => best_response_tradeoff(&bounds, &weights, q, config.chi),
            None => best_response(&bounds, &weights),
        };
        let theta = select_theta(&bounds, x);
        let sigma = bounds.var(x, theta).sqrt();
        let queried = config.variance_gate.is_none_or(|gate| sigma > gate);

        // The adversary is charged with the bounds the learner responded to,
        // whether or not the query goes through.
        mwu.update(bounds.oucb_row(x))?;
        let y = if queried {
            let y = problem.oracle.noisy(x, theta, &mut rng);
            gp.observe(problem.inputs.get(x, theta), y)?;
            Some(y)
        } else {
            None
        };
        info_gain.push(gp.info_gain_observed());
        records.push(IterationRecord {
            t,
            weights,
            x,
            theta,
            y,
            beta: beta_t,
            sigma,
            queried,
            report: Vec::new(),
        });
    }

    let xs: Vec<usize> = records.iter().map(|r| r.x).collect();
    let strategy = MixedStrategy::uniform_over(&xs)?;
    Ok((
        strategy.clone(),
        RunTrace {
            algorithm: AlgorithmKind::GpMro,
            num_params: m,
            records,
            strategy,
            info_gain,
            elapsed: started.elapsed(),
        },
    ))
}
