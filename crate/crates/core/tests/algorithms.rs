use gpmro::algorithms::{
    default_eta, run_clss, run_gp_mro, run_gp_ucb, run_randmaxmin, run_stableopt, select_theta, AlgorithmConfig,
    BoundsTable, JointInputs, MwuState, RobustProblem,
};
use gpmro::domain::{argmax, performance, DecisionGrid, ParamSet, PayoffTable, PriorQ, TableOracle};
use gpmro::gp::{oucb, BetaSchedule, GpModel, GpState, PosteriorCache};
use gpmro::kernels::KernelSpec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kernel() -> KernelSpec {
    KernelSpec::product(
        KernelSpec::squared_exponential(0.05, 0..1).unwrap(),
        KernelSpec::squared_exponential(0.05, 1..2).unwrap(),
    )
}

/// Table oracle on evenly spaced 1-d grids with nearly independent cells,
/// a prior mean of 0.5 and prior standard deviation 0.5.
fn table_problem(table: &PayoffTable, noise: f64) -> RobustProblem {
    let (n, m) = (table.num_points(), table.num_params());
    let grid = DecisionGrid::uniform_1d(n, 0.0, 1.0).unwrap();
    let params = ParamSet::uniform_1d(m, 0.0, 1.0).unwrap();
    let inputs = JointInputs::product(&grid, &params);
    let lambda = ((noise / 0.5).powi(2)).max(1e-4);
    let model = GpModel::new(kernel(), lambda).unwrap().with_output(0.5, 0.5).unwrap();
    let oracle = TableOracle::new(table.clone(), noise).unwrap();
    RobustProblem::new(grid, params, Box::new(oracle), inputs, model).unwrap()
}

fn config(horizon: usize, seed: u64) -> AlgorithmConfig {
    AlgorithmConfig::new(horizon, BetaSchedule::Constant { beta: 2.0 }, seed)
}

fn pennies() -> PayoffTable {
    PayoffTable::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
}

fn random_table(rng: &mut ChaCha8Rng, n: usize, m: usize) -> PayoffTable {
    PayoffTable::from_fn(n, m, |_, _| rng.random::<f64>()).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) }
}

#[test]
fn gp_mro_on_matching_pennies() {
    let p = table_problem(&pennies(), 0.0);
    let (s, trace) = run_gp_mro(&p, &config(500, 0)).unwrap();
    assert_eq!(trace.len(), 500);
    assert!(performance(&s, p.oracle.as_ref()).unwrap() >= 0.45);
}

#[test]
fn clss_on_matching_pennies_and_constant() {
    let (s, _) = run_clss(&pennies(), 1000, None).unwrap();
    let o = TableOracle::new(pennies(), 0.0).unwrap();
    assert!(performance(&s, &o).unwrap() >= 0.5 - (2f64.ln() / 2000.0).sqrt());
    let c = PayoffTable::from_fn(4, 3, |_, _| 0.3).unwrap();
    let (s, _) = run_clss(&c, 50, None).unwrap();
    assert!((performance(&s, &TableOracle::new(c, 0.0).unwrap()).unwrap() - 0.3).abs() < 1e-12);
    let bad = PayoffTable::from_rows(&[vec![1.5]]).unwrap();
    assert!(run_clss(&bad, 10, None).is_err());
}

#[test]
fn stableopt_reports_a_pure_point_on_matching_pennies() {
    let p = table_problem(&pennies(), 0.0);
    let (s, _) = run_stableopt(&p, &config(100, 0)).unwrap();
    assert_eq!(s.len(), 1);
    let so = performance(&s, p.oracle.as_ref()).unwrap();
    assert_eq!(so, 0.0);
    let (m, _) = run_gp_mro(&p, &config(100, 0)).unwrap();
    assert!(performance(&m, p.oracle.as_ref()).unwrap() > so);
}

#[test]
fn randmaxmin_on_matching_pennies() {
    let p = table_problem(&pennies(), 0.0);
    for seed in 0..10 {
        let (s, trace) = run_randmaxmin(&p, &config(30, seed)).unwrap();
        let report = &trace.records.last().unwrap().report;
        assert_eq!(report.len(), 2);
        let value = performance(&s, p.oracle.as_ref()).unwrap();
        if report[0] != report[1] {
            assert_eq!(s.len(), 2);
            assert_eq!(value, 0.5);
        } else {
            assert_eq!(s.len(), 1);
            assert_eq!(s.probability(report[0]), 1.0);
            assert_eq!(value, 0.0);
        }
    }
}

#[test]
fn gp_ucb_finds_the_global_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let t = random_table(&mut rng, 8, 4);
        let best = argmax(t.values()) / 4;
        let p = table_problem(&t, 0.0);
        let (s, trace) = run_gp_ucb(&p, &config(50, 0)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.probability(best), 1.0);
        assert_eq!(trace.records.last().unwrap().x, best);
        let (first, _) = run_gp_ucb(&p, &config(1, 0)).unwrap();
        assert_eq!(first.probability(0), 1.0);
    }
}

#[test]
fn stableopt_finds_a_strict_maxmin_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let base = random_table(&mut rng, 8, 4);
        let target = rng.random_range(0..8);
        let floor = base.pure_maximin().1;
        let t = PayoffTable::from_fn(8, 4, |x, i| {
            if x == target { (floor + 0.1 + 0.5 * base.get(x, i)).min(1.0) } else { base.get(x, i) }
        })
        .unwrap();
        assert_eq!(t.pure_maximin().0, target);
        let p = table_problem(&t, 0.0);
        let (s, trace) = run_stableopt(&p, &config(100, 0)).unwrap();
        assert_eq!(s.probability(target), 1.0);
        assert_eq!(trace.records[0].x, 0);
    }
}

#[test]
fn clss_upper_bounds_gp_mro_in_the_median() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let t = random_table(&mut rng, 10, 4);
    let p = table_problem(&t, 0.1);
    let (c, _) = run_clss(&t, 500, None).unwrap();
    let clss = performance(&c, p.oracle.as_ref()).unwrap();
    let mro: Vec<f64> = (0..10)
        .map(|seed| performance(&run_gp_mro(&p, &config(500, seed)).unwrap().0, p.oracle.as_ref()).unwrap())
        .collect();
    assert!(clss >= median(mro.clone()) - 0.05, "clss {clss}, mro {mro:?}");
}

#[test]
fn runs_are_deterministic_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let t = random_table(&mut rng, 6, 3);
    let p = table_problem(&t, 0.1);
    type Run = fn(&RobustProblem, &AlgorithmConfig) -> gpmro::Result<(gpmro::domain::MixedStrategy, gpmro::algorithms::RunTrace)>;
    let runs: [Run; 4] = [run_gp_mro, run_gp_ucb, run_stableopt, run_randmaxmin];
    for run in runs {
        let (_, a) = run(&p, &config(40, 5)).unwrap();
        let (_, b) = run(&p, &config(40, 5)).unwrap();
        assert!(a.same_run(&b));
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        let (_, c) = run(&p, &config(40, 6)).unwrap();
        assert!(!a.same_run(&c));
    }
}

#[test]
fn trace_csv_header() {
    let p = table_problem(&pennies(), 0.0);
    let (_, trace) = run_gp_mro(&p, &config(3, 0)).unwrap();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,w_1,w_2,x_index,theta_index,y,beta,sigma,queried");
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn output_is_uniform_over_selections() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let t = random_table(&mut rng, 10, 4);
    let p = table_problem(&t, 0.1);
    let horizon = 37;
    let (s, trace) = run_gp_mro(&p, &config(horizon, 1)).unwrap();
    for &(x, prob) in s.support() {
        let count = trace.records.iter().filter(|r| r.x == x).count();
        assert!(count > 0);
        assert!((prob * horizon as f64 - count as f64).abs() < 1e-9);
    }
    assert!((s.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn variance_gate_only_skips_confident_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let t = random_table(&mut rng, 6, 3);
    let p = table_problem(&t, 0.0);
    let mut cfg = config(80, 2);
    cfg.variance_gate = Some(0.05);
    let (s, trace) = run_gp_mro(&p, &cfg).unwrap();
    assert!(trace.queries() < trace.len());
    for r in &trace.records {
        assert_eq!(r.queried, r.sigma > 0.05);
        assert_eq!(r.queried, r.y.is_some());
    }
    let xs: Vec<usize> = trace.records.iter().map(|r| r.x).collect();
    assert_eq!(s, gpmro::domain::MixedStrategy::uniform_over(&xs).unwrap());
}

#[test]
fn chi_one_reproduces_the_base_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let t = random_table(&mut rng, 8, 4);
    let p = table_problem(&t, 0.1);
    let base = config(60, 3);
    let mut with_q = base.clone();
    with_q.prior_q = Some(PriorQ::dirac(4, 2).unwrap());
    with_q.chi = 1.0;
    let (_, a) = run_gp_mro(&p, &base).unwrap();
    let (_, b) = run_gp_mro(&p, &with_q).unwrap();
    assert!(a.same_run(&b));
}

#[test]
fn chi_zero_maximizes_expected_ucb_under_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let t = random_table(&mut rng, 8, 4);
    let p = table_problem(&t, 0.1);
    let q = PriorQ::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let mut cfg = config(40, 4);
    cfg.chi = 0.0;
    cfg.prior_q = Some(q.clone());
    let (_, trace) = run_gp_mro(&p, &cfg).unwrap();
    let mut gp = GpState::new(p.model.clone());
    for r in &trace.records {
        let mut best = (0, f64::NEG_INFINITY);
        for x in 0..8 {
            let mut score = 0.0;
            for i in 0..4 {
                let (mu, var) = gp.posterior(p.inputs.get(x, i)).unwrap();
                score += q.weights()[i] * oucb(mu, var, r.beta);
            }
            if score > best.1 {
                best = (x, score);
            }
        }
        assert_eq!(r.x, best.0, "round {}", r.t);
        if let Some(y) = r.y {
            gp.observe(p.inputs.get(r.x, r.theta), y).unwrap();
        }
    }
}

#[test]
fn theta_selection_moves_away_from_observed_parameter() {
    let p = table_problem(&PayoffTable::from_fn(3, 4, |_, _| 0.5).unwrap(), 0.0);
    let mut gp = GpState::new(p.model.clone());
    let mut cache = PosteriorCache::new(&p.model.kernel, p.inputs.as_slice()).unwrap();
    cache.sync(&gp);
    assert_eq!(select_theta(&BoundsTable::from_cache(&cache, 2.0, 3, 4).unwrap(), 1), 0);
    for _ in 0..5 {
        gp.observe(p.inputs.get(1, 0), 0.5).unwrap();
    }
    cache.sync(&gp);
    assert_ne!(select_theta(&BoundsTable::from_cache(&cache, 2.0, 3, 4).unwrap(), 1), 0);
}

#[test]
fn invalid_configs_are_rejected() {
    let p = table_problem(&pennies(), 0.0);
    let mut cfg = config(10, 0);
    cfg.chi = 0.5;
    assert!(run_gp_mro(&p, &cfg).is_err());
    assert!(run_gp_mro(&p, &config(0, 0)).is_err());
}

fn regret_check(m: usize, horizon: usize, seed: u64) -> std::result::Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mwu = MwuState::new(m, default_eta(m, horizon)).unwrap();
    // Per-expert biases make some experts systematically better.
    let bias: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    let mut learner = 0.0;
    let mut totals = vec![0.0; m];
    for _ in 0..horizon {
        let losses: Vec<f64> = bias.iter().map(|b| (b + 0.5 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)).collect();
        learner += mwu.weights().iter().zip(&losses).map(|(w, l)| w * l).sum::<f64>();
        for (t, l) in totals.iter_mut().zip(&losses) {
            *t += l;
        }
        mwu.update(&losses).unwrap();
        prop_assert!((mwu.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(mwu.weights().iter().all(|w| *w > 0.0));
    }
    let best = totals.iter().copied().fold(f64::INFINITY, f64::min);
    let regret = (learner - best) / horizon as f64;
    prop_assert!(regret <= ((m as f64).ln() / (2.0 * horizon as f64)).sqrt());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mwu_regret_bound(seed in 0u64..10_000, big_m in any::<bool>(), long in any::<bool>()) {
        regret_check(if big_m { 30 } else { 5 }, if long { 1000 } else { 100 }, seed)?;
    }

    #[test]
    fn best_response_ignores_constant_shift(seed in 0u64..10_000, shift in 0.0f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let upper: Vec<f64> = (0..60).map(|_| rng.random::<f64>() * 0.7).collect();
        let w: Vec<f64> = { let r: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect(); let s: f64 = r.iter().sum(); r.iter().map(|v| v / s).collect() };
        let a = BoundsTable::from_upper(10, 6, upper.clone()).unwrap();
        let b = BoundsTable::from_upper(10, 6, upper.iter().map(|u| u + shift).collect()).unwrap();
        prop_assert_eq!(gpmro::algorithms::best_response(&a, &w), gpmro::algorithms::best_response(&b, &w));
    }
}
