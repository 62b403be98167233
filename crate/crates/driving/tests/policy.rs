use std::sync::OnceLock;

use gpmro::domain::{MixedStrategy, PayoffTable};
use gpmro_driving::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matern52(r: f64, l: f64) -> f64 {
    let s = 5f64.sqrt() * r / l;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

struct Desk {
    world: World,
    scenarios: Vec<Scenario>,
    tables: ScenarioTables,
    pre: Precomputed,
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let world = World::default();
        let scenarios = ScenarioBox::desk().scenarios();
        let tables = ScenarioTables::build(&world, &scenarios).unwrap();
        let pre = precompute_policy(&world, &scenarios, &tables, &PolicyConfig::default()).unwrap();
        Desk { world, scenarios, tables, pre }
    })
}

#[test]
fn kernel_is_one_on_the_diagonal() {
    let k = driving_kernel(2.5, [30.0, 2.0, 3.0]).unwrap();
    let z = [120.0, 1.75, 14.0];
    assert!((k.eval(&z, &z).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn kernel_separates_feature_slices() {
    let l = [30.0, 2.0, 3.0];
    let k = driving_kernel(2.5, l).unwrap();
    let z = [120.0, 1.75, 14.0];
    for (j, dz) in [(0, 25.0), (1, 0.8), (2, 4.0)] {
        let mut z2 = z;
        z2[j] += dz;
        let mut parts = [1.0; 3];
        parts[j] = matern52(dz, l[j]);
        let expected = 0.5 * (0.5 * (parts[0] + parts[1]) + parts[2]);
        assert!((k.eval(&z, &z2).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn kernel_gram_over_simulated_features_is_psd() {
    let world = World::default();
    let f = world.feature_table(&Scenario([30.0, -1.75, -1.0, 18.0, 10.0]));
    let points: Vec<Vec<f64>> = (0..30).map(|j| f.av[j * 44 % f.av.len()].to_vec()).collect();
    let k = driving_kernel(2.5, [30.0, 2.0, 3.0]).unwrap();
    let n = points.len();
    let gram = DMatrix::from_fn(n, n, |a, b| k.eval(&points[a], &points[b]).unwrap());
    let min_eig = gram.symmetric_eigen().eigenvalues.min();
    assert!(min_eig >= -1e-8, "min eigenvalue {min_eig}");
}

#[test]
fn empty_scenario_set_gives_empty_policy() {
    let world = World::default();
    let tables = ScenarioTables::build(&world, &[]).unwrap();
    let pre = precompute_policy(&world, &[], &tables, &PolicyConfig::default()).unwrap();
    assert!(pre.policy.is_empty());
    assert_eq!(pre.queries(), 0);
    assert!(pre.policy.nearest(&Scenario([0.0; 5])).is_none());
}

#[test]
fn mismatched_tables_are_rejected() {
    let world = World::default();
    let scenarios = ScenarioBox::desk().scenarios();
    let tables = ScenarioTables::build(&world, &scenarios[..2]).unwrap();
    assert!(precompute_policy(&world, &scenarios[..3], &tables, &PolicyConfig::default()).is_err());
}

#[test]
fn gate_skips_only_low_variance_rounds() {
    let d = desk();
    let mut skipped = 0;
    for trace in &d.pre.traces {
        for r in &trace.records {
            if !r.queried {
                skipped += 1;
                assert!(r.sigma <= 0.005);
            }
        }
    }
    assert!(skipped > 0);
}

#[test]
fn shared_gp_amortizes_queries() {
    let d = desk();
    let total = d.scenarios.len() * PolicyConfig::default().horizon;
    assert!(d.pre.queries() * 20 < total, "{} queries out of {total} rounds", d.pre.queries());
    assert_eq!(d.pre.gp.len(), d.pre.queries());
}

#[test]
fn strategies_are_normalized_multiples_of_one_over_t() {
    let d = desk();
    assert_eq!(d.pre.policy.len(), 200);
    for s in &d.pre.policy.strategies {
        assert!((s.total_mass() - 1.0).abs() < 1e-12);
        for &(x, p) in s.support() {
            assert!(x < 121);
            assert!((p * 100.0 - (p * 100.0).round()).abs() < 1e-9);
        }
    }
}

#[test]
fn precompute_is_deterministic() {
    let d = desk();
    let subset = &d.scenarios[..10];
    let tables = ScenarioTables::build(&d.world, subset).unwrap();
    let a = precompute_policy(&d.world, subset, &tables, &PolicyConfig::default()).unwrap();
    let b = precompute_policy(&d.world, subset, &tables, &PolicyConfig::default()).unwrap();
    assert_eq!(a.policy, b.policy);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.policy.write_csv(&mut ca).unwrap();
    b.policy.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn boltzmann_softmax_arithmetic() {
    let table = PayoffTable::from_rows(&[vec![0.0, 2f64.ln()]]).unwrap();
    let p = hv_boltzmann_probabilities(&MixedStrategy::dirac(0), &table, 1.0).unwrap();
    assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn boltzmann_is_uniform_for_constant_utility() {
    let table = PayoffTable::from_fn(4, 11, |x, _| 0.1 * x as f64).unwrap();
    let strategy = MixedStrategy::new(vec![(0, 0.25), (3, 0.75)]).unwrap();
    for r in [1.0, 20.0] {
        let p = hv_boltzmann_probabilities(&strategy, &table, r).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 11.0).abs() < 1e-12));
    }
}

#[test]
fn boltzmann_uses_expected_utility() {
    // Rows disagree; the mixture makes both columns worth 0.5.
    let table = PayoffTable::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let p = hv_boltzmann_probabilities(&MixedStrategy::uniform_over(&[0, 1]).unwrap(), &table, 3.0).unwrap();
    assert!((p[0] - 0.5).abs() < 1e-12);
    let q = hv_boltzmann_probabilities(&MixedStrategy::dirac(1), &table, 3.0).unwrap();
    let e3 = 3f64.exp();
    assert!((q[1] - e3 / (1.0 + e3)).abs() < 1e-12);
}

#[test]
fn boltzmann_normalizes_on_the_real_grid() {
    let d = desk();
    for k in [0, 57, 199] {
        for r in [1.0, 20.0] {
            let p = hv_boltzmann_probabilities(&d.pre.policy.strategies[k], &d.tables.hv[k], r).unwrap();
            assert_eq!(p.len(), 11);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn boltzmann_rejects_bad_input() {
    let table = PayoffTable::from_rows(&[vec![0.0, 1.0]]).unwrap();
    assert!(hv_boltzmann_probabilities(&MixedStrategy::dirac(0), &table, -1.0).is_err());
    assert!(hv_boltzmann_probabilities(&MixedStrategy::dirac(0), &table, f64::NAN).is_err());
    assert!(hv_boltzmann_probabilities(&MixedStrategy::dirac(3), &table, 1.0).is_err());
}

#[test]
fn boltzmann_sampler_follows_probabilities() {
    let table = PayoffTable::from_rows(&[vec![0.0, 2f64.ln()]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 30_000;
    let ones = (0..n)
        .filter(|_| hv_boltzmann_sample(&MixedStrategy::dirac(0), &table, 1.0, &mut rng).unwrap() == 1)
        .count();
    assert!((ones as f64 / n as f64 - 2.0 / 3.0).abs() < 0.01);
}

/// A world with one AV action (straight, no acceleration) and one HV action
/// (straight).
fn straight_world() -> World {
    World {
        av_steering: (0.0, 0.0),
        av_steering_points: 1,
        av_accel: (0.0, 0.0),
        av_accel_points: 1,
        hv_steering: (0.0, 0.0),
        hv_steering_points: 1,
        ..World::default()
    }
}

#[test]
fn free_lane_pass_overtakes_in_five_plans() {
    let world = straight_world();
    let scenarios = vec![Scenario([40.0, 1.75, -1.75, 20.0, 10.0])];
    let tables = ScenarioTables::build(&world, &scenarios).unwrap();
    let policy = maxmin_policy(&scenarios, &tables);
    let config = ClosedLoopConfig {
        av_start: VehicleState::new(0.0, 1.75, 0.0, 20.0),
        ..ClosedLoopConfig::default()
    };
    let stats = closed_loop(&world, &policy, &tables, &config, 0).unwrap();
    assert_eq!(stats.plans, 5);
    assert!(stats.overtake);
    assert!((stats.av_final_x - 200.0).abs() < 1e-9);
    assert!((stats.hv_final_x - 140.0).abs() < 1e-9);
    assert!((stats.min_separation - 3.5).abs() < 1e-9);
}

#[test]
fn plan_count_follows_duration() {
    let config = ClosedLoopConfig { duration: 10.0, replan_every: 2.0, ..ClosedLoopConfig::default() };
    assert_eq!(config.plans(), 5);
    let config = ClosedLoopConfig { duration: 6.0, replan_every: 1.5, ..ClosedLoopConfig::default() };
    assert_eq!(config.plans(), 4);
}

#[test]
fn closed_loop_rejects_empty_or_mismatched_policy() {
    let d = desk();
    let empty = DrivingPolicy { scenarios: vec![], strategies: vec![] };
    assert!(closed_loop(&d.world, &empty, &d.tables, &ClosedLoopConfig::default(), 0).is_err());
    let short = DrivingPolicy {
        scenarios: d.scenarios[..3].to_vec(),
        strategies: d.pre.policy.strategies[..3].to_vec(),
    };
    assert!(closed_loop(&d.world, &short, &d.tables, &ClosedLoopConfig::default(), 0).is_err());
}

#[test]
fn batches_are_reproducible() {
    let d = desk();
    let config = ClosedLoopConfig::default();
    let comparator = maxmin_policy(&d.scenarios, &d.tables);
    for policy in [&d.pre.policy, &comparator] {
        let (a, sa) = run_batch(&d.world, policy, &d.tables, &config, 20, 7).unwrap();
        let (b, sb) = run_batch(&d.world, policy, &d.tables, &config, 20, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        // Episode `e` of a batch is the single episode with seed `seed + e`.
        assert_eq!(a[4], closed_loop(&d.world, policy, &d.tables, &config, 11).unwrap());
    }
}

#[test]
fn comparator_is_a_dirac_at_the_pure_maximin() {
    let d = desk();
    let comparator = maxmin_policy(&d.scenarios, &d.tables);
    for (s, t) in comparator.strategies.iter().zip(&d.tables.av) {
        let (x, v) = t.pure_maximin();
        assert_eq!(s.support(), &[(x, 1.0)]);
        let best = (0..t.num_points())
            .map(|r| t.row(r).iter().copied().fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(v, best);
    }
}

#[test]
fn policy_csv_round_trips() {
    let d = desk();
    let mut buf = Vec::new();
    d.pre.policy.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("scenario,gap,av_y,hv_y,av_speed,hv_speed,point_index,probability\n"));
    let back = DrivingPolicy::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, d.pre.policy);
}

#[test]
fn policy_csv_rejects_gaps_in_ids() {
    let text = "scenario,gap,av_y,hv_y,av_speed,hv_speed,point_index,probability\n0,1,2,3,4,5,0,1\n2,1,2,3,4,5,0,1\n";
    assert!(DrivingPolicy::read_csv(text.as_bytes()).is_err());
}

fn brute_nearest(scenarios: &[Scenario], s: &Scenario) -> usize {
    let mut order: Vec<usize> = (0..scenarios.len()).collect();
    order.sort_by(|&a, &b| scenarios[a].distance(s).total_cmp(&scenarios[b].distance(s)));
    order[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nearest_matches_brute_force(q in prop::array::uniform5(-30.0..70.0f64)) {
        let d = desk();
        let s = Scenario(q);
        prop_assert_eq!(d.pre.policy.nearest(&s), Some(brute_nearest(&d.scenarios, &s)));
    }

    #[test]
    fn grid_scenarios_are_their_own_nearest(k in 0usize..200) {
        let d = desk();
        prop_assert_eq!(d.pre.policy.nearest(&d.scenarios[k]), Some(k));
    }
}
