use explore_core::explore::{
    evaluate, roll_in, run_episode, train, ActionSource, BetaSchedule, Policy, Termination, TrainConfig,
};
use explore_core::learner::ForestParams;
use explore_core::objective::{audit_path, Budget, Instance, PathState};
use explore_core::planners::{oracle_action, PolicyKind};
use explore_core::sensor::SensorConfig;
use explore_core::worldgen::{generate_dataset, DatasetSpec, NodeSet, WorldFamily, WorldMap};
use explore_core::{seed, Point};
use std::sync::Arc;

fn instances(family: WorldFamily, count: usize, seed: u64) -> Vec<Instance> {
    let spec = DatasetSpec::new(family, count, 14, seed).with_grid(32, 32);
    generate_dataset(&spec)
        .unwrap()
        .iter()
        .map(|d| Instance::from_dataset(d, SensorConfig { ray_count: 24, max_range: 10.0 }).unwrap())
        .collect()
}

fn small_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(3, 12, Budget::new(40.0, 4).unwrap(), seed);
    c.forest = ForestParams {
        tree_count: 8,
        ..ForestParams::default()
    };
    c
}

#[test]
fn aggregate_grows_by_m_per_iteration() {
    let tr = instances(WorldFamily::RandomDisks, 4, 1);
    let va = instances(WorldFamily::RandomDisks, 2, 2);
    let out = train(&small_config(5), &tr, &va).unwrap();
    assert_eq!(out.metrics.len(), 3);
    for (i, m) in out.metrics.iter().enumerate() {
        assert_eq!(m.iteration, i + 1);
        assert_eq!(m.new_datapoints, 12);
        assert_eq!(m.aggregate_size, 12 * (i + 1));
        assert_eq!(m.violations, 0);
    }
    assert_eq!(out.dataset.len(), 36);
    assert_eq!(out.iterates.len(), 3);
    assert!(out.violations.is_empty());
    // the first iteration has no learner, so every roll-in action is the oracle's
    assert_eq!(out.metrics[0].learner_actions, 0);
    assert!(out.dataset.iter().all(|d| (0.0..=1.0).contains(&d.q) && d.t >= 1 && d.t <= 4));
}

#[test]
fn training_is_reproducible() {
    let tr = instances(WorldFamily::ParallelLines, 3, 3);
    let va = instances(WorldFamily::ParallelLines, 2, 4);
    let a = train(&small_config(9), &tr, &va).unwrap();
    let b = train(&small_config(9), &tr, &va).unwrap();
    let (mut sa, mut sb) = (Vec::new(), Vec::new());
    a.policy.forest().write(&mut sa).unwrap();
    b.policy.forest().write(&mut sb).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(a.best_iteration, b.best_iteration);
    let qa: Vec<u64> = a.dataset.iter().map(|d| d.q.to_bits()).collect();
    let qb: Vec<u64> = b.dataset.iter().map(|d| d.q.to_bits()).collect();
    assert_eq!(qa, qb);
}

#[test]
fn beta_one_rolls_in_with_the_oracle_only() {
    let tr = instances(WorldFamily::BlockWorld, 3, 6);
    let va = instances(WorldFamily::BlockWorld, 1, 7);
    let learner = train(&small_config(2), &tr, &va).unwrap().policy;
    let budget = Budget::new(40.0, 4).unwrap();
    for (k, inst) in tr.iter().enumerate() {
        let mut rng = seed::stream(k as u64, &[1]);
        let r = roll_in(inst, Some(&learner), 1.0, 3, &budget, &mut rng).unwrap();
        let Some(r) = r else { continue };
        assert!(r.sources.iter().all(|s| *s == ActionSource::Oracle));
        let mut state = PathState::start(inst.nodes());
        for _ in 0..3 {
            let a = oracle_action(inst, &state, &budget).unwrap();
            state.push(a, inst.nodes());
        }
        assert_eq!(r.state.visited(), state.visited());
    }

    let mut c = small_config(2);
    c.schedule = BetaSchedule::Geometric(1.0);
    let out = train(&c, &tr, &va).unwrap();
    assert!(out.metrics.iter().all(|m| m.learner_actions == 0));
}

#[test]
fn random_policy_earns_nothing_in_an_empty_world() {
    let world = Arc::new(WorldMap::empty("void", 20, 20).unwrap());
    let pts: Vec<Point> = (0..6).map(|i| Point::new(2.5 + 3.0 * i as f64, 10.5)).collect();
    let nodes = NodeSet::new(&world, pts, 0).unwrap();
    let inst = Instance::new(world, nodes, SensorConfig { ray_count: 16, max_range: 6.0 }).unwrap();
    let budget = Budget::new(100.0, 5).unwrap();
    let ev = evaluate(Policy::Heuristic(PolicyKind::Random), &[inst], &budget, 5, 3, &[]).unwrap();
    for tr in &ev.traces {
        assert_eq!(tr.final_reward(), 0.0);
        assert_eq!(tr.steps.len(), 5);
        assert!(tr.audit.is_ok());
    }
    assert!(ev.summary.iter().all(|r| r.mean == 0.0 && r.ci_lo == 0.0 && r.ci_hi == 0.0));
}

#[test]
fn evaluation_is_deterministic_and_feasible() {
    let insts = instances(WorldFamily::PerimeterBlocks, 3, 8);
    let budget = Budget::new(30.0, 5).unwrap();
    for kind in [PolicyKind::Random, PolicyKind::RearSideVoxel, PolicyKind::ProximityCount] {
        let a = evaluate(Policy::Heuristic(kind), &insts, &budget, 6, 11, &[0, 5]).unwrap();
        let b = evaluate(Policy::Heuristic(kind), &insts, &budget, 6, 11, &[0, 5]).unwrap();
        for (x, y) in a.traces.iter().zip(&b.traces) {
            assert_eq!(x.path, y.path);
            assert_eq!(x.snapshots, y.snapshots);
            assert!(x.audit.is_ok(), "{:?}", x.audit);
            assert!(x.travel_cost <= budget.travel + 1e-9);
        }
        assert_eq!(a.summary.len(), budget.horizon);
    }
    let o = run_episode(Policy::Oracle, &insts[0], &budget, 0, &[]).unwrap();
    assert!(audit_path(insts[0].nodes(), &o.path, &budget).is_ok());
    let mut prev = 0.0;
    for s in &o.steps {
        assert!(s.cumulative + 1e-12 >= prev);
        prev = s.cumulative;
    }
}

#[test]
fn stalled_episode_reports_termination() {
    let world = Arc::new(WorldMap::empty("far", 40, 40).unwrap());
    let nodes = NodeSet::new(&world, vec![Point::new(0.5, 0.5), Point::new(39.5, 39.5)], 0).unwrap();
    let inst = Instance::new(world, nodes, SensorConfig { ray_count: 8, max_range: 3.0 }).unwrap();
    let budget = Budget::new(5.0, 3).unwrap();
    let tr = run_episode(Policy::Heuristic(PolicyKind::AverageEntropy), &inst, &budget, 0, &[]).unwrap();
    assert_eq!(tr.termination, Termination::NoFeasibleAction);
    assert_eq!(tr.path, vec![0]);
    assert_eq!(tr.cumulative_at(3), 0.0);
}

#[test]
fn zero_episodes_is_empty() {
    let insts = instances(WorldFamily::RandomDisks, 1, 1);
    let ev = evaluate(Policy::Oracle, &insts, &Budget::new(10.0, 3).unwrap(), 0, 0, &[]).unwrap();
    assert!(ev.traces.is_empty());
    assert!(ev.summary.is_empty());
}
