//! The clairvoyant GCB oracle, oracle value-to-go, information-gain baselines and an
//! exhaustive solver for tiny instances.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::features::{score, BeliefAnalysis};
use crate::objective::{Budget, CoverageSet, Instance, PathState};
use crate::sensor::Belief;
use crate::{Error, Result};

/// Floor on the insertion cost so that zero-length detours still rank by gain.
const MIN_INSERTION_COST: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePlan {
    /// Nodes to visit after the current state, in visit order.
    pub path: Vec<usize>,
    /// Coverage of the visited nodes together with the plan.
    pub predicted_utility: f64,
    /// Travel length of the plan starting from the current node.
    pub predicted_cost: f64,
}

/// Generalized cost-benefit greedy from `state`. Each round inserts a node at its
/// cheapest position while the extension stays within `budget_remaining` and
/// `steps_remaining` nodes. Two passes rank candidates by coverage gain per unit of
/// detour and by raw coverage gain; the result is the best of both passes and the best
/// affordable single node. Ties go to the lowest index, and to the earlier candidate.
pub fn gcb_solve(
    inst: &Instance,
    state: &PathState,
    budget_remaining: f64,
    steps_remaining: usize,
) -> OraclePlan {
    let nodes = inst.nodes();
    let origin = state.last();
    let base = inst.covered_by(state.visited());

    let mut best = greedy_pass(inst, state, &base, budget_remaining, steps_remaining, |gain, detour| {
        gain / detour.max(MIN_INSERTION_COST)
    });
    let by_gain = greedy_pass(inst, state, &base, budget_remaining, steps_remaining, |gain, _| gain);
    if by_gain.1 > best.1 {
        best = by_gain;
    }

    let mut single: Option<(usize, usize)> = None;
    if steps_remaining > 0 {
        for v in 0..nodes.len() {
            if state.contains(v) || nodes.distance(origin, v) > budget_remaining {
                continue;
            }
            let gain = base.gain(inst.measurement(v));
            if gain > 0 && single.is_none_or(|(_, g)| gain > g) {
                single = Some((v, gain));
            }
        }
    }

    match single {
        Some((v, gain)) if base.count() + gain > best.1 => OraclePlan {
            path: vec![v],
            predicted_utility: inst.fraction(base.count() + gain),
            predicted_cost: nodes.distance(origin, v),
        },
        _ => OraclePlan {
            predicted_utility: inst.fraction(best.1),
            predicted_cost: extension_cost(inst, origin, &best.0),
            path: best.0,
        },
    }
}

/// Greedy insertion ranked by `rank(gain, detour)`; returns the sequence and the
/// covered count it reaches.
fn greedy_pass(
    inst: &Instance,
    state: &PathState,
    base: &CoverageSet,
    budget_remaining: f64,
    steps_remaining: usize,
    rank: impl Fn(f64, f64) -> f64,
) -> (Vec<usize>, usize) {
    let nodes = inst.nodes();
    let origin = state.last();
    let mut in_plan = vec![false; nodes.len()];
    for &v in state.visited() {
        in_plan[v] = true;
    }
    let mut covered = base.clone();
    let mut seq: Vec<usize> = Vec::new();
    let mut cost = 0.0;
    while seq.len() < steps_remaining {
        // (rank, node, insert position)
        let mut best: Option<(f64, usize, usize)> = None;
        for v in 0..nodes.len() {
            if in_plan[v] {
                continue;
            }
            let gain = covered.gain(inst.measurement(v));
            if gain == 0 {
                continue;
            }
            let (pos, detour) = cheapest_insertion(inst, origin, &seq, v);
            if cost + detour > budget_remaining {
                continue;
            }
            let r = rank(gain as f64, detour);
            if best.is_none_or(|(b, ..)| r > b) {
                best = Some((r, v, pos));
            }
        }
        let Some((_, v, pos)) = best else { break };
        seq.insert(pos, v);
        in_plan[v] = true;
        covered.insert(inst.measurement(v));
        cost = extension_cost(inst, origin, &seq);
    }
    let count = covered.count();
    (seq, count)
}

/// Best place to insert `v` into the open path `origin -> seq...`; returns the
/// position in `seq` and the added length.
fn cheapest_insertion(inst: &Instance, origin: usize, seq: &[usize], v: usize) -> (usize, f64) {
    let nodes = inst.nodes();
    let mut best = (seq.len(), nodes.distance(seq.last().copied().unwrap_or(origin), v));
    let mut prev = origin;
    for (i, &next) in seq.iter().enumerate() {
        let detour = nodes.distance(prev, v) + nodes.distance(v, next) - nodes.distance(prev, next);
        if detour < best.1 {
            best = (i, detour);
        }
        prev = next;
    }
    best
}

fn extension_cost(inst: &Instance, origin: usize, seq: &[usize]) -> f64 {
    let nodes = inst.nodes();
    let mut prev = origin;
    let mut total = 0.0;
    for &v in seq {
        total += nodes.distance(prev, v);
        prev = v;
    }
    total
}

/// One step of the receding-horizon oracle: replan with GCB and take the first node of
/// the plan. When no plan gains anything, moves to the nearest feasible node.
pub fn oracle_action(inst: &Instance, state: &PathState, budget: &Budget) -> Option<usize> {
    let feasible = inst.feasible_actions(state, budget);
    if feasible.is_empty() {
        return None;
    }
    let plan = gcb_solve(
        inst,
        state,
        budget.travel - state.travel_cost(),
        budget.max_path_len() - state.t(),
    );
    if let Some(&first) = plan.path.first() {
        if feasible.binary_search(&first).is_ok() {
            return Some(first);
        }
    }
    let nodes = inst.nodes();
    feasible.into_iter().min_by(|&a, &b| {
        nodes
            .distance(state.last(), a)
            .total_cmp(&nodes.distance(state.last(), b))
            .then(a.cmp(&b))
    })
}

/// Runs the oracle from `state` until the horizon or until nothing is feasible;
/// returns the visited nodes and the covered set reached.
pub fn oracle_rollout(
    inst: &Instance,
    mut state: PathState,
    mut covered: CoverageSet,
    budget: &Budget,
) -> (PathState, CoverageSet) {
    while let Some(a) = oracle_action(inst, &state, budget) {
        covered.insert(inst.measurement(a));
        state.push(a, inst.nodes());
    }
    (state, covered)
}

/// `Q(s, a)`: the one-step reward of `action` plus the rewards the oracle collects from
/// the successor state until the horizon.
pub fn oracle_value_to_go(
    inst: &Instance,
    state: &PathState,
    action: usize,
    budget: &Budget,
) -> Result<f64> {
    if !inst.is_feasible(state, action, budget) {
        return Err(Error::Contract(format!(
            "action {action} is not feasible from state {:?}",
            state.visited()
        )));
    }
    let covered = inst.covered_by(state.visited());
    let before = covered.count();
    let mut next_cov = covered;
    next_cov.insert(inst.measurement(action));
    let (_, after) = oracle_rollout(inst, state.with(action, inst.nodes()), next_cov, budget);
    // rewards telescope: sum of marginal gains over the coverable total
    Ok(inst.fraction(after.count() - before))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    OracleGcb,
    Learned,
    AverageEntropy,
    OcclusionAware,
    RearSideVoxel,
    RearSideEntropy,
    UnobservedVoxel,
    ProximityCount,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 9] = [
        PolicyKind::OracleGcb,
        PolicyKind::Learned,
        PolicyKind::AverageEntropy,
        PolicyKind::OcclusionAware,
        PolicyKind::RearSideVoxel,
        PolicyKind::RearSideEntropy,
        PolicyKind::UnobservedVoxel,
        PolicyKind::ProximityCount,
        PolicyKind::Random,
    ];

    pub const HEURISTICS: [PolicyKind; 6] = [
        PolicyKind::AverageEntropy,
        PolicyKind::OcclusionAware,
        PolicyKind::RearSideVoxel,
        PolicyKind::RearSideEntropy,
        PolicyKind::UnobservedVoxel,
        PolicyKind::ProximityCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::OracleGcb => "oracle_gcb",
            PolicyKind::Learned => "learned",
            PolicyKind::AverageEntropy => "average_entropy",
            PolicyKind::OcclusionAware => "occlusion_aware",
            PolicyKind::RearSideVoxel => "rear_side_voxel",
            PolicyKind::RearSideEntropy => "rear_side_entropy",
            PolicyKind::UnobservedVoxel => "unobserved_voxel",
            PolicyKind::ProximityCount => "proximity_count",
            PolicyKind::Random => "random",
        }
    }

    /// Information-gain heuristics scored on the evidence grid.
    pub fn is_heuristic(self) -> bool {
        Self::HEURISTICS.contains(&self)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown policy kind {s:?}")))
    }
}

/// Baseline action selection on the belief: argmax of the heuristic's score over
/// feasible actions (lowest index on ties), or a uniform pick for
/// [`PolicyKind::Random`]. `Ok(None)` means no feasible action remains.
pub fn heuristic_select(
    kind: PolicyKind,
    inst: &Instance,
    belief: &Belief,
    state: &PathState,
    budget: &Budget,
    rng: &mut impl Rng,
) -> Result<Option<usize>> {
    if !(kind.is_heuristic() || kind == PolicyKind::Random) {
        return Err(Error::Contract(format!("{kind} is not a belief-space heuristic")));
    }
    let feasible = inst.feasible_actions(state, budget);
    if feasible.is_empty() {
        return Ok(None);
    }
    if kind == PolicyKind::Random {
        return Ok(Some(feasible[rng.gen_range(0..feasible.len())]));
    }
    if feasible.len() == 1 {
        return Ok(Some(feasible[0]));
    }
    let analysis = BeliefAnalysis::new(belief);
    let mut best: Option<(f64, usize)> = None;
    for a in feasible {
        let s = score(kind, &analysis, inst.nodes().position(a), inst.sensor())?;
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, a));
        }
    }
    Ok(best.map(|(_, a)| a))
}

pub const BRUTE_FORCE_MAX_NODES: usize = 10;
pub const BRUTE_FORCE_MAX_HORIZON: usize = 5;

/// Exhaustive search over every feasible path from the start node. Returns the best
/// path (start node included) and its coverage.
pub fn brute_force_solve(inst: &Instance, budget: &Budget) -> Result<(Vec<usize>, f64)> {
    if inst.nodes().len() > BRUTE_FORCE_MAX_NODES || budget.horizon > BRUTE_FORCE_MAX_HORIZON {
        return Err(Error::TooLarge(format!(
            "{} nodes, horizon {} (limits {BRUTE_FORCE_MAX_NODES}, {BRUTE_FORCE_MAX_HORIZON})",
            inst.nodes().len(),
            budget.horizon
        )));
    }
    fn dfs(
        inst: &Instance,
        budget: &Budget,
        state: &mut PathState,
        covered: &CoverageSet,
        best: &mut (Vec<usize>, usize),
    ) {
        if covered.count() > best.1 {
            *best = (state.visited().to_vec(), covered.count());
        }
        for a in inst.feasible_actions(state, budget) {
            let mut next = covered.clone();
            next.insert(inst.measurement(a));
            let saved = state.clone();
            state.push(a, inst.nodes());
            dfs(inst, budget, state, &next, best);
            *state = saved;
        }
    }
    let mut state = PathState::start(inst.nodes());
    let covered = inst.covered_by(state.visited());
    let mut best = (state.visited().to_vec(), covered.count());
    dfs(inst, budget, &mut state, &covered, &mut best);
    Ok((best.0, inst.fraction(best.1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::sensor::SensorConfig;
    use crate::worldgen::{NodeSet, WorldMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    /// Two walls far apart; node 0 sees neither, nodes 1 and 2 each see one wall.
    fn two_walls() -> Instance {
        let world = Arc::new(
            WorldMap::from_fn("walls", 40, 10, |x, y| (x == 2 || x == 37) && (2..8).contains(&y))
                .unwrap(),
        );
        let nodes = NodeSet::new(
            &world,
            vec![
                Point::new(20.5, 5.5),
                Point::new(5.5, 5.5),
                Point::new(34.5, 5.5),
            ],
            0,
        )
        .unwrap();
        let sensor = SensorConfig {
            ray_count: 64,
            max_range: 6.0,
        };
        Instance::new(world, nodes, sensor).unwrap()
    }

    #[test]
    fn zero_budget_gives_empty_plan() {
        let inst = two_walls();
        let s = PathState::start(inst.nodes());
        let plan = gcb_solve(&inst, &s, 0.0, 3);
        assert!(plan.path.is_empty());
        assert_eq!(plan.predicted_utility, 0.0);
        assert_eq!(plan.predicted_cost, 0.0);
    }

    #[test]
    fn single_affordable_node() {
        let inst = two_walls();
        let s = PathState::start(inst.nodes());
        // 14 reaches only node 2 (distance 14), not node 1 (distance 15)
        let plan = gcb_solve(&inst, &s, 14.5, 3);
        assert_eq!(plan.path, vec![2]);
        assert_eq!(plan.predicted_utility, 0.5);
        let plan = gcb_solve(&inst, &s, 100.0, 3);
        assert_eq!(plan.path.len(), 2);
        assert_eq!(plan.predicted_utility, 1.0);
        assert!(plan.predicted_cost <= 100.0);
    }

    #[test]
    fn value_to_go_last_step_is_one_step_reward() {
        let inst = two_walls();
        let b = Budget::new(100.0, 1).unwrap();
        let s = PathState::start(inst.nodes());
        assert_eq!(oracle_value_to_go(&inst, &s, 1, &b).unwrap(), inst.reward(&s, 1));
        let b2 = Budget::new(100.0, 2).unwrap();
        assert_eq!(oracle_value_to_go(&inst, &s, 1, &b2).unwrap(), 1.0);
        assert!(matches!(
            oracle_value_to_go(&inst, &s, 0, &b2),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn brute_force_guards_and_endpoints() {
        let inst = two_walls();
        let (path, u) = brute_force_solve(&inst, &Budget::new(0.0, 3).unwrap()).unwrap();
        assert_eq!(path, vec![0]);
        assert_eq!(u, 0.0);
        let (path, u) = brute_force_solve(&inst, &Budget::new(100.0, 1).unwrap()).unwrap();
        assert_eq!(path, vec![0, 1]);
        assert_eq!(u, 0.5);
        assert!(matches!(
            brute_force_solve(&inst, &Budget::new(1.0, 6).unwrap()),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn policy_kind_parsing() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
        assert!(!PolicyKind::OracleGcb.is_heuristic());
        assert!(!PolicyKind::Random.is_heuristic());
    }

    #[test]
    fn heuristics_reject_non_heuristic_kinds() {
        let inst = two_walls();
        let belief = Belief::for_world(inst.world());
        let s = PathState::start(inst.nodes());
        let b = Budget::new(100.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(heuristic_select(PolicyKind::Learned, &inst, &belief, &s, &b, &mut rng).is_err());
        let none = Budget::new(0.0, 2).unwrap();
        assert_eq!(
            heuristic_select(PolicyKind::RearSideVoxel, &inst, &belief, &s, &none, &mut rng)
                .unwrap(),
            None
        );
    }
}
