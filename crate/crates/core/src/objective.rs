//! Coverage utility, marginal gain, travel cost and budget feasibility.
//!
//! Coverage of a path is the number of occupied cells hit by the union of its
//! measurements divided by the number hit by *all* nodes of the instance, so visiting
//! every node yields exactly 1 and the one-step reward is the marginal gain divided by
//! the coverage of the full action set.

use std::sync::Arc;

use crate::sensor::{raycast, Measurement, SensorConfig};
use crate::worldgen::{DatasetInstance, NodeSet, WorldMap};
use crate::{par, Error, Result};

/// Travel budget `B` (distance units) and horizon `T` (sensing steps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub travel: f64,
    pub horizon: usize,
}

impl Budget {
    pub fn new(travel: f64, horizon: usize) -> Result<Self> {
        if travel.is_nan() || travel < 0.0 {
            return Err(Error::Config(format!("travel budget must be >= 0, got {travel}")));
        }
        if horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(Budget { travel, horizon })
    }

    /// Largest path length allowed by the cardinality constraint, `T + 1`.
    pub fn max_path_len(&self) -> usize {
        self.horizon + 1
    }
}

/// Visited nodes (starting at the start node) with their accumulated euclidean length.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    visited: Vec<usize>,
    travel_cost: f64,
}

impl PathState {
    pub fn start(nodes: &NodeSet) -> Self {
        PathState {
            visited: vec![nodes.start_index()],
            travel_cost: 0.0,
        }
    }

    /// Builds a state from an explicit node sequence, recomputing its cost.
    pub fn from_path(nodes: &NodeSet, visited: Vec<usize>) -> Result<Self> {
        if visited.first() != Some(&nodes.start_index()) {
            return Err(Error::Contract("path must begin at the start node".into()));
        }
        if let Some(&bad) = visited.iter().find(|&&v| v >= nodes.len()) {
            return Err(Error::Contract(format!("node {bad} out of range")));
        }
        let travel_cost = path_cost(nodes, &visited);
        Ok(PathState {
            visited,
            travel_cost,
        })
    }

    pub fn visited(&self) -> &[usize] {
        &self.visited
    }

    pub fn travel_cost(&self) -> f64 {
        self.travel_cost
    }

    /// Timestep `t = |visited|`; the start state has `t = 1`.
    pub fn t(&self) -> usize {
        self.visited.len()
    }

    pub fn last(&self) -> usize {
        *self.visited.last().expect("path state is never empty")
    }

    pub fn contains(&self, node: usize) -> bool {
        self.visited.contains(&node)
    }

    pub fn push(&mut self, node: usize, nodes: &NodeSet) {
        self.travel_cost += nodes.distance(self.last(), node);
        self.visited.push(node);
    }

    pub fn with(&self, node: usize, nodes: &NodeSet) -> PathState {
        let mut next = self.clone();
        next.push(node, nodes);
        next
    }
}

/// Sum of euclidean segment lengths along `path`.
pub fn path_cost(nodes: &NodeSet, path: &[usize]) -> f64 {
    path.windows(2).map(|w| nodes.distance(w[0], w[1])).sum()
}

/// Checks the budget and cardinality constraints and path well-formedness, recomputing
/// the travel cost from scratch.
pub fn audit_path(nodes: &NodeSet, path: &[usize], budget: &Budget) -> std::result::Result<(), String> {
    if path.first() != Some(&nodes.start_index()) {
        return Err("path does not begin at the start node".into());
    }
    if path.len() > budget.max_path_len() {
        return Err(format!(
            "path has {} nodes, horizon allows {}",
            path.len(),
            budget.max_path_len()
        ));
    }
    let mut seen = vec![false; nodes.len()];
    for &v in path {
        if v >= nodes.len() || std::mem::replace(&mut seen[v], true) {
            return Err(format!("node {v} is invalid or repeated"));
        }
    }
    let cost = path_cost(nodes, path);
    if cost > budget.travel + 1e-9 {
        return Err(format!("travel cost {cost} exceeds budget {}", budget.travel));
    }
    Ok(())
}

/// Set of covered occupied cells with an O(|hits|) gain query.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSet {
    mask: Vec<bool>,
    count: usize,
}

impl CoverageSet {
    pub fn new(cells: usize) -> Self {
        CoverageSet {
            mask: vec![false; cells],
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Number of hits in `meas` not yet covered.
    pub fn gain(&self, meas: &Measurement) -> usize {
        meas.hits.iter().filter(|&&i| !self.mask[i]).count()
    }

    /// Adds the hits of `meas`; returns how many were new.
    pub fn insert(&mut self, meas: &Measurement) -> usize {
        let mut added = 0;
        for &i in &meas.hits {
            if !self.mask[i] {
                self.mask[i] = true;
                added += 1;
            }
        }
        self.count += added;
        added
    }
}

/// A world paired with its node set and the true-world measurement at every node.
#[derive(Debug, Clone)]
pub struct Instance {
    world: Arc<WorldMap>,
    nodes: NodeSet,
    sensor: SensorConfig,
    measurements: Vec<Arc<Measurement>>,
    coverable: usize,
}

impl Instance {
    pub fn new(world: Arc<WorldMap>, nodes: NodeSet, sensor: SensorConfig) -> Result<Self> {
        sensor.validate()?;
        let measurements = par::map_indexed(nodes.len(), |i| {
            raycast(&world, nodes.position(i), &sensor).map(Arc::new)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mut all = CoverageSet::new(world.len());
        for m in &measurements {
            all.insert(m);
        }
        Ok(Instance {
            world,
            nodes,
            sensor,
            measurements,
            coverable: all.count(),
        })
    }

    pub fn from_dataset(inst: &DatasetInstance, sensor: SensorConfig) -> Result<Self> {
        Self::new(Arc::clone(&inst.world), inst.nodes.clone(), sensor)
    }

    pub fn world(&self) -> &WorldMap {
        &self.world
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn sensor(&self) -> &SensorConfig {
        &self.sensor
    }

    pub fn measurement(&self, node: usize) -> &Arc<Measurement> {
        &self.measurements[node]
    }

    /// Occupied cells seen by at least one node: the coverage denominator.
    pub fn coverable(&self) -> usize {
        self.coverable
    }

    pub fn covered_by(&self, visited: &[usize]) -> CoverageSet {
        let mut set = CoverageSet::new(self.world.len());
        for &v in visited {
            set.insert(&self.measurements[v]);
        }
        set
    }

    /// Converts a count of covered cells into a coverage fraction.
    pub fn fraction(&self, count: usize) -> f64 {
        if self.coverable == 0 {
            0.0
        } else {
            count as f64 / self.coverable as f64
        }
    }

    /// Fractional coverage `F(visited)` in `[0, 1]`.
    pub fn coverage(&self, visited: &[usize]) -> f64 {
        self.fraction(self.covered_by(visited).count())
    }

    /// `F(visited + v) - F(visited)`.
    pub fn marginal_gain(&self, v: usize, visited: &[usize]) -> f64 {
        self.fraction(self.covered_by(visited).gain(&self.measurements[v]))
    }

    /// Marginal gain normalized by the coverage of the full action set.
    pub fn reward(&self, state: &PathState, action: usize) -> f64 {
        let full = self.fraction(self.coverable);
        if full == 0.0 {
            0.0
        } else {
            self.marginal_gain(action, state.visited()) / full
        }
    }

    /// Unvisited nodes reachable within the remaining budget while the path length stays
    /// within `T + 1`, in ascending index order.
    pub fn feasible_actions(&self, state: &PathState, budget: &Budget) -> Vec<usize> {
        if state.t() >= budget.max_path_len() {
            return Vec::new();
        }
        let last = state.last();
        (0..self.nodes.len())
            .filter(|&a| {
                !state.contains(a)
                    && state.travel_cost() + self.nodes.distance(last, a) <= budget.travel
            })
            .collect()
    }

    pub fn is_feasible(&self, state: &PathState, action: usize, budget: &Budget) -> bool {
        action < self.nodes.len()
            && state.t() < budget.max_path_len()
            && !state.contains(action)
            && state.travel_cost() + self.nodes.distance(state.last(), action) <= budget.travel
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    /// 5x5 world with a single obstacle at (2, 2).
    fn single_obstacle() -> Instance {
        let world = Arc::new(WorldMap::from_fn("one", 5, 5, |x, y| (x, y) == (2, 2)).unwrap());
        let nodes = NodeSet::new(
            &world,
            vec![
                Point::new(0.5, 0.5),
                Point::new(4.5, 4.5),
                Point::new(0.5, 4.5),
            ],
            0,
        )
        .unwrap();
        Instance::new(world, nodes, SensorConfig::default()).unwrap()
    }

    #[test]
    fn coverage_endpoints() {
        let inst = single_obstacle();
        assert_eq!(inst.coverable(), 1);
        assert_eq!(inst.coverage(&[]), 0.0);
        assert_eq!(inst.coverage(&[0, 1, 2]), 1.0);
    }

    #[test]
    fn revisit_and_first_gain() {
        let inst = single_obstacle();
        assert_eq!(inst.marginal_gain(1, &[1]), 0.0);
        assert_eq!(inst.marginal_gain(1, &[]), inst.coverage(&[1]));
        let s = PathState::start(inst.nodes());
        assert_eq!(inst.reward(&s, 0), 0.0);
        // the obstacle is seen from the start node, so nothing is left to gain
        assert_eq!(inst.reward(&s, 1), 0.0);
    }

    #[test]
    fn empty_world_has_zero_coverage() {
        let world = Arc::new(WorldMap::empty("e", 6, 6).unwrap());
        let nodes = NodeSet::new(&world, vec![Point::new(1.5, 1.5), Point::new(4.5, 4.5)], 0).unwrap();
        let inst = Instance::new(world, nodes, SensorConfig::default()).unwrap();
        assert_eq!(inst.coverage(&[0, 1]), 0.0);
        assert_eq!(inst.reward(&PathState::start(inst.nodes()), 1), 0.0);
    }

    #[test]
    fn feasibility_endpoints() {
        let inst = single_obstacle();
        let s = PathState::start(inst.nodes());
        assert!(inst
            .feasible_actions(&s, &Budget::new(0.0, 3).unwrap())
            .is_empty());
        assert_eq!(
            inst.feasible_actions(&s, &Budget::new(f64::INFINITY, 3).unwrap()),
            vec![1, 2]
        );
        // horizon 1 allows exactly one more node
        let b = Budget::new(f64::INFINITY, 1).unwrap();
        let s2 = s.with(2, inst.nodes());
        assert!(inst.feasible_actions(&s2, &b).is_empty());
        // only node 2 (distance 4) fits a budget of 4.5
        assert_eq!(inst.feasible_actions(&s, &Budget::new(4.5, 3).unwrap()), vec![2]);
    }

    #[test]
    fn budget_validation() {
        assert!(Budget::new(-1.0, 3).is_err());
        assert!(Budget::new(1.0, 0).is_err());
        assert!(Budget::new(f64::NAN, 2).is_err());
    }

    #[test]
    fn audit_catches_violations() {
        let inst = single_obstacle();
        let b = Budget::new(5.0, 1).unwrap();
        assert!(audit_path(inst.nodes(), &[0, 2], &b).is_ok());
        assert!(audit_path(inst.nodes(), &[0, 1], &b).is_err()); // 5.66 > 5
        assert!(audit_path(inst.nodes(), &[0, 2, 1], &Budget::new(100.0, 1).unwrap()).is_err());
        assert!(audit_path(inst.nodes(), &[0, 2, 2], &Budget::new(100.0, 5).unwrap()).is_err());
        assert!(audit_path(inst.nodes(), &[1], &b).is_err());
    }
}
