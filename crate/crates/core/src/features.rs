//! Feature map `(state, action, belief) -> [information gain; motion]`.
//!
//! Information-gain terms are computed by casting the sensor's rays on the evidence
//! grid from the candidate node. Unknown and free cells are transparent, known
//! occupied cells stop a ray (and are themselves visible). Unknown cells have
//! occupancy probability 0.5 (entropy 1 bit); known cells have entropy 0.
//!
//! Schema version 1, 16 entries. `N = ray_count * max_range` bounds the number of cells
//! a view can reach and normalizes the count-like entries.
//!
//! | # | feature | normalizer |
//! |---|---------|------------|
//! | 0 | average entropy of visible cells | already in `[0, 1]` |
//! | 1 | occlusion-aware entropy (entropy weighted by visibility probability) | `N` |
//! | 2 | unobserved (unknown) visible cells | `N` |
//! | 3 | rear-side cells: visible unknown cells 8-adjacent to a known occupied cell | `N` |
//! | 4 | rear-side entropy (visibility weighted) | `N` |
//! | 5 | proximity count: visible unknown cells weighted by `1 / (1 + d)` to the nearest known occupied cell | `N` |
//! | 6 | visible frontier cells (unknown, 4-adjacent to known free) | `N` |
//! | 7 | distance from the node to the nearest frontier cell | grid diagonal, 1 when there is no frontier |
//! | 8 | visible cells | `N` |
//! | 9 | visible known-occupied cells | `N` |
//! | 10 | steps left in the horizon after the move | `T` |
//! | 11 | mean ray length on the evidence grid | `max_range` |
//! | 12 | observed surface cells so far | `ray_count * (T + 1)`, the most a full path can observe |
//! | 13 | travel distance to the node | `B` (0 when `B` is infinite) |
//! | 14 | heading change from the previous move | `pi` |
//! | 15 | remaining budget fraction after the move | `B` (1 when `B` is infinite) |

use std::f64::consts::PI;

use crate::geometry::{angle_difference, Point};
use crate::objective::{Budget, PathState};
use crate::planners::PolicyKind;
use crate::sensor::{march, Belief, Evidence, SensorConfig};
use crate::worldgen::NodeSet;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const FEATURE_COUNT: usize = 16;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "average_entropy",
    "occlusion_aware_entropy",
    "unobserved_cells",
    "rear_side_cells",
    "rear_side_entropy",
    "proximity_count",
    "visible_frontier_cells",
    "frontier_distance",
    "visible_cells",
    "visible_occupied_cells",
    "steps_left",
    "mean_ray_length",
    "observed_surface",
    "travel_distance",
    "heading_change",
    "remaining_budget",
];

/// Index of the normalized travel distance, the first motion feature.
pub const TRAVEL_DISTANCE: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    schema_version: u32,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, schema_version: u32) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite feature value {v}")));
        }
        Ok(FeatureVector {
            values,
            schema_version,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Grid-wide quantities derived once per belief and shared by every candidate view.
#[derive(Debug, Clone)]
pub struct BeliefAnalysis<'a> {
    belief: &'a Belief,
    rear_side: Vec<bool>,
    frontier: Vec<bool>,
    frontier_cells: Vec<usize>,
    /// Chamfer distance (cells) to the nearest known occupied cell.
    occupied_distance: Option<Vec<f64>>,
}

impl<'a> BeliefAnalysis<'a> {
    pub fn new(belief: &'a Belief) -> Self {
        let (w, h) = (belief.width(), belief.height());
        let n = w * h;
        let mut rear_side = vec![false; n];
        let mut frontier = vec![false; n];
        let mut frontier_cells = Vec::new();
        let mut any_occupied = false;
        for idx in 0..n {
            let e = belief.evidence_at(idx);
            if e == Evidence::Occupied {
                any_occupied = true;
            }
            if e != Evidence::Unknown {
                continue;
            }
            let (x, y) = ((idx % w) as i64, (idx / w) as i64);
            rear_side[idx] = (-1..=1).any(|dy| {
                (-1..=1).any(|dx| belief.get(x + dx, y + dy) == Some(Evidence::Occupied))
            });
            frontier[idx] = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|&(dx, dy)| belief.get(x + dx, y + dy) == Some(Evidence::Free));
            if frontier[idx] {
                frontier_cells.push(idx);
            }
        }
        let occupied_distance = any_occupied.then(|| chamfer_distance(belief));
        BeliefAnalysis {
            belief,
            rear_side,
            frontier,
            frontier_cells,
            occupied_distance,
        }
    }

    pub fn belief(&self) -> &Belief {
        self.belief
    }

    pub fn is_rear_side(&self, index: usize) -> bool {
        self.rear_side[index]
    }

    pub fn is_frontier(&self, index: usize) -> bool {
        self.frontier[index]
    }

    pub fn frontier_cells(&self) -> &[usize] {
        &self.frontier_cells
    }

    /// Raw information-gain statistics of a view from `pos` (world units).
    pub fn view(&self, pos: Point, sensor: &SensorConfig) -> ViewStats {
        let b = self.belief;
        let (w, h) = (b.width(), b.height());
        let origin = Point::new(pos.x / b.resolution(), pos.y / b.resolution());

        // (cell, visibility probability) for every ray step
        let mut seen: Vec<(usize, f64)> = Vec::new();
        let mut total_length = 0.0;
        for k in 0..sensor.ray_count {
            let mut p_vis = 1.0;
            total_length += march(w, h, origin, sensor.ray_direction(k), sensor.max_range, |idx, _| {
                seen.push((idx, p_vis));
                match b.evidence_at(idx) {
                    Evidence::Occupied => false,
                    Evidence::Unknown => {
                        p_vis *= 0.5;
                        true
                    }
                    Evidence::Free => true,
                }
            });
        }
        // keep the most visible sighting of each cell
        seen.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
        seen.dedup_by_key(|s| s.0);

        let mut stats = ViewStats {
            mean_ray_length: total_length / sensor.ray_count as f64,
            ..ViewStats::default()
        };
        for &(idx, p_vis) in &seen {
            stats.visible += 1;
            match b.evidence_at(idx) {
                Evidence::Occupied => stats.visible_occupied += 1,
                Evidence::Free => {}
                Evidence::Unknown => {
                    stats.unobserved += 1;
                    stats.entropy_sum += 1.0;
                    stats.occlusion_aware += p_vis;
                    if self.rear_side[idx] {
                        stats.rear_side += 1;
                        stats.rear_side_entropy += p_vis;
                    }
                    if self.frontier[idx] {
                        stats.frontier_visible += 1;
                    }
                    if let Some(dist) = &self.occupied_distance {
                        stats.proximity += 1.0 / (1.0 + dist[idx]);
                    }
                }
            }
        }

        stats.min_frontier_distance = self
            .frontier_cells
            .iter()
            .map(|&idx| {
                let c = Point::new((idx % w) as f64 + 0.5, (idx / w) as f64 + 0.5);
                c.distance(origin)
            })
            .min_by(f64::total_cmp);

        stats
    }
}

/// Two-pass 8-neighbor chamfer distance (weights 1 and sqrt 2) to known occupied cells.
fn chamfer_distance(belief: &Belief) -> Vec<f64> {
    let (w, h) = (belief.width(), belief.height());
    let mut d: Vec<f64> = belief
        .evidence()
        .iter()
        .map(|e| if *e == Evidence::Occupied { 0.0 } else { f64::INFINITY })
        .collect();
    let diag = std::f64::consts::SQRT_2;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut best = d[i];
            if x > 0 {
                best = best.min(d[i - 1] + 1.0);
            }
            if y > 0 {
                best = best.min(d[i - w] + 1.0);
                if x > 0 {
                    best = best.min(d[i - w - 1] + diag);
                }
                if x + 1 < w {
                    best = best.min(d[i - w + 1] + diag);
                }
            }
            d[i] = best;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            let mut best = d[i];
            if x + 1 < w {
                best = best.min(d[i + 1] + 1.0);
            }
            if y + 1 < h {
                best = best.min(d[i + w] + 1.0);
                if x + 1 < w {
                    best = best.min(d[i + w + 1] + diag);
                }
                if x > 0 {
                    best = best.min(d[i + w - 1] + diag);
                }
            }
            d[i] = best;
        }
    }
    d
}

/// Raw (unnormalized) view statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewStats {
    pub visible: usize,
    pub visible_occupied: usize,
    pub unobserved: usize,
    pub entropy_sum: f64,
    pub occlusion_aware: f64,
    pub rear_side: usize,
    pub rear_side_entropy: f64,
    pub proximity: f64,
    pub frontier_visible: usize,
    pub min_frontier_distance: Option<f64>,
    pub mean_ray_length: f64,
}

impl ViewStats {
    pub fn average_entropy(&self) -> f64 {
        if self.visible == 0 {
            0.0
        } else {
            self.entropy_sum / self.visible as f64
        }
    }
}

/// The score behind each heuristic baseline, on raw statistics.
pub fn heuristic_value(kind: PolicyKind, stats: &ViewStats) -> Result<f64> {
    Ok(match kind {
        PolicyKind::AverageEntropy => stats.average_entropy(),
        PolicyKind::OcclusionAware => stats.occlusion_aware,
        PolicyKind::UnobservedVoxel => stats.unobserved as f64,
        PolicyKind::RearSideVoxel => stats.rear_side as f64,
        PolicyKind::RearSideEntropy => stats.rear_side_entropy,
        PolicyKind::ProximityCount => stats.proximity,
        other => {
            return Err(Error::Contract(format!("{other} has no information-gain score")))
        }
    })
}

/// Heuristic score of viewing from `pos`; `heuristic_select` maximizes this.
pub fn score(
    kind: PolicyKind,
    analysis: &BeliefAnalysis<'_>,
    pos: Point,
    sensor: &SensorConfig,
) -> Result<f64> {
    if !kind.is_heuristic() {
        return Err(Error::Contract(format!("{kind} has no information-gain score")));
    }
    heuristic_value(kind, &analysis.view(pos, sensor))
}

/// Feature extraction for many candidate actions against one belief.
pub struct FeatureContext<'a> {
    analysis: BeliefAnalysis<'a>,
    nodes: &'a NodeSet,
    sensor: &'a SensorConfig,
    budget: &'a Budget,
}

impl<'a> FeatureContext<'a> {
    pub fn new(
        belief: &'a Belief,
        nodes: &'a NodeSet,
        sensor: &'a SensorConfig,
        budget: &'a Budget,
    ) -> Self {
        FeatureContext {
            analysis: BeliefAnalysis::new(belief),
            nodes,
            sensor,
            budget,
        }
    }

    pub fn analysis(&self) -> &BeliefAnalysis<'a> {
        &self.analysis
    }

    /// Features of moving from `state` to `action`. The action may be any node whose
    /// travel fits in the budget; the current node itself gives null motion.
    pub fn extract(&self, state: &PathState, action: usize) -> Result<FeatureVector> {
        if action >= self.nodes.len() {
            return Err(Error::Contract(format!("action {action} is not a node")));
        }
        let from = state.last();
        let travel = self.nodes.distance(from, action);
        let b = self.budget.travel;
        if state.travel_cost() + travel > b {
            return Err(Error::Contract(format!(
                "action {action} exceeds the travel budget"
            )));
        }

        let pos = self.nodes.position(action);
        let s = self.analysis.view(pos, self.sensor);
        let belief = self.analysis.belief;
        let n_ref = (self.sensor.ray_count as f64 * self.sensor.max_range).max(1.0);
        let diagonal = (belief.width() as f64).hypot(belief.height() as f64);

        let heading_change = match state.visited() {
            [.., a, b] if travel > 0.0 => {
                let prev = self.nodes.position(*b) - self.nodes.position(*a);
                let next = pos - self.nodes.position(*b);
                angle_difference(prev.y.atan2(prev.x), next.y.atan2(next.x)).abs() / PI
            }
            _ => 0.0,
        };
        let (travel_feature, remaining) = if b.is_finite() && b > 0.0 {
            (
                travel / b,
                ((b - state.travel_cost() - travel) / b).clamp(0.0, 1.0),
            )
        } else if b.is_infinite() {
            (0.0, 1.0)
        } else {
            (0.0, 0.0)
        };

        let surface_capacity = (self.sensor.ray_count * self.budget.max_path_len()).max(1) as f64;
        let horizon = self.budget.horizon.max(1) as f64;
        let steps_left = (self.budget.max_path_len().saturating_sub(state.t() + 1)) as f64 / horizon;
        let values = vec![
            s.average_entropy(),
            s.occlusion_aware / n_ref,
            s.unobserved as f64 / n_ref,
            s.rear_side as f64 / n_ref,
            s.rear_side_entropy / n_ref,
            s.proximity / n_ref,
            s.frontier_visible as f64 / n_ref,
            s.min_frontier_distance
                .map_or(1.0, |d| (d / diagonal).min(1.0)),
            s.visible as f64 / n_ref,
            s.visible_occupied as f64 / n_ref,
            steps_left,
            s.mean_ray_length / self.sensor.max_range,
            (belief.covered_count() as f64 / surface_capacity).min(1.0),
            travel_feature,
            heading_change,
            remaining,
        ];
        FeatureVector::new(values, SCHEMA_VERSION)
    }
}

/// One-shot extraction; prefer [`FeatureContext`] when scoring many actions.
pub fn extract(
    belief: &Belief,
    nodes: &NodeSet,
    sensor: &SensorConfig,
    budget: &Budget,
    state: &PathState,
    action: usize,
) -> Result<FeatureVector> {
    FeatureContext::new(belief, nodes, sensor, budget).extract(state, action)
}
