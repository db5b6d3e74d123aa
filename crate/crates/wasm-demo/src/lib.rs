//! A single-page demo. The page generates a world, casts a ray fan wherever the user
//! clicks and runs a whole episode of a chosen policy, drawing the evidence grid and path.
//!
//! The `Scene` methods return plain Rust results so the logic can be tested natively;
//! the `#[wasm_bindgen]` wrappers only convert errors for JS.

use std::sync::Arc;

use explore_core::explore::{run_episode, Policy};
use explore_core::objective::{Budget, Instance};
use explore_core::planners::PolicyKind;
use explore_core::sensor::{raycast, Belief, SensorConfig};
use explore_core::worldgen::{generate_dataset, DatasetSpec, WorldFamily};
use explore_core::Point;
use wasm_bindgen::prelude::*;

const SIDE: usize = 64;

/// Cell codes shared with the page: 0 unknown, 1 free, 2 occupied.
fn evidence_codes(belief: &Belief) -> Vec<u8> {
    belief
        .render()
        .chars()
        .filter_map(|c| match c {
            'U' => Some(0),
            'F' => Some(1),
            'O' => Some(2),
            _ => None,
        })
        .collect()
}

#[wasm_bindgen]
pub struct Scene {
    inst: Instance,
}

#[wasm_bindgen]
pub struct Episode {
    evidence: Vec<u8>,
    path: Vec<u32>,
    cumulative: Vec<f64>,
}

#[wasm_bindgen]
impl Episode {
    /// One code per cell, row-major.
    pub fn evidence(&self) -> Vec<u8> {
        self.evidence.clone()
    }

    /// Visited node indices, start first.
    pub fn path(&self) -> Vec<u32> {
        self.path.clone()
    }

    /// Cumulative reward after each step.
    pub fn cumulative(&self) -> Vec<f64> {
        self.cumulative.clone()
    }
}

impl Scene {
    pub fn generate(family: &str, seed: u32, nodes: usize, rays: usize, range: f64) -> Result<Scene, String> {
        let family: WorldFamily = family.parse().map_err(|e: explore_core::Error| e.to_string())?;
        let spec = DatasetSpec::new(family, 1, nodes, seed as u64).with_grid(SIDE, SIDE);
        let d = generate_dataset(&spec).map_err(|e| e.to_string())?.remove(0);
        let sensor = SensorConfig {
            ray_count: rays,
            max_range: range,
        };
        let inst = Instance::from_dataset(&d, sensor).map_err(|e| e.to_string())?;
        Ok(Scene { inst })
    }

    /// Evidence from a single scan at `(x, y)` in cell units.
    pub fn scan(&self, x: f64, y: f64) -> Result<Vec<u8>, String> {
        let world = self.inst.world();
        let m = raycast(world, Point::new(x, y), self.inst.sensor()).map_err(|e| e.to_string())?;
        let mut belief = Belief::for_world(world);
        belief.update(0, 0, Arc::new(m));
        Ok(evidence_codes(&belief))
    }

    pub fn episode(&self, policy: &str, travel: f64, horizon: usize, seed: u32) -> Result<Episode, String> {
        let kind: PolicyKind = policy.parse().map_err(|e: explore_core::Error| e.to_string())?;
        let policy = match kind {
            PolicyKind::OracleGcb => Policy::Oracle,
            PolicyKind::Learned => return Err("the demo has no trained model".into()),
            k => Policy::Heuristic(k),
        };
        let budget = Budget::new(travel, horizon).map_err(|e| e.to_string())?;
        let trace = run_episode(policy, &self.inst, &budget, seed as u64, &[])
            .map_err(|e| e.to_string())?;
        let mut belief = explore_core::explore::initial_belief(&self.inst);
        for w in trace.path.windows(2) {
            belief.update(w[0], w[1], Arc::clone(self.inst.measurement(w[1])));
        }
        Ok(Episode {
            evidence: evidence_codes(&belief),
            path: trace.path.iter().map(|&v| v as u32).collect(),
            cumulative: trace.steps.iter().map(|s| s.cumulative).collect(),
        })
    }
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(family: &str, seed: u32, nodes: usize, rays: usize, range: f64) -> Result<Scene, JsError> {
        Scene::generate(family, seed, nodes, rays, range).map_err(|e| JsError::new(&e))
    }

    pub fn side(&self) -> usize {
        SIDE
    }

    /// 1 for occupied cells, row-major.
    pub fn cells(&self) -> Vec<u8> {
        let w = self.inst.world();
        (0..w.len()).map(|i| w.is_occupied(i) as u8).collect()
    }

    /// Node positions as `x0, y0, x1, y1, ...`.
    pub fn nodes(&self) -> Vec<f64> {
        self.inst.nodes().positions().iter().flat_map(|p| [p.x, p.y]).collect()
    }

    #[wasm_bindgen(js_name = scanAt)]
    pub fn scan_at(&self, x: f64, y: f64) -> Result<Vec<u8>, JsError> {
        self.scan(x, y).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = runEpisode)]
    pub fn run_episode(&self, policy: &str, travel: f64, horizon: usize, seed: u32) -> Result<Episode, JsError> {
        self.episode(policy, travel, horizon, seed).map_err(|e| JsError::new(&e))
    }
}
