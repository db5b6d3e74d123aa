//! Raycast measurement model and the evidence-grid belief.

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::geometry::Point;
use crate::worldgen::{Cell, WorldMap};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub ray_count: usize,
    /// Maximum ray length in cells.
    pub max_range: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            ray_count: 64,
            max_range: 30.0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ray_count == 0 {
            return Err(Error::Config("ray_count must be positive".into()));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(Error::Config("max_range must be positive and finite".into()));
        }
        Ok(())
    }

    pub(crate) fn ray_direction(&self, k: usize) -> (f64, f64) {
        let angle = TAU * k as f64 / self.ray_count as f64;
        let (s, c) = angle.sin_cos();
        (c, s)
    }
}

/// Walks the cells pierced by a ray, starting after the cell containing `origin`
/// (grid units). `visit(index, entry_distance)` returns whether to continue.
/// Returns the distance at which the walk stopped.
///
/// Exact corner crossings step into the neighbor with the lower linear index first.
pub(crate) fn march(
    width: usize,
    height: usize,
    origin: Point,
    dir: (f64, f64),
    max_range: f64,
    mut visit: impl FnMut(usize, f64) -> bool,
) -> f64 {
    let (dx, dy) = dir;
    let mut cx = origin.x.floor() as i64;
    let mut cy = origin.y.floor() as i64;
    let axis = |o: f64, c: i64, d: f64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((c + 1) as f64 - o) / d, 1.0 / d)
        } else if d < 0.0 {
            (-1, (o - c as f64) / -d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut t_max_x, delta_x) = axis(origin.x, cx, dx);
    let (step_y, mut t_max_y, delta_y) = axis(origin.y, cy, dy);
    let (w, h) = (width as i64, height as i64);

    loop {
        let step_in_x = if t_max_x < t_max_y {
            true
        } else if t_max_y < t_max_x {
            false
        } else {
            // tie at a corner: x neighbor index differs by step_x, y neighbor by step_y * width
            step_x < step_y * w
        };
        let t = if step_in_x {
            cx += step_x;
            let t = t_max_x;
            t_max_x += delta_x;
            t
        } else {
            cy += step_y;
            let t = t_max_y;
            t_max_y += delta_y;
            t
        };
        if t > max_range {
            return max_range;
        }
        if cx < 0 || cy < 0 || cx >= w || cy >= h {
            return t;
        }
        if !visit((cy * w + cx) as usize, t) {
            return t;
        }
    }
}

/// Result of sensing at one node: the occupied cells struck and the free cells crossed.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub node: Point,
    /// Sorted, deduplicated indices of occupied cells hit.
    pub hits: Vec<usize>,
    /// Sorted, deduplicated indices of free cells crossed (the node's own cell excluded).
    pub free_traversed: Vec<usize>,
    pub ray_count: usize,
    pub max_range: f64,
}

/// Casts `cfg.ray_count` evenly spaced rays from `node` (world units) on the true world.
pub fn raycast(world: &WorldMap, node: Point, cfg: &SensorConfig) -> Result<Measurement> {
    cfg.validate()?;
    match world.cell_at(node) {
        Some((x, y)) if world.cell(x, y) == Cell::Free => {}
        Some(_) => {
            return Err(Error::Sensing(format!(
                "node ({}, {}) lies inside an occupied cell",
                node.x, node.y
            )))
        }
        None => {
            return Err(Error::Sensing(format!(
                "node ({}, {}) lies outside the world",
                node.x, node.y
            )))
        }
    }
    let origin = Point::new(node.x / world.resolution(), node.y / world.resolution());
    let mut hits = Vec::new();
    let mut free = Vec::new();
    for k in 0..cfg.ray_count {
        march(
            world.width(),
            world.height(),
            origin,
            cfg.ray_direction(k),
            cfg.max_range,
            |idx, _| {
                if world.is_occupied(idx) {
                    hits.push(idx);
                    false
                } else {
                    free.push(idx);
                    true
                }
            },
        );
    }
    hits.sort_unstable();
    hits.dedup();
    free.sort_unstable();
    free.dedup();
    Ok(Measurement {
        node,
        hits,
        free_traversed: free,
        ray_count: cfg.ray_count,
        max_range: cfg.max_range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Evidence {
    Unknown,
    Free,
    Occupied,
}

impl Evidence {
    pub fn symbol(self) -> char {
        match self {
            Evidence::Unknown => 'U',
            Evidence::Free => 'F',
            Evidence::Occupied => 'O',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    /// Node the robot was at when it chose the action.
    pub state_node: usize,
    pub action_node: usize,
    pub measurement: Arc<Measurement>,
}

/// History of (state, action, observation) plus the evidence grid folded from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    width: usize,
    height: usize,
    resolution: f64,
    history: Vec<HistoryEntry>,
    evidence: Vec<Evidence>,
    covered: Vec<bool>,
    covered_count: usize,
    known_count: usize,
}

impl Belief {
    pub fn new(width: usize, height: usize) -> Self {
        Belief {
            width,
            height,
            resolution: 1.0,
            history: Vec::new(),
            evidence: vec![Evidence::Unknown; width * height],
            covered: vec![false; width * height],
            covered_count: 0,
            known_count: 0,
        }
    }

    pub fn for_world(world: &WorldMap) -> Self {
        let mut belief = Self::new(world.width(), world.height());
        belief.resolution = world.resolution();
        belief
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// World units per cell.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn evidence(&self) -> &[Evidence] {
        &self.evidence
    }

    pub fn evidence_at(&self, index: usize) -> Evidence {
        self.evidence[index]
    }

    /// Out-of-grid lookups return `None`.
    pub fn get(&self, x: i64, y: i64) -> Option<Evidence> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.evidence[y as usize * self.width + x as usize])
        }
    }

    pub fn known_count(&self) -> usize {
        self.known_count
    }

    pub fn covered_count(&self) -> usize {
        self.covered_count
    }

    pub fn is_covered(&self, index: usize) -> bool {
        self.covered[index]
    }

    /// Appends to the history and folds the measurement into the evidence grid.
    pub fn update(&mut self, state_node: usize, action_node: usize, meas: Arc<Measurement>) {
        for &idx in &meas.hits {
            if self.evidence[idx] == Evidence::Unknown {
                self.known_count += 1;
            }
            self.evidence[idx] = Evidence::Occupied;
            if !self.covered[idx] {
                self.covered[idx] = true;
                self.covered_count += 1;
            }
        }
        for &idx in &meas.free_traversed {
            if self.evidence[idx] == Evidence::Unknown {
                self.evidence[idx] = Evidence::Free;
                self.known_count += 1;
            }
        }
        self.history.push(HistoryEntry {
            state_node,
            action_node,
            measurement: meas,
        });
    }

    pub fn updated(&self, state_node: usize, action_node: usize, meas: Arc<Measurement>) -> Belief {
        let mut next = self.clone();
        next.update(state_node, action_node, meas);
        next
    }

    /// Plain-text grid of `U`/`F`/`O`, one line per row starting at `y = 0`.
    pub fn render(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for row in self.evidence.chunks(self.width) {
            s.extend(row.iter().map(|e| e.symbol()));
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rays: usize, range: f64) -> SensorConfig {
        SensorConfig {
            ray_count: rays,
            max_range: range,
        }
    }

    #[test]
    fn enclosed_node_hits_its_ring() {
        let world = WorldMap::from_fn("ring", 5, 5, |x, y| {
            (1..=3).contains(&x) && (1..=3).contains(&y) && (x, y) != (2, 2)
        })
        .unwrap();
        let m = raycast(&world, Point::new(2.5, 2.5), &cfg(64, 10.0)).unwrap();
        assert!(m.free_traversed.is_empty());
        let ring: Vec<usize> = (0..25)
            .filter(|&i| world.is_occupied(i))
            .collect();
        // Rays through the diagonal corners are resolved toward a 4-neighbor first,
        // so only the four edge neighbors are ever reached.
        for h in &m.hits {
            assert!(ring.contains(h));
            let (x, y) = world.coords(*h);
            assert!((x as i64 - 2).abs() + (y as i64 - 2).abs() >= 1);
        }
        assert!(m.hits.len() >= 4);
    }

    #[test]
    fn free_world_traverses_disc() {
        let world = WorldMap::empty("free", 41, 41).unwrap();
        let m = raycast(&world, Point::new(20.5, 20.5), &cfg(128, 10.0)).unwrap();
        assert!(m.hits.is_empty());
        for &i in &m.free_traversed {
            let (x, y) = world.coords(i);
            // entry distance <= 10 puts the cell's nearest point within 10
            let dx = (x as f64 + 0.5 - 20.5).abs() - 0.5;
            let dy = (y as f64 + 0.5 - 20.5).abs() - 0.5;
            assert!(dx.max(0.0).hypot(dy.max(0.0)) <= 10.0 + 1e-9);
        }
        let own = world.index(20, 20);
        assert!(!m.free_traversed.contains(&own));
        // every axis-aligned neighbor out to range 10 is traversed
        for d in 1..=9 {
            assert!(m.free_traversed.contains(&world.index(20 + d, 20)));
            assert!(m.free_traversed.contains(&world.index(20, 20 - d)));
        }
    }

    #[test]
    fn occupied_or_outside_node_is_an_error() {
        let world = WorldMap::from_fn("w", 3, 3, |x, y| (x, y) == (1, 1)).unwrap();
        assert!(matches!(
            raycast(&world, Point::new(1.5, 1.5), &SensorConfig::default()),
            Err(Error::Sensing(_))
        ));
        assert!(matches!(
            raycast(&world, Point::new(-1.0, 1.5), &SensorConfig::default()),
            Err(Error::Sensing(_))
        ));
    }

    #[test]
    fn corner_tie_prefers_lower_index() {
        // From the center of cell (1,1) heading exactly to +x,+y corners: the first
        // step goes to the lower-index neighbor, (2,1), not (1,2).
        let mut first = None;
        march(4, 4, Point::new(1.5, 1.5), (1.0, 1.0), 10.0, |i, _| {
            first.get_or_insert(i);
            false
        });
        assert_eq!(first, Some(4 + 2));
        let mut first = None;
        march(4, 4, Point::new(1.5, 1.5), (-1.0, -1.0), 10.0, |i, _| {
            first.get_or_insert(i);
            false
        });
        assert_eq!(first, Some(1)); // (1,0) has index 1, below (0,1) at 4
    }

    #[test]
    fn belief_single_step_and_idempotence() {
        let world = WorldMap::from_fn("w", 12, 12, |x, _| x == 8).unwrap();
        let m = Arc::new(raycast(&world, Point::new(2.5, 6.5), &cfg(32, 20.0)).unwrap());
        let b = Belief::for_world(&world).updated(0, 0, Arc::clone(&m));
        assert_eq!(b.known_count(), m.hits.len() + m.free_traversed.len());
        assert_eq!(b.covered_count(), m.hits.len());
        let twice = b.updated(0, 0, Arc::clone(&m));
        assert_eq!(twice.evidence(), b.evidence());
        assert_eq!(twice.covered_count(), b.covered_count());
        assert_eq!(twice.history().len(), 2);
    }

    #[test]
    fn render_uses_three_symbols() {
        let world = WorldMap::from_fn("w", 4, 2, |x, _| x == 3).unwrap();
        let m = Arc::new(raycast(&world, Point::new(0.5, 0.5), &cfg(8, 5.0)).unwrap());
        let text = Belief::for_world(&world).updated(0, 0, m).render();
        assert_eq!(text.lines().count(), 2);
        assert!(text.chars().all(|c| "UFO\n".contains(c)));
        assert!(text.contains('O'));
    }
}
