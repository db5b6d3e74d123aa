//! Ground-truth world families, candidate sensing nodes and the dataset file.
//!
//! Worlds are binary occupancy grids with square cells. Cell `(x, y)` covers
//! `[x, x+1) x [y, y+1)` in grid units and is stored row-major (`y * width + x`).
//! Positions are continuous and expressed in world units (`grid * resolution`).

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::geometry::{point_segment_distance, Point};
use crate::seed;
use crate::{par, Error, Result};

const WORLD_STREAM: u64 = 0x0057_4f52_4c44;
const NODE_STREAM: u64 = 0x004e_4f44_4553;

/// Half thickness of rasterized line obstacles, in cells. Anything at or above
/// `sqrt(2)/2` keeps lines 4-connected so rays cannot slip through diagonals.
const LINE_HALF_THICKNESS: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Occupied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    id: String,
    width: usize,
    height: usize,
    resolution: f64,
    cells: Vec<Cell>,
}

impl WorldMap {
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        resolution: f64,
        cells: Vec<Cell>,
    ) -> Result<Self> {
        let id = id.into();
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "world dimensions must be positive, got {width}x{height}"
            )));
        }
        if cells.len() != width * height {
            return Err(Error::Config(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::Config(format!("invalid resolution {resolution}")));
        }
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("invalid world id {id:?}")));
        }
        Ok(WorldMap {
            id,
            width,
            height,
            resolution,
            cells,
        })
    }

    /// All-free world.
    pub fn empty(id: impl Into<String>, width: usize, height: usize) -> Result<Self> {
        Self::new(id, width, height, 1.0, vec![Cell::Free; width * height])
    }

    /// Builds a unit-resolution world from a predicate on `(x, y)`.
    pub fn from_fn(
        id: impl Into<String>,
        width: usize,
        height: usize,
        mut occupied: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut cells = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                cells.push(if occupied(x, y) { Cell::Occupied } else { Cell::Free });
            }
        }
        Self::new(id, width, height, 1.0, cells)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[self.index(x, y)]
    }

    /// Cell lookup that tolerates out-of-grid coordinates.
    pub fn get(&self, x: i64, y: i64) -> Option<Cell> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.cell(x as usize, y as usize))
        }
    }

    pub fn is_occupied(&self, index: usize) -> bool {
        self.cells[index] == Cell::Occupied
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Occupied).count()
    }

    /// Grid cell containing a world-unit position, if inside the grid.
    pub fn cell_at(&self, p: Point) -> Option<(usize, usize)> {
        let gx = (p.x / self.resolution).floor();
        let gy = (p.y / self.resolution).floor();
        if gx < 0.0 || gy < 0.0 || gx >= self.width as f64 || gy >= self.height as f64 {
            return None;
        }
        Some((gx as usize, gy as usize))
    }

    pub fn cell_center(&self, x: usize, y: usize) -> Point {
        Point::new(
            (x as f64 + 0.5) * self.resolution,
            (y as f64 + 0.5) * self.resolution,
        )
    }

    fn has_occupied_neighbor(&self, x: usize, y: usize) -> bool {
        let (x, y) = (x as i64, y as i64);
        (-1..=1).any(|dy| {
            (-1..=1).any(|dx| (dx, dy) != (0, 0) && self.get(x + dx, y + dy) == Some(Cell::Occupied))
        })
    }
}

/// Candidate sensing locations for one world; `nodes[start_index]` is the start node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    nodes: Vec<Point>,
    start_index: usize,
}

impl NodeSet {
    /// Validates the node list against `world`.
    pub fn new(world: &WorldMap, nodes: Vec<Point>, start_index: usize) -> Result<Self> {
        if start_index >= nodes.len() {
            return Err(Error::Config(format!(
                "start index {start_index} out of range for {} nodes",
                nodes.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, p) in nodes.iter().enumerate() {
            match world.cell_at(*p) {
                Some((x, y)) if world.cell(x, y) == Cell::Free => {}
                _ => {
                    return Err(Error::Config(format!(
                        "node {i} at ({}, {}) is not in a free cell",
                        p.x, p.y
                    )))
                }
            }
            if !seen.insert((p.x.to_bits(), p.y.to_bits())) {
                return Err(Error::Config(format!("node {i} duplicates an earlier node")));
            }
        }
        Ok(NodeSet { nodes, start_index })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn position(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn positions(&self) -> &[Point] {
        &self.nodes
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.nodes[a].distance(self.nodes[b])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WorldFamily {
    /// A randomly transformed pair of parallel line segments (concentrated information).
    ParallelLines,
    /// Rectangular blocks scattered along the map periphery (distributed information).
    PerimeterBlocks,
    RandomDisks,
    BlockWorld,
}

impl WorldFamily {
    pub const ALL: [WorldFamily; 4] = [
        WorldFamily::ParallelLines,
        WorldFamily::PerimeterBlocks,
        WorldFamily::RandomDisks,
        WorldFamily::BlockWorld,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorldFamily::ParallelLines => "parallel_lines",
            WorldFamily::PerimeterBlocks => "perimeter_blocks",
            WorldFamily::RandomDisks => "random_disks",
            WorldFamily::BlockWorld => "block_world",
        }
    }
}

impl fmt::Display for WorldFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorldFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        WorldFamily::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown world family {s:?}")))
    }
}

/// Knobs that pin parts of a family's randomness, mostly for tests.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyParams {
    /// When false, parallel lines are placed at the grid center with no rotation or scaling.
    pub random_transform: bool,
    /// Fixed number of blocks/disks instead of a random count.
    pub obstacle_count: Option<usize>,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            random_transform: true,
            obstacle_count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub family: WorldFamily,
    pub world_count: usize,
    pub node_sets_per_world: usize,
    pub nodes_per_world: usize,
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub seed: u64,
    pub params: FamilyParams,
}

impl DatasetSpec {
    pub fn new(family: WorldFamily, world_count: usize, nodes_per_world: usize, seed: u64) -> Self {
        DatasetSpec {
            family,
            world_count,
            node_sets_per_world: 1,
            nodes_per_world,
            width: 200,
            height: 200,
            resolution: 1.0,
            seed,
            params: FamilyParams::default(),
        }
    }

    pub fn with_grid(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn with_node_sets(mut self, per_world: usize) -> Self {
        self.node_sets_per_world = per_world;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.world_count < 1 {
            return Err(Error::Config("world_count must be at least 1".into()));
        }
        if self.nodes_per_world < 2 {
            return Err(Error::Config("nodes_per_world must be at least 2".into()));
        }
        if self.node_sets_per_world < 1 {
            return Err(Error::Config("node_sets_per_world must be at least 1".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::Config("resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Generates world `index` of `spec`; a pure function of `(spec, index)`.
pub fn generate_world(spec: &DatasetSpec, index: usize) -> Result<WorldMap> {
    spec.validate()?;
    if index >= spec.world_count {
        return Err(Error::Config(format!(
            "world index {index} out of range (world_count = {})",
            spec.world_count
        )));
    }
    let mut rng = seed::stream(spec.seed, &[WORLD_STREAM, index as u64]);
    let mut raster = Raster::new(spec.width, spec.height);
    match spec.family {
        WorldFamily::ParallelLines => parallel_lines(&mut raster, &spec.params, &mut rng),
        WorldFamily::PerimeterBlocks => perimeter_blocks(&mut raster, &spec.params, &mut rng),
        WorldFamily::RandomDisks => random_disks(&mut raster, &spec.params, &mut rng),
        WorldFamily::BlockWorld => block_world(&mut raster, &spec.params, &mut rng),
    }
    WorldMap::new(
        format!("{}-{}-{}", spec.family, spec.seed, index),
        spec.width,
        spec.height,
        spec.resolution,
        raster.cells,
    )
}

struct Raster {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

impl Raster {
    fn new(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            cells: vec![Cell::Free; width * height],
        }
    }

    fn min_dim(&self) -> f64 {
        self.width.min(self.height) as f64
    }

    fn fill_where(&mut self, bounds: (f64, f64, f64, f64), inside: impl Fn(Point) -> bool) {
        let (x0, y0, x1, y1) = bounds;
        let xs = x0.floor().max(0.0) as usize..(x1.ceil().max(0.0) as usize).min(self.width);
        let ys = y0.floor().max(0.0) as usize..(y1.ceil().max(0.0) as usize).min(self.height);
        for y in ys {
            for x in xs.clone() {
                if inside(Point::new(x as f64 + 0.5, y as f64 + 0.5)) {
                    self.cells[y * self.width + x] = Cell::Occupied;
                }
            }
        }
    }

    fn segment(&mut self, a: Point, b: Point) {
        let r = LINE_HALF_THICKNESS;
        let bounds = (
            a.x.min(b.x) - r,
            a.y.min(b.y) - r,
            a.x.max(b.x) + r,
            a.y.max(b.y) + r,
        );
        self.fill_where(bounds, |p| point_segment_distance(p, a, b) <= r);
    }

    /// Axis-aligned rectangle `[x0, x0+w) x [y0, y0+h)` in cells.
    fn rect(&mut self, x0: usize, y0: usize, w: usize, h: usize) {
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                self.cells[y * self.width + x] = Cell::Occupied;
            }
        }
    }

    fn disk(&mut self, c: Point, radius: f64) {
        let bounds = (c.x - radius, c.y - radius, c.x + radius, c.y + radius);
        self.fill_where(bounds, |p| p.distance(c) <= radius);
    }
}

fn parallel_lines(raster: &mut Raster, params: &FamilyParams, rng: &mut impl Rng) {
    let m = raster.min_dim();
    let half_length = 0.13 * m;
    let half_gap = 0.06 * m;
    let center = Point::new(raster.width as f64 / 2.0, raster.height as f64 / 2.0);
    let (angle, scale, offset) = if params.random_transform {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let scale = rng.gen_range(0.7..1.3);
        let offset = Point::new(
            rng.gen_range(0.2..0.8) * raster.width as f64,
            rng.gen_range(0.2..0.8) * raster.height as f64,
        );
        (angle, scale, offset)
    } else {
        (0.0, 1.0, center)
    };
    let place = |p: Point| p.rotate(angle) * scale + offset;
    for side in [-1.0, 1.0] {
        let a = place(Point::new(-half_length, side * half_gap));
        let b = place(Point::new(half_length, side * half_gap));
        raster.segment(a, b);
    }
}

fn perimeter_blocks(raster: &mut Raster, params: &FamilyParams, rng: &mut impl Rng) {
    let m = raster.min_dim();
    let count = params.obstacle_count.unwrap_or_else(|| rng.gen_range(14..=20));
    let min_side = ((0.04 * m).round() as usize).max(2);
    let max_side = ((0.10 * m).round() as usize).max(min_side + 1);
    // Blocks stay inside a band along the border, one cell away from the edge.
    let band = ((0.2 * m).round() as usize).max(max_side + 2);
    let (w, h) = (raster.width, raster.height);
    for _ in 0..count {
        let bw = rng.gen_range(min_side..=max_side);
        let bh = rng.gen_range(min_side..=max_side);
        if bw + 2 > w || bh + 2 > h {
            continue;
        }
        let along_x = rng.gen_range(1..=w - bw - 1);
        let along_y = rng.gen_range(1..=h - bh - 1);
        let inset_x = rng.gen_range(1..=band.saturating_sub(bw).max(1)).min(w - bw - 1);
        let inset_y = rng.gen_range(1..=band.saturating_sub(bh).max(1)).min(h - bh - 1);
        let (x0, y0) = match rng.gen_range(0..4) {
            0 => (along_x, inset_y),
            1 => (along_x, h - bh - inset_y),
            2 => (inset_x, along_y),
            _ => (w - bw - inset_x, along_y),
        };
        raster.rect(x0, y0, bw, bh);
    }
}

fn random_disks(raster: &mut Raster, params: &FamilyParams, rng: &mut impl Rng) {
    let m = raster.min_dim();
    let count = params.obstacle_count.unwrap_or_else(|| rng.gen_range(4..=8));
    let (w, h) = (raster.width as f64, raster.height as f64);
    for _ in 0..count {
        let radius = rng.gen_range((0.03 * m).max(1.0)..=(0.08 * m).max(1.5));
        if 2.0 * radius + 2.0 >= w.min(h) {
            continue;
        }
        let c = Point::new(
            rng.gen_range(radius + 1.0..w - radius - 1.0),
            rng.gen_range(radius + 1.0..h - radius - 1.0),
        );
        raster.disk(c, radius);
    }
}

fn block_world(raster: &mut Raster, params: &FamilyParams, rng: &mut impl Rng) {
    let m = raster.min_dim();
    let count = params.obstacle_count.unwrap_or_else(|| rng.gen_range(4..=8));
    let min_side = ((0.05 * m).round() as usize).max(2);
    let max_side = ((0.15 * m).round() as usize).max(min_side + 1);
    let (w, h) = (raster.width, raster.height);
    for _ in 0..count {
        let bw = rng.gen_range(min_side..=max_side);
        let bh = rng.gen_range(min_side..=max_side);
        if bw + 2 > w || bh + 2 > h {
            continue;
        }
        let x0 = rng.gen_range(1..=w - bw - 1);
        let y0 = rng.gen_range(1..=h - bh - 1);
        raster.rect(x0, y0, bw, bh);
    }
}

/// Samples `count` distinct nodes uniformly over free cells that have no occupied
/// 8-neighbor; node 0 is the start node. Positions are cell centers.
pub fn sample_nodes(world: &WorldMap, count: usize, seed: u64) -> Result<NodeSet> {
    if count == 0 {
        return Err(Error::Generation("node count must be at least 1".into()));
    }
    let candidates: Vec<usize> = (0..world.len())
        .filter(|&i| {
            let (x, y) = world.coords(i);
            world.cells[i] == Cell::Free && !world.has_occupied_neighbor(x, y)
        })
        .collect();
    if candidates.len() < count {
        return Err(Error::Generation(format!(
            "world {} has {} admissible free cells, {} nodes requested",
            world.id(),
            candidates.len(),
            count
        )));
    }
    let mut rng = seed::stream(seed, &[NODE_STREAM]);
    let nodes = index::sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|k| {
            let (x, y) = world.coords(candidates[k]);
            world.cell_center(x, y)
        })
        .collect();
    Ok(NodeSet {
        nodes,
        start_index: 0,
    })
}

/// One problem instance: a world paired with a candidate node set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetInstance {
    pub world: Arc<WorldMap>,
    pub nodes: NodeSet,
}

/// Generates `world_count x node_sets_per_world` instances; worlds are shared between
/// their node sets.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<DatasetInstance>> {
    spec.validate()?;
    let per_world: Vec<Result<Vec<DatasetInstance>>> = par::map_indexed(spec.world_count, |w| {
        let world = Arc::new(generate_world(spec, w)?);
        (0..spec.node_sets_per_world)
            .map(|j| {
                let node_seed = seed::derive_seed(spec.seed, &[NODE_STREAM, w as u64, j as u64]);
                Ok(DatasetInstance {
                    world: Arc::clone(&world),
                    nodes: sample_nodes(&world, spec.nodes_per_world, node_seed)?,
                })
            })
            .collect()
    });
    let mut out = Vec::with_capacity(spec.world_count * spec.node_sets_per_world);
    for chunk in per_world {
        out.extend(chunk?);
    }
    Ok(out)
}

const MAGIC: &str = "explore-dataset";
const FORMAT_VERSION: u32 = 1;
const RUNS_PER_LINE: usize = 32;

/// Writes the text dataset container:
///
/// ```text
/// explore-dataset 1
/// worlds <count>
/// world <id> <width> <height> <resolution>
/// F<n> O<n> ...          run-length encoded cells, row-major, wrapped lines
/// end-world
/// instances <count>
/// instance <world-index> <node-count> <start-index>
/// <x> <y>                one line per node
/// end
/// ```
pub fn write_dataset<W: Write>(mut out: W, instances: &[DatasetInstance]) -> Result<()> {
    let mut worlds: Vec<&Arc<WorldMap>> = Vec::new();
    let mut world_of = Vec::with_capacity(instances.len());
    for inst in instances {
        let pos = worlds
            .iter()
            .position(|w| Arc::ptr_eq(w, &inst.world) || ***w == *inst.world);
        let k = pos.unwrap_or_else(|| {
            worlds.push(&inst.world);
            worlds.len() - 1
        });
        world_of.push(k);
    }

    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(out, "worlds {}", worlds.len())?;
    for world in &worlds {
        writeln!(
            out,
            "world {} {} {} {}",
            world.id, world.width, world.height, world.resolution
        )?;
        let runs = run_lengths(&world.cells);
        for chunk in runs.chunks(RUNS_PER_LINE) {
            let line: Vec<String> = chunk
                .iter()
                .map(|(c, n)| format!("{}{}", if *c == Cell::Free { 'F' } else { 'O' }, n))
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        writeln!(out, "end-world")?;
    }
    writeln!(out, "instances {}", instances.len())?;
    for (inst, k) in instances.iter().zip(world_of) {
        writeln!(
            out,
            "instance {} {} {}",
            k,
            inst.nodes.len(),
            inst.nodes.start_index
        )?;
        for p in &inst.nodes.nodes {
            writeln!(out, "{} {}", p.x, p.y)?;
        }
    }
    writeln!(out, "end")?;
    Ok(())
}

fn run_lengths(cells: &[Cell]) -> Vec<(Cell, usize)> {
    let mut runs: Vec<(Cell, usize)> = Vec::new();
    for &c in cells {
        match runs.last_mut() {
            Some((last, n)) if *last == c => *n += 1,
            _ => runs.push((c, 1)),
        }
    }
    runs
}

pub fn save_dataset(path: impl AsRef<Path>, instances: &[DatasetInstance]) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, instances)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetInstance>> {
    let file = fs::File::open(path)?;
    read_dataset(BufReader::new(file))
}

pub fn parse_dataset(text: &str) -> Result<Vec<DatasetInstance>> {
    read_dataset(text.as_bytes())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self, what: &str) -> Result<String> {
        match self.inner.next() {
            Some(line) => {
                self.number += 1;
                Ok(line?)
            }
            None => Err(Error::parse(
                self.number + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.number, message)
    }

    fn keyword<'a>(&self, line: &'a str, key: &str, arity: usize) -> Result<Vec<&'a str>> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`, found {line:?}")));
        }
        let rest: Vec<&str> = parts.collect();
        if rest.len() != arity {
            return Err(self.err(format!(
                "`{key}` takes {arity} fields, found {}",
                rest.len()
            )));
        }
        Ok(rest)
    }

    fn number<T: FromStr>(&self, field: &str, what: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.err(format!("invalid {what} {field:?}")))
    }
}

/// Parses a dataset; never returns a partial result.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<DatasetInstance>> {
    let mut lines = Lines {
        inner: reader.lines(),
        number: 0,
    };

    let header = lines.next_line("header")?;
    let fields = lines.keyword(&header, MAGIC, 1)?;
    let version: u32 = lines.number(fields[0], "format version")?;
    if version != FORMAT_VERSION {
        return Err(lines.err(format!("unsupported dataset version {version}")));
    }

    let line = lines.next_line("world count")?;
    let world_count: usize = lines.number(lines.keyword(&line, "worlds", 1)?[0], "world count")?;
    let mut worlds = Vec::with_capacity(world_count);
    for _ in 0..world_count {
        let line = lines.next_line("world header")?;
        let f = lines.keyword(&line, "world", 4)?;
        let id = f[0].to_string();
        let width: usize = lines.number(f[1], "width")?;
        let height: usize = lines.number(f[2], "height")?;
        let resolution: f64 = lines.number(f[3], "resolution")?;
        let total = width
            .checked_mul(height)
            .ok_or_else(|| lines.err("grid too large"))?;
        let mut cells = Vec::with_capacity(total);
        loop {
            let line = lines.next_line("cell runs or end-world")?;
            if line.trim() == "end-world" {
                break;
            }
            for token in line.split_whitespace() {
                let (kind, count) = token.split_at(1);
                let cell = match kind {
                    "F" => Cell::Free,
                    "O" => Cell::Occupied,
                    _ => return Err(lines.err(format!("invalid run {token:?}"))),
                };
                let count: usize = lines.number(count, "run length")?;
                if cells.len() + count > total {
                    return Err(lines.err("runs exceed grid size"));
                }
                cells.extend(std::iter::repeat_n(cell, count));
            }
        }
        if cells.len() != total {
            return Err(lines.err(format!("runs cover {} of {} cells", cells.len(), total)));
        }
        let world = WorldMap::new(id, width, height, resolution, cells)
            .map_err(|e| lines.err(e.to_string()))?;
        worlds.push(Arc::new(world));
    }

    let line = lines.next_line("instance count")?;
    let instance_count: usize =
        lines.number(lines.keyword(&line, "instances", 1)?[0], "instance count")?;
    let mut instances = Vec::with_capacity(instance_count);
    for _ in 0..instance_count {
        let line = lines.next_line("instance header")?;
        let f = lines.keyword(&line, "instance", 3)?;
        let header_line = lines.number;
        let k: usize = lines.number(f[0], "world index")?;
        let count: usize = lines.number(f[1], "node count")?;
        let start: usize = lines.number(f[2], "start index")?;
        let world = worlds
            .get(k)
            .cloned()
            .ok_or_else(|| lines.err(format!("world index {k} out of range")))?;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let line = lines.next_line("node coordinates")?;
            let mut parts = line.split_whitespace();
            let (Some(x), Some(y), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(lines.err("expected `<x> <y>`"));
            };
            nodes.push(Point::new(lines.number(x, "x")?, lines.number(y, "y")?));
        }
        let nodes = NodeSet::new(&world, nodes, start)
            .map_err(|e| Error::parse(header_line, e.to_string()))?;
        instances.push(DatasetInstance { world, nodes });
    }
    let line = lines.next_line("end")?;
    if line.trim() != "end" {
        return Err(lines.err(format!("expected `end`, found {line:?}")));
    }
    Ok(instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(family: WorldFamily) -> DatasetSpec {
        DatasetSpec::new(family, 4, 20, 11).with_grid(60, 50)
    }

    #[test]
    fn family_names_round_trip() {
        for f in WorldFamily::ALL {
            assert_eq!(f.name().parse::<WorldFamily>().unwrap(), f);
        }
        assert_eq!(
            "PARALLEL_LINES".parse::<WorldFamily>().unwrap(),
            WorldFamily::ParallelLines
        );
        assert!(matches!(
            "spirals".parse::<WorldFamily>(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identity_lines_are_two_horizontal_segments() {
        let mut spec = DatasetSpec::new(WorldFamily::ParallelLines, 1, 2, 3).with_grid(100, 100);
        spec.params.random_transform = false;
        let world = generate_world(&spec, 0).unwrap();
        // half length 13, half gap 6 around (50, 50): rows y = 44 and y = 56
        // (cell centers within 0.75 of the segment line).
        let occupied_rows: Vec<usize> = (0..100)
            .filter(|&y| (0..100).any(|x| world.cell(x, y) == Cell::Occupied))
            .collect();
        assert_eq!(occupied_rows, vec![43, 44, 55, 56]);
        for y in occupied_rows {
            let xs: Vec<usize> = (0..100)
                .filter(|&x| world.cell(x, y) == Cell::Occupied)
                .collect();
            // segment x in [37, 63]; end cells whose centers sit 0.707 from the tips count too
            assert_eq!(xs.first(), Some(&36));
            assert_eq!(xs.last(), Some(&63));
            assert_eq!(xs.len(), 28);
        }
    }

    #[test]
    fn zero_blocks_is_empty() {
        let mut spec = small_spec(WorldFamily::PerimeterBlocks);
        spec.params.obstacle_count = Some(0);
        for i in 0..spec.world_count {
            assert_eq!(generate_world(&spec, i).unwrap().occupied_count(), 0);
        }
    }

    #[test]
    fn perimeter_blocks_stay_near_border() {
        let spec = DatasetSpec::new(WorldFamily::PerimeterBlocks, 5, 10, 4).with_grid(100, 100);
        for i in 0..spec.world_count {
            let w = generate_world(&spec, i).unwrap();
            assert!(w.occupied_count() > 0);
            for idx in 0..w.len() {
                if w.is_occupied(idx) {
                    let (x, y) = w.coords(idx);
                    let edge = x.min(y).min(99 - x).min(99 - y);
                    assert!(edge <= 20, "block cell ({x}, {y}) too far from border");
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for family in WorldFamily::ALL {
            let spec = small_spec(family);
            assert_eq!(generate_world(&spec, 3).unwrap(), generate_world(&spec, 3).unwrap());
        }
    }

    #[test]
    fn index_out_of_range() {
        let spec = small_spec(WorldFamily::BlockWorld);
        assert!(matches!(generate_world(&spec, 4), Err(Error::Config(_))));
    }

    #[test]
    fn sample_single_node() {
        let world = WorldMap::empty("w", 10, 10).unwrap();
        let set = sample_nodes(&world, 1, 5).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.start_index(), 0);
    }

    #[test]
    fn sampling_respects_clearance_and_fails_when_crowded() {
        // Occupied border leaves a 3x3 free interior with only its center admissible.
        let world = WorldMap::from_fn("box", 5, 5, |x, y| x == 0 || y == 0 || x == 4 || y == 4)
            .unwrap();
        let one = sample_nodes(&world, 1, 0).unwrap();
        assert_eq!(one.position(0), Point::new(2.5, 2.5));
        assert!(matches!(sample_nodes(&world, 2, 0), Err(Error::Generation(_))));
    }

    #[test]
    fn paper_scale_action_count() {
        let spec = DatasetSpec::new(WorldFamily::ParallelLines, 1, 300, 9);
        let world = generate_world(&spec, 0).unwrap();
        let nodes = sample_nodes(&world, 300, 1).unwrap();
        assert_eq!(nodes.len(), 300);
        assert_eq!(nodes, sample_nodes(&world, 300, 1).unwrap());
    }

    #[test]
    fn dataset_round_trip() {
        let spec = small_spec(WorldFamily::RandomDisks).with_node_sets(2);
        let data = generate_dataset(&spec).unwrap();
        assert_eq!(data.len(), 8);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches("\nworld ").count(), 4);
        let back = parse_dataset(&text).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn truncated_dataset_is_rejected() {
        let spec = small_spec(WorldFamily::BlockWorld);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &generate_dataset(&spec).unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let total_lines = text.lines().count();
        for keep in [1, 3, total_lines / 2, total_lines - 1] {
            let cut: String = text.lines().take(keep).map(|l| format!("{l}\n")).collect();
            match parse_dataset(&cut) {
                Err(Error::Parse { line, .. }) => assert!(line >= 1 && line <= keep + 1),
                other => panic!("expected parse error, got {other:?}"),
            }
        }
        // chopping mid-line also fails
        assert!(parse_dataset(&text[..text.len() / 3]).is_err());
    }

    #[test]
    fn node_in_obstacle_is_rejected_on_load() {
        let text = "explore-dataset 1\nworlds 1\nworld w 2 1 1\nF1 O1\nend-world\ninstances 1\ninstance 0 1 0\n1.5 0.5\nend\n";
        match parse_dataset(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }
}
