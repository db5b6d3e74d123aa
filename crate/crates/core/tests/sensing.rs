use std::collections::BTreeSet;
use std::sync::Arc;

use explore_core::sensor::{raycast, Belief, Evidence, SensorConfig};
use explore_core::worldgen::WorldMap;
use explore_core::Point;
use proptest::prelude::*;

/// Reference ray walk: samples the ray densely and records each cell it enters.
fn sampled_walk(world: &WorldMap, origin: Point, angle: f64, range: f64) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let (dx, dy) = (angle.cos(), angle.sin());
    let start = ((origin.x.floor()) as i64, (origin.y.floor()) as i64);
    let (mut hits, mut free) = (BTreeSet::new(), BTreeSet::new());
    let steps = (range / 1e-4) as usize;
    let mut last = start;
    for i in 1..=steps {
        let t = i as f64 * 1e-4;
        let cell = ((origin.x + t * dx).floor() as i64, (origin.y + t * dy).floor() as i64);
        if cell == last {
            continue;
        }
        last = cell;
        let Some(c) = world.get(cell.0, cell.1) else {
            break;
        };
        let idx = world.index(cell.0 as usize, cell.1 as usize);
        if c == explore_core::worldgen::Cell::Occupied {
            hits.insert(idx);
            break;
        }
        free.insert(idx);
    }
    (hits, free)
}

fn small_world(bits: u32) -> WorldMap {
    WorldMap::from_fn("p", 5, 5, |x, y| (x, y) != (2, 2) && bits >> (y * 5 + x) & 1 == 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // 60 rays from a cell center never pass exactly through a grid corner
    #[test]
    fn raycast_matches_sampled_line_of_sight(bits in any::<u32>(), range in 1.3f64..4.7) {
        let world = small_world(bits);
        let cfg = SensorConfig { ray_count: 60, max_range: range };
        let origin = Point::new(2.5, 2.5);
        let m = raycast(&world, origin, &cfg).unwrap();
        let (mut hits, mut free) = (BTreeSet::new(), BTreeSet::new());
        for k in 0..60 {
            let angle = std::f64::consts::TAU * k as f64 / 60.0;
            let (h, f) = sampled_walk(&world, origin, angle, range);
            hits.extend(h);
            free.extend(f);
        }
        prop_assert_eq!(m.hits.iter().copied().collect::<BTreeSet<_>>(), hits);
        prop_assert_eq!(m.free_traversed.iter().copied().collect::<BTreeSet<_>>(), free);
    }

    #[test]
    fn belief_fold_is_order_independent(bits in any::<u32>(), order in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle()) {
        let world = WorldMap::from_fn("q", 5, 5, |x, y| {
            ![(1, 1), (3, 1), (1, 3), (3, 3)].contains(&(x, y)) && bits >> (y * 5 + x) & 1 == 1
        }).unwrap();
        let cfg = SensorConfig { ray_count: 24, max_range: 3.0 };
        let ms: Vec<_> = [(1.5, 1.5), (3.5, 1.5), (1.5, 3.5), (3.5, 3.5)]
            .iter()
            .map(|&(x, y)| Arc::new(raycast(&world, Point::new(x, y), &cfg).unwrap()))
            .collect();
        let mut a = Belief::for_world(&world);
        let mut b = Belief::for_world(&world);
        for i in 0..4 {
            a.update(0, i, Arc::clone(&ms[i]));
            b.update(0, order[i], Arc::clone(&ms[order[i]]));
        }
        prop_assert_eq!(a.evidence(), b.evidence());
        prop_assert_eq!(a.covered_count(), b.covered_count());
        // evidence never contradicts the world
        for (idx, e) in a.evidence().iter().enumerate() {
            match e {
                Evidence::Occupied => prop_assert!(world.is_occupied(idx)),
                Evidence::Free => prop_assert!(!world.is_occupied(idx)),
                Evidence::Unknown => {}
            }
        }
    }
}

#[test]
fn range_cuts_the_ray() {
    let world = WorldMap::from_fn("r", 12, 3, |x, _| x == 10).unwrap();
    let near = raycast(&world, Point::new(1.5, 1.5), &SensorConfig { ray_count: 4, max_range: 5.0 }).unwrap();
    assert!(near.hits.is_empty());
    let far = raycast(&world, Point::new(1.5, 1.5), &SensorConfig { ray_count: 4, max_range: 9.0 }).unwrap();
    assert_eq!(far.hits, vec![world.index(10, 1)]);
}
