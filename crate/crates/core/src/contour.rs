//! Closed outer contours of label-map instances.
//!
//! Each 8-connected component of an instance is traced with Moore-neighbour
//! following, counter-clockwise as seen on screen (y down), starting from its
//! topmost-then-leftmost pixel. Tracing stops when the first move of the walk
//! is about to repeat with the same backtrack pixel (Jacob's criterion), so
//! one-pixel-wide spurs are walked out and back.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::imgcore::{Grid, LabelMap, Point, NEIGHBORS8};

const WEST: usize = 4;

/// A position in the contour sequence adjacent to some point, together with
/// the direction in which the walk continues away from that point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeighborSlot {
    pub index: usize,
    /// `-1` when the slot precedes the point, `+1` when it follows it.
    pub step: i8,
}

/// Closed, ordered boundary of one connected component of an instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contour {
    instance_id: u32,
    points: Vec<Point>,
    neighbor_slots: Vec<Vec<NeighborSlot>>,
}

impl Contour {
    /// Builds a contour from a cyclic point sequence. Consecutive points are
    /// expected to be 8-neighbours, which is not checked here.
    pub fn new(instance_id: u32, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("contour needs at least one point".into()));
        }
        let neighbor_slots = build_neighbor_slots(&points);
        Ok(Contour { instance_id, points, neighbor_slots })
    }

    pub fn instance_id(&self) -> u32 {
        self.instance_id
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index `offset` steps away from `index`, wrapping cyclically.
    pub fn cyclic(&self, index: usize, offset: isize) -> usize {
        let n = self.points.len() as isize;
        (index as isize + offset).rem_euclid(n) as usize
    }

    /// Contour-adjacent slots of point `index`: its own predecessor and
    /// successor first, then those of any other visit of the same pixel.
    pub fn neighbor_slots(&self, index: usize) -> &[NeighborSlot] {
        &self.neighbor_slots[index]
    }

    /// Multiset of contour-adjacent points of `index`.
    pub fn neighbor_set(&self, index: usize) -> Vec<Point> {
        self.neighbor_slots[index].iter().map(|s| self.points[s.index]).collect()
    }
}

fn build_neighbor_slots(points: &[Point]) -> Vec<Vec<NeighborSlot>> {
    let n = points.len();
    let mut visits: HashMap<Point, Vec<usize>> = HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        visits.entry(p).or_default().push(i);
    }
    let prev = |i: usize| (i + n - 1) % n;
    let next = |i: usize| (i + 1) % n;
    (0..n)
        .map(|i| {
            let mut slots = vec![NeighborSlot { index: prev(i), step: -1 }, NeighborSlot { index: next(i), step: 1 }];
            for &j in &visits[&points[i]] {
                if j == i {
                    continue;
                }
                for slot in [NeighborSlot { index: prev(j), step: -1 }, NeighborSlot { index: next(j), step: 1 }] {
                    if !slots.iter().any(|s| points[s.index] == points[slot.index]) {
                        slots.push(slot);
                    }
                }
            }
            slots
        })
        .collect()
}

/// All traced contours of a label map.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContourSet {
    pub contours: Vec<Contour>,
    pub total_points: usize,
}

/// Points `k` steps before and after `index` along the contour.
pub fn extended_neighbors(contour: &Contour, index: usize, k: usize) -> Result<(Point, Point)> {
    if k == 0 || k >= contour.len() {
        return Err(Error::InvalidArgument(format!(
            "arc distance {k} must be in 1..{} for a contour of length {}",
            contour.len(),
            contour.len()
        )));
    }
    let before = contour.cyclic(index, -(k as isize));
    let after = contour.cyclic(index, k as isize);
    Ok((contour.points[before], contour.points[after]))
}

/// Traces every instance of `map`, in ascending id order. Instances made of
/// several 8-connected components yield one contour per component, in
/// raster order of their first pixel.
pub fn trace_contours(map: &LabelMap) -> ContourSet {
    let (h, w) = map.dims();
    let mut component = Grid::filled(h, w, 0u32);
    let mut next_component = 0u32;
    let mut contours = Vec::new();

    for (id, pixels) in map.instances() {
        let mut found = 0usize;
        for &seed in &pixels {
            if component.as_slice()[seed] != 0 {
                continue;
            }
            next_component += 1;
            found += 1;
            label_component(map, &mut component, seed, next_component);
            let comp = next_component;
            let member = |p: Point| component.get_point(p) == Some(comp);
            let points = moore_trace(map.point_of(seed), member);
            contours.push(Contour::new(id, points).expect("trace yields at least one point"));
        }
        if found > 1 {
            log::warn!("instance {id} has {found} disconnected components; each is traced separately");
        }
    }
    let total_points = contours.iter().map(Contour::len).sum();
    ContourSet { contours, total_points }
}

fn label_component(map: &LabelMap, component: &mut Grid<u32>, seed: usize, comp: u32) {
    let id = map.as_slice()[seed];
    let seed = map.point_of(seed);
    let mut queue = VecDeque::from([seed]);
    component.set(seed.x as usize, seed.y as usize, comp);
    while let Some(p) = queue.pop_front() {
        for d in NEIGHBORS8 {
            let q = p + d;
            if map.get_point(q) == Some(id) && component.get_point(q) == Some(0) {
                component.set(q.x as usize, q.y as usize, comp);
                queue.push_back(q);
            }
        }
    }
}

fn direction_index(d: Point) -> usize {
    NEIGHBORS8.iter().position(|&n| n == d).expect("backtrack pixel is an 8-neighbour")
}

/// One Moore step from `p`, whose backtrack pixel lies in direction
/// `backtrack`. Returns the next boundary pixel and its backtrack direction.
fn moore_step(p: Point, backtrack: usize, member: &impl Fn(Point) -> bool) -> Option<(Point, usize)> {
    for i in 1..8 {
        let d = (backtrack + i) % 8;
        let q = p + NEIGHBORS8[d];
        if member(q) {
            let scanned = p + NEIGHBORS8[(d + 7) % 8];
            return Some((q, direction_index(scanned - q)));
        }
    }
    None
}

fn moore_trace(start: Point, member: impl Fn(Point) -> bool) -> Vec<Point> {
    // The start pixel is the first in raster order, so its west neighbour is
    // outside the component.
    let Some(first) = moore_step(start, WEST, &member) else {
        return vec![start];
    };
    let mut points = vec![start];
    let (mut p, mut b) = first;
    loop {
        if (p, b) == first && points.last() == Some(&start) && points.len() > 1 {
            points.pop();
            break;
        }
        points.push(p);
        (p, b) = moore_step(p, b, &member).expect("traced pixel keeps a component neighbour");
    }
    points
}
