//! Data preparation and post-processing: distance-map targets, overlapped
//! nucleus identification, marker-controlled watershed and patch tiling.

mod patches;
mod watershed;

use std::collections::{BTreeMap, BTreeSet};

use crate::imgcore::{FloatMap, FloatMapPair, Grid, LabelMap, Point};

pub use patches::{extract_patches, merge_patches, PatchLayout, Placement};
pub use watershed::{markers, sobel_energy, watershed_postprocess, PostprocessParams};

/// Ids of nuclei that touch another nucleus under 8-connectivity.
pub fn identify_overlapped(gt: &LabelMap) -> BTreeSet<u32> {
    let (h, w) = gt.dims();
    let mut out = BTreeSet::new();
    // forward half of the 8-neighbourhood covers every unordered pair
    let forward = [Point::new(1, 0), Point::new(-1, 1), Point::new(0, 1), Point::new(1, 1)];
    for y in 0..h {
        for x in 0..w {
            let a = gt.get(x, y);
            if a == 0 {
                continue;
            }
            let p = Point::new(x as i32, y as i32);
            for d in forward {
                if let Some(b) = gt.get_point(p + d) {
                    if b != 0 && b != a {
                        out.insert(a);
                        out.insert(b);
                    }
                }
            }
        }
    }
    out
}

/// Horizontal/vertical distance targets for all nuclei and for the
/// overlapped ones only.
#[derive(Clone, Debug, PartialEq)]
pub struct HvGroundTruth {
    pub all_nuclei: FloatMapPair,
    pub overlapped_only: FloatMapPair,
}

struct Extent {
    sum_x: f64,
    sum_y: f64,
    count: usize,
    min: Point,
    max: Point,
}

fn normalized_offset(v: i32, centre: f64, lo: i32, hi: i32) -> f32 {
    let d = v as f64 - centre;
    if d < 0.0 {
        (d / (centre - lo as f64)) as f32
    } else if d > 0.0 {
        (d / (hi as f64 - centre)) as f32
    } else {
        0.0
    }
}

/// Per nucleus, offsets from the pixel centroid, with the negative and
/// positive sides scaled independently onto `[-1, 0]` and `[0, 1]`.
/// Background is 0 in every channel.
pub fn hv_ground_truth(gt: &LabelMap, overlapped: &BTreeSet<u32>) -> HvGroundTruth {
    let (h, w) = gt.dims();
    let mut extents: BTreeMap<u32, Extent> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let id = gt.get(x, y);
            if id == 0 {
                continue;
            }
            let p = Point::new(x as i32, y as i32);
            let e = extents.entry(id).or_insert(Extent { sum_x: 0.0, sum_y: 0.0, count: 0, min: p, max: p });
            e.sum_x += x as f64;
            e.sum_y += y as f64;
            e.count += 1;
            e.min = Point::new(e.min.x.min(p.x), e.min.y.min(p.y));
            e.max = Point::new(e.max.x.max(p.x), e.max.y.max(p.y));
        }
    }
    let centroids: BTreeMap<u32, (f64, f64)> =
        extents.iter().map(|(&id, e)| (id, (e.sum_x / e.count as f64, e.sum_y / e.count as f64))).collect();
    let channel = |keep: &dyn Fn(u32) -> bool, horizontal: bool| {
        let grid = Grid::from_fn(h, w, |x, y| {
            let id = gt.get(x, y);
            if id == 0 || !keep(id) {
                return 0.0;
            }
            let e = &extents[&id];
            let (cx, cy) = centroids[&id];
            if horizontal {
                normalized_offset(x as i32, cx, e.min.x, e.max.x)
            } else {
                normalized_offset(y as i32, cy, e.min.y, e.max.y)
            }
        });
        FloatMap::from_grid(grid).expect("normalised offsets are finite")
    };
    let all = |_: u32| true;
    let ov = |id: u32| overlapped.contains(&id);
    HvGroundTruth {
        all_nuclei: FloatMapPair::new(channel(&all, true), channel(&all, false)).expect("same dims"),
        overlapped_only: FloatMapPair::new(channel(&ov, true), channel(&ov, false)).expect("same dims"),
    }
}
