//! Sobel contour energy and marker-controlled watershed.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, FloatMap, FloatMapPair, Grid, LabelMap, NEIGHBORS8};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PostprocessParams {
    /// Foreground is `prob >= prob_threshold`.
    pub prob_threshold: f64,
    /// Contour pixels have energy strictly above this value.
    pub contour_threshold: f64,
    /// Markers smaller than this many pixels are discarded.
    pub min_marker_area: usize,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        PostprocessParams { prob_threshold: 0.5, contour_threshold: 0.4, min_marker_area: 10 }
    }
}

impl PostprocessParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("prob threshold", self.prob_threshold), ("contour threshold", self.contour_threshold)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        if self.min_marker_area < 1 {
            return Err(Error::InvalidArgument("minimum marker area must be >= 1".into()));
        }
        Ok(())
    }
}

fn sobel(map: &FloatMap, horizontal: bool) -> Vec<f64> {
    let (h, w) = map.dims();
    let at = |x: isize, y: isize| map.get_clamped(x, y) as f64;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let g = if horizontal {
                (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1))
            } else {
                (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1))
            };
            out.push(g);
        }
    }
    out
}

/// `1 - minmax(g)`: the most negative gradient (a drop from +1 to -1 across
/// a nucleus border) maps to 1. A constant gradient carries no edge and maps
/// to 0 everywhere.
fn inverted_minmax(g: &[f64]) -> Vec<f64> {
    let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi - lo <= 0.0 {
        return vec![0.0; g.len()];
    }
    g.iter().map(|&v| 1.0 - (v - lo) / (hi - lo)).collect()
}

/// Contour energy from distance maps: the x-Sobel of the horizontal channel
/// and the y-Sobel of the vertical channel (3×3, replicate borders), each
/// min-max normalised and inverted, combined by pixelwise maximum.
pub fn sobel_energy(hv: &FloatMapPair) -> FloatMap {
    let (h, w) = hv.dims();
    let ex = inverted_minmax(&sobel(hv.horizontal(), true));
    let ey = inverted_minmax(&sobel(hv.vertical(), false));
    let values = ex.iter().zip(&ey).map(|(a, b)| a.max(*b) as f32).collect();
    FloatMap::new(h, w, values).expect("energy in [0, 1]")
}

/// Labels 8-connected components of `mask` in raster order of their first
/// pixel, keeping those with at least `min_area` pixels as `1..=K`.
fn components(mask: &BinaryMask, min_area: usize) -> (LabelMap, u32) {
    let (h, w) = mask.dims();
    let mut comp = vec![0u32; h * w];
    let mut next = 0u32;
    let mut kept = Grid::filled(h, w, 0u32);
    let mut count = 0u32;
    for seed in 0..h * w {
        if !mask.as_slice()[seed] || comp[seed] != 0 {
            continue;
        }
        next += 1;
        let mut members = vec![seed];
        comp[seed] = next;
        let mut head = 0;
        while head < members.len() {
            let p = mask.point_of(members[head]);
            head += 1;
            for d in NEIGHBORS8 {
                let q = p + d;
                if mask.get_point(q) == Some(true) {
                    let qi = q.y as usize * w + q.x as usize;
                    if comp[qi] == 0 {
                        comp[qi] = next;
                        members.push(qi);
                    }
                }
            }
        }
        if members.len() >= min_area {
            count += 1;
            for i in members {
                let p = mask.point_of(i);
                kept.set(p.x as usize, p.y as usize, count);
            }
        }
    }
    (kept, count)
}

/// Foreground mask, energy and seed markers used by the watershed.
pub fn markers(
    prob: &FloatMap,
    hv: &FloatMapPair,
    params: &PostprocessParams,
) -> Result<(BinaryMask, FloatMap, LabelMap, u32)> {
    prob.same_dims(hv.horizontal())?;
    let fg = prob.map(|p| p as f64 >= params.prob_threshold);
    let energy = sobel_energy(hv);
    let seeds = Grid::from_fn(prob.height(), prob.width(), |x, y| {
        fg.get(x, y) && (energy.get(x, y) as f64) <= params.contour_threshold
    });
    let (labels, count) = components(&seeds, params.min_marker_area);
    Ok((fg, energy, labels, count))
}

#[derive(PartialEq, Eq)]
struct Entry {
    energy: u32,
    index: usize,
    label: u32,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.energy, self.index, self.label).cmp(&(other.energy, other.index, other.label))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Order-preserving key for non-negative finite floats.
fn energy_key(v: f32) -> u32 {
    debug_assert!(v >= 0.0);
    v.to_bits()
}

/// Instance recovery from a foreground probability map and predicted
/// distance maps.
///
/// Markers are the components of `foreground && !contour`; labels then
/// flood the energy surface within the foreground, lowest energy first with
/// ties broken by row-major pixel order. Foreground pixels the flood cannot
/// reach (foreground components without a marker) take the label of the
/// nearest labelled pixel in chessboard distance. Without any marker the
/// whole foreground becomes instance 1.
pub fn watershed_postprocess(prob: &FloatMap, hv: &FloatMapPair, params: &PostprocessParams) -> Result<LabelMap> {
    params.validate()?;
    let (fg, energy, mut labels, count) = markers(prob, hv, params)?;
    let (h, w) = fg.dims();
    if fg.count() == 0 {
        return Ok(Grid::filled(h, w, 0));
    }
    if count == 0 {
        log::warn!("no watershed markers found; returning the foreground as one instance");
        return Ok(fg.map(u32::from));
    }

    let mut heap = BinaryHeap::new();
    let push_neighbours = |heap: &mut BinaryHeap<Reverse<Entry>>, labels: &LabelMap, i: usize| {
        let p = labels.point_of(i);
        let label = labels.as_slice()[i];
        for d in NEIGHBORS8 {
            let q = p + d;
            if fg.get_point(q) == Some(true) && labels.get_point(q) == Some(0) {
                let qi = q.y as usize * w + q.x as usize;
                heap.push(Reverse(Entry { energy: energy_key(energy.as_slice()[qi]), index: qi, label }));
            }
        }
    };
    for i in 0..h * w {
        if labels.as_slice()[i] != 0 {
            push_neighbours(&mut heap, &labels, i);
        }
    }
    while let Some(Reverse(e)) = heap.pop() {
        if labels.as_slice()[e.index] != 0 {
            continue;
        }
        let p = labels.point_of(e.index);
        labels.set(p.x as usize, p.y as usize, e.label);
        push_neighbours(&mut heap, &labels, e.index);
    }

    let unreached = (0..h * w).any(|i| fg.as_slice()[i] && labels.as_slice()[i] == 0);
    if unreached {
        assign_nearest(&fg, &mut labels);
    }
    Ok(labels)
}

fn assign_nearest(fg: &BinaryMask, labels: &mut LabelMap) {
    let (h, w) = fg.dims();
    let mut owner: Vec<u32> = labels.as_slice().to_vec();
    let mut queue: VecDeque<usize> = (0..h * w).filter(|&i| owner[i] != 0).collect();
    while let Some(i) = queue.pop_front() {
        let p = labels.point_of(i);
        for d in NEIGHBORS8 {
            let q = p + d;
            if labels.contains(q) {
                let qi = q.y as usize * w + q.x as usize;
                if owner[qi] == 0 {
                    owner[qi] = owner[i];
                    queue.push_back(qi);
                }
            }
        }
    }
    for (i, &o) in owner.iter().enumerate() {
        if fg.as_slice()[i] && labels.as_slice()[i] == 0 {
            let p = labels.point_of(i);
            labels.set(p.x as usize, p.y as usize, o);
        }
    }
}
