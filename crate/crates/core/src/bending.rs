//! Discrete curvature and bending energy of instance contours.
//!
//! For a contour point `c` with neighbours `a` (before) and `b` (after), the
//! edge vectors are `v1 = c - a` and `v2 = b - c`. The curvature is
//!
//! ```text
//! kappa = 2 |v1 x v2| / (|v1| |v2| + v1 . v2)
//! ```
//!
//! and the bending energy `kappa^2 * w / (|v1| + |v2|)`, where `w` is `mu`
//! for concave points and `1` otherwise. The bending loss of a label map is
//! the mean energy over all traced contour points.

use std::collections::HashMap;

use crate::contour::{trace_contours, Contour, NeighborSlot};
use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, LabelMap, Point, NEIGHBORS8};

/// Curvature of the sharpest 8-neighbourhood turn, `2 (sqrt 2 + 1)`.
pub const SHARPEST_KAPPA: f64 = 2.0 * (std::f64::consts::SQRT_2 + 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BendingParams {
    /// Weight of concave points.
    pub mu: f64,
    /// Weight of the bending term in the total loss.
    pub alpha: f64,
    /// Arc distance of the neighbours whose midpoint decides concavity.
    pub concavity_extent: usize,
    /// Curvature assigned to exact reversals (one-pixel spurs).
    pub kappa_cap: f64,
}

impl Default for BendingParams {
    fn default() -> Self {
        BendingParams { mu: 20.0, alpha: 1.0, concavity_extent: 1, kappa_cap: SHARPEST_KAPPA }
    }
}

impl BendingParams {
    pub fn with_mu(mu: f64) -> Self {
        BendingParams { mu, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 1.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("mu must be >= 1, got {}", self.mu)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.concavity_extent < 1 {
            return Err(Error::InvalidArgument("concavity extent must be >= 1".into()));
        }
        if !(self.kappa_cap > 0.0 && self.kappa_cap.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa cap must be > 0, got {}", self.kappa_cap)));
        }
        Ok(())
    }

    fn weight(&self, concave: bool) -> f64 {
        if concave {
            self.mu
        } else {
            1.0
        }
    }
}

/// Bending of one contour point, realised by the neighbour pair with the
/// smallest energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointBending {
    pub point: Point,
    pub kappa: f64,
    pub concave: bool,
    pub energy: f64,
    pub chosen_neighbors: (Point, Point),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BendingReport {
    /// Contour order, then point order within each contour.
    pub per_point: Vec<PointBending>,
    /// Start offset of each contour in `per_point`.
    pub contour_offsets: Vec<usize>,
    /// Mean energy over all contour points; 0 without contours.
    pub loss: f64,
    pub alpha: f64,
}

impl BendingReport {
    /// `alpha * loss`, the regulariser's contribution to the total loss.
    pub fn weighted(&self) -> f64 {
        self.alpha * self.loss
    }

    pub fn max_energy(&self) -> f64 {
        self.per_point.iter().map(|p| p.energy).fold(0.0, f64::max)
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn vec_of(p: Point) -> [f64; 2] {
    [p.x as f64, p.y as f64]
}

/// Discrete curvature between consecutive edge vectors. Exact reversals
/// (`v_next = -v_prev` direction) return `cap`.
pub fn curvature(v_prev: [f64; 2], v_next: [f64; 2], cap: f64) -> Result<f64> {
    let (l1, l2) = (norm(v_prev), norm(v_next));
    if l1 == 0.0 || l2 == 0.0 {
        return Err(Error::InvalidArgument("curvature of a zero-length edge".into()));
    }
    let denom = l1 * l2 + dot(v_prev, v_next);
    if denom <= 0.0 {
        return Ok(cap);
    }
    Ok(2.0 * cross(v_prev, v_next).abs() / denom)
}

/// Energy of one vertex from its curvature, edge lengths and concavity.
pub fn energy(kappa: f64, len_prev: f64, len_next: f64, concave: bool, mu: f64) -> f64 {
    let w = if concave { mu } else { 1.0 };
    kappa * kappa / (len_next + len_prev) * w
}

/// Half-integer midpoint offsets are rounded away from the centre pixel, which
/// keeps the test invariant under rotations and reflections of the grid.
fn round_half_away(twice: i32) -> i32 {
    if twice % 2 == 0 {
        twice / 2
    } else {
        (twice + twice.signum()) / 2
    }
}

fn midpoint_outside(center: Point, a: Point, b: Point, mask: &BinaryMask) -> bool {
    let twice = a + b - center - center;
    let probe = center + Point::new(round_half_away(twice.x), round_half_away(twice.y));
    mask.get_point(probe) != Some(true)
}

/// Whether contour point `index` is concave: the midpoint of the points `k`
/// steps before and after it, rounded to a pixel, falls outside the instance
/// mask (or outside the image). Contours not longer than `2k` are convex.
pub fn is_concave(contour: &Contour, index: usize, k: usize, mask: &BinaryMask) -> bool {
    if k == 0 || contour.len() <= 2 * k {
        log::debug!("contour of length {} too short for concavity extent {k}", contour.len());
        return false;
    }
    let c = contour.points()[index];
    let a = contour.points()[contour.cyclic(index, -(k as isize))];
    let b = contour.points()[contour.cyclic(index, k as isize)];
    midpoint_outside(c, a, b, mask)
}

fn slot_extended(contour: &Contour, slot: NeighborSlot, k: usize) -> Point {
    let i = contour.cyclic(slot.index, slot.step as isize * (k as isize - 1));
    contour.points()[i]
}

/// Bending of point `index`, minimised over every pair of its contour
/// neighbours. Concavity is decided per pair from that pair's extended
/// neighbours. Contours of one or two points have zero energy.
pub fn point_bending(contour: &Contour, index: usize, params: &BendingParams, mask: &BinaryMask) -> PointBending {
    let c = contour.points()[index];
    let slots = contour.neighbor_slots(index);
    let n = contour.len();
    let pred = contour.points()[contour.cyclic(index, -1)];
    let succ = contour.points()[contour.cyclic(index, 1)];
    if n <= 2 {
        return PointBending { point: c, kappa: 0.0, concave: false, energy: 0.0, chosen_neighbors: (pred, succ) };
    }
    let k = params.concavity_extent;
    let mut best: Option<PointBending> = None;
    for i in 0..slots.len() {
        for j in i + 1..slots.len() {
            let (na, nb) = (contour.points()[slots[i].index], contour.points()[slots[j].index]);
            let v1 = vec_of(c - na);
            let v2 = vec_of(nb - c);
            let kappa = curvature(v1, v2, params.kappa_cap).expect("contour neighbours are distinct pixels");
            let concave = n > 2 * k
                && midpoint_outside(c, slot_extended(contour, slots[i], k), slot_extended(contour, slots[j], k), mask);
            let e = energy(kappa, norm(v1), norm(v2), concave, params.mu);
            if best.is_none_or(|b| e < b.energy) {
                best = Some(PointBending { point: c, kappa, concave, energy: e, chosen_neighbors: (na, nb) });
            }
        }
    }
    best.expect("a contour point has at least two neighbour slots")
}

/// Traces all contours of `map` and evaluates the mean bending energy.
pub fn bending_loss(map: &LabelMap, params: &BendingParams) -> BendingReport {
    let contours = trace_contours(map);
    let mut masks: HashMap<u32, BinaryMask> = HashMap::new();
    let mut per_point = Vec::with_capacity(contours.total_points);
    let mut contour_offsets = Vec::with_capacity(contours.contours.len());
    for contour in &contours.contours {
        let mask = masks.entry(contour.instance_id()).or_insert_with(|| map.instance_mask(contour.instance_id()));
        contour_offsets.push(per_point.len());
        per_point.extend((0..contour.len()).map(|i| point_bending(contour, i, params, mask)));
    }
    let loss = if per_point.is_empty() {
        0.0
    } else {
        per_point.iter().map(|p| p.energy).sum::<f64>() / per_point.len() as f64
    };
    BendingReport { per_point, contour_offsets, loss, alpha: params.alpha }
}

/// One of the 28 unordered neighbour pairs around a centre pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePattern {
    /// 1-based group, ordered by increasing convex energy.
    pub group: usize,
    pub first: Point,
    pub second: Point,
    /// Angle at the centre between the two neighbours, in degrees.
    pub angle_deg: f64,
    pub convex: f64,
    pub concave: f64,
}

/// Convex and concave energies of every 8-neighbourhood curve pattern.
pub fn pattern_table(params: &BendingParams) -> Vec<CurvePattern> {
    let mut rows = Vec::with_capacity(28);
    for (i, &a) in NEIGHBORS8.iter().enumerate() {
        for &b in &NEIGHBORS8[i + 1..] {
            // centre at the origin: v1 = 0 - a, v2 = b - 0
            let v1 = [-(a.x as f64), -(a.y as f64)];
            let v2 = vec_of(b);
            let kappa = curvature(v1, v2, params.kappa_cap).expect("unit neighbourhood offsets");
            let (l1, l2) = (norm(v1), norm(v2));
            let (va, vb) = (vec_of(a), v2);
            let angle_deg = (dot(va, vb) / (l1 * l2)).clamp(-1.0, 1.0).acos().to_degrees();
            rows.push(CurvePattern {
                group: 0,
                first: a,
                second: b,
                angle_deg,
                convex: energy(kappa, l1, l2, false, params.mu),
                concave: energy(kappa, l1, l2, true, params.mu),
            });
        }
    }
    let mut levels: Vec<f64> = Vec::new();
    for r in &rows {
        if !levels.iter().any(|l| (l - r.convex).abs() < 1e-9) {
            levels.push(r.convex);
        }
    }
    levels.sort_by(f64::total_cmp);
    for r in &mut rows {
        r.group = 1 + levels.iter().position(|l| (l - r.convex).abs() < 1e-9).unwrap();
    }
    rows.sort_by_key(|r| r.group);
    rows
}

fn vertex_energy_grad(v1: [f64; 2], v2: [f64; 2], w: f64) -> ([f64; 2], [f64; 2]) {
    let (l1, l2) = (norm(v1), norm(v2));
    let c = cross(v1, v2);
    let d = l1 * l2 + dot(v1, v2);
    let l = l1 + l2;
    // e = 4 w c^2 / (d^2 l)
    let dc1 = [v2[1], -v2[0]];
    let dc2 = [-v1[1], v1[0]];
    let dd1 = [l2 * v1[0] / l1 + v2[0], l2 * v1[1] / l1 + v2[1]];
    let dd2 = [l1 * v2[0] / l2 + v1[0], l1 * v2[1] / l2 + v1[1]];
    let dl1 = [v1[0] / l1, v1[1] / l1];
    let dl2 = [v2[0] / l2, v2[1] / l2];
    let a = 8.0 * w * c / (d * d * l);
    let b = 8.0 * w * c * c / (d * d * d * l);
    let g = 4.0 * w * c * c / (d * d * l * l);
    let grad = |dc: [f64; 2], dd: [f64; 2], dl: [f64; 2]| {
        [a * dc[0] - b * dd[0] - g * dl[0], a * dc[1] - b * dd[1] - g * dl[1]]
    };
    (grad(dc1, dd1, dl1), grad(dc2, dd2, dl2))
}

fn check_polygon(vertices: &[[f64; 2]], concave: &[bool]) -> Result<()> {
    let n = vertices.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("polygon needs at least 3 vertices, got {n}")));
    }
    if concave.len() != n {
        return Err(Error::InvalidArgument(format!("{} concavity flags for {n} vertices", concave.len())));
    }
    for i in 0..n {
        let (p, q) = (vertices[i], vertices[(i + 1) % n]);
        if p == q {
            return Err(Error::InvalidArgument(format!("vertices {i} and {} coincide", (i + 1) % n)));
        }
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::InvalidArgument(format!("vertex {i} is not finite")));
        }
    }
    Ok(())
}

fn edges(vertices: &[[f64; 2]], i: usize) -> ([f64; 2], [f64; 2]) {
    let n = vertices.len();
    let (a, c, b) = (vertices[(i + n - 1) % n], vertices[i], vertices[(i + 1) % n]);
    ([c[0] - a[0], c[1] - a[1]], [b[0] - c[0], b[1] - c[1]])
}

/// Mean bending energy of a closed polygon with fixed concavity flags.
pub fn polygon_bending_loss(vertices: &[[f64; 2]], concave: &[bool], params: &BendingParams) -> Result<f64> {
    check_polygon(vertices, concave)?;
    let mut sum = 0.0;
    for (i, &cc) in concave.iter().enumerate() {
        let (v1, v2) = edges(vertices, i);
        let kappa = curvature(v1, v2, params.kappa_cap)?;
        sum += energy(kappa, norm(v1), norm(v2), cc, params.mu);
    }
    Ok(sum / vertices.len() as f64)
}

/// Mean bending energy of a closed polygon and its analytic gradient with
/// respect to every vertex. Concavity flags are treated as constants.
pub fn polygon_bending_gradient(
    vertices: &[[f64; 2]],
    concave: &[bool],
    params: &BendingParams,
) -> Result<(f64, Vec<[f64; 2]>)> {
    check_polygon(vertices, concave)?;
    let n = vertices.len();
    let mut grad = vec![[0.0; 2]; n];
    let mut sum = 0.0;
    for i in 0..n {
        let (v1, v2) = edges(vertices, i);
        if norm(v1) * norm(v2) + dot(v1, v2) <= 0.0 {
            return Err(Error::InvalidArgument(format!("exact reversal at vertex {i}")));
        }
        let kappa = curvature(v1, v2, params.kappa_cap)?;
        sum += energy(kappa, norm(v1), norm(v2), concave[i], params.mu);
        let (g1, g2) = vertex_energy_grad(v1, v2, params.weight(concave[i]));
        let (prev, next) = ((i + n - 1) % n, (i + 1) % n);
        for k in 0..2 {
            grad[prev][k] -= g1[k];
            grad[i][k] += g1[k] - g2[k];
            grad[next][k] += g2[k];
        }
    }
    let inv = 1.0 / n as f64;
    for g in &mut grad {
        g[0] *= inv;
        g[1] *= inv;
    }
    Ok((sum / n as f64, grad))
}
