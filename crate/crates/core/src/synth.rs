//! Synthetic label maps used by tests, demos and the acceptance suite.

use crate::imgcore::{Grid, LabelMap};

/// Filled disc of radius `r` centred on `(cx, cy)`, labelled `id`.
pub fn disc(height: usize, width: usize, cx: f64, cy: f64, r: f64, id: u32) -> LabelMap {
    Grid::from_fn(height, width, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        if dx * dx + dy * dy <= r * r {
            id
        } else {
            0
        }
    })
}

/// Two overlapping discs of radius `r` whose centres are `distance` apart
/// along a horizontal line.
#[derive(Clone, Copy, Debug)]
pub struct DiscPair {
    pub radius: f64,
    pub distance: f64,
    pub margin: usize,
}

impl Default for DiscPair {
    fn default() -> Self {
        DiscPair { radius: 10.0, distance: 16.0, margin: 4 }
    }
}

impl DiscPair {
    fn geometry(&self) -> (usize, usize, [f64; 2], [f64; 2]) {
        let m = self.margin as f64;
        let r = self.radius;
        let h = (2.0 * (r + m)).ceil() as usize + 1;
        let w = (2.0 * (r + m) + self.distance).ceil() as usize + 1;
        let cy = r + m;
        (h, w, [r + m, cy], [r + m + self.distance, cy])
    }

    fn render(&self, label: impl Fn(bool, bool, bool) -> u32) -> LabelMap {
        let (h, w, a, b) = self.geometry();
        let r2 = self.radius * self.radius;
        Grid::from_fn(h, w, |x, y| {
            let (x, y) = (x as f64, y as f64);
            let da = (x - a[0]).powi(2) + (y - a[1]).powi(2);
            let db = (x - b[0]).powi(2) + (y - b[1]).powi(2);
            label(da <= r2, db <= r2, da <= db)
        })
    }

    /// Both discs as a single instance, as an under-segmentation would.
    pub fn merged(&self) -> LabelMap {
        self.render(|ina, inb, _| u32::from(ina || inb))
    }

    /// Two touching instances; the overlap goes to the nearer centre.
    pub fn separated(&self) -> LabelMap {
        self.render(|ina, inb, nearer_a| match (ina || inb, nearer_a) {
            (false, _) => 0,
            (true, true) if ina => 1,
            (true, _) if inb => 2,
            _ => 1,
        })
    }
}

/// Deterministic pseudo-random label map of axis-aligned rectangles and
/// ellipses, some of which touch or overlap (later shapes win).
pub fn random_blobs(height: usize, width: usize, count: usize, seed: u64) -> LabelMap {
    let mut state = seed ^ 0x9E37_79B9_7F4A_7C15;
    let mut next = move |n: usize| -> usize {
        // splitmix64
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ((z ^ (z >> 31)) % n.max(1) as u64) as usize
    };
    let mut map = Grid::filled(height, width, 0u32);
    for id in 1..=count as u32 {
        let cx = next(width) as f64;
        let cy = next(height) as f64;
        let rx = 1.0 + next(width.max(4) / 4) as f64;
        let ry = 1.0 + next(height.max(4) / 4) as f64;
        let ellipse = next(2) == 0;
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                let inside = if ellipse { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
                if inside {
                    map.set(x, y, id);
                }
            }
        }
    }
    map
}
