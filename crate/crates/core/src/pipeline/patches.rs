//! Overlapping patch extraction with mirror padding, and merging of the
//! central windows back into a full image.

use crate::error::{Error, Result};
use crate::imgcore::Grid;

/// Geometry of a tiling: `window`-sized output tiles cover the image in a
/// regular grid, and each is the centre of a `patch`-sized input patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchLayout {
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    pub window: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub row: usize,
    pub col: usize,
    /// Top-left corner of the output window in image coordinates.
    pub y: usize,
    pub x: usize,
}

impl PatchLayout {
    pub const DEFAULT_PATCH: usize = 270;
    pub const DEFAULT_WINDOW: usize = 80;

    pub fn new(height: usize, width: usize, patch: usize, window: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!("cannot tile a {height}x{width} image")));
        }
        if window == 0 || patch < window {
            return Err(Error::InvalidArgument(format!(
                "patch size {patch} must be at least the window size {window} > 0"
            )));
        }
        Ok(PatchLayout { height, width, patch, window, rows: height.div_ceil(window), cols: width.div_ceil(window) })
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Offset of the window inside its patch.
    pub fn margin(&self) -> usize {
        (self.patch - self.window) / 2
    }

    /// Window origins in row-major tile order.
    pub fn placements(&self) -> Vec<Placement> {
        (0..self.rows)
            .flat_map(|row| {
                (0..self.cols).map(move |col| Placement { row, col, y: row * self.window, x: col * self.window })
            })
            .collect()
    }

    /// The output window at the centre of an extracted patch.
    pub fn center_window<T: Copy>(&self, patch: &Grid<T>) -> Result<Grid<T>> {
        let m = self.margin();
        patch.crop(m, m, self.window, self.window)
    }
}

/// Reflect-101 index: `-1 -> 1`, `n -> n - 2`.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Cuts `grid` into `patch`×`patch` patches whose central
/// `window`×`window` windows tile the image. Pixels outside the image are
/// mirror reflections of the source.
pub fn extract_patches<T: Copy>(grid: &Grid<T>, patch: usize, window: usize) -> Result<(Vec<Grid<T>>, PatchLayout)> {
    let (h, w) = grid.dims();
    let layout = PatchLayout::new(h, w, patch, window)?;
    let m = layout.margin() as isize;
    let patches = layout
        .placements()
        .into_iter()
        .map(|pl| {
            let (oy, ox) = (pl.y as isize - m, pl.x as isize - m);
            Grid::from_fn(patch, patch, |x, y| grid.get(reflect(ox + x as isize, w), reflect(oy + y as isize, h)))
        })
        .collect();
    Ok((patches, layout))
}

/// Pastes window outputs back at their recorded origins and crops to the
/// original size. Inputs may be either window-sized or full patches, in
/// which case their central window is used.
pub fn merge_patches<T: Copy + Default>(outputs: &[Grid<T>], layout: &PatchLayout) -> Result<Grid<T>> {
    if outputs.len() != layout.count() {
        return Err(Error::InvalidInput(format!(
            "expected {} windows for a {}x{} tiling, got {}",
            layout.count(),
            layout.rows,
            layout.cols,
            outputs.len()
        )));
    }
    let mut out = Grid::filled(layout.height, layout.width, T::default());
    for (pl, tile) in layout.placements().into_iter().zip(outputs) {
        let window = match tile.dims() {
            (a, b) if a == layout.window && b == layout.window => tile.clone(),
            (a, b) if a == layout.patch && b == layout.patch => layout.center_window(tile)?,
            (a, b) => {
                return Err(Error::InvalidInput(format!(
                    "tile ({}, {}) is {a}x{b}, expected {w}x{w} or {p}x{p}",
                    pl.row,
                    pl.col,
                    w = layout.window,
                    p = layout.patch
                )))
            }
        };
        for y in 0..layout.window {
            for x in 0..layout.window {
                let (ty, tx) = (pl.y + y, pl.x + x);
                if ty < layout.height && tx < layout.width {
                    out.set(tx, ty, window.get(x, y));
                }
            }
        }
    }
    Ok(out)
}
