//! Grid types shared by every other module: label maps, binary masks and
//! finite float maps, plus their on-disk formats.
//!
//! Storage is row-major with the origin at the top-left corner; `y` grows
//! downward.

mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Deref, Sub};

use crate::error::{Error, Result};

pub use io::{
    decode_fmap, decode_lmap, encode_fmap, encode_lmap, read_float_map, read_float_map_pair, read_float_maps,
    read_label_map, write_float_map, write_float_map_pair, write_float_maps, write_label_map, LabelFormat,
};

/// Integer pixel coordinate: `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Point { x, y }
    }

    /// True when the two points are distinct 8-neighbours.
    pub fn is_adjacent8(self, other: Point) -> bool {
        let d = other - self;
        d != Point::default() && d.x.abs() <= 1 && d.y.abs() <= 1
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// The eight neighbour offsets in counter-clockwise order as seen on screen
/// (y down), starting from east.
pub const NEIGHBORS8: [Point; 8] = [
    Point::new(1, 0),
    Point::new(1, -1),
    Point::new(0, -1),
    Point::new(-1, -1),
    Point::new(-1, 0),
    Point::new(-1, 1),
    Point::new(0, 1),
    Point::new(1, 1),
];

/// Dense row-major 2-D grid with non-zero dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Instance label map; 0 is background, any other value an instance id.
pub type LabelMap = Grid<u32>;

/// Binary mask; `true` is foreground.
pub type BinaryMask = Grid<bool>;

impl<T: Copy> Grid<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!("grid dimensions must be non-zero, got {height}x{width}")));
        }
        let expected = height
            .checked_mul(width)
            .ok_or_else(|| Error::InvalidInput(format!("grid dimensions {height}x{width} overflow")))?;
        if data.len() != expected {
            return Err(Error::InvalidInput(format!(
                "{height}x{width} grid needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Grid { height, width, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be non-zero");
        Grid { height, width, data: vec![value; height * width] }
    }

    /// Builds a grid by evaluating `f(x, y)` for every pixel.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be non-zero");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index_of(&self, x: usize, y: usize) -> usize {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) outside {}x{} grid", self.height, self.width);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[self.index_of(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index_of(x, y);
        self.data[i] = value;
    }

    /// Bounds-checked access with signed coordinates; `None` outside the grid.
    #[inline]
    pub fn get_point(&self, p: Point) -> Option<T> {
        if self.contains(p) {
            Some(self.data[p.y as usize * self.width + p.x as usize])
        } else {
            None
        }
    }

    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    /// Point for a flat row-major index.
    #[inline]
    pub fn point_of(&self, index: usize) -> Point {
        Point::new((index % self.width) as i32, (index / self.width) as i32)
    }

    /// Value with coordinates clamped to the grid (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid { height: self.height, width: self.width, data: self.data.iter().copied().map(f).collect() }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.height == other.height && self.width == other.width {
            Ok(())
        } else {
            Err(Error::mismatch(self.dims(), (other.height, other.width)))
        }
    }

    /// Counter-clockwise quarter turn: pixel `(x, y)` moves to `(y, W-1-x)`.
    pub fn rot90(&self) -> Self {
        let (h, w) = self.dims();
        Grid::from_fn(w, h, |nx, ny| self.get(w - 1 - ny, nx))
    }

    /// Mirror left-right: pixel `(x, y)` moves to `(W-1-x, y)`.
    pub fn flip_horizontal(&self) -> Self {
        let (h, w) = self.dims();
        Grid::from_fn(h, w, |x, y| self.get(w - 1 - x, y))
    }

    /// Element `k` (0..8) of the dihedral group: `k % 4` quarter turns,
    /// preceded by a horizontal flip when `k >= 4`.
    pub fn dihedral(&self, k: usize) -> Self {
        let mut g = if k % 8 >= 4 { self.flip_horizontal() } else { self.clone() };
        for _ in 0..k % 4 {
            g = g.rot90();
        }
        g
    }

    /// Crop the window with top-left corner `(x, y)` and the given size.
    pub fn crop(&self, x: usize, y: usize, height: usize, width: usize) -> Result<Self> {
        if x + width > self.width || y + height > self.height || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "crop {height}x{width} at ({x}, {y}) exceeds {}x{} grid",
                self.height, self.width
            )));
        }
        Ok(Grid::from_fn(height, width, |cx, cy| self.get(x + cx, y + cy)))
    }
}

impl LabelMap {
    /// Pixel indices of every instance, keyed by id in ascending order.
    pub fn instances(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &id) in self.data.iter().enumerate() {
            if id != 0 {
                out.entry(id).or_default().push(i);
            }
        }
        out
    }

    pub fn foreground(&self) -> BinaryMask {
        self.map(|v| v != 0)
    }

    pub fn instance_mask(&self, id: u32) -> BinaryMask {
        self.map(|v| v == id && id != 0)
    }

    pub fn max_id(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// Association from instance id to its pixels, as points.
pub fn instances_of(map: &LabelMap) -> BTreeMap<u32, Vec<Point>> {
    map.instances().into_iter().map(|(id, idx)| (id, idx.into_iter().map(|i| map.point_of(i)).collect())).collect()
}

/// Grid of finite `f32` values. NaN and infinities are rejected on
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatMap(Grid<f32>);

impl FloatMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        FloatMap::from_grid(Grid::new(height, width, values)?)
    }

    pub fn from_grid(grid: Grid<f32>) -> Result<Self> {
        if let Some(i) = grid.data.iter().position(|v| !v.is_finite()) {
            let p = grid.point_of(i);
            return Err(Error::NonFinite { x: p.x as usize, y: p.y as usize, value: grid.data[i] as f64 });
        }
        Ok(FloatMap(grid))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        FloatMap(Grid::filled(height, width, 0.0))
    }

    pub fn from_fn(height: usize, width: usize, f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        FloatMap::from_grid(Grid::from_fn(height, width, f))
    }

    pub fn grid(&self) -> &Grid<f32> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f32> {
        self.0
    }

    /// Same dihedral transform as [`Grid::dihedral`]; finiteness is preserved.
    pub fn dihedral(&self, k: usize) -> Self {
        FloatMap(self.0.dihedral(k))
    }
}

impl Deref for FloatMap {
    type Target = Grid<f32>;
    fn deref(&self) -> &Grid<f32> {
        &self.0
    }
}

/// Horizontal and vertical channels of a distance map.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatMapPair {
    horizontal: FloatMap,
    vertical: FloatMap,
}

impl FloatMapPair {
    pub fn new(horizontal: FloatMap, vertical: FloatMap) -> Result<Self> {
        horizontal.same_dims(&vertical)?;
        Ok(FloatMapPair { horizontal, vertical })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        FloatMapPair { horizontal: FloatMap::zeros(height, width), vertical: FloatMap::zeros(height, width) }
    }

    pub fn horizontal(&self) -> &FloatMap {
        &self.horizontal
    }

    pub fn vertical(&self) -> &FloatMap {
        &self.vertical
    }

    pub fn dims(&self) -> (usize, usize) {
        self.horizontal.dims()
    }

    pub fn into_parts(self) -> (FloatMap, FloatMap) {
        (self.horizontal, self.vertical)
    }
}
