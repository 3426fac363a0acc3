//! Occupancy grids, exact signed distance fields, the repulsive potential
//! formula, and footprint-pooled potential cost maps.
//!
//! Conventions used throughout:
//! - grids are row-major, cell `(row, col)` maps to world coordinates with
//!   `x = origin_x + col * resolution`, `y = origin_y + row * resolution`
//!   (origin is the *center* of cell `(0, 0)`);
//! - signed distances are measured between cell centers, in meters, positive
//!   on free cells and negative on occupied cells;
//! - cells outside the grid are treated as occupied.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use thiserror::Error;

pub mod io;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimensions must be positive (got {width}x{height})")]
    InvalidDimensions { width: usize, height: usize },
    #[error("grid resolution must be positive (got {0})")]
    InvalidResolution(f64),
    #[error("occupancy cells must be 0 or 1 (cell {index} is {value})")]
    InvalidCellValue { index: usize, value: u8 },
    #[error("cell buffer length {got} does not match {expected} (width*height)")]
    CellCountMismatch { got: usize, expected: usize },
    #[error("pose ({x:.3}, {y:.3}) lies outside the grid extent")]
    PoseOutsideGrid { x: f64, y: f64 },
    #[error("footprint polygon is degenerate: {0}")]
    DegenerateFootprint(String),
    #[error("potential weights must be positive (w1={w1}, w2={w2})")]
    InvalidWeights { w1: f64, w2: f64 },
    #[error("heading bin count must be >= 1")]
    InvalidHeadingBins,
    #[error("unknown footprint label {0:?}")]
    UnknownFootprint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

/// Shared raster header: dimensions, cell size, and world placement.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    /// Cell edge length in meters.
    pub resolution: f64,
    /// World x of the center of cell (0, 0).
    pub origin_x: f64,
    /// World y of the center of cell (0, 0).
    pub origin_y: f64,
}

impl GridGeometry {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin_x: f64,
        origin_y: f64,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::InvalidDimensions { width, height });
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(GridError::InvalidResolution(resolution));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin_x,
            origin_y,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    /// World coordinates of a cell center. Indices may lie outside the grid.
    #[inline]
    pub fn cell_center(&self, row: i64, col: i64) -> (f64, f64) {
        (
            self.origin_x + col as f64 * self.resolution,
            self.origin_y + row as f64 * self.resolution,
        )
    }

    /// Cell indices of the cell whose box contains the point (unbounded).
    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((y - self.origin_y) / self.resolution).round() as i64,
            ((x - self.origin_x) / self.resolution).round() as i64,
        )
    }

    /// In-grid cell containing the point, if any.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (row, col) = self.cell_of(x, y);
        if row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width {
            Some((row as usize, col as usize))
        } else {
            None
        }
    }

    /// Whether the point lies inside the union of all cell boxes.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.world_to_cell(x, y).is_some()
    }

    /// Diagonal of the grid extent in meters; used as the SDF clamp.
    pub fn diagonal(&self) -> f64 {
        let w = self.width as f64 * self.resolution;
        let h = self.height as f64 * self.resolution;
        (w * w + h * h).sqrt()
    }

    /// Rectangle spanned by the outermost cell centers.
    pub fn center_extent(&self) -> Extent {
        Extent {
            x_min: self.origin_x,
            x_max: self.origin_x + (self.width - 1) as f64 * self.resolution,
            y_min: self.origin_y,
            y_max: self.origin_y + (self.height - 1) as f64 * self.resolution,
        }
    }
}

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Binary occupancy raster: 0 = free, 1 = occupied.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub geometry: GridGeometry,
    cells: Vec<u8>,
}

impl OccupancyGrid {
    pub fn new(geometry: GridGeometry, cells: Vec<u8>) -> Result<Self, GridError> {
        if cells.len() != geometry.len() {
            return Err(GridError::CellCountMismatch {
                got: cells.len(),
                expected: geometry.len(),
            });
        }
        if let Some(index) = cells.iter().position(|&c| c > 1) {
            return Err(GridError::InvalidCellValue {
                index,
                value: cells[index],
            });
        }
        Ok(Self { geometry, cells })
    }

    pub fn empty(geometry: GridGeometry) -> Self {
        let cells = vec![0; geometry.len()];
        Self { geometry, cells }
    }

    #[inline]
    pub fn is_occupied(&self, row: usize, col: usize) -> bool {
        self.cells[self.geometry.index(row, col)] == 1
    }

    /// Occupancy lookup with the outside-the-grid-is-occupied convention.
    #[inline]
    pub fn is_occupied_i64(&self, row: i64, col: i64) -> bool {
        if row < 0 || col < 0 || row as usize >= self.geometry.height || col as usize >= self.geometry.width
        {
            true
        } else {
            self.is_occupied(row as usize, col as usize)
        }
    }

    pub fn set(&mut self, row: usize, col: usize, occupied: bool) {
        let idx = self.geometry.index(row, col);
        self.cells[idx] = occupied as u8;
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == 1).count()
    }

    /// Fill the axis-aligned cell rectangle [r0, r1] x [c0, c1], clipped to the grid.
    pub fn fill_rect(&mut self, r0: i64, c0: i64, r1: i64, c1: i64, occupied: bool) {
        let rs = r0.max(0) as usize;
        let re = r1.min(self.geometry.height as i64 - 1);
        let cs = c0.max(0) as usize;
        let ce = c1.min(self.geometry.width as i64 - 1);
        if re < rs as i64 || ce < cs as i64 {
            return;
        }
        for r in rs..=re as usize {
            for c in cs..=ce as usize {
                self.set(r, c, occupied);
            }
        }
    }

    pub fn load_pgm<P: AsRef<Path>>(path: P) -> Result<Self, GridError> {
        io::load_occupancy_pgm(path.as_ref())
    }

    pub fn save_pgm<P: AsRef<Path>>(&self, path: P) -> Result<(), GridError> {
        io::save_occupancy_pgm(self, path.as_ref())
    }
}

/// Exact Euclidean signed distances between cell centers, in meters.
///
/// Positive on free cells, negative on occupied cells, magnitude clamped to
/// the grid diagonal so all-free and all-occupied grids stay well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub geometry: GridGeometry,
    pub clamp: f64,
    values: Vec<f64>,
}

impl SdfGrid {
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[self.geometry.index(row, col)]
    }

    /// SDF lookup treating out-of-grid cells as boundary-occupied.
    #[inline]
    pub fn value_i64(&self, row: i64, col: i64) -> f64 {
        if row < 0 || col < 0 || row as usize >= self.geometry.height || col as usize >= self.geometry.width
        {
            -self.geometry.resolution
        } else {
            self.value(row as usize, col as usize)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn write_raster<P: AsRef<Path>>(&self, path: P) -> Result<(), GridError> {
        io::write_scalar_raster(path.as_ref(), &self.geometry, None, &self.values, "sdf")
    }
}

/// Exact Euclidean distance transform (Felzenszwalb-Huttenlocher parabolic
/// envelopes). `sources[i] != 0` marks the zero-distance cells; the result is
/// the squared distance in cell units from every cell to the nearest source.
fn squared_distance_to_sources(width: usize, height: usize, sources: &[bool]) -> Vec<f64> {
    const INF: f64 = f64::INFINITY;
    let mut field = vec![INF; width * height];
    for (i, &s) in sources.iter().enumerate() {
        if s {
            field[i] = 0.0;
        }
    }

    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    let transform = |f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64], n: usize| {
        let mut k = 0usize;
        v[0] = 0;
        z[0] = -INF;
        z[1] = INF;
        for q in 1..n {
            if f[q] == INF {
                continue;
            }
            if f[v[0]] == INF {
                // First finite parabola seen so far.
                v[0] = q;
                continue;
            }
            let mut s;
            loop {
                let p = v[k];
                s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                    / (2.0 * q as f64 - 2.0 * p as f64);
                if s <= z[k] {
                    k -= 1;
                } else {
                    break;
                }
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = INF;
        }
        if f[v[0]] == INF {
            for q in 0..n {
                d[q] = INF;
            }
            return;
        }
        let mut k = 0usize;
        for q in 0..n {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let dq = q as f64 - p as f64;
            d[q] = dq * dq + f[p];
        }
    };

    // Pass 1: along rows.
    for row in 0..height {
        let base = row * width;
        f[..width].copy_from_slice(&field[base..base + width]);
        transform(&f, &mut d, &mut v, &mut z, width);
        field[base..base + width].copy_from_slice(&d[..width]);
    }
    // Pass 2: along columns.
    for col in 0..width {
        for row in 0..height {
            f[row] = field[row * width + col];
        }
        transform(&f, &mut d, &mut v, &mut z, height);
        for row in 0..height {
            field[row * width + col] = d[row];
        }
    }
    field
}

/// Exact Euclidean SDF of an occupancy grid.
///
/// Free cells get the distance to the nearest occupied cell center, occupied
/// cells minus the distance to the nearest free cell center; magnitudes are
/// clamped to the grid diagonal.
pub fn compute_sdf(grid: &OccupancyGrid) -> SdfGrid {
    let geom = grid.geometry;
    let clamp = geom.diagonal();
    let occupied: Vec<bool> = grid.cells().iter().map(|&c| c == 1).collect();
    let free: Vec<bool> = grid.cells().iter().map(|&c| c == 0).collect();
    let d2_occ = squared_distance_to_sources(geom.width, geom.height, &occupied);
    let d2_free = squared_distance_to_sources(geom.width, geom.height, &free);

    let values = grid
        .cells()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let d2 = if c == 1 { d2_free[i] } else { d2_occ[i] };
            let dist = if d2.is_finite() {
                (geom.resolution * d2.sqrt()).min(clamp)
            } else {
                clamp
            };
            if c == 1 {
                -dist
            } else {
                dist
            }
        })
        .collect();

    SdfGrid {
        geometry: geom,
        clamp,
        values,
    }
}

/// Weighting coefficients of the repulsive potential.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PotentialWeights {
    /// Amplitude; the potential ranges over (0, w1*pi).
    pub w1: f64,
    /// Steepness in 1/m; half-maximum sits at SDF = 1/w2 inside the sigmoid.
    pub w2: f64,
}

impl Default for PotentialWeights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 5.0 }
    }
}

impl PotentialWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self, GridError> {
        if !(w1 > 0.0 && w2 > 0.0) {
            return Err(GridError::InvalidWeights { w1, w2 });
        }
        Ok(Self { w1, w2 })
    }

    /// Upper bound of the potential range.
    pub fn max_potential(&self) -> f64 {
        self.w1 * PI
    }

    /// Value assigned to cells outside the grid: a boundary-occupied cell.
    pub fn out_of_grid_potential(&self, resolution: f64) -> f64 {
        repulsive_potential(-resolution, *self)
    }
}

/// The arctan repulsive potential of a signed distance.
///
/// Strictly decreasing in `sdf`, range (0, w1*pi).
#[inline]
pub fn repulsive_potential(sdf: f64, w: PotentialWeights) -> f64 {
    w.w1 * (PI / 2.0 + (w.w2 - w.w2 * sdf).atan())
}

/// Per-cell repulsive potential raster.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGrid {
    pub geometry: GridGeometry,
    pub weights: PotentialWeights,
    values: Vec<f64>,
}

impl CostGrid {
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[self.geometry.index(row, col)]
    }

    /// Potential lookup treating out-of-grid cells as occupied.
    #[inline]
    pub fn value_i64(&self, row: i64, col: i64) -> f64 {
        if row < 0 || col < 0 || row as usize >= self.geometry.height || col as usize >= self.geometry.width
        {
            self.weights.out_of_grid_potential(self.geometry.resolution)
        } else {
            self.value(row as usize, col as usize)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Cell-wise application of [`repulsive_potential`] to an SDF raster.
pub fn pointwise_costmap(sdf: &SdfGrid, w: PotentialWeights) -> CostGrid {
    CostGrid {
        geometry: sdf.geometry,
        weights: w,
        values: sdf
            .values()
            .iter()
            .map(|&s| repulsive_potential(s, w))
            .collect(),
    }
}

/// Robot outline polygon in the body frame (meters), counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    vertices: Vec<[f64; 2]>,
    pub label: String,
}

impl Footprint {
    pub fn new(mut vertices: Vec<[f64; 2]>, label: impl Into<String>) -> Result<Self, GridError> {
        if vertices.len() < 3 {
            return Err(GridError::DegenerateFootprint(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        let area = signed_area(&vertices);
        if area.abs() < 1e-12 {
            return Err(GridError::DegenerateFootprint("zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        if self_intersects(&vertices) {
            return Err(GridError::DegenerateFootprint("self-intersecting".into()));
        }
        Ok(Self {
            vertices,
            label: label.into(),
        })
    }

    /// Axis-aligned rectangle centered on the body origin.
    pub fn rectangle(length: f64, width: f64, label: impl Into<String>) -> Result<Self, GridError> {
        let (hl, hw) = (length / 2.0, width / 2.0);
        Self::new(
            vec![[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]],
            label,
        )
    }

    /// Husky-class base with the manipulator arm folded: 0.99 x 0.67 m box.
    pub fn folded_arm() -> Self {
        Self::rectangle(0.99, 0.67, "folded_arm").expect("static footprint")
    }

    /// Same base with the arm reaching 0.405 m past the front edge.
    pub fn outstretched_arm() -> Self {
        Self::new(
            vec![
                [-0.495, -0.335],
                [0.495, -0.335],
                [0.495, -0.10],
                [0.90, -0.10],
                [0.90, 0.10],
                [0.495, 0.10],
                [0.495, 0.335],
                [-0.495, 0.335],
            ],
            "outstretched_arm",
        )
        .expect("static footprint")
    }

    pub fn by_label(label: &str) -> Result<Self, GridError> {
        match label {
            "folded_arm" => Ok(Self::folded_arm()),
            "outstretched_arm" => Ok(Self::outstretched_arm()),
            other => Err(GridError::UnknownFootprint(other.to_string())),
        }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Body-frame lateral extent (the "robot width").
    pub fn width(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.min(v[1]);
            hi = hi.max(v[1]);
        }
        hi - lo
    }

    /// Radius of the smallest origin-centered circle covering the polygon.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Vertices transformed by the pose (rotation then translation).
    pub fn transformed(&self, x: f64, y: f64, theta: f64) -> Vec<[f64; 2]> {
        let (s, c) = theta.sin_cos();
        self.vertices
            .iter()
            .map(|v| [x + c * v[0] - s * v[1], y + s * v[0] + c * v[1]])
            .collect()
    }
}

fn signed_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc / 2.0
}

fn self_intersects(vertices: &[[f64; 2]]) -> bool {
    let n = vertices.len();
    let seg = |i: usize| (vertices[i], vertices[(i + 1) % n]);
    for i in 0..n {
        for j in i + 1..n {
            // Adjacent edges share an endpoint by construction.
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (a, b) = seg(i);
            let (c, d) = seg(j);
            if segments_properly_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

fn segments_properly_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let cross = |o: [f64; 2], p: [f64; 2], q: [f64; 2]| {
        (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])
    };
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Even-odd point-in-polygon test.
pub(crate) fn point_in_polygon(vertices: &[[f64; 2]], x: f64, y: f64) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (vertices[i][0], vertices[i][1]);
        let (xj, yj) = (vertices[j][0], vertices[j][1]);
        if (yi > y) != (yj > y) {
            let x_cross = xi + (y - yi) * (xj - xi) / (yj - yi);
            if x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Visit every cell (possibly outside the grid) whose center lies inside the
/// polygon placed at the pose. Returns the number of covered cells.
pub(crate) fn for_each_covered_cell<F: FnMut(i64, i64)>(
    geom: &GridGeometry,
    footprint: &Footprint,
    x: f64,
    y: f64,
    theta: f64,
    mut visit: F,
) -> usize {
    let poly = footprint.transformed(x, y, theta);
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in &poly {
        x_min = x_min.min(v[0]);
        x_max = x_max.max(v[0]);
        y_min = y_min.min(v[1]);
        y_max = y_max.max(v[1]);
    }
    let col_lo = ((x_min - geom.origin_x) / geom.resolution).ceil() as i64;
    let col_hi = ((x_max - geom.origin_x) / geom.resolution).floor() as i64;
    let row_lo = ((y_min - geom.origin_y) / geom.resolution).ceil() as i64;
    let row_hi = ((y_max - geom.origin_y) / geom.resolution).floor() as i64;

    let mut covered = 0;
    for row in row_lo..=row_hi {
        let cy = geom.origin_y + row as f64 * geom.resolution;
        for col in col_lo..=col_hi {
            let cx = geom.origin_x + col as f64 * geom.resolution;
            if point_in_polygon(&poly, cx, cy) {
                covered += 1;
                visit(row, col);
            }
        }
    }
    covered
}

/// Max-pooled potential of the footprint placed at a pose.
///
/// Falls back to the pose's own cell when the polygon covers no cell center.
/// Out-of-grid covered cells contribute the boundary-occupied potential.
pub fn footprint_potential(
    costmap: &CostGrid,
    footprint: &Footprint,
    x: f64,
    y: f64,
    theta: f64,
) -> Result<f64, GridError> {
    let geom = &costmap.geometry;
    let (row, col) = geom
        .world_to_cell(x, y)
        .ok_or(GridError::PoseOutsideGrid { x, y })?;
    let mut max = f64::NEG_INFINITY;
    let covered = for_each_covered_cell(geom, footprint, x, y, theta, |r, c| {
        let v = costmap.value_i64(r, c);
        if v > max {
            max = v;
        }
    });
    if covered == 0 {
        max = costmap.value(row, col);
    }
    Ok(max)
}

/// Min-pooled SDF of the footprint placed at a pose; the collision measure
/// used by the safety metric and the post-check.
pub fn footprint_min_sdf(
    sdf: &SdfGrid,
    footprint: &Footprint,
    x: f64,
    y: f64,
    theta: f64,
) -> Result<f64, GridError> {
    let geom = &sdf.geometry;
    let (row, col) = geom
        .world_to_cell(x, y)
        .ok_or(GridError::PoseOutsideGrid { x, y })?;
    let mut min = f64::INFINITY;
    let covered = for_each_covered_cell(geom, footprint, x, y, theta, |r, c| {
        let v = sdf.value_i64(r, c);
        if v < min {
            min = v;
        }
    });
    if covered == 0 {
        min = sdf.value(row, col);
    }
    Ok(min)
}

/// Footprint-pooled potential per (heading bin, cell).
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialGrid {
    pub geometry: GridGeometry,
    pub heading_bins: usize,
    pub weights: PotentialWeights,
    values: Vec<f64>,
}

impl PotentialGrid {
    /// Pool a pointwise costmap with a footprint over all cells and heading bins.
    pub fn from_costmap(
        costmap: &CostGrid,
        footprint: &Footprint,
        heading_bins: usize,
    ) -> Result<Self, GridError> {
        if heading_bins == 0 {
            return Err(GridError::InvalidHeadingBins);
        }
        let geom = costmap.geometry;
        let mut values = vec![0.0; heading_bins * geom.len()];
        for bin in 0..heading_bins {
            let theta = TAU * bin as f64 / heading_bins as f64;
            let base = bin * geom.len();
            for row in 0..geom.height {
                for col in 0..geom.width {
                    let (cx, cy) = geom.cell_center(row as i64, col as i64);
                    let v = footprint_potential(costmap, footprint, cx, cy, theta)
                        .expect("cell centers lie inside the grid");
                    values[base + geom.index(row, col)] = v;
                }
            }
        }
        Ok(Self {
            geometry: geom,
            heading_bins,
            weights: costmap.weights,
            values,
        })
    }

    #[inline]
    pub fn value(&self, bin: usize, row: usize, col: usize) -> f64 {
        self.values[bin * self.geometry.len() + self.geometry.index(row, col)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Max over heading bins; used for rendering.
    pub fn max_over_bins(&self, row: usize, col: usize) -> f64 {
        (0..self.heading_bins)
            .map(|b| self.value(b, row, col))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_raster<P: AsRef<Path>>(&self, path: P) -> Result<(), GridError> {
        io::write_scalar_raster(
            path.as_ref(),
            &self.geometry,
            Some(self.heading_bins),
            &self.values,
            "potential",
        )
    }
}

/// Footprint-pooled potential grid of an occupancy grid: SDF, pointwise
/// costmap, then footprint pooling per heading bin.
pub fn build_potential_grid(
    grid: &OccupancyGrid,
    footprint: &Footprint,
    weights: PotentialWeights,
    heading_bins: usize,
) -> Result<PotentialGrid, GridError> {
    let sdf = compute_sdf(grid);
    let costmap = pointwise_costmap(&sdf, weights);
    PotentialGrid::from_costmap(&costmap, footprint, heading_bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geom(w: usize, h: usize, res: f64) -> GridGeometry {
        GridGeometry::new(w, h, res, 0.0, 0.0).unwrap()
    }

    /// O(N^2) pairwise-minimum SDF oracle.
    fn brute_force_sdf(grid: &OccupancyGrid) -> Vec<f64> {
        let g = grid.geometry;
        let clamp = g.diagonal();
        let mut out = vec![0.0; g.len()];
        for r in 0..g.height {
            for c in 0..g.width {
                let occupied = grid.is_occupied(r, c);
                let mut best = f64::INFINITY;
                for rr in 0..g.height {
                    for cc in 0..g.width {
                        if grid.is_occupied(rr, cc) != occupied {
                            let dr = rr as f64 - r as f64;
                            let dc = cc as f64 - c as f64;
                            let d2 = dr * dr + dc * dc;
                            if d2 < best {
                                best = d2;
                            }
                        }
                    }
                }
                let dist = if best.is_finite() {
                    (g.resolution * best.sqrt()).min(clamp)
                } else {
                    clamp
                };
                out[g.index(r, c)] = if occupied { -dist } else { dist };
            }
        }
        out
    }

    #[test]
    fn sdf_all_free_is_clamp() {
        let grid = OccupancyGrid::empty(geom(3, 3, 0.1));
        let sdf = compute_sdf(&grid);
        let clamp = grid.geometry.diagonal();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(sdf.value(r, c), clamp);
            }
        }
    }

    #[test]
    fn sdf_all_occupied_is_negative_clamp() {
        let grid = OccupancyGrid::new(geom(3, 3, 0.1), vec![1; 9]).unwrap();
        let sdf = compute_sdf(&grid);
        let clamp = grid.geometry.diagonal();
        for v in sdf.values() {
            assert_eq!(*v, -clamp);
        }
    }

    #[test]
    fn sdf_single_center_obstacle() {
        let mut grid = OccupancyGrid::empty(geom(3, 3, 0.1));
        grid.set(1, 1, true);
        let sdf = compute_sdf(&grid);
        assert_relative_eq!(sdf.value(1, 1), -0.1, max_relative = 1e-12);
        assert_relative_eq!(sdf.value(0, 1), 0.1, max_relative = 1e-12);
        assert_relative_eq!(sdf.value(1, 0), 0.1, max_relative = 1e-12);
        assert_relative_eq!(sdf.value(0, 0), 0.1 * 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(sdf.value(2, 2), 0.1 * 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn sdf_matches_brute_force_on_random_grid() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = geom(50, 50, 0.1);
        let cells: Vec<u8> = (0..g.len()).map(|_| (rng.gen::<f64>() < 0.2) as u8).collect();
        let grid = OccupancyGrid::new(g, cells).unwrap();
        let sdf = compute_sdf(&grid);
        let oracle = brute_force_sdf(&grid);
        for (a, b) in sdf.values().iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sdf_oracle_equivalence_small_grids(
            w in 1usize..20, h in 1usize..20, seed in any::<u64>(), density in 0.0f64..1.0
        ) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = geom(w, h, 0.05);
            let cells: Vec<u8> = (0..g.len()).map(|_| (rng.gen::<f64>() < density) as u8).collect();
            let grid = OccupancyGrid::new(g, cells).unwrap();
            let sdf = compute_sdf(&grid);
            let oracle = brute_force_sdf(&grid);
            for (a, b) in sdf.values().iter().zip(oracle.iter()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn potential_strictly_decreasing(a in -50.0f64..50.0, delta in 1e-6f64..10.0) {
            let w = PotentialWeights::default();
            prop_assert!(repulsive_potential(a, w) > repulsive_potential(a + delta, w));
        }
    }

    #[test]
    fn potential_formula_reference_points() {
        let w = PotentialWeights { w1: 1.0, w2: 5.0 };
        assert_relative_eq!(repulsive_potential(1.0, w), PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(
            repulsive_potential(0.0, w),
            PI / 2.0 + 5.0f64.atan(),
            epsilon = 1e-12
        );
        // Tails approach 0 and w1*pi.
        assert!(repulsive_potential(1e12, w) < 1e-9);
        assert!((repulsive_potential(-1e12, w) - PI).abs() < 1e-9);
    }

    #[test]
    fn costmap_uniform_on_free_grid() {
        let grid = OccupancyGrid::empty(geom(4, 4, 0.1));
        let w = PotentialWeights::default();
        let sdf = compute_sdf(&grid);
        let cm = pointwise_costmap(&sdf, w);
        let expected = repulsive_potential(grid.geometry.diagonal(), w);
        for v in cm.values() {
            assert_eq!(*v, expected);
        }
    }

    #[test]
    fn costmap_monotone_decay_from_obstacle() {
        let mut grid = OccupancyGrid::empty(geom(21, 21, 0.1));
        grid.set(10, 10, true);
        let w = PotentialWeights::default();
        let cm = pointwise_costmap(&compute_sdf(&grid), w);
        let peak = cm.value(10, 10);
        // Walk a row and a diagonal away from the obstacle.
        let mut prev = peak;
        for c in 11..21 {
            let v = cm.value(10, c);
            assert!(v < prev);
            prev = v;
        }
        let mut prev = peak;
        for d in 1..10 {
            let v = cm.value(10 + d, 10 + d);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn costmap_matches_scalar_formula() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = geom(17, 11, 0.07);
        let cells: Vec<u8> = (0..g.len()).map(|_| (rng.gen::<f64>() < 0.3) as u8).collect();
        let grid = OccupancyGrid::new(g, cells).unwrap();
        let w = PotentialWeights { w1: 2.0, w2: 3.0 };
        let sdf = compute_sdf(&grid);
        let cm = pointwise_costmap(&sdf, w);
        for r in 0..g.height {
            for c in 0..g.width {
                assert_eq!(cm.value(r, c), repulsive_potential(sdf.value(r, c), w));
            }
        }
    }

    /// Hand-built costmap with chosen values for pooling tests.
    fn costmap_with(values: Vec<f64>, g: GridGeometry) -> CostGrid {
        CostGrid {
            geometry: g,
            weights: PotentialWeights::default(),
            values,
        }
    }

    #[test]
    fn footprint_pooling_takes_max() {
        // 3x1 strip of cells with potentials 0.1, 0.5, 0.3 and a footprint
        // covering exactly those three centers.
        let g = geom(3, 1, 0.1);
        let cm = costmap_with(vec![0.1, 0.5, 0.3], g);
        let fp = Footprint::rectangle(0.25, 0.05, "strip").unwrap();
        let v = footprint_potential(&cm, &fp, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn point_footprint_falls_back_to_pose_cell() {
        let g = geom(2, 2, 0.1);
        let cm = costmap_with(vec![0.4, 0.9, 0.2, 0.6], g);
        let fp = Footprint::rectangle(0.01, 0.01, "dot").unwrap();
        assert_eq!(footprint_potential(&cm, &fp, 0.1, 0.0, 0.3).unwrap(), 0.9);
        assert_eq!(footprint_potential(&cm, &fp, 0.0, 0.1, 0.0).unwrap(), 0.2);
    }

    #[test]
    fn footprint_pose_outside_grid_errors() {
        let g = geom(2, 2, 0.1);
        let cm = costmap_with(vec![0.0; 4], g);
        let fp = Footprint::folded_arm();
        assert!(matches!(
            footprint_potential(&cm, &fp, 5.0, 0.0, 0.0),
            Err(GridError::PoseOutsideGrid { .. })
        ));
    }

    #[test]
    fn footprint_symmetry_under_half_turn() {
        // Symmetric map around a symmetric pose: rotating the rectangle by pi
        // must pool the same cells.
        let mut grid = OccupancyGrid::empty(geom(21, 21, 0.1));
        grid.set(10, 4, true);
        grid.set(10, 16, true);
        let cm = pointwise_costmap(&compute_sdf(&grid), PotentialWeights::default());
        let fp = Footprint::rectangle(0.5, 0.3, "rect").unwrap();
        let a = footprint_potential(&cm, &fp, 1.0, 1.0, 0.0).unwrap();
        let b = footprint_potential(&cm, &fp, 1.0, 1.0, PI).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn potential_grid_single_bin_point_footprint_reduces_to_costmap() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = geom(12, 9, 0.1);
        let cells: Vec<u8> = (0..g.len()).map(|_| (rng.gen::<f64>() < 0.25) as u8).collect();
        let grid = OccupancyGrid::new(g, cells).unwrap();
        let w = PotentialWeights::default();
        let fp = Footprint::rectangle(0.01, 0.01, "dot").unwrap();
        let pg = build_potential_grid(&grid, &fp, w, 1).unwrap();
        let cm = pointwise_costmap(&compute_sdf(&grid), w);
        for r in 0..g.height {
            for c in 0..g.width {
                assert_eq!(pg.value(0, r, c), cm.value(r, c));
            }
        }
    }

    #[test]
    fn potential_grid_disc_footprint_heading_invariant() {
        let mut grid = OccupancyGrid::empty(geom(15, 15, 0.1));
        grid.fill_rect(6, 6, 8, 8, true);
        // Regular 16-gon: rotations by the bin angle (2*pi/8, a symmetry of
        // the polygon) cover identical cells. Radius 0.27 keeps every lattice
        // offset strictly away from the polygon boundary.
        let disc: Vec<[f64; 2]> = (0..16)
            .map(|i| {
                let a = TAU * i as f64 / 16.0;
                [0.27 * a.cos(), 0.27 * a.sin()]
            })
            .collect();
        let fp = Footprint::new(disc, "disc").unwrap();
        let pg = build_potential_grid(&grid, &fp, PotentialWeights::default(), 8).unwrap();
        for r in 0..15 {
            for c in 0..15 {
                let v0 = pg.value(0, r, c);
                for b in 1..8 {
                    assert_relative_eq!(pg.value(b, r, c), v0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn potential_grid_matches_per_entry_oracle() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let g = geom(20, 20, 0.1);
        let cells: Vec<u8> = (0..g.len()).map(|_| (rng.gen::<f64>() < 0.15) as u8).collect();
        let grid = OccupancyGrid::new(g, cells).unwrap();
        let w = PotentialWeights::default();
        let fp = Footprint::rectangle(0.4, 0.25, "rect").unwrap();
        let bins = 8;
        let pg = build_potential_grid(&grid, &fp, w, bins).unwrap();
        let cm = pointwise_costmap(&compute_sdf(&grid), w);
        for b in 0..bins {
            let theta = TAU * b as f64 / bins as f64;
            for r in 0..g.height {
                for c in 0..g.width {
                    let (cx, cy) = g.cell_center(r as i64, c as i64);
                    let direct = footprint_potential(&cm, &fp, cx, cy, theta).unwrap();
                    assert_eq!(pg.value(b, r, c), direct);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn footprint_dominance(
            seed in any::<u64>(),
            len in 0.3f64..0.8,
            wid in 0.3f64..0.6,
            scale in 1.0f64..2.0,
            px in 0.5f64..1.5,
            py in 0.5f64..1.5,
            theta in 0.0f64..TAU,
        ) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = geom(21, 21, 0.1);
            let cells: Vec<u8> = (0..g.len()).map(|_| (rng.gen::<f64>() < 0.2) as u8).collect();
            let grid = OccupancyGrid::new(g, cells).unwrap();
            let cm = pointwise_costmap(&compute_sdf(&grid), PotentialWeights::default());
            let small = Footprint::rectangle(len, wid, "small").unwrap();
            let big = Footprint::rectangle(len * scale, wid * scale, "big").unwrap();
            let a = footprint_potential(&cm, &small, px, py, theta).unwrap();
            let b = footprint_potential(&cm, &big, px, py, theta).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn potential_grid_values_in_open_range(seed in any::<u64>()) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = geom(10, 10, 0.1);
            let cells: Vec<u8> = (0..g.len()).map(|_| (rng.gen::<f64>() < 0.3) as u8).collect();
            let grid = OccupancyGrid::new(g, cells).unwrap();
            let w = PotentialWeights::default();
            let fp = Footprint::rectangle(0.3, 0.2, "rect").unwrap();
            let pg = build_potential_grid(&grid, &fp, w, 4).unwrap();
            for v in pg.values() {
                prop_assert!(*v > 0.0 && *v < w.max_potential());
            }
        }
    }

    #[test]
    fn footprint_constructors_validate() {
        assert!(Footprint::new(vec![[0.0, 0.0], [1.0, 0.0]], "l").is_err());
        assert!(Footprint::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], "flat").is_err());
        // Bowtie self-intersection.
        assert!(Footprint::new(
            vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]],
            "bowtie"
        )
        .is_err());
        // Clockwise input is normalized to counterclockwise.
        let fp = Footprint::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]], "cw").unwrap();
        assert!(signed_area(fp.vertices()) > 0.0);
        assert_eq!(Footprint::folded_arm().width(), 0.67);
    }
}
