//! Grid geometry shared by the whole pipeline: world points, cells, and the
//! top-view map frame (scale + origin).

use serde::{Deserialize, Serialize};

/// A point in the world frame, meters, z-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// A cell index into the top-view grid. `row` follows world y, `col` world x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
}

impl GridCell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Placement of the grid in the world: dimensions, meters-per-cell scale and
/// the world coordinates of the corner of cell (0, 0).
///
/// This is the part of the map frame that is persisted with a serialized map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Meters per cell.
    pub scale: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl MapGeometry {
    pub fn new(rows: usize, cols: usize, scale: f64, origin_x: f64, origin_y: f64) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid must have at least one cell");
        assert!(scale > 0.0, "scale must be positive");
        Self { rows, cols, scale, origin_x, origin_y }
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major linear index of a cell.
    pub fn index(&self, cell: GridCell) -> usize {
        cell.row * self.cols + cell.col
    }

    pub fn cell_at(&self, index: usize) -> GridCell {
        GridCell::new(index / self.cols, index % self.cols)
    }

    /// World coordinates of a cell's center, on the z = 0 plane.
    pub fn cell_center(&self, cell: GridCell) -> WorldPoint {
        WorldPoint::new(
            self.origin_x + (cell.col as f64 + 0.5) * self.scale,
            self.origin_y + (cell.row as f64 + 0.5) * self.scale,
            0.0,
        )
    }
}

/// Full configuration of the map frame used while building: geometry plus the
/// vertical band of world heights that may claim a cell label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub rows: usize,
    pub cols: usize,
    /// Meters per cell.
    pub scale: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    /// Lowest world z (meters) a point may have and still label a cell.
    pub z_min: f64,
    /// Highest world z (meters) a point may have and still label a cell.
    pub z_max: f64,
}

impl MapConfig {
    pub fn new(rows: usize, cols: usize, scale: f64, origin_x: f64, origin_y: f64, z_min: f64, z_max: f64) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid must have at least one cell");
        assert!(scale > 0.0, "scale must be positive");
        assert!(z_min < z_max, "z band must be non-empty");
        Self { rows, cols, scale, origin_x, origin_y, z_min, z_max }
    }

    pub fn geometry(&self) -> MapGeometry {
        MapGeometry::new(self.rows, self.cols, self.scale, self.origin_x, self.origin_y)
    }
}
