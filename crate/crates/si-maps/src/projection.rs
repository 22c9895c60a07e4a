//! Back-projection of depth pixels into the world frame and binning of world
//! points into grid cells.
//!
//! Axis mapping is fixed: grid rows follow world y, columns follow world x.
//! "Height" always means the world z coordinate.

use thiserror::Error;

use crate::dataset::{CameraIntrinsics, FrameRecord, Pose, VOID_CLASS};
use crate::grid::{GridCell, MapConfig, WorldPoint};

/// Depth values above this are treated as invalid and skipped, like <= 0.
pub const DEFAULT_MAX_DEPTH: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("depth {0} is not a valid range (need finite, > 0)")]
    InvalidDepth(f64),
}

/// One accepted depth pixel, landed in a grid cell. Carries everything the
/// accumulation passes need: the label pair, the height that competes for the
/// cell, and provenance for deterministic tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellHit {
    pub cell: GridCell,
    /// Row-major pixel index within the source frame.
    pub pixel: usize,
    pub world_z: f64,
    pub class_id: u16,
    pub entity_id: u16,
    pub frame_id: u64,
}

/// Pinhole back-projection of pixel (u, v) at planar depth d (camera z).
pub fn pixel_to_camera(
    u: u32,
    v: u32,
    d: f64,
    intr: &CameraIntrinsics,
) -> Result<[f64; 3], ProjectionError> {
    if !d.is_finite() || d <= 0.0 {
        return Err(ProjectionError::InvalidDepth(d));
    }
    Ok([
        (u as f64 - intr.cx) * d / intr.fx,
        (v as f64 - intr.cy) * d / intr.fy,
        d,
    ])
}

pub fn camera_to_world(p: [f64; 3], pose: &Pose) -> WorldPoint {
    let w = pose.transform(p);
    WorldPoint::new(w[0], w[1], w[2])
}

/// Bin a world point into the grid, or None when it falls outside.
pub fn world_to_grid(p: WorldPoint, cfg: &MapConfig) -> Option<GridCell> {
    let col = ((p.x - cfg.origin_x) / cfg.scale).floor();
    let row = ((p.y - cfg.origin_y) / cfg.scale).floor();
    if row < 0.0 || col < 0.0 || row >= cfg.rows as f64 || col >= cfg.cols as f64 {
        return None;
    }
    Some(GridCell::new(row as usize, col as usize))
}

/// Project every valid pixel of a frame into the grid. Emits hits in
/// row-major pixel order. Pixels are dropped (not errors) when the depth is
/// an invalid marker or beyond `max_depth`, the class is VOID, the world z
/// is outside the configured band, or the cell is out of bounds.
pub fn project_frame(
    frame: &FrameRecord,
    intr: &CameraIntrinsics,
    cfg: &MapConfig,
    max_depth: f64,
) -> Vec<CellHit> {
    let mut hits = Vec::new();
    let width = intr.width as usize;
    for (pixel, (&d, &(class_id, entity_id))) in
        frame.depth.data.iter().zip(frame.pano.data.iter()).enumerate()
    {
        let d = d as f64;
        if !d.is_finite() || d <= 0.0 || d > max_depth || class_id == VOID_CLASS {
            continue;
        }
        let u = (pixel % width) as u32;
        let v = (pixel / width) as u32;
        let cam = match pixel_to_camera(u, v, d, intr) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let world = camera_to_world(cam, &frame.pose);
        if !(world.z >= cfg.z_min && world.z <= cfg.z_max) {
            continue;
        }
        let Some(cell) = world_to_grid(world, cfg) else { continue };
        hits.push(CellHit {
            cell,
            pixel,
            world_z: world.z,
            class_id,
            entity_id,
            frame_id: frame.frame_id,
        });
    }
    hits
}

/// Pick a map frame that covers every accepted point across all frames, with
/// a fixed margin. Used when the configuration does not pin the geometry.
pub fn auto_map_config(
    frames: &[FrameRecord],
    intr: &CameraIntrinsics,
    scale: f64,
    z_min: f64,
    z_max: f64,
    max_depth: f64,
) -> MapConfig {
    const MARGIN: f64 = 1.0;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let width = intr.width as usize;
    for frame in frames {
        for (pixel, (&d, &(class_id, _))) in
            frame.depth.data.iter().zip(frame.pano.data.iter()).enumerate()
        {
            let d = d as f64;
            if !d.is_finite() || d <= 0.0 || d > max_depth || class_id == VOID_CLASS {
                continue;
            }
            let u = (pixel % width) as u32;
            let v = (pixel / width) as u32;
            let cam = pixel_to_camera(u, v, d, intr).expect("depth already checked");
            let w = camera_to_world(cam, &frame.pose);
            if !(w.z >= z_min && w.z <= z_max) {
                continue;
            }
            lo[0] = lo[0].min(w.x);
            lo[1] = lo[1].min(w.y);
            hi[0] = hi[0].max(w.x);
            hi[1] = hi[1].max(w.y);
        }
    }
    if lo[0] > hi[0] {
        // Nothing projected; one-cell map at the origin keeps invariants.
        return MapConfig::new(1, 1, scale, 0.0, 0.0, z_min, z_max);
    }
    let origin_x = lo[0] - MARGIN;
    let origin_y = lo[1] - MARGIN;
    let cols = (((hi[0] + MARGIN - origin_x) / scale).ceil() as usize).max(1);
    let rows = (((hi[1] + MARGIN - origin_y) / scale).ceil() as usize).max(1);
    MapConfig::new(rows, cols, scale, origin_x, origin_y, z_min, z_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DepthFrame, PanopticFrame};

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 40.0, 101, 81).unwrap()
    }

    #[test]
    fn principal_point_projects_on_axis() {
        let p = pixel_to_camera(50, 40, 2.0, &intr()).unwrap();
        assert_eq!(p, [0.0, 0.0, 2.0]);
    }

    #[test]
    fn unit_tangent_offset() {
        // u = cx + fx at depth 1 lands one meter right of the axis.
        let i = CameraIntrinsics::new(100.0, 100.0, 50.0, 40.0, 151, 81).unwrap();
        let p = pixel_to_camera(150, 40, 1.0, &i).unwrap();
        assert_eq!(p, [1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_depth_is_invalid() {
        assert_eq!(pixel_to_camera(0, 0, 0.0, &intr()), Err(ProjectionError::InvalidDepth(0.0)));
    }

    #[test]
    fn rotation_about_z_permutes_axes() {
        let m = [
            0.0, -1.0, 0.0, 0.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ];
        let pose = Pose::from_matrix(&m, 0).unwrap();
        let w = camera_to_world([1.0, 0.0, 0.0], &pose);
        assert!((w.x - 0.0).abs() < 1e-12 && (w.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_binning_floors() {
        let cfg = MapConfig::new(100, 100, 0.05, 0.0, 0.0, -1.0, 3.0);
        let cell = world_to_grid(WorldPoint::new(0.12, 0.23, 0.0), &cfg).unwrap();
        assert_eq!(cell, GridCell::new(4, 2));
        assert_eq!(
            world_to_grid(WorldPoint::new(0.0, 0.0, 0.0), &cfg),
            Some(GridCell::new(0, 0))
        );
        assert_eq!(world_to_grid(WorldPoint::new(-0.01, 0.5, 0.0), &cfg), None);
    }

    #[test]
    fn grid_binning_is_scale_covariant() {
        let a = MapConfig::new(50, 50, 0.05, 0.0, 0.0, -1.0, 3.0);
        let b = MapConfig::new(50, 50, 0.1, 0.0, 0.0, -1.0, 3.0);
        for &(x, y) in &[(0.3, 0.7), (1.23, 0.04), (2.499, 2.499)] {
            let ca = world_to_grid(WorldPoint::new(x, y, 0.0), &a);
            let cb = world_to_grid(WorldPoint::new(2.0 * x, 2.0 * y, 0.0), &b);
            assert_eq!(ca, cb);
        }
    }

    #[test]
    fn reprojection_recovers_pixel() {
        let i = intr();
        for (u, v, d) in [(0u32, 0u32, 0.5), (50, 40, 2.0), (100, 80, 7.25), (13, 57, 9.99)] {
            let p = pixel_to_camera(u, v, d, &i).unwrap();
            let u2 = p[0] / p[2] * i.fx + i.cx;
            let v2 = p[1] / p[2] * i.fy + i.cy;
            assert!((u2 - u as f64).abs() < 1e-6 && (v2 - v as f64).abs() < 1e-6);
        }
    }

    fn one_pixel_frame(d: f32, class: u16) -> (FrameRecord, CameraIntrinsics) {
        let i = CameraIntrinsics::new(10.0, 10.0, 0.0, 0.0, 1, 1).unwrap();
        // Camera at z=1 looking straight down: camera z maps to world -z,
        // camera x to world x, camera y to world -y.
        let m = [
            1.0, 0.0, 0.0, 0.0,
            0.0, -1.0, 0.0, 0.0,
            0.0, 0.0, -1.0, 1.0,
            0.0, 0.0, 0.0, 1.0,
        ];
        let frame = FrameRecord {
            frame_id: 0,
            depth: DepthFrame { width: 1, height: 1, data: vec![d] },
            pano: PanopticFrame { width: 1, height: 1, data: vec![(class, 0)] },
            pose: Pose::from_matrix(&m, 0).unwrap(),
        };
        (frame, i)
    }

    #[test]
    fn project_frame_composes_atomic_ops() {
        let (frame, i) = one_pixel_frame(0.5, 3);
        let cfg = MapConfig::new(10, 10, 0.1, -0.5, -0.5, 0.0, 2.0);
        let hits = project_frame(&frame, &i, &cfg, DEFAULT_MAX_DEPTH);
        assert_eq!(hits.len(), 1);
        let cam = pixel_to_camera(0, 0, 0.5, &i).unwrap();
        let world = camera_to_world(cam, &frame.pose);
        assert_eq!(hits[0].cell, world_to_grid(world, &cfg).unwrap());
        assert_eq!(hits[0].world_z, world.z);
        assert_eq!(hits[0].class_id, 3);
    }

    #[test]
    fn project_frame_skips_invalid_void_and_out_of_band() {
        let cfg = MapConfig::new(10, 10, 0.1, -0.5, -0.5, 0.0, 2.0);
        let (frame, i) = one_pixel_frame(0.0, 3);
        assert!(project_frame(&frame, &i, &cfg, DEFAULT_MAX_DEPTH).is_empty());
        let (frame, i) = one_pixel_frame(0.5, VOID_CLASS);
        assert!(project_frame(&frame, &i, &cfg, DEFAULT_MAX_DEPTH).is_empty());
        // World z = 1 - 3 = -2, below the band.
        let (frame, i) = one_pixel_frame(3.0, 3);
        assert!(project_frame(&frame, &i, &cfg, DEFAULT_MAX_DEPTH).is_empty());
        // Beyond max_depth.
        let (frame, i) = one_pixel_frame(0.9, 3);
        assert!(project_frame(&frame, &i, &cfg, 0.5).is_empty());
    }

    #[test]
    fn auto_config_covers_points_with_margin() {
        let (frame, i) = one_pixel_frame(0.5, 3);
        let cfg = auto_map_config(&[frame.clone()], &i, 0.05, 0.0, 2.0, DEFAULT_MAX_DEPTH);
        // The single point is at world (0, 0, 0.5).
        assert!(cfg.origin_x <= -1.0 + 1e-9 && cfg.origin_y <= -1.0 + 1e-9);
        let hits = project_frame(&frame, &i, &cfg, DEFAULT_MAX_DEPTH);
        assert_eq!(hits.len(), 1);
    }
}
