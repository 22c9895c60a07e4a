//! Synthetic scenes with exact ground truth.
//!
//! Scenes are a flat floor plus axis-aligned boxes. Box edges snap to
//! quarter-cell offsets so that wall hits land inside the footprint's own
//! boundary cells and the rasterized truth equals the cell-center test
//! exactly. Touching pairs share a face that lies exactly on a cell
//! boundary, with equal heights, so the contact walls are mutually occluded
//! and never rendered.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    CameraIntrinsics, ClassCatalog, DepthFrame, PanopticFrame, Pose, VOID_CLASS,
};
use crate::grid::MapConfig;
use crate::map::SIMap;
use crate::semantic::SemanticGrid;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("could not place objects after {tries} tries")]
    PlacementInfeasible { tries: usize },
    #[error("bad scene parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub class_id: u16,
    /// Stable identity across the whole scene, unlike per-frame entity ids.
    pub instance_uid: u32,
    /// Footprint corners are stored directly so touching partners carry the
    /// same f64 for the shared face and the gap is exactly zero.
    pub lo: (f64, f64),
    pub hi: (f64, f64),
    pub z_base: f64,
    pub height: f64,
}

impl BoxSpec {
    pub fn center(&self) -> (f64, f64) {
        ((self.lo.0 + self.hi.0) / 2.0, (self.lo.1 + self.hi.1) / 2.0)
    }

    pub fn top(&self) -> f64 {
        self.z_base + self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Floor spans [-half, half] in x and y at z = 0.
    pub floor_half_extent: f64,
    pub floor_class: u16,
    pub boxes: Vec<BoxSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SceneMode {
    /// Every pair of footprints at least min_gap apart.
    Separated { min_gap: f64 },
    /// n_objects = 2 * pairs boxes placed as face-sharing pairs; distinct
    /// pairs stay at least min_gap apart.
    Touching { pairs: usize, min_gap: f64 },
}

#[derive(Debug, Clone)]
pub struct SceneParams {
    pub n_objects: usize,
    /// Thing classes cycled over objects (separated) or pairs (touching).
    pub thing_classes: Vec<u16>,
    pub floor_class: u16,
    pub floor_half_extent: f64,
    /// Grid scale the boxes snap to.
    pub scale: f64,
    pub mode: SceneMode,
}

/// Gap between two axis-aligned footprints (0 when they touch or overlap).
pub fn footprint_gap(a: &BoxSpec, b: &BoxSpec) -> f64 {
    let (alo, ahi) = (a.lo, a.hi);
    let (blo, bhi) = (b.lo, b.hi);
    let gx = (blo.0 - ahi.0).max(alo.0 - bhi.0).max(0.0);
    let gy = (blo.1 - ahi.1).max(alo.1 - bhi.1).max(0.0);
    (gx * gx + gy * gy).sqrt()
}

/// Box spanning cells j..=k on an axis: lo = (j+0.25)s, hi = (k+0.75)s.
fn quarter_span(j: i64, k: i64, s: f64) -> (f64, f64) {
    ((j as f64 + 0.25) * s, (k as f64 + 0.75) * s)
}

const MAX_TRIES: usize = 10_000;

pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<SceneSpec, SynthError> {
    if params.n_objects == 0 || params.thing_classes.is_empty() {
        return Err(SynthError::BadParams("need at least one object and one class".into()));
    }
    if params.scale <= 0.0 || params.floor_half_extent <= params.scale * 20.0 {
        return Err(SynthError::BadParams("floor too small for the grid scale".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = params.scale;
    let half = params.floor_half_extent;
    // Usable cell-index range keeps footprints strictly inside the floor.
    let jmin = ((-half + s) / s).ceil() as i64;
    let jmax = ((half - s) / s).floor() as i64;
    let mut boxes: Vec<BoxSpec> = Vec::new();
    let mut tries = 0usize;

    match params.mode {
        SceneMode::Separated { min_gap } => {
            if min_gap < 0.0 {
                return Err(SynthError::BadParams("min_gap must be >= 0".into()));
            }
            while boxes.len() < params.n_objects {
                tries += 1;
                if tries > MAX_TRIES {
                    return Err(SynthError::PlacementInfeasible { tries });
                }
                let class_id = params.thing_classes[boxes.len() % params.thing_classes.len()];
                let w = rng.gen_range(8..=13i64);
                let h = rng.gen_range(8..=13i64);
                let jx = rng.gen_range(jmin..=jmax - w);
                let jy = rng.gen_range(jmin..=jmax - h);
                let (lx, hx) = quarter_span(jx, jx + w - 1, s);
                let (ly, hy) = quarter_span(jy, jy + h - 1, s);
                let cand = BoxSpec {
                    class_id,
                    instance_uid: boxes.len() as u32 + 1,
                    lo: (lx, ly),
                    hi: (hx, hy),
                    z_base: 0.0,
                    height: rng.gen_range(0.3..1.2),
                };
                if boxes.iter().all(|b| footprint_gap(b, &cand) >= min_gap) {
                    boxes.push(cand);
                }
            }
        }
        SceneMode::Touching { pairs, min_gap } => {
            if params.n_objects != pairs * 2 {
                return Err(SynthError::BadParams(format!(
                    "touching mode needs n_objects = 2 * pairs, got {} and {}",
                    params.n_objects, pairs
                )));
            }
            while boxes.len() < params.n_objects {
                tries += 1;
                if tries > MAX_TRIES {
                    return Err(SynthError::PlacementInfeasible { tries });
                }
                let pair_idx = boxes.len() / 2;
                let class_id = params.thing_classes[pair_idx % params.thing_classes.len()];
                let along_x = rng.gen_bool(0.5);
                // Sizes in cells along the contact axis (a, b) and across (w).
                let la = rng.gen_range(8..=13i64);
                let lb = rng.gen_range(8..=13i64);
                let w = rng.gen_range(8..=13i64);
                let dz = rng.gen_range(0.3..1.2);
                // Contact face sits exactly on the cell boundary at index m.
                let (ja, jw) = if along_x {
                    (rng.gen_range(jmin..=jmax - la - lb), rng.gen_range(jmin..=jmax - w))
                } else {
                    (rng.gen_range(jmin..=jmax - w), rng.gen_range(jmin..=jmax - la - lb))
                };
                let uid = boxes.len() as u32 + 1;
                let (box_a, box_b) = if along_x {
                    let m = ja + la;
                    let (wy_lo, wy_hi) = quarter_span(jw, jw + w - 1, s);
                    let (a_lo, _) = quarter_span(ja, 0, s);
                    let contact = m as f64 * s;
                    let (_, b_hi) = quarter_span(0, m + lb - 1, s);
                    (
                        BoxSpec {
                            class_id,
                            instance_uid: uid,
                            lo: (a_lo, wy_lo),
                            hi: (contact, wy_hi),
                            z_base: 0.0,
                            height: dz,
                        },
                        BoxSpec {
                            class_id,
                            instance_uid: uid + 1,
                            lo: (contact, wy_lo),
                            hi: (b_hi, wy_hi),
                            z_base: 0.0,
                            height: dz,
                        },
                    )
                } else {
                    let m = jw + la;
                    let (wx_lo, wx_hi) = quarter_span(ja, ja + w - 1, s);
                    let (a_lo, _) = quarter_span(jw, 0, s);
                    let contact = m as f64 * s;
                    let (_, b_hi) = quarter_span(0, m + lb - 1, s);
                    (
                        BoxSpec {
                            class_id,
                            instance_uid: uid,
                            lo: (wx_lo, a_lo),
                            hi: (wx_hi, contact),
                            z_base: 0.0,
                            height: dz,
                        },
                        BoxSpec {
                            class_id,
                            instance_uid: uid + 1,
                            lo: (wx_lo, contact),
                            hi: (wx_hi, b_hi),
                            z_base: 0.0,
                            height: dz,
                        },
                    )
                };
                let ok = boxes
                    .iter()
                    .all(|b| footprint_gap(b, &box_a) >= min_gap && footprint_gap(b, &box_b) >= min_gap);
                if ok {
                    boxes.push(box_a);
                    boxes.push(box_b);
                }
            }
        }
    }

    Ok(SceneSpec {
        floor_half_extent: half,
        floor_class: params.floor_class,
        boxes,
        seed,
    })
}

/// Ground truth: the instance map the pipeline should recover, plus the
/// mapping from scene uids to truth instance indices.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub map: SIMap,
    /// instance_uid -> (class_id, t) as numbered in the truth map.
    pub uid_to_instance: BTreeMap<u32, (u16, u16)>,
}

/// Rasterize by the cell-center test; overlaps resolved by greater top
/// height (ties by lower uid). Cells outside the floor extent stay VOID.
pub fn truth_map(scene: &SceneSpec, cfg: &MapConfig) -> SceneTruth {
    let geom = cfg.geometry();
    let n = geom.cell_count();
    let mut classes = vec![VOID_CLASS; n];
    let mut owner = vec![u32::MAX; n];
    for idx in 0..n {
        let c = geom.cell_center(geom.cell_at(idx));
        if c.x.abs() <= scene.floor_half_extent && c.y.abs() <= scene.floor_half_extent {
            classes[idx] = scene.floor_class;
        }
        let mut best: Option<(f64, u32, u16)> = None;
        for b in &scene.boxes {
            let (lo, hi) = (b.lo, b.hi);
            if c.x >= lo.0 && c.x <= hi.0 && c.y >= lo.1 && c.y <= hi.1 {
                let cand = (b.top(), b.instance_uid, b.class_id);
                let better = match best {
                    None => true,
                    Some((top, uid, _)) => {
                        cand.0 > top || (cand.0 == top && cand.1 < uid)
                    }
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        if let Some((_, uid, class_id)) = best {
            classes[idx] = class_id;
            owner[idx] = uid;
        }
    }

    // Group thing cells by uid, then number per class by (size desc, first
    // cell asc): the same ordering the pipeline uses.
    let mut by_uid: BTreeMap<u32, (u16, Vec<u32>)> = BTreeMap::new();
    for idx in 0..n {
        if owner[idx] != u32::MAX {
            by_uid
                .entry(owner[idx])
                .or_insert_with(|| (classes[idx], Vec::new()))
                .1
                .push(idx as u32);
        }
    }
    let mut by_class: BTreeMap<u16, Vec<(u32, Vec<u32>)>> = BTreeMap::new();
    for (uid, (class_id, cells)) in by_uid {
        by_class.entry(class_id).or_default().push((uid, cells));
    }
    let mut cells_out: Vec<(u16, u16)> = classes.iter().map(|&c| (c, 0u16)).collect();
    let mut uid_to_instance = BTreeMap::new();
    for (class_id, mut groups) in by_class {
        groups.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.1[0].cmp(&b.1[0])));
        for (rank, (uid, cells)) in groups.into_iter().enumerate() {
            let t = (rank + 1) as u16;
            uid_to_instance.insert(uid, (class_id, t));
            for idx in cells {
                cells_out[idx as usize].1 = t;
            }
        }
    }

    SceneTruth {
        map: SIMap { geometry: geom, cells: cells_out, obs: None },
        uid_to_instance,
    }
}

/// One rendered synthetic camera: depth plus panoptic labels.
#[derive(Debug, Clone)]
pub struct RenderOut {
    pub depth: DepthFrame,
    pub pano: PanopticFrame,
    pub pose: Pose,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum HitTarget {
    Floor,
    Box(usize),
}

/// Nearest-hit raycast through every pixel. Depth is the camera-frame z of
/// the hit (the ray parameter for a direction with unit z). Misses get depth
/// 0 and the VOID class. Entity ids are dense per frame in first-visible
/// row-major order; they carry no cross-frame meaning.
pub fn render_frame(scene: &SceneSpec, pose: &Pose, intr: &CameraIntrinsics) -> RenderOut {
    let w = intr.width as usize;
    let h = intr.height as usize;
    let mut depth = vec![0.0f32; w * h];
    let mut pano = vec![(VOID_CLASS, 0u16); w * h];
    let origin = pose.t;
    let r = &pose.r;
    let mut entity_ids: HashMap<HitTarget, u16> = HashMap::new();

    let aabbs: Vec<([f64; 3], [f64; 3])> = scene
        .boxes
        .iter()
        .map(|b| {
            let (lo, hi) = (b.lo, b.hi);
            ([lo.0, lo.1, b.z_base], [hi.0, hi.1, b.top()])
        })
        .collect();

    for v in 0..h {
        for u in 0..w {
            let dc = [
                (u as f64 - intr.cx) / intr.fx,
                (v as f64 - intr.cy) / intr.fy,
                1.0,
            ];
            // Rotate into the world frame (no translation for directions).
            let dw = [
                r[0][0] * dc[0] + r[0][1] * dc[1] + r[0][2] * dc[2],
                r[1][0] * dc[0] + r[1][1] * dc[1] + r[1][2] * dc[2],
                r[2][0] * dc[0] + r[2][1] * dc[1] + r[2][2] * dc[2],
            ];

            let mut best: Option<(f64, HitTarget)> = None;
            let mut consider = |t: f64, target: HitTarget| {
                if t > 1e-9 && best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, target));
                }
            };

            if dw[2] < -1e-12 {
                let t = -origin[2] / dw[2];
                let px = origin[0] + t * dw[0];
                let py = origin[1] + t * dw[1];
                if px.abs() <= scene.floor_half_extent && py.abs() <= scene.floor_half_extent {
                    consider(t, HitTarget::Floor);
                }
            }

            for (i, (lo, hi)) in aabbs.iter().enumerate() {
                let mut tmin = f64::NEG_INFINITY;
                let mut tmax = f64::INFINITY;
                let mut miss = false;
                for a in 0..3 {
                    if dw[a].abs() < 1e-12 {
                        if origin[a] < lo[a] || origin[a] > hi[a] {
                            miss = true;
                            break;
                        }
                    } else {
                        let t0 = (lo[a] - origin[a]) / dw[a];
                        let t1 = (hi[a] - origin[a]) / dw[a];
                        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
                        tmin = tmin.max(t0);
                        tmax = tmax.min(t1);
                    }
                }
                if !miss && tmin <= tmax {
                    consider(tmin, HitTarget::Box(i));
                }
            }

            if let Some((t, target)) = best {
                let next = entity_ids.len() as u16;
                let entity = *entity_ids.entry(target).or_insert(next);
                let class = match target {
                    HitTarget::Floor => scene.floor_class,
                    HitTarget::Box(i) => scene.boxes[i].class_id,
                };
                let px = v * w + u;
                depth[px] = t as f32;
                pano[px] = (class, entity);
            }
        }
    }

    RenderOut {
        depth: DepthFrame { width: intr.width, height: intr.height, data: depth },
        pano: PanopticFrame { width: intr.width, height: intr.height, data: pano },
        pose: pose.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryMode {
    Orbit,
    Sweep,
}

fn normalize3(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n < 1e-12 {
        return None;
    }
    Some([v[0] / n, v[1] / n, v[2] / n])
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Camera-to-world pose looking from eye toward target: camera +z forward,
/// +x right, +y down, with world +z as up.
pub fn look_at(eye: [f64; 3], target: [f64; 3]) -> Pose {
    let fwd = normalize3([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]])
        .expect("eye and target must differ");
    let up = [0.0, 0.0, 1.0];
    let right = normalize3(cross3(fwd, up)).unwrap_or([1.0, 0.0, 0.0]);
    let down = cross3(fwd, right);
    Pose {
        r: [
            [right[0], down[0], fwd[0]],
            [right[1], down[1], fwd[1]],
            [right[2], down[2], fwd[2]],
        ],
        t: eye,
    }
}

/// Deterministic scene-covering camera poses. Orbit: a circle 1 m outside
/// the floor at 1.5 m height, facing the scene center. Sweep: a serpentine
/// grid over the floor pitched 45 degrees down along the travel direction.
pub fn camera_trajectory(
    scene: &SceneSpec,
    n_frames: usize,
    mode: TrajectoryMode,
    _seed: u64,
) -> Vec<Pose> {
    assert!(n_frames >= 1);
    let half = scene.floor_half_extent;
    match mode {
        TrajectoryMode::Orbit => {
            let radius = half + 1.0;
            let height = 1.5;
            (0..n_frames)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / n_frames as f64;
                    look_at([radius * th.cos(), radius * th.sin(), height], [0.0, 0.0, 0.0])
                })
                .collect()
        }
        TrajectoryMode::Sweep => {
            let height = 1.8;
            let reach = half + 1.0;
            let rows = (n_frames as f64).sqrt().ceil() as usize;
            let cols = n_frames.div_ceil(rows);
            let mut poses = Vec::with_capacity(n_frames);
            'outer: for ry in 0..rows {
                let fy = if rows == 1 { 0.5 } else { ry as f64 / (rows - 1) as f64 };
                let y = -reach + fy * 2.0 * reach;
                for rx in 0..cols {
                    let fx = if cols == 1 { 0.5 } else { rx as f64 / (cols - 1) as f64 };
                    // Serpentine: odd rows run right to left.
                    let fx = if ry % 2 == 0 { fx } else { 1.0 - fx };
                    let x = -reach + fx * 2.0 * reach;
                    let dir = if ry % 2 == 0 { 1.0 } else { -1.0 };
                    // 45 degree pitch: look-ahead on the ground equals height.
                    poses.push(look_at([x, y, height], [x + dir * height, y, 0.0]));
                    if poses.len() == n_frames {
                        break 'outer;
                    }
                }
            }
            poses
        }
    }
}

/// Instance labels by spatial connectivity alone: per thing class, 4-connected
/// components of same-class cells, numbered by (size desc, first cell asc).
/// Returns one t per cell (0 where not a thing).
pub fn cc_baseline(grid: &SemanticGrid, catalog: &ClassCatalog) -> Vec<u16> {
    let geom = grid.geometry;
    let n = geom.cell_count();
    let mut t_out = vec![0u16; n];
    let mut comp = vec![u32::MAX; n];
    let mut components: BTreeMap<u16, Vec<Vec<u32>>> = BTreeMap::new();

    for start in 0..n {
        if comp[start] != u32::MAX {
            continue;
        }
        let class = grid.class_at(geom.cell_at(start));
        if class == VOID_CLASS || !catalog.is_thing(class) {
            continue;
        }
        let id = components.values().map(|v| v.len()).sum::<usize>() as u32;
        let mut cells = Vec::new();
        let mut queue = VecDeque::from([start]);
        comp[start] = id;
        while let Some(idx) = queue.pop_front() {
            cells.push(idx as u32);
            let cell = geom.cell_at(idx);
            let mut neighbors = Vec::with_capacity(4);
            if cell.row > 0 {
                neighbors.push(idx - geom.cols);
            }
            if cell.row + 1 < geom.rows {
                neighbors.push(idx + geom.cols);
            }
            if cell.col > 0 {
                neighbors.push(idx - 1);
            }
            if cell.col + 1 < geom.cols {
                neighbors.push(idx + 1);
            }
            for nb in neighbors {
                if comp[nb] == u32::MAX && grid.class_at(geom.cell_at(nb)) == class {
                    comp[nb] = id;
                    queue.push_back(nb);
                }
            }
        }
        cells.sort_unstable();
        components.entry(class).or_default().push(cells);
    }

    for groups in components.values_mut() {
        groups.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        for (rank, cells) in groups.iter().enumerate() {
            for &idx in cells {
                t_out[idx as usize] = (rank + 1) as u16;
            }
        }
    }
    t_out
}

/// The cc-labeled instance map over a semantic grid.
pub fn cc_map(grid: &SemanticGrid, catalog: &ClassCatalog) -> SIMap {
    let t = cc_baseline(grid, catalog);
    let geom = grid.geometry;
    let cells = (0..geom.cell_count())
        .map(|idx| (grid.class_at(geom.cell_at(idx)), t[idx]))
        .collect();
    SIMap { geometry: geom, cells, obs: None }
}

/// Map window that covers the floor plus a margin, origin aligned to whole
/// cells so box snapping and map cells agree.
pub fn scene_map_config(scene: &SceneSpec, scale: f64, z_min: f64, z_max: f64) -> MapConfig {
    let margin = 1.0;
    let half_cells = ((scene.floor_half_extent + margin) / scale).ceil() as usize;
    let origin = -(half_cells as f64) * scale;
    MapConfig {
        rows: half_cells * 2,
        cols: half_cells * 2,
        scale,
        origin_x: origin,
        origin_y: origin,
        z_min,
        z_max,
    }
}
