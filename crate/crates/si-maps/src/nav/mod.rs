//! Goal resolution and program execution on top of an instance map.
//!
//! A parsed [`Program`](program::Program) runs against an immutable
//! [`SIMap`]: each call either rotates the agent, resolves an
//! instance-specific goal set and walks an A* path to it, or stops the
//! episode. Positions quantize to cell centers so trajectories are exactly
//! reproducible.

pub mod planner;
pub mod program;

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClassCatalog, ClassKind, VOID_CLASS};
use crate::grid::{GridCell, MapGeometry, WorldPoint};
use crate::map::{InstanceRecord, MapError, SIMap};
use crate::nav::planner::{plan_path, PlanError};
use crate::nav::program::{PrimitiveCall, Program};

#[derive(Debug, Error, PartialEq)]
pub enum NavError {
    #[error("unknown class name {0:?}")]
    UnknownClassName(String),
    #[error("no instance {t} of class {class:?}")]
    NoSuchInstance { class: String, t: u16 },
    #[error("class {class:?} has {have} instance(s), rank {wanted} requested")]
    NotEnoughInstances { class: String, wanted: usize, have: usize },
    #[error("no instance in the field of view")]
    EmptyView,
    #[error("no navigable goal cell")]
    NoNavigableGoal,
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("goal is unreachable")]
    Unreachable,
}

impl From<PlanError> for NavError {
    fn from(_: PlanError) -> Self {
        NavError::Unreachable
    }
}

/// Wrap into [−π, π).
pub fn normalize_heading(h: f64) -> f64 {
    let w = (h + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2π for inputs just below -π.
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: WorldPoint,
    /// Radians, world frame, 0 along +x, counterclockwise positive.
    pub heading: f64,
}

impl AgentState {
    pub fn new(position: WorldPoint, heading: f64) -> Self {
        Self { position, heading: normalize_heading(heading) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NavConfig {
    /// Classes the agent may stand on.
    pub navigable_classes: BTreeSet<u16>,
    /// Whether unobserved cells count as navigable.
    pub void_navigable: bool,
    /// Obstacle dilation radius, Chebyshev, in cells.
    pub inflation_cells: u32,
    /// Half-angle of the field-of-view cone for in-view queries, radians.
    pub fov_half_angle: f64,
    /// How close to an instance footprint "arrived" means, meters.
    pub stop_radius: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            navigable_classes: BTreeSet::new(),
            void_navigable: false,
            inflation_cells: 2,
            fov_half_angle: 60f64.to_radians(),
            stop_radius: 0.5,
        }
    }
}

impl NavConfig {
    /// Defaults with the navigable set filled from the catalog: stuff classes
    /// whose name suggests walkable support.
    pub fn for_catalog(catalog: &ClassCatalog) -> Self {
        let mut cfg = Self::default();
        for entry in catalog.entries() {
            if entry.kind != ClassKind::Stuff {
                continue;
            }
            let name = entry.name.to_ascii_lowercase();
            if ["floor", "ground", "carpet", "rug"].iter().any(|k| name.contains(k)) {
                cfg.navigable_classes.insert(entry.id);
            }
        }
        cfg
    }
}

/// Per-cell navigability derived from a map and a config.
#[derive(Debug, Clone)]
pub struct OccupancyView {
    geometry: MapGeometry,
    navigable: Vec<bool>,
}

impl OccupancyView {
    pub fn from_flags(geometry: MapGeometry, navigable: Vec<bool>) -> Self {
        assert_eq!(navigable.len(), geometry.cell_count());
        Self { geometry, navigable }
    }

    pub fn geometry(&self) -> &MapGeometry {
        &self.geometry
    }

    pub fn is_navigable(&self, cell: GridCell) -> bool {
        cell.row < self.geometry.rows
            && cell.col < self.geometry.cols
            && self.navigable[self.geometry.index(cell)]
    }

    /// Navigable cell whose center is nearest to a point; ties go to the
    /// lower row-major index. None when nothing is navigable.
    pub fn nearest_navigable(&self, point: WorldPoint) -> Option<GridCell> {
        let mut best: Option<(f64, usize)> = None;
        for (idx, &nav) in self.navigable.iter().enumerate() {
            if !nav {
                continue;
            }
            let c = self.geometry.cell_center(self.geometry.cell_at(idx));
            let d2 = (c.x - point.x).powi(2) + (c.y - point.y).powi(2);
            if best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, idx));
            }
        }
        best.map(|(_, idx)| self.geometry.cell_at(idx))
    }
}

/// Navigable iff the cell's class is in the navigable set (or VOID under the
/// void policy), then every obstacle dilated by the inflation radius.
pub fn make_occupancy(map: &SIMap, cfg: &NavConfig) -> OccupancyView {
    let geom = map.geometry;
    let base: Vec<bool> = map
        .cells
        .iter()
        .map(|&(class, _)| {
            cfg.navigable_classes.contains(&class)
                || (class == VOID_CLASS && cfg.void_navigable)
        })
        .collect();
    if cfg.inflation_cells == 0 {
        return OccupancyView::from_flags(geom, base);
    }
    let r = cfg.inflation_cells as i64;
    let mut out = base.clone();
    for row in 0..geom.rows {
        for col in 0..geom.cols {
            if base[geom.index(GridCell { row, col })] {
                continue;
            }
            let r0 = (row as i64 - r).max(0) as usize;
            let r1 = ((row as i64 + r) as usize).min(geom.rows - 1);
            let c0 = (col as i64 - r).max(0) as usize;
            let c1 = ((col as i64 + r) as usize).min(geom.cols - 1);
            for rr in r0..=r1 {
                for cc in c0..=c1 {
                    out[geom.index(GridCell { row: rr, col: cc })] = false;
                }
            }
        }
    }
    OccupancyView::from_flags(geom, out)
}

fn cell_of(geom: &MapGeometry, p: WorldPoint) -> Option<GridCell> {
    let col = ((p.x - geom.origin_x) / geom.scale).floor();
    let row = ((p.y - geom.origin_y) / geom.scale).floor();
    if row < 0.0 || col < 0.0 || row >= geom.rows as f64 || col >= geom.cols as f64 {
        return None;
    }
    Some(GridCell { row: row as usize, col: col as usize })
}

fn class_id_for(catalog: &ClassCatalog, name: &str) -> Result<u16, NavError> {
    catalog.id_of(name).ok_or_else(|| NavError::UnknownClassName(name.to_string()))
}

fn instances(map: &SIMap, catalog: &ClassCatalog, name: &str) -> Result<Vec<InstanceRecord>, NavError> {
    let class_id = class_id_for(catalog, name)?;
    map.instances_of(class_id).map_err(|e| match e {
        MapError::UnknownClass => NavError::UnknownClassName(name.to_string()),
        other => panic!("unexpected map error: {other}"),
    })
}

fn instance(map: &SIMap, catalog: &ClassCatalog, name: &str, t: i64) -> Result<InstanceRecord, NavError> {
    if t < 1 || t > u16::MAX as i64 {
        return Err(NavError::NoSuchInstance { class: name.to_string(), t: t.max(0) as u16 });
    }
    instances(map, catalog, name)?
        .into_iter()
        .find(|r| r.t == t as u16)
        .ok_or(NavError::NoSuchInstance { class: name.to_string(), t: t as u16 })
}

fn rank_arg(call: &PrimitiveCall, idx: usize) -> Result<usize, NavError> {
    let n = call.args[idx].as_int();
    if n < 1 {
        return Err(NavError::BadArgument(format!("rank must be >= 1, got {n}")));
    }
    Ok(n as usize)
}

fn euclid(a: WorldPoint, b: WorldPoint) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Navigable cells whose center lies within `radius` of any footprint cell
/// center. Sorted by row-major index.
fn ring_goals(
    occ: &OccupancyView,
    footprints: &[&[GridCell]],
    radius: f64,
) -> Result<Vec<GridCell>, NavError> {
    let geom = occ.geometry();
    let pad = (radius / geom.scale).ceil() as i64 + 1;
    let mut centers = Vec::new();
    let (mut rmin, mut rmax, mut cmin, mut cmax) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for fp in footprints {
        for &cell in *fp {
            centers.push(geom.cell_center(cell));
            rmin = rmin.min(cell.row as i64);
            rmax = rmax.max(cell.row as i64);
            cmin = cmin.min(cell.col as i64);
            cmax = cmax.max(cell.col as i64);
        }
    }
    assert!(!centers.is_empty(), "instance footprints are never empty");
    let r0 = (rmin - pad).max(0) as usize;
    let r1 = ((rmax + pad) as usize).min(geom.rows - 1);
    let c0 = (cmin - pad).max(0) as usize;
    let c1 = ((cmax + pad) as usize).min(geom.cols - 1);
    let mut goals = Vec::new();
    for row in r0..=r1 {
        for col in c0..=c1 {
            let cell = GridCell { row, col };
            if !occ.is_navigable(cell) {
                continue;
            }
            let c = geom.cell_center(cell);
            let near = centers
                .iter()
                .any(|f| (f.x - c.x).hypot(f.y - c.y) <= radius + 1e-9);
            if near {
                goals.push(cell);
            }
        }
    }
    if goals.is_empty() {
        return Err(NavError::NoNavigableGoal);
    }
    Ok(goals)
}

fn point_goal(occ: &OccupancyView, point: WorldPoint) -> Result<Vec<GridCell>, NavError> {
    match occ.nearest_navigable(point) {
        Some(cell) => Ok(vec![cell]),
        None => Err(NavError::NoNavigableGoal),
    }
}

/// Longest-footprint-axis frame of an instance: unit front direction, sign
/// normalized so front.x > 0 (or front.y > 0 when front.x == 0).
fn principal_axis(geom: &MapGeometry, rec: &InstanceRecord) -> (f64, f64) {
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &cell in &rec.footprint {
        let c = geom.cell_center(cell);
        let dx = c.x - rec.centroid.x;
        let dy = c.y - rec.centroid.y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (mut ex, mut ey) = (theta.cos(), theta.sin());
    if ex < 0.0 || (ex == 0.0 && ey < 0.0) {
        ex = -ex;
        ey = -ey;
    }
    (ex, ey)
}

/// Goal point a stop radius beyond the footprint extent along `dir` from the
/// centroid.
fn side_point(geom: &MapGeometry, rec: &InstanceRecord, dir: (f64, f64), stop_radius: f64) -> WorldPoint {
    let mut extent: f64 = 0.0;
    for &cell in &rec.footprint {
        let c = geom.cell_center(cell);
        let proj = (c.x - rec.centroid.x) * dir.0 + (c.y - rec.centroid.y) * dir.1;
        extent = extent.max(proj);
    }
    WorldPoint::new(
        rec.centroid.x + (extent + stop_radius) * dir.0,
        rec.centroid.y + (extent + stop_radius) * dir.1,
        0.0,
    )
}

fn side_goal(
    map: &SIMap,
    catalog: &ClassCatalog,
    occ: &OccupancyView,
    cfg: &NavConfig,
    call: &PrimitiveCall,
    pick: impl Fn((f64, f64)) -> (f64, f64),
) -> Result<Vec<GridCell>, NavError> {
    let rec = instance(map, catalog, call.args[0].as_str(), call.args[1].as_int())?;
    let front = principal_axis(&map.geometry, &rec);
    let dir = pick(front);
    point_goal(occ, side_point(&map.geometry, &rec, dir, cfg.stop_radius))
}

fn real_arg(call: &PrimitiveCall, idx: usize) -> Result<f64, NavError> {
    let v = call.args[idx].as_real();
    if !v.is_finite() {
        return Err(NavError::BadArgument(format!("argument {} is not finite", idx + 1)));
    }
    Ok(v)
}

/// Instances of a class whose centroid bearing lies inside the agent's FOV
/// cone, ranked by centroid distance (ties by t).
fn in_view_ranked(
    map: &SIMap,
    catalog: &ClassCatalog,
    name: &str,
    agent: &AgentState,
    cfg: &NavConfig,
) -> Result<Vec<InstanceRecord>, NavError> {
    let mut recs: Vec<InstanceRecord> = instances(map, catalog, name)?
        .into_iter()
        .filter(|r| {
            let bearing = (r.centroid.y - agent.position.y).atan2(r.centroid.x - agent.position.x);
            normalize_heading(bearing - agent.heading).abs() <= cfg.fov_half_angle + 1e-12
        })
        .collect();
    if recs.is_empty() {
        return Err(NavError::EmptyView);
    }
    recs.sort_by(|a, b| {
        euclid(a.centroid, agent.position)
            .total_cmp(&euclid(b.centroid, agent.position))
            .then(a.t.cmp(&b.t))
    });
    Ok(recs)
}

fn by_distance(
    map: &SIMap,
    catalog: &ClassCatalog,
    name: &str,
    from: WorldPoint,
    n: usize,
) -> Result<InstanceRecord, NavError> {
    let class_id = class_id_for(catalog, name)?;
    map.nth_closest(class_id, from, n).map_err(|e| match e {
        MapError::NotEnoughInstances { wanted, have, .. } => {
            NavError::NotEnoughInstances { class: name.to_string(), wanted, have }
        }
        MapError::UnknownClass => NavError::UnknownClassName(name.to_string()),
        other => panic!("unexpected map error: {other}"),
    })
}

/// Resolve the goal cell set for a goal-directed primitive. Pose matters only
/// for the distance-ranked and in-view forms.
pub fn resolve_goal(
    map: &SIMap,
    catalog: &ClassCatalog,
    call: &PrimitiveCall,
    agent: &AgentState,
    cfg: &NavConfig,
    occ: &OccupancyView,
) -> Result<Vec<GridCell>, NavError> {
    let geom = &map.geometry;
    match call.name.as_str() {
        "move_to_object" => {
            let recs = instances(map, catalog, call.args[0].as_str())?;
            if recs.is_empty() {
                return Err(NavError::NotEnoughInstances {
                    class: call.args[0].as_str().to_string(),
                    wanted: 1,
                    have: 0,
                });
            }
            let fps: Vec<&[GridCell]> = recs.iter().map(|r| r.footprint.as_slice()).collect();
            ring_goals(occ, &fps, cfg.stop_radius)
        }
        "move_to_instance" => {
            let rec = instance(map, catalog, call.args[0].as_str(), call.args[1].as_int())?;
            ring_goals(occ, &[rec.footprint.as_slice()], cfg.stop_radius)
        }
        "move_to_nth_closest" => {
            let n = rank_arg(call, 1)?;
            let rec = by_distance(map, catalog, call.args[0].as_str(), agent.position, n)?;
            ring_goals(occ, &[rec.footprint.as_slice()], cfg.stop_radius)
        }
        "move_to_nth_in_view" => {
            let n = rank_arg(call, 1)?;
            let recs = in_view_ranked(map, catalog, call.args[0].as_str(), agent, cfg)?;
            if recs.len() < n {
                return Err(NavError::NotEnoughInstances {
                    class: call.args[0].as_str().to_string(),
                    wanted: n,
                    have: recs.len(),
                });
            }
            ring_goals(occ, &[recs[n - 1].footprint.as_slice()], cfg.stop_radius)
        }
        "move_to_closest" => {
            let rec = by_distance(map, catalog, call.args[0].as_str(), agent.position, 1)?;
            ring_goals(occ, &[rec.footprint.as_slice()], cfg.stop_radius)
        }
        "move_to_farthest" => {
            let name = call.args[0].as_str();
            let recs = instances(map, catalog, name)?;
            if recs.is_empty() {
                return Err(NavError::NotEnoughInstances {
                    class: name.to_string(),
                    wanted: 1,
                    have: 0,
                });
            }
            let n = recs.len();
            let rec = by_distance(map, catalog, name, agent.position, n)?;
            ring_goals(occ, &[rec.footprint.as_slice()], cfg.stop_radius)
        }
        "move_between" => {
            let a = instance(map, catalog, call.args[0].as_str(), call.args[1].as_int())?;
            let b = instance(map, catalog, call.args[2].as_str(), call.args[3].as_int())?;
            let mid = WorldPoint::new(
                (a.centroid.x + b.centroid.x) / 2.0,
                (a.centroid.y + b.centroid.y) / 2.0,
                0.0,
            );
            point_goal(occ, mid)
        }
        "move_between_instances" => {
            let name = call.args[0].as_str();
            let a = instance(map, catalog, name, call.args[1].as_int())?;
            let b = instance(map, catalog, name, call.args[2].as_int())?;
            let mid = WorldPoint::new(
                (a.centroid.x + b.centroid.x) / 2.0,
                (a.centroid.y + b.centroid.y) / 2.0,
                0.0,
            );
            point_goal(occ, mid)
        }
        "move_to_left_of" => side_goal(map, catalog, occ, cfg, call, |f| (-f.1, f.0)),
        "move_to_right_of" => side_goal(map, catalog, occ, cfg, call, |f| (f.1, -f.0)),
        "move_in_front_of" => side_goal(map, catalog, occ, cfg, call, |f| f),
        "move_behind" => side_goal(map, catalog, occ, cfg, call, |f| (-f.0, -f.1)),
        "move_to_point" => {
            let x = real_arg(call, 0)?;
            let y = real_arg(call, 1)?;
            let cell = cell_of(geom, WorldPoint::new(x, y, 0.0)).ok_or(NavError::NoNavigableGoal)?;
            if !occ.is_navigable(cell) {
                return Err(NavError::NoNavigableGoal);
            }
            Ok(vec![cell])
        }
        "move_within" => {
            let radius = real_arg(call, 2)?;
            if radius <= 0.0 {
                return Err(NavError::BadArgument(format!("radius must be positive, got {radius}")));
            }
            let rec = instance(map, catalog, call.args[0].as_str(), call.args[1].as_int())?;
            ring_goals(occ, &[rec.footprint.as_slice()], radius)
        }
        other => panic!("{other} is not a goal-directed primitive"),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrajRecord {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrajRecord>,
    /// Message of the call that aborted the episode, if any.
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> AgentState {
        let last = self.records.last().expect("trajectory always has records");
        AgentState::new(WorldPoint::new(last.x, last.y, 0.0), last.heading)
    }

    pub fn events(&self) -> impl Iterator<Item = &str> {
        self.records.iter().filter_map(|r| r.event.as_deref())
    }
}

struct Episode<'a> {
    occ: &'a OccupancyView,
    agent: AgentState,
    records: Vec<TrajRecord>,
}

impl Episode<'_> {
    fn push(&mut self, event: Option<String>) {
        self.records.push(TrajRecord {
            step: self.records.len(),
            x: self.agent.position.x,
            y: self.agent.position.y,
            heading: self.agent.heading,
            event,
        });
    }

    fn current_cell(&self) -> Result<GridCell, NavError> {
        cell_of(self.occ.geometry(), self.agent.position).ok_or(NavError::Unreachable)
    }

    /// Walk an A* path to the goal set, recording one pose per cell.
    fn walk_to(&mut self, goals: &[GridCell]) -> Result<(), NavError> {
        let start = self.current_cell()?;
        let (path, _cost) = plan_path(self.occ, start, goals)?;
        let geom = self.occ.geometry();
        for &cell in path.iter().skip(1) {
            let target = geom.cell_center(cell);
            self.agent.heading = normalize_heading(
                (target.y - self.agent.position.y).atan2(target.x - self.agent.position.x),
            );
            self.agent.position = target;
            self.push(None);
        }
        Ok(())
    }

    /// Straight-line walk of `dist` meters along `dir`, quantized to cell
    /// centers. Fails if any swept cell is blocked.
    fn walk_line(&mut self, dir: (f64, f64), dist: f64) -> Result<(), NavError> {
        let geom = *self.occ.geometry();
        let start_cell = self.current_cell()?;
        if !self.occ.is_navigable(start_cell) {
            return Err(NavError::Unreachable);
        }
        let from = self.agent.position;
        let target = WorldPoint::new(from.x + dir.0 * dist, from.y + dir.1 * dist, 0.0);
        // Quarter-cell sampling visits every crossed cell in 8-adjacent order.
        let steps = ((dist / (geom.scale / 4.0)).ceil() as usize).max(1);
        let mut cells = vec![start_cell];
        for i in 1..=steps {
            let f = i as f64 / steps as f64;
            let p = WorldPoint::new(
                from.x + (target.x - from.x) * f,
                from.y + (target.y - from.y) * f,
                0.0,
            );
            let cell = cell_of(&geom, p).ok_or(NavError::Unreachable)?;
            if !self.occ.is_navigable(cell) {
                return Err(NavError::Unreachable);
            }
            if cell != *cells.last().unwrap() {
                cells.push(cell);
            }
        }
        for &cell in cells.iter().skip(1) {
            self.agent.position = geom.cell_center(cell);
            self.push(None);
        }
        Ok(())
    }
}

/// Run a program. Calls execute in order; the first failing call records a
/// failure event and aborts, leaving the partial trajectory.
pub fn execute(
    prog: &Program,
    map: &SIMap,
    catalog: &ClassCatalog,
    start: AgentState,
    cfg: &NavConfig,
) -> Trajectory {
    let occ = make_occupancy(map, cfg);
    let mut ep = Episode { occ: &occ, agent: start, records: Vec::new() };
    ep.push(None);
    let start_position = start.position;
    let mut failure = None;

    'calls: for call in &prog.calls {
        ep.push(Some(format!("call:{call}")));
        let outcome: Result<(), NavError> = (|| {
            match call.name.as_str() {
                "turn_left" => {
                    let deg = real_arg(call, 0)?;
                    ep.agent.heading = normalize_heading(ep.agent.heading + deg.to_radians());
                    ep.push(None);
                }
                "turn_right" => {
                    let deg = real_arg(call, 0)?;
                    ep.agent.heading = normalize_heading(ep.agent.heading - deg.to_radians());
                    ep.push(None);
                }
                "turn_to_heading" => {
                    let deg = real_arg(call, 0)?;
                    ep.agent.heading = normalize_heading(deg.to_radians());
                    ep.push(None);
                }
                "face_object" => {
                    let rec = by_distance(map, catalog, call.args[0].as_str(), ep.agent.position, 1)?;
                    ep.agent.heading = normalize_heading(
                        (rec.centroid.y - ep.agent.position.y)
                            .atan2(rec.centroid.x - ep.agent.position.x),
                    );
                    ep.push(None);
                }
                "face_instance" => {
                    let rec = instance(map, catalog, call.args[0].as_str(), call.args[1].as_int())?;
                    ep.agent.heading = normalize_heading(
                        (rec.centroid.y - ep.agent.position.y)
                            .atan2(rec.centroid.x - ep.agent.position.x),
                    );
                    ep.push(None);
                }
                "move_forward" => {
                    let d = real_arg(call, 0)?;
                    if d < 0.0 {
                        return Err(NavError::BadArgument("distance must be >= 0".into()));
                    }
                    let h = ep.agent.heading;
                    ep.walk_line((h.cos(), h.sin()), d)?;
                    ep.push(Some("goal_reached".into()));
                }
                "move_backward" => {
                    let d = real_arg(call, 0)?;
                    if d < 0.0 {
                        return Err(NavError::BadArgument("distance must be >= 0".into()));
                    }
                    let h = ep.agent.heading;
                    ep.walk_line((-h.cos(), -h.sin()), d)?;
                    ep.push(Some("goal_reached".into()));
                }
                "return_to_start" => {
                    let goal = cell_of(occ.geometry(), start_position).ok_or(NavError::Unreachable)?;
                    ep.push(Some("goal_resolved".into()));
                    ep.walk_to(&[goal])?;
                    ep.push(Some("goal_reached".into()));
                }
                "stop" => {
                    ep.push(Some("stop".into()));
                }
                _ => {
                    let goals = resolve_goal(map, catalog, call, &ep.agent, cfg, &occ)?;
                    ep.push(Some("goal_resolved".into()));
                    ep.walk_to(&goals)?;
                    ep.push(Some("goal_reached".into()));
                }
            }
            Ok(())
        })();
        match outcome {
            Ok(()) => {
                if call.name == "stop" {
                    break 'calls;
                }
            }
            Err(e) => {
                let msg = e.to_string();
                ep.push(Some(format!("failure:{msg}")));
                failure = Some(msg);
                break 'calls;
            }
        }
    }

    Trajectory { records: ep.records, failure }
}
