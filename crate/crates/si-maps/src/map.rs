//! The final instance-aware map: per-cell (class, instance) pairs, a compact
//! binary format for them, and instance-level queries.
//!
//! Binary format `SIMAP001`, all little-endian: 8 magic bytes, u32 rows,
//! u32 cols, f64 scale, f64 origin_x, f64 origin_y, u8 flags (bit0 =
//! observation counts present), rows*cols pairs of (u16 class, u16 t)
//! row-major, then rows*cols u16 observation counts when bit0 is set.
//! 41 + 4*rows*cols bytes without the optional section.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataset::VOID_CLASS;
use crate::grid::{GridCell, MapGeometry, WorldPoint};
use crate::semantic::SemanticGrid;

const MAGIC: &[u8; 8] = b"SIMAP001";
const MAGIC_FAMILY: &[u8; 5] = b"SIMAP";

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("cell {cell}: instance label carries class {label_class} but the semantic grid says {grid_class}")]
    LabelMismatch { cell: u32, label_class: u16, grid_class: u16 },
    #[error("not a map file (bad magic)")]
    BadMagic,
    #[error("map file truncated: need {need} bytes, have {have}")]
    Truncated { need: u64, have: u64 },
    #[error("unsupported map format version {0:?}")]
    VersionUnsupported(String),
    #[error("{0} trailing bytes after map payload")]
    TrailingData(u64),
    #[error("the VOID class has no instances")]
    UnknownClass,
    #[error("asked for instance rank {wanted} but class {class_id} has {have}")]
    NotEnoughInstances { class_id: u16, wanted: usize, have: usize },
}

/// Instance labels staged for assembly: cell -> (class, t), covering exactly
/// the thing-class cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceLabels {
    entries: BTreeMap<u32, (u16, u16)>,
}

impl InstanceLabels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one class's numbering: `t[i]` belongs to cell `cells[i]`.
    pub fn insert_class(&mut self, class_id: u16, cells: &[u32], t: &[u16]) {
        assert_eq!(cells.len(), t.len());
        for (&cell, &t) in cells.iter().zip(t) {
            let prev = self.entries.insert(cell, (class_id, t));
            assert!(prev.is_none(), "cell {cell} labeled twice");
        }
    }

    pub fn get(&self, cell: u32) -> Option<(u16, u16)> {
        self.entries.get(&cell).copied()
    }
}

/// The instance-aware top-view map. `cells[i] = (class, t)`: VOID cells are
/// (VOID, 0), stuff cells (class, 0), thing cells carry t >= 1 for real
/// instances or 0 for sub-threshold residue.
#[derive(Debug, Clone, PartialEq)]
pub struct SIMap {
    pub geometry: MapGeometry,
    pub cells: Vec<(u16, u16)>,
    pub obs: Option<Vec<u16>>,
}

/// One instance's footprint and summary, the query surface over the map.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub class_id: u16,
    pub t: u16,
    /// Row-major ascending.
    pub footprint: Vec<GridCell>,
    /// Mean of footprint cell centers, on the z=0 plane.
    pub centroid: WorldPoint,
    pub cell_count: usize,
}

/// Union the semantic layer with per-class instance numbering. The labels
/// must cover exactly the cells whose semantic class is a thing class and
/// agree with the grid on the class, else LabelMismatch.
pub fn assemble(
    grid: &SemanticGrid,
    labels: &InstanceLabels,
    include_obs: bool,
) -> Result<SIMap, MapError> {
    let n = grid.classes.len();
    let mut cells = Vec::with_capacity(n);
    for idx in 0..n {
        let grid_class = grid.classes[idx];
        match labels.get(idx as u32) {
            Some((label_class, _)) if label_class != grid_class => {
                return Err(MapError::LabelMismatch {
                    cell: idx as u32,
                    label_class,
                    grid_class,
                });
            }
            Some((_, t)) => cells.push((grid_class, t)),
            None => cells.push((grid_class, 0)),
        }
    }
    let obs = include_obs
        .then(|| grid.obs.iter().map(|&o| o.min(u16::MAX as u32) as u16).collect());
    Ok(SIMap { geometry: grid.geometry, cells, obs })
}

impl SIMap {
    pub fn cell(&self, cell: GridCell) -> (u16, u16) {
        self.cells[self.geometry.index(cell)]
    }

    /// Exact serialized size in bytes.
    pub fn serialized_len(&self) -> usize {
        let n = self.geometry.cell_count();
        41 + 4 * n + if self.obs.is_some() { 2 * n } else { 0 }
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.geometry.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.geometry.cols as u32).to_le_bytes());
        out.extend_from_slice(&self.geometry.scale.to_le_bytes());
        out.extend_from_slice(&self.geometry.origin_x.to_le_bytes());
        out.extend_from_slice(&self.geometry.origin_y.to_le_bytes());
        out.push(u8::from(self.obs.is_some()));
        for &(class, t) in &self.cells {
            out.extend_from_slice(&class.to_le_bytes());
            out.extend_from_slice(&t.to_le_bytes());
        }
        if let Some(obs) = &self.obs {
            for &o in obs {
                out.extend_from_slice(&o.to_le_bytes());
            }
        }
        debug_assert_eq!(out.len(), self.serialized_len());
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<SIMap, MapError> {
        if bytes.len() < 41 {
            // Short files with the right magic prefix are truncated, not alien.
            if bytes.len() >= 8 && &bytes[..8] == MAGIC {
                return Err(MapError::Truncated { need: 41, have: bytes.len() as u64 });
            }
            if bytes.len() >= 8 {
                return Err(MapError::BadMagic);
            }
            return if bytes.starts_with(&MAGIC[..bytes.len()]) {
                Err(MapError::Truncated { need: 41, have: bytes.len() as u64 })
            } else {
                Err(MapError::BadMagic)
            };
        }
        if &bytes[..8] != MAGIC {
            if &bytes[..5] == MAGIC_FAMILY {
                return Err(MapError::VersionUnsupported(
                    String::from_utf8_lossy(&bytes[5..8]).into_owned(),
                ));
            }
            return Err(MapError::BadMagic);
        }
        let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let scale = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let origin_x = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let origin_y = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        let flags = bytes[40];
        let has_obs = flags & 1 != 0;

        let n = rows as u64 * cols as u64;
        let need = 41 + 4 * n + if has_obs { 2 * n } else { 0 };
        let have = bytes.len() as u64;
        if have < need {
            return Err(MapError::Truncated { need, have });
        }
        if have > need {
            return Err(MapError::TrailingData(have - need));
        }

        let n = n as usize;
        let mut cells = Vec::with_capacity(n);
        let mut off = 41;
        for _ in 0..n {
            let class = u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap());
            let t = u16::from_le_bytes(bytes[off + 2..off + 4].try_into().unwrap());
            cells.push((class, t));
            off += 4;
        }
        let obs = has_obs.then(|| {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap()));
                off += 2;
            }
            v
        });
        Ok(SIMap {
            geometry: MapGeometry::new(rows, cols, scale, origin_x, origin_y),
            cells,
            obs,
        })
    }

    /// All instances (t >= 1) of a class, ordered by t. A class with no
    /// cells simply has no instances; only VOID is refused.
    pub fn instances_of(&self, class_id: u16) -> Result<Vec<InstanceRecord>, MapError> {
        if class_id == VOID_CLASS {
            return Err(MapError::UnknownClass);
        }
        let mut by_t: BTreeMap<u16, Vec<GridCell>> = BTreeMap::new();
        for idx in 0..self.cells.len() {
            let (c, t) = self.cells[idx];
            if c == class_id && t >= 1 {
                by_t.entry(t).or_default().push(self.geometry.cell_at(idx));
            }
        }
        Ok(by_t
            .into_iter()
            .map(|(t, footprint)| {
                let mut sx = 0.0;
                let mut sy = 0.0;
                for &cell in &footprint {
                    let c = self.geometry.cell_center(cell);
                    sx += c.x;
                    sy += c.y;
                }
                let n = footprint.len() as f64;
                InstanceRecord {
                    class_id,
                    t,
                    cell_count: footprint.len(),
                    centroid: WorldPoint::new(sx / n, sy / n, 0.0),
                    footprint,
                }
            })
            .collect())
    }

    /// Rank instances of a class by centroid distance from a point (ties by
    /// t) and return the n-th, 1-based.
    pub fn nth_closest(
        &self,
        class_id: u16,
        from: WorldPoint,
        n: usize,
    ) -> Result<InstanceRecord, MapError> {
        assert!(n >= 1, "ranks are 1-based");
        let mut recs = self.instances_of(class_id)?;
        if recs.len() < n {
            return Err(MapError::NotEnoughInstances {
                class_id,
                wanted: n,
                have: recs.len(),
            });
        }
        recs.sort_by(|a, b| {
            let da = (a.centroid.x - from.x).hypot(a.centroid.y - from.y);
            let db = (b.centroid.x - from.x).hypot(b.centroid.y - from.y);
            da.total_cmp(&db).then(a.t.cmp(&b.t))
        });
        Ok(recs.swap_remove(n - 1))
    }
}
