//! Per-class weighted graphs over grid cells.
//!
//! Two 4-adjacent pixels of one frame that carry the same (class, entity)
//! pair and land in different cells are evidence that those cells belong to
//! one physical object; each such pair adds one raw count to the cell-pair
//! edge. Raw counts are normalized by the endpoints' mean observation count
//! so revisit frequency cannot inflate weights.

use std::collections::HashMap;

use thiserror::Error;

use crate::dataset::{ClassCatalog, PanopticFrame};
use crate::grid::MapGeometry;
use crate::projection::CellHit;
use crate::semantic::SemanticGrid;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("class {0} not in catalog")]
    UnknownClass(u16),
    #[error("class {0} is a stuff class; instance graphs exist only for things")]
    StuffClassRequested(u16),
}

/// Unordered cell pair, canonically ordered by row-major index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey {
    pub a: u32,
    pub b: u32,
}

impl EdgeKey {
    pub fn new(x: u32, y: u32) -> Self {
        assert_ne!(x, y, "self edges are never recorded");
        if x < y {
            Self { a: x, b: y }
        } else {
            Self { a: y, b: x }
        }
    }
}

/// Raw co-observation counts per class. Counts are plain sums over frames,
/// so accumulation order (and parallel merge grouping) cannot matter.
#[derive(Debug, Clone, Default)]
pub struct EdgeAccumulator {
    per_class: HashMap<u16, HashMap<EdgeKey, u64>>,
}

impl EdgeAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Count same-entity adjacencies of one frame. `hits` must be that
    /// frame's projection output (row-major pixel order).
    pub fn accumulate_frame_edges(
        &mut self,
        hits: &[CellHit],
        pano: &PanopticFrame,
        geometry: &MapGeometry,
    ) {
        let w = pano.width as usize;
        let h = pano.height as usize;
        let mut by_pixel: Vec<Option<(u32, u16, u16)>> = vec![None; w * h];
        for hit in hits {
            let cell = geometry.index(hit.cell) as u32;
            by_pixel[hit.pixel] = Some((cell, hit.class_id, hit.entity_id));
        }
        let mut bump = |pa: usize, pb: usize| {
            let (Some((ca, cla, ea)), Some((cb, clb, eb))) = (by_pixel[pa], by_pixel[pb]) else {
                return;
            };
            if cla != clb || ea != eb || ca == cb {
                return;
            }
            *self
                .per_class
                .entry(cla)
                .or_default()
                .entry(EdgeKey::new(ca, cb))
                .or_insert(0) += 1;
        };
        for v in 0..h {
            for u in 0..w {
                let p = v * w + u;
                if u + 1 < w {
                    bump(p, p + 1);
                }
                if v + 1 < h {
                    bump(p, p + w);
                }
            }
        }
    }

    /// Fold another accumulator in (integer sums; commutative).
    pub fn merge(mut self, other: EdgeAccumulator) -> EdgeAccumulator {
        for (class, edges) in other.per_class {
            let mine = self.per_class.entry(class).or_default();
            for (key, count) in edges {
                *mine.entry(key).or_insert(0) += count;
            }
        }
        self
    }

    pub fn raw_count(&self, class: u16, key: EdgeKey) -> u64 {
        self.per_class.get(&class).and_then(|m| m.get(&key)).copied().unwrap_or(0)
    }

    /// Classes with at least one recorded edge, ascending.
    pub fn classes(&self) -> Vec<u16> {
        let mut v: Vec<u16> = self.per_class.keys().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Weighted undirected graph for one thing class. Node i is the cell with
/// row-major index `cells[i]`; `cells` is ascending, so node ids are a
/// deterministic function of the semantic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceGraph {
    pub class_id: u16,
    /// Row-major cell index per node, strictly increasing.
    pub cells: Vec<u32>,
    /// (node, node, weight) with node_a < node_b, ascending; weights > 0.
    pub edges: Vec<(u32, u32, f64)>,
    /// Observation count per node, copied from the semantic grid.
    pub obs: Vec<u32>,
    /// Weighted degree per node.
    pub degree: Vec<f64>,
    /// Total edge weight (each undirected edge counted once).
    pub total_weight: f64,
}

impl InstanceGraph {
    pub fn node_count(&self) -> usize {
        self.cells.len()
    }
}

/// Extract the class subgraph: nodes are the cells whose final label is
/// `class_id` (isolated ones included), edges are the normalized raw counts
/// whose endpoints both kept that label.
pub fn build_class_graph(
    grid: &SemanticGrid,
    acc: &EdgeAccumulator,
    class_id: u16,
    catalog: &ClassCatalog,
) -> Result<InstanceGraph, GraphError> {
    if !catalog.contains(class_id) {
        return Err(GraphError::UnknownClass(class_id));
    }
    if !catalog.is_thing(class_id) {
        return Err(GraphError::StuffClassRequested(class_id));
    }

    let mut cells = Vec::new();
    let mut node_of = HashMap::new();
    for (idx, &c) in grid.classes.iter().enumerate() {
        if c == class_id {
            node_of.insert(idx as u32, cells.len() as u32);
            cells.push(idx as u32);
        }
    }
    let obs: Vec<u32> = cells.iter().map(|&c| grid.obs[c as usize]).collect();

    let mut edges = Vec::new();
    if let Some(raw) = acc.per_class.get(&class_id) {
        let mut keys: Vec<(&EdgeKey, &u64)> = raw.iter().collect();
        keys.sort_unstable_by_key(|(k, _)| **k);
        for (key, &count) in keys {
            // A cell's label may have been overwritten by a taller class
            // after the co-observation happened; such edges are dropped.
            let (Some(&na), Some(&nb)) = (node_of.get(&key.a), node_of.get(&key.b)) else {
                continue;
            };
            let mean_obs = (obs[na as usize] + obs[nb as usize]) as f64 / 2.0;
            edges.push((na, nb, count as f64 / mean_obs));
        }
    }

    let mut degree = vec![0.0; cells.len()];
    let mut total_weight = 0.0;
    for &(a, b, w) in &edges {
        degree[a as usize] += w;
        degree[b as usize] += w;
        total_weight += w;
    }
    Ok(InstanceGraph { class_id, cells, edges, obs, degree, total_weight })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassEntry, ClassKind};
    use crate::grid::{GridCell, MapGeometry};

    const CHAIR: u16 = 2;
    const FLOOR: u16 = 1;

    fn catalog() -> ClassCatalog {
        ClassCatalog::new(vec![
            ClassEntry { id: FLOOR, name: "floor".into(), kind: ClassKind::Stuff },
            ClassEntry { id: CHAIR, name: "chair".into(), kind: ClassKind::Thing },
        ])
        .unwrap()
    }

    fn geom() -> MapGeometry {
        MapGeometry::new(4, 4, 1.0, 0.0, 0.0)
    }

    fn pano_2x1() -> PanopticFrame {
        PanopticFrame { width: 2, height: 1, data: vec![(CHAIR, 0); 2] }
    }

    fn hit(pixel: usize, cell: u32, class_id: u16, entity_id: u16) -> CellHit {
        let g = geom();
        CellHit {
            cell: GridCell::new(cell as usize / g.cols, cell as usize % g.cols),
            pixel,
            world_z: 0.5,
            class_id,
            entity_id,
            frame_id: 0,
        }
    }

    fn grid_with(classes: &[(u32, u16)], obs: &[(u32, u32)]) -> SemanticGrid {
        let g = geom();
        let mut grid = SemanticGrid {
            geometry: g,
            classes: vec![crate::dataset::VOID_CLASS; g.cell_count()],
            obs: vec![0; g.cell_count()],
        };
        for &(c, cl) in classes {
            grid.classes[c as usize] = cl;
        }
        for &(c, o) in obs {
            grid.obs[c as usize] = o;
        }
        grid
    }

    #[test]
    fn adjacent_same_entity_counts_once() {
        let mut acc = EdgeAccumulator::new();
        acc.accumulate_frame_edges(
            &[hit(0, 0, CHAIR, 3), hit(1, 1, CHAIR, 3)],
            &pano_2x1(),
            &geom(),
        );
        assert_eq!(acc.raw_count(CHAIR, EdgeKey::new(0, 1)), 1);
    }

    #[test]
    fn different_entities_do_not_connect() {
        let mut acc = EdgeAccumulator::new();
        acc.accumulate_frame_edges(
            &[hit(0, 0, CHAIR, 3), hit(1, 1, CHAIR, 4)],
            &pano_2x1(),
            &geom(),
        );
        assert_eq!(acc.raw_count(CHAIR, EdgeKey::new(0, 1)), 0);
    }

    #[test]
    fn same_cell_records_nothing() {
        let mut acc = EdgeAccumulator::new();
        acc.accumulate_frame_edges(
            &[hit(0, 0, CHAIR, 3), hit(1, 0, CHAIR, 3)],
            &pano_2x1(),
            &geom(),
        );
        assert_eq!(acc.classes(), Vec::<u16>::new());
    }

    #[test]
    fn normalization_divides_by_mean_obs() {
        let mut acc = EdgeAccumulator::new();
        for _ in 0..4 {
            acc.accumulate_frame_edges(
                &[hit(0, 0, CHAIR, 3), hit(1, 1, CHAIR, 3)],
                &pano_2x1(),
                &geom(),
            );
        }
        let grid = grid_with(&[(0, CHAIR), (1, CHAIR)], &[(0, 2), (1, 2)]);
        let g = build_class_graph(&grid, &acc, CHAIR, &catalog()).unwrap();
        assert_eq!(g.edges, vec![(0, 1, 2.0)]);
        assert_eq!(g.total_weight, 2.0);
        assert_eq!(g.degree, vec![2.0, 2.0]);
    }

    #[test]
    fn weight_is_one_when_seen_every_observation() {
        let mut acc = EdgeAccumulator::new();
        let f = 7;
        for _ in 0..f {
            acc.accumulate_frame_edges(
                &[hit(0, 0, CHAIR, 1), hit(1, 1, CHAIR, 1)],
                &pano_2x1(),
                &geom(),
            );
        }
        let grid = grid_with(&[(0, CHAIR), (1, CHAIR)], &[(0, f), (1, f)]);
        let g = build_class_graph(&grid, &acc, CHAIR, &catalog()).unwrap();
        assert_eq!(g.edges, vec![(0, 1, 1.0)]);
    }

    #[test]
    fn edge_with_relabeled_endpoint_dropped_and_isolated_node_kept() {
        let mut acc = EdgeAccumulator::new();
        acc.accumulate_frame_edges(
            &[hit(0, 0, CHAIR, 3), hit(1, 1, CHAIR, 3)],
            &pano_2x1(),
            &geom(),
        );
        // Cell 1's final label went to floor; cell 5 is chair but never
        // co-observed.
        let grid = grid_with(&[(0, CHAIR), (1, FLOOR), (5, CHAIR)], &[(0, 1), (1, 1), (5, 1)]);
        let g = build_class_graph(&grid, &acc, CHAIR, &catalog()).unwrap();
        assert_eq!(g.cells, vec![0, 5]);
        assert!(g.edges.is_empty());
        assert_eq!(g.degree, vec![0.0, 0.0]);
    }

    #[test]
    fn stuff_and_unknown_classes_rejected() {
        let grid = grid_with(&[], &[]);
        let acc = EdgeAccumulator::new();
        assert_eq!(
            build_class_graph(&grid, &acc, FLOOR, &catalog()),
            Err(GraphError::StuffClassRequested(FLOOR))
        );
        assert_eq!(
            build_class_graph(&grid, &acc, 99, &catalog()),
            Err(GraphError::UnknownClass(99))
        );
    }

    #[test]
    fn merge_equals_single_accumulation() {
        let frame_a = [hit(0, 0, CHAIR, 3), hit(1, 1, CHAIR, 3)];
        let frame_b = [hit(0, 1, CHAIR, 2), hit(1, 2, CHAIR, 2)];
        let mut whole = EdgeAccumulator::new();
        whole.accumulate_frame_edges(&frame_a, &pano_2x1(), &geom());
        whole.accumulate_frame_edges(&frame_b, &pano_2x1(), &geom());

        let mut pa = EdgeAccumulator::new();
        pa.accumulate_frame_edges(&frame_a, &pano_2x1(), &geom());
        let mut pb = EdgeAccumulator::new();
        pb.accumulate_frame_edges(&frame_b, &pano_2x1(), &geom());
        let merged = pb.merge(pa);

        for class in whole.classes() {
            for key in [EdgeKey::new(0, 1), EdgeKey::new(1, 2)] {
                assert_eq!(whole.raw_count(class, key), merged.raw_count(class, key));
            }
        }
    }
}
