//! Fusion of per-frame cell hits into one semantic label per cell.
//!
//! The label of a cell is the class of the highest accepted point that ever
//! landed in it. Ties on height go to the lower frame id, then the lower
//! row-major pixel index, which makes integration order irrelevant.

use thiserror::Error;

use crate::grid::{GridCell, MapConfig, MapGeometry};
use crate::projection::CellHit;

#[derive(Debug, Error, PartialEq)]
pub enum SemanticError {
    #[error("hits from frames {0} and {1} in one integrate call")]
    MixedFrameIds(u64, u64),
}

/// Winning hit for a cell. The (z desc, frame asc, pixel asc) order is a
/// total order over accepted hits, so merging partial accumulators in any
/// grouping reproduces sequential integration exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Best {
    z: f64,
    frame_id: u64,
    pixel: usize,
    class_id: u16,
}

impl Best {
    fn beats(&self, other: &Best) -> bool {
        if self.z != other.z {
            return self.z > other.z;
        }
        (self.frame_id, self.pixel) < (other.frame_id, other.pixel)
    }
}

#[derive(Debug, Clone)]
pub struct SemanticAccumulator {
    geometry: MapGeometry,
    best: Vec<Option<Best>>,
    obs: Vec<u32>,
    /// Frame that last bumped each cell's obs count; one bump per frame.
    last_frame: Vec<Option<u64>>,
}

impl SemanticAccumulator {
    pub fn new(cfg: &MapConfig) -> Self {
        let geometry = cfg.geometry();
        let n = geometry.cell_count();
        Self { geometry, best: vec![None; n], obs: vec![0; n], last_frame: vec![None; n] }
    }

    pub fn geometry(&self) -> MapGeometry {
        self.geometry
    }

    /// Fold one frame's hits in. All hits must come from a single frame.
    pub fn integrate_frame(&mut self, hits: &[CellHit]) -> Result<(), SemanticError> {
        let Some(first) = hits.first() else { return Ok(()) };
        let frame_id = first.frame_id;
        if let Some(h) = hits.iter().find(|h| h.frame_id != frame_id) {
            return Err(SemanticError::MixedFrameIds(frame_id, h.frame_id));
        }
        for h in hits {
            let idx = self.geometry.index(h.cell);
            let cand = Best { z: h.world_z, frame_id, pixel: h.pixel, class_id: h.class_id };
            match &self.best[idx] {
                Some(b) if !cand.beats(b) => {}
                _ => self.best[idx] = Some(cand),
            }
            if self.last_frame[idx] != Some(frame_id) {
                self.last_frame[idx] = Some(frame_id);
                self.obs[idx] += 1;
            }
        }
        Ok(())
    }

    /// Combine two accumulators that integrated disjoint frame sets.
    /// Commutative and associative, so parallel fold order cannot matter.
    pub fn merge(mut self, other: SemanticAccumulator) -> SemanticAccumulator {
        assert_eq!(self.geometry, other.geometry, "accumulators built for different maps");
        for idx in 0..self.best.len() {
            match (&self.best[idx], &other.best[idx]) {
                (_, None) => {}
                (None, Some(b)) => self.best[idx] = Some(*b),
                (Some(a), Some(b)) => {
                    if b.beats(a) {
                        self.best[idx] = Some(*b);
                    }
                }
            }
            self.obs[idx] += other.obs[idx];
            if other.last_frame[idx] > self.last_frame[idx] {
                self.last_frame[idx] = other.last_frame[idx];
            }
        }
        self
    }

    pub fn finalize(self) -> SemanticGrid {
        let classes = self
            .best
            .iter()
            .map(|b| b.map_or(crate::dataset::VOID_CLASS, |b| b.class_id))
            .collect();
        SemanticGrid { geometry: self.geometry, classes, obs: self.obs }
    }
}

/// Final per-cell class labels plus how many frames observed each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGrid {
    pub geometry: MapGeometry,
    /// Row-major class per cell; VOID where nothing was accepted.
    pub classes: Vec<u16>,
    /// Frames that contributed at least one accepted hit to the cell.
    pub obs: Vec<u32>,
}

impl SemanticGrid {
    pub fn class_at(&self, cell: GridCell) -> u16 {
        self.classes[self.geometry.index(cell)]
    }

    pub fn obs_at(&self, cell: GridCell) -> u32 {
        self.obs[self.geometry.index(cell)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::VOID_CLASS;

    fn cfg() -> MapConfig {
        MapConfig::new(4, 4, 1.0, 0.0, 0.0, -10.0, 10.0)
    }

    fn hit(row: usize, col: usize, z: f64, class_id: u16, frame_id: u64, pixel: usize) -> CellHit {
        CellHit {
            cell: GridCell::new(row, col),
            pixel,
            world_z: z,
            class_id,
            entity_id: 0,
            frame_id,
        }
    }

    #[test]
    fn single_hit_labels_cell() {
        let mut acc = SemanticAccumulator::new(&cfg());
        acc.integrate_frame(&[hit(1, 2, 0.6, 7, 0, 0)]).unwrap();
        let g = acc.finalize();
        assert_eq!(g.class_at(GridCell::new(1, 2)), 7);
        assert_eq!(g.obs_at(GridCell::new(1, 2)), 1);
        assert_eq!(g.class_at(GridCell::new(0, 0)), VOID_CLASS);
    }

    #[test]
    fn lower_point_never_overwrites() {
        let mut acc = SemanticAccumulator::new(&cfg());
        acc.integrate_frame(&[hit(0, 0, 1.0, 1, 0, 0)]).unwrap();
        acc.integrate_frame(&[hit(0, 0, 0.5, 2, 1, 0)]).unwrap();
        assert_eq!(acc.finalize().class_at(GridCell::new(0, 0)), 1);
    }

    #[test]
    fn obs_counts_frames_not_pixels() {
        let mut acc = SemanticAccumulator::new(&cfg());
        acc.integrate_frame(&[hit(0, 0, 0.1, 1, 0, 0), hit(0, 0, 0.2, 1, 0, 1)]).unwrap();
        assert_eq!(acc.finalize().obs_at(GridCell::new(0, 0)), 1);
    }

    #[test]
    fn mixed_frames_rejected() {
        let mut acc = SemanticAccumulator::new(&cfg());
        let err = acc.integrate_frame(&[hit(0, 0, 0.1, 1, 0, 0), hit(0, 1, 0.1, 1, 1, 1)]);
        assert_eq!(err, Err(SemanticError::MixedFrameIds(0, 1)));
    }

    #[test]
    fn height_tie_goes_to_lower_frame_then_pixel() {
        let mut acc = SemanticAccumulator::new(&cfg());
        acc.integrate_frame(&[hit(0, 0, 1.0, 2, 5, 9)]).unwrap();
        acc.integrate_frame(&[hit(0, 0, 1.0, 3, 2, 40)]).unwrap();
        assert_eq!(acc.finalize().class_at(GridCell::new(0, 0)), 3);

        let mut acc = SemanticAccumulator::new(&cfg());
        acc.integrate_frame(&[hit(0, 0, 1.0, 4, 2, 7), hit(0, 0, 1.0, 5, 2, 3)]).unwrap();
        assert_eq!(acc.finalize().class_at(GridCell::new(0, 0)), 5);
    }

    #[test]
    fn no_frames_gives_all_void() {
        let g = SemanticAccumulator::new(&cfg()).finalize();
        assert!(g.classes.iter().all(|&c| c == VOID_CLASS));
        assert!(g.obs.iter().all(|&o| o == 0));
    }

    fn example_frames() -> Vec<Vec<CellHit>> {
        vec![
            vec![hit(0, 0, 0.3, 1, 0, 0), hit(1, 1, 0.9, 2, 0, 1), hit(2, 2, 0.1, 1, 0, 2)],
            vec![hit(0, 0, 0.8, 3, 1, 0), hit(1, 1, 0.9, 4, 1, 1)],
            vec![hit(0, 0, 0.8, 5, 2, 5), hit(3, 3, 0.2, 2, 2, 0), hit(2, 2, 0.1, 9, 2, 1)],
        ]
    }

    /// Brute force over all hits regardless of frame grouping.
    fn oracle(frames: &[Vec<CellHit>]) -> SemanticGrid {
        let cfg = cfg();
        let geom = cfg.geometry();
        let mut best: Vec<Option<Best>> = vec![None; geom.cell_count()];
        let mut obs = vec![0u32; geom.cell_count()];
        for f in frames {
            let mut seen = vec![false; geom.cell_count()];
            for h in f {
                let i = geom.index(h.cell);
                let cand =
                    Best { z: h.world_z, frame_id: h.frame_id, pixel: h.pixel, class_id: h.class_id };
                if best[i].map_or(true, |b| cand.beats(&b)) {
                    best[i] = Some(cand);
                }
                if !seen[i] {
                    seen[i] = true;
                    obs[i] += 1;
                }
            }
        }
        SemanticGrid {
            geometry: geom,
            classes: best.iter().map(|b| b.map_or(VOID_CLASS, |b| b.class_id)).collect(),
            obs,
        }
    }

    #[test]
    fn frame_order_does_not_matter() {
        let frames = example_frames();
        let want = oracle(&frames);
        let orders: [[usize; 3]; 6] =
            [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for order in orders {
            let mut acc = SemanticAccumulator::new(&cfg());
            for &i in &order {
                acc.integrate_frame(&frames[i]).unwrap();
            }
            assert_eq!(acc.finalize(), want, "order {order:?}");
        }
    }

    #[test]
    fn merged_partials_match_sequential() {
        let frames = example_frames();
        let mut seq = SemanticAccumulator::new(&cfg());
        for f in &frames {
            seq.integrate_frame(f).unwrap();
        }
        let partials: Vec<SemanticAccumulator> = frames
            .iter()
            .map(|f| {
                let mut a = SemanticAccumulator::new(&cfg());
                a.integrate_frame(f).unwrap();
                a
            })
            .collect();
        // Two different reduction shapes.
        let mut it = partials.clone().into_iter();
        let left = it.next().unwrap().merge(it.next().unwrap()).merge(it.next().unwrap());
        let mut it = partials.into_iter();
        let a = it.next().unwrap();
        let right = it.next().unwrap().merge(it.next().unwrap());
        let right = right.merge(a);
        assert_eq!(left.finalize(), seq.clone().finalize());
        assert_eq!(right.finalize(), seq.finalize());
    }
}
