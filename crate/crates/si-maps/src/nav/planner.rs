//! Grid path planning: 8-connected A* with an octile-distance heuristic.
//!
//! Step costs are 1 and sqrt(2). Costs are kept as exact (straight, diagonal)
//! step-count pairs and compared symbolically, so there is no accumulated
//! floating-point error and no summation-order dependence; ties are broken by
//! (f, h, row-major index), which pins the expansion order completely.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::grid::GridCell;
use crate::nav::OccupancyView;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("no navigable path from start to any goal")]
    Unreachable,
}

/// A path cost of `straight + diag * sqrt(2)`, stored exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PathCost {
    pub straight: u32,
    pub diag: u32,
}

impl PathCost {
    pub const ZERO: PathCost = PathCost { straight: 0, diag: 0 };

    pub fn step(self, diagonal: bool) -> PathCost {
        if diagonal {
            PathCost { straight: self.straight, diag: self.diag + 1 }
        } else {
            PathCost { straight: self.straight + 1, diag: self.diag }
        }
    }

    pub fn plus(self, other: PathCost) -> PathCost {
        PathCost { straight: self.straight + other.straight, diag: self.diag + other.diag }
    }

    /// Octile distance between two cells, as an exact cost pair.
    pub fn octile(a: GridCell, b: GridCell) -> PathCost {
        let dr = a.row.abs_diff(b.row) as u32;
        let dc = a.col.abs_diff(b.col) as u32;
        PathCost { straight: dr.max(dc) - dr.min(dc), diag: dr.min(dc) }
    }

    pub fn as_f64(self) -> f64 {
        self.straight as f64 + self.diag as f64 * std::f64::consts::SQRT_2
    }
}

impl Ord for PathCost {
    /// Exact comparison of s1 + d1*sqrt(2) vs s2 + d2*sqrt(2). With
    /// ds = s1 - s2 and dd = d2 - d1 this is ds vs dd*sqrt(2), decided by
    /// sign analysis plus an integer comparison of ds^2 vs 2*dd^2 (sqrt(2)
    /// being irrational, the squares only tie when ds = dd = 0).
    fn cmp(&self, other: &Self) -> Ordering {
        let ds = self.straight as i64 - other.straight as i64;
        let dd = other.diag as i64 - self.diag as i64;
        match (ds.signum(), dd.signum()) {
            (0, 0) => Ordering::Equal,
            (_, 0) => ds.cmp(&0),
            (s, 1) if s <= 0 => Ordering::Less,
            (s, -1) if s >= 0 => Ordering::Greater,
            _ => {
                // Same sign on both sides.
                let lhs = (ds as i128) * (ds as i128);
                let rhs = 2 * (dd as i128) * (dd as i128);
                if ds > 0 {
                    lhs.cmp(&rhs)
                } else {
                    rhs.cmp(&lhs)
                }
            }
        }
    }
}

impl PartialOrd for PathCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const DIRS: [(isize, isize, bool); 8] = [
    (-1, -1, true),
    (-1, 0, false),
    (-1, 1, true),
    (0, -1, false),
    (0, 1, false),
    (1, -1, true),
    (1, 0, false),
    (1, 1, true),
];

#[derive(PartialEq, Eq)]
struct OpenEntry {
    f: PathCost,
    h: PathCost,
    idx: u32,
    g: PathCost,
}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap and we want the smallest
        // (f, h, idx) first.
        other
            .f
            .cmp(&self.f)
            .then_with(|| other.h.cmp(&self.h))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimal-cost 8-connected path from `start` to the nearest goal cell,
/// inclusive of both ends. A diagonal step only needs its target cell to be
/// navigable. Returns the visited cells in order.
pub fn plan_path(
    occ: &OccupancyView,
    start: GridCell,
    goals: &[GridCell],
) -> Result<(Vec<GridCell>, PathCost), PlanError> {
    assert!(!goals.is_empty(), "goal set must be non-empty");
    let geom = occ.geometry();
    if !occ.is_navigable(start) {
        return Err(PlanError::Unreachable);
    }
    let n = geom.cell_count();
    let mut is_goal = vec![false; n];
    let mut any_goal = false;
    for &g in goals {
        if occ.is_navigable(g) {
            is_goal[geom.index(g)] = true;
            any_goal = true;
        }
    }
    if !any_goal {
        return Err(PlanError::Unreachable);
    }

    let heuristic = |cell: GridCell| -> PathCost {
        goals
            .iter()
            .map(|&g| PathCost::octile(cell, g))
            .min()
            .expect("goals checked non-empty")
    };

    let mut g_cost: Vec<Option<PathCost>> = vec![None; n];
    let mut parent: Vec<u32> = vec![u32::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    let start_idx = geom.index(start) as u32;
    let h0 = heuristic(start);
    g_cost[start_idx as usize] = Some(PathCost::ZERO);
    open.push(OpenEntry { f: h0, h: h0, idx: start_idx, g: PathCost::ZERO });

    while let Some(entry) = open.pop() {
        let idx = entry.idx as usize;
        if closed[idx] {
            continue;
        }
        if g_cost[idx] != Some(entry.g) {
            continue; // stale heap entry
        }
        closed[idx] = true;

        if is_goal[idx] {
            let mut path = Vec::new();
            let mut cur = idx as u32;
            while cur != u32::MAX {
                path.push(geom.cell_at(cur as usize));
                cur = parent[cur as usize];
            }
            path.reverse();
            return Ok((path, entry.g));
        }

        let cell = geom.cell_at(idx);
        for (dr, dc, diagonal) in DIRS {
            let (Some(row), Some(col)) =
                (cell.row.checked_add_signed(dr), cell.col.checked_add_signed(dc))
            else {
                continue;
            };
            if row >= geom.rows || col >= geom.cols {
                continue;
            }
            let next = GridCell::new(row, col);
            if !occ.is_navigable(next) {
                continue;
            }
            let next_idx = geom.index(next);
            if closed[next_idx] {
                continue;
            }
            let g_new = entry.g.step(diagonal);
            if g_cost[next_idx].is_none_or(|old| g_new < old) {
                g_cost[next_idx] = Some(g_new);
                parent[next_idx] = idx as u32;
                let h = heuristic(next);
                open.push(OpenEntry { f: g_new.plus(h), h, idx: next_idx as u32, g: g_new });
            }
        }
    }
    Err(PlanError::Unreachable)
}
