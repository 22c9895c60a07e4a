//! Automatic success rate, instance matching, and panoptic quality.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ClassCatalog;
use crate::grid::{GridCell, MapGeometry};
use crate::map::SIMap;
use crate::nav::{AgentState, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no episodes to score")]
    EmptyEpisodeSet,
    #[error("maps use different geometry")]
    ConfigMismatch,
    #[error("panoptic quality undefined: no predictions and no truth")]
    UndefinedPQ,
}

/// One navigation episode scored against a known target.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub command: String,
    pub final_state: AgentState,
    pub target_class: u16,
    /// The scene identity of the intended object, not a map index.
    pub target_uid: u32,
    pub trajectory: Trajectory,
}

/// Success iff the final position is within tau of the closest footprint
/// cell center (boundary inclusive).
pub fn auto_success(
    final_state: &AgentState,
    target_footprint: &[GridCell],
    geometry: &MapGeometry,
    tau: f64,
) -> bool {
    assert!(tau > 0.0, "threshold must be positive");
    target_footprint.iter().any(|&cell| {
        let c = geometry.cell_center(cell);
        (c.x - final_state.position.x).hypot(c.y - final_state.position.y) <= tau
    })
}

pub fn success_rate(outcomes: &[bool]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyEpisodeSet);
    }
    Ok(outcomes.iter().filter(|&&s| s).count() as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// (predicted t, truth t, IoU), one-to-one.
    pub tp: Vec<(u16, u16, f64)>,
    /// Predicted instances with no match.
    pub fp: Vec<u16>,
    /// Truth instances with no match.
    pub fn_: Vec<u16>,
}

fn footprint_indices(map: &SIMap, class_id: u16) -> BTreeMap<u16, Vec<u32>> {
    let mut out: BTreeMap<u16, Vec<u32>> = BTreeMap::new();
    for (idx, &(c, t)) in map.cells.iter().enumerate() {
        if c == class_id && t >= 1 {
            out.entry(t).or_default().push(idx as u32);
        }
    }
    out
}

fn iou(a: &[u32], b: &[u32]) -> f64 {
    // Both sorted ascending row-major.
    let mut i = 0;
    let mut j = 0;
    let mut inter = 0usize;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Match predicted against truth instances of one class. Pairs with
/// IoU strictly above the threshold are matched greedily by descending IoU
/// (at the default 0.5 the matching is unique regardless).
pub fn match_instances(
    pred: &SIMap,
    truth: &SIMap,
    class_id: u16,
    iou_threshold: f64,
) -> Result<MatchResult, EvalError> {
    if pred.geometry != truth.geometry {
        return Err(EvalError::ConfigMismatch);
    }
    let pred_fp = footprint_indices(pred, class_id);
    let truth_fp = footprint_indices(truth, class_id);
    let mut candidates: Vec<(u16, u16, f64)> = Vec::new();
    for (&pt, pcells) in &pred_fp {
        for (&tt, tcells) in &truth_fp {
            let v = iou(pcells, tcells);
            if v > iou_threshold {
                candidates.push((pt, tt, v));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut tp = Vec::new();
    let mut used_pred = std::collections::BTreeSet::new();
    let mut used_truth = std::collections::BTreeSet::new();
    for (pt, tt, v) in candidates {
        if !used_pred.contains(&pt) && !used_truth.contains(&tt) {
            used_pred.insert(pt);
            used_truth.insert(tt);
            tp.push((pt, tt, v));
        }
    }
    tp.sort_by(|a, b| a.0.cmp(&b.0));
    let fp = pred_fp.keys().copied().filter(|t| !used_pred.contains(t)).collect();
    let fn_ = truth_fp.keys().copied().filter(|t| !used_truth.contains(t)).collect();
    Ok(MatchResult { tp, fp, fn_ })
}

/// PQ = sum of matched IoU / (TP + FP/2 + FN/2).
pub fn panoptic_quality(mr: &MatchResult) -> Result<f64, EvalError> {
    let denom = mr.tp.len() as f64 + 0.5 * (mr.fp.len() + mr.fn_.len()) as f64;
    if denom == 0.0 {
        return Err(EvalError::UndefinedPQ);
    }
    Ok(mr.tp.iter().map(|&(_, _, v)| v).sum::<f64>() / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub class_id: u16,
    pub n_pred: usize,
    pub n_truth: usize,
    pub matched: usize,
    pub extra: usize,
    pub missed: usize,
}

/// Per-class instance accounting via matching.
pub fn instance_count_report(
    pred: &SIMap,
    truth: &SIMap,
    catalog: &ClassCatalog,
    iou_threshold: f64,
) -> Result<Vec<ClassCounts>, EvalError> {
    let mut out = Vec::new();
    for class_id in catalog.thing_ids() {
        let mr = match_instances(pred, truth, class_id, iou_threshold)?;
        let n_pred = mr.tp.len() + mr.fp.len();
        let n_truth = mr.tp.len() + mr.fn_.len();
        if n_pred == 0 && n_truth == 0 {
            continue;
        }
        out.push(ClassCounts {
            class_id,
            n_pred,
            n_truth,
            matched: mr.tp.len(),
            extra: mr.fp.len(),
            missed: mr.fn_.len(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub success_rate: Option<f64>,
    pub episodes: usize,
    /// (class_id, PQ); classes present in truth.
    pub per_class_pq: Vec<(u16, f64)>,
    /// Unweighted mean over classes present in truth.
    pub macro_pq: Option<f64>,
    pub counts: Vec<ClassCounts>,
}

/// PQ per class over classes with at least one truth instance, plus the
/// macro average.
pub fn pq_report(
    pred: &SIMap,
    truth: &SIMap,
    catalog: &ClassCatalog,
    iou_threshold: f64,
) -> Result<(Vec<(u16, f64)>, Option<f64>), EvalError> {
    let mut per_class = Vec::new();
    for class_id in catalog.thing_ids() {
        if !truth.cells.iter().any(|&(c, t)| c == class_id && t >= 1) {
            continue;
        }
        let mr = match_instances(pred, truth, class_id, iou_threshold)?;
        per_class.push((class_id, panoptic_quality(&mr)?));
    }
    let macro_pq = if per_class.is_empty() {
        None
    } else {
        Some(per_class.iter().map(|&(_, q)| q).sum::<f64>() / per_class.len() as f64)
    };
    Ok((per_class, macro_pq))
}

pub fn metrics_report(
    method: &str,
    pred: &SIMap,
    truth: &SIMap,
    catalog: &ClassCatalog,
    iou_threshold: f64,
    episode_outcomes: Option<&[bool]>,
) -> Result<MetricsReport, EvalError> {
    let (per_class_pq, macro_pq) = pq_report(pred, truth, catalog, iou_threshold)?;
    let counts = instance_count_report(pred, truth, catalog, iou_threshold)?;
    let (success, n_ep) = match episode_outcomes {
        Some(outcomes) => (Some(success_rate(outcomes)?), outcomes.len()),
        None => (None, 0),
    };
    Ok(MetricsReport {
        method: method.to_string(),
        success_rate: success,
        episodes: n_ep,
        per_class_pq,
        macro_pq,
        counts,
    })
}

impl MetricsReport {
    /// Aligned-text table: one row per method line plus per-class counts.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let sr = self
            .success_rate
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        let pq = self
            .macro_pq
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<12} {:>8} {:>8} {:>9}\n",
            "method", "success", "PQ", "episodes"
        ));
        out.push_str(&format!(
            "{:<12} {:>8} {:>8} {:>9}\n",
            self.method, sr, pq, self.episodes
        ));
        out.push_str(&format!(
            "\n{:<8} {:>6} {:>7} {:>8} {:>6} {:>7} {:>8}\n",
            "class", "pred", "truth", "matched", "extra", "missed", "PQ"
        ));
        for c in &self.counts {
            let pq = self
                .per_class_pq
                .iter()
                .find(|&&(id, _)| id == c.class_id)
                .map(|&(_, q)| format!("{q:.3}"))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<8} {:>6} {:>7} {:>8} {:>6} {:>7} {:>8}\n",
                c.class_id, c.n_pred, c.n_truth, c.matched, c.extra, c.missed, pq
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::WorldPoint;
    use crate::dataset::{ClassEntry, ClassKind};

    const FLOOR: u16 = 1;
    const CHAIR: u16 = 2;

    fn catalog() -> ClassCatalog {
        ClassCatalog::new(vec![
            ClassEntry { id: FLOOR, name: "floor".into(), kind: ClassKind::Stuff },
            ClassEntry { id: CHAIR, name: "chair".into(), kind: ClassKind::Thing },
        ])
        .unwrap()
    }

    fn geometry() -> MapGeometry {
        MapGeometry::new(10, 10, 0.1, 0.0, 0.0)
    }

    /// Map stamped with chair cells (t, row-major indices).
    fn map_with(instances: &[(u16, &[u32])]) -> SIMap {
        let geom = geometry();
        let mut cells = vec![(FLOOR, 0u16); geom.cell_count()];
        for &(t, idxs) in instances {
            for &idx in idxs {
                cells[idx as usize] = (CHAIR, t);
            }
        }
        SIMap { geometry: geom, cells, obs: None }
    }

    fn state_at(x: f64, y: f64) -> AgentState {
        AgentState::new(WorldPoint::new(x, y, 0.0), 0.0)
    }

    #[test]
    fn auto_success_boundary_is_inclusive() {
        let geom = geometry();
        let fp = [GridCell { row: 0, col: 0 }];
        // Footprint center (0.05, 0.05).
        assert!(auto_success(&state_at(0.45, 0.05), &fp, &geom, 1.0));
        assert!(!auto_success(&state_at(1.55, 0.05), &fp, &geom, 1.0));
        assert!(auto_success(&state_at(1.05, 0.05), &fp, &geom, 1.0));
    }

    #[test]
    fn success_rate_fractions() {
        let mut outcomes = vec![true; 22];
        outcomes.extend([false; 3]);
        assert_eq!(success_rate(&outcomes).unwrap(), 0.88);
        assert_eq!(success_rate(&[false, false]).unwrap(), 0.0);
        assert_eq!(success_rate(&[true; 5]).unwrap(), 1.0);
        assert_eq!(success_rate(&[]).unwrap_err(), EvalError::EmptyEpisodeSet);
        // Permutation invariance.
        let shuffled: Vec<bool> = outcomes.iter().rev().copied().collect();
        assert_eq!(success_rate(&shuffled).unwrap(), 0.88);
    }

    #[test]
    fn identical_maps_match_perfectly() {
        let m = map_with(&[(1, &[0, 1, 10]), (2, &[55, 56])]);
        let mr = match_instances(&m, &m, CHAIR, 0.5).unwrap();
        assert_eq!(mr.tp.len(), 2);
        assert!(mr.tp.iter().all(|&(p, t, v)| p == t && v == 1.0));
        assert!(mr.fp.is_empty() && mr.fn_.is_empty());
        assert_eq!(panoptic_quality(&mr).unwrap(), 1.0);
    }

    #[test]
    fn empty_prediction_yields_all_fn() {
        let truth = map_with(&[(1, &[0, 1]), (2, &[40]), (3, &[99])]);
        let pred = map_with(&[]);
        let mr = match_instances(&pred, &truth, CHAIR, 0.5).unwrap();
        assert!(mr.tp.is_empty());
        assert!(mr.fp.is_empty());
        assert_eq!(mr.fn_, vec![1, 2, 3]);
        assert_eq!(panoptic_quality(&mr).unwrap(), 0.0);
    }

    #[test]
    fn exact_half_iou_does_not_match() {
        // Pred covers cells {0,1}, truth covers {1,2}: IoU = 1/3. Make IoU
        // exactly 0.5 with pred {0,1}, truth {0,1,2,3} -> 2/4.
        let pred = map_with(&[(1, &[0, 1])]);
        let truth = map_with(&[(1, &[0, 1, 2, 3])]);
        let mr = match_instances(&pred, &truth, CHAIR, 0.5).unwrap();
        assert!(mr.tp.is_empty());
        assert_eq!(mr.fp, vec![1]);
        assert_eq!(mr.fn_, vec![1]);
    }

    #[test]
    fn pq_formula_cases() {
        let mr = MatchResult { tp: vec![(1, 1, 0.8)], fp: vec![], fn_: vec![2] };
        let pq = panoptic_quality(&mr).unwrap();
        assert!((pq - 0.8 / 1.5).abs() < 1e-12);
        let mr = MatchResult { tp: vec![], fp: vec![1, 2], fn_: vec![1, 2] };
        assert_eq!(panoptic_quality(&mr).unwrap(), 0.0);
        let mr = MatchResult { tp: vec![], fp: vec![], fn_: vec![] };
        assert_eq!(panoptic_quality(&mr).unwrap_err(), EvalError::UndefinedPQ);
    }

    #[test]
    fn matching_is_count_symmetric() {
        let a = map_with(&[(1, &[0, 1, 2]), (2, &[50, 51])]);
        let b = map_with(&[(1, &[0, 1]), (2, &[50, 51]), (3, &[80])]);
        let ab = match_instances(&a, &b, CHAIR, 0.5).unwrap();
        let ba = match_instances(&b, &a, CHAIR, 0.5).unwrap();
        assert_eq!(ab.tp.len(), ba.tp.len());
        assert_eq!(ab.fp.len(), ba.fn_.len());
        assert_eq!(ab.fn_.len(), ba.fp.len());
    }

    #[test]
    fn mismatched_geometry_is_rejected() {
        let a = map_with(&[]);
        let mut b = map_with(&[]);
        b.geometry = MapGeometry::new(10, 10, 0.2, 0.0, 0.0);
        b.cells = vec![(FLOOR, 0); 100];
        assert_eq!(
            match_instances(&a, &b, CHAIR, 0.5).unwrap_err(),
            EvalError::ConfigMismatch
        );
    }

    #[test]
    fn count_report_accounts_for_extras_and_misses() {
        // Truth: 2 instances. Pred: the same 2 plus a spurious one.
        let truth = map_with(&[(1, &[0, 1, 2]), (2, &[50, 51, 52])]);
        let pred = map_with(&[(1, &[0, 1, 2]), (2, &[50, 51, 52]), (3, &[90])]);
        let counts = instance_count_report(&pred, &truth, &catalog(), 0.5).unwrap();
        assert_eq!(counts.len(), 1);
        let c = &counts[0];
        assert_eq!((c.n_pred, c.n_truth, c.matched, c.extra, c.missed), (3, 2, 2, 1, 0));

        let empty = map_with(&[]);
        let counts = instance_count_report(&empty, &truth, &catalog(), 0.5).unwrap();
        assert_eq!(counts[0].missed, 2);
        let counts = instance_count_report(&truth, &truth, &catalog(), 0.5).unwrap();
        assert_eq!((counts[0].extra, counts[0].missed), (0, 0));
    }

    #[test]
    fn report_serializes_and_tabulates() {
        let truth = map_with(&[(1, &[0, 1, 2])]);
        let report =
            metrics_report("si", &truth, &truth, &catalog(), 0.5, Some(&[true, true, false]))
                .unwrap();
        assert_eq!(report.macro_pq, Some(1.0));
        assert!((report.success_rate.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"macro_pq\":1.0"));
        let table = report.table();
        assert!(table.contains("method") && table.contains("si"));
    }
}
