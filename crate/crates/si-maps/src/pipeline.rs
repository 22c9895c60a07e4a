//! The full map build: project every frame, accumulate the semantic grid and
//! the co-observation graphs, cluster each thing class into instances, and
//! assemble the final map.
//!
//! Frame integration is order-independent (the per-cell winner rule is a
//! commutative, associative reduction and edge counts are integer sums), so
//! any thread count produces byte-identical output.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::community::{
    assign_instance_ids, louvain, merge_oversegmented, CommunityError, LouvainConfig,
    MergeConfig, WeightedGraph,
};
use crate::dataset::{Dataset, DatasetError, VOID_CLASS};
use crate::grid::MapConfig;
use crate::instance_graph::{build_class_graph, EdgeAccumulator, GraphError};
use crate::map::{assemble, InstanceLabels, MapError, SIMap};
use crate::projection::{auto_map_config, project_frame, ProjectionError, DEFAULT_MAX_DEPTH};
use crate::semantic::{SemanticAccumulator, SemanticError, SemanticGrid};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Community(#[from] CommunityError),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Fixed map window; None derives one from the frames.
    pub map: Option<MapConfig>,
    /// Grid scale and height band used when the window is derived.
    pub auto_scale: f64,
    pub auto_z: (f64, f64),
    pub max_depth: f64,
    pub louvain: LouvainConfig,
    pub merge: MergeConfig,
    pub include_obs: bool,
    /// Worker threads for frame integration; 0 uses the global pool.
    pub threads: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            map: None,
            auto_scale: 0.05,
            auto_z: (-0.1, 3.0),
            max_depth: DEFAULT_MAX_DEPTH,
            louvain: LouvainConfig::default(),
            merge: MergeConfig::default(),
            include_obs: false,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: u16,
    pub class_name: String,
    pub nodes: usize,
    pub edges: usize,
    /// Community counts after clustering and after the merge pass.
    pub communities: usize,
    pub communities_after_merge: usize,
    /// Instances that met the minimum size.
    pub instances: usize,
    /// Modularity after every local-move pass, across levels; must be
    /// non-decreasing.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildReport {
    pub frames: usize,
    pub map: MapConfig,
    pub observed_cells: usize,
    pub classes: Vec<ClassReport>,
    pub build_seconds: f64,
}

fn integrate_all(
    dataset: &Dataset,
    cfg: &MapConfig,
    max_depth: f64,
) -> Result<(SemanticGrid, EdgeAccumulator), PipelineError> {
    let geom = cfg.geometry();
    let intr = &dataset.intrinsics;
    let (sem, edges) = dataset
        .frames
        .par_iter()
        .map(|frame| -> Result<(SemanticAccumulator, EdgeAccumulator), PipelineError> {
            let hits = project_frame(frame, intr, cfg, max_depth);
            let mut sem = SemanticAccumulator::new(cfg);
            sem.integrate_frame(&hits)?;
            let mut edges = EdgeAccumulator::new();
            edges.accumulate_frame_edges(&hits, &frame.pano, &geom);
            Ok((sem, edges))
        })
        .try_reduce(
            || (SemanticAccumulator::new(cfg), EdgeAccumulator::new()),
            |a, b| Ok((a.0.merge(b.0), a.1.merge(b.1))),
        )?;
    Ok((sem.finalize(), edges))
}

/// Build the instance map and a per-class report from a loaded dataset.
pub fn build_si_map(
    dataset: &Dataset,
    opts: &BuildOptions,
) -> Result<(SIMap, BuildReport), PipelineError> {
    let started = Instant::now();
    let cfg = opts.map.unwrap_or_else(|| {
        auto_map_config(
            &dataset.frames,
            &dataset.intrinsics,
            opts.auto_scale,
            opts.auto_z.0,
            opts.auto_z.1,
            opts.max_depth,
        )
    });

    let run = || integrate_all(dataset, &cfg, opts.max_depth);
    let (grid, edges) = if opts.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .expect("worker pool")
            .install(run)?
    } else {
        run()?
    };

    let geom = grid.geometry;
    let observed_cells = (0..geom.cell_count())
        .filter(|&i| grid.class_at(geom.cell_at(i)) != VOID_CLASS)
        .count();

    let mut labels = InstanceLabels::new();
    let mut class_reports = Vec::new();
    for class_id in dataset.catalog.thing_ids() {
        let graph = build_class_graph(&grid, &edges, class_id, &dataset.catalog)?;
        if graph.node_count() == 0 {
            continue;
        }
        let wg = WeightedGraph::from_instance_graph(&graph);
        let result = louvain(&wg, &opts.louvain);
        let merged = merge_oversegmented(&result.partition, &wg, &opts.merge);
        let t_ids = assign_instance_ids(&graph.cells, &merged, &opts.merge);
        let instances = t_ids.iter().filter(|&&t| t >= 1).map(|&t| t).max().unwrap_or(0);
        class_reports.push(ClassReport {
            class_id,
            class_name: dataset
                .catalog
                .get(class_id)
                .map(|e| e.name.clone())
                .unwrap_or_default(),
            nodes: graph.node_count(),
            edges: graph.edges.len(),
            communities: result.partition.community_count(),
            communities_after_merge: merged.community_count(),
            instances: instances as usize,
            trace: result.trace,
        });
        labels.insert_class(class_id, &graph.cells, &t_ids);
    }

    let map = assemble(&grid, &labels, opts.include_obs)?;
    let report = BuildReport {
        frames: dataset.frames.len(),
        map: cfg,
        observed_cells,
        classes: class_reports,
        build_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((map, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        CameraIntrinsics, ClassCatalog, ClassEntry, ClassKind, FrameRecord,
    };
    use crate::eval::match_instances;
    use crate::synth::{
        camera_trajectory, generate_scene, render_frame, scene_map_config, truth_map,
        SceneMode, SceneParams, TrajectoryMode,
    };

    const FLOOR: u16 = 1;
    const CHAIR: u16 = 2;
    const TABLE: u16 = 3;

    fn catalog() -> ClassCatalog {
        ClassCatalog::new(vec![
            ClassEntry { id: FLOOR, name: "floor".into(), kind: ClassKind::Stuff },
            ClassEntry { id: CHAIR, name: "chair".into(), kind: ClassKind::Thing },
            ClassEntry { id: TABLE, name: "table".into(), kind: ClassKind::Thing },
        ])
        .unwrap()
    }

    fn small_dataset(seed: u64) -> (Dataset, crate::synth::SceneTruth, MapConfig) {
        let params = SceneParams {
            n_objects: 3,
            thing_classes: vec![CHAIR, TABLE],
            floor_class: FLOOR,
            floor_half_extent: 2.0,
            scale: 0.05,
            mode: SceneMode::Separated { min_gap: 0.3 },
        };
        let scene = generate_scene(&params, seed).unwrap();
        let cfg = scene_map_config(&scene, 0.05, -0.1, 2.0);
        let truth = truth_map(&scene, &cfg);
        let intr = CameraIntrinsics::new(280.0, 280.0, 160.0, 120.0, 320, 240).unwrap();
        let poses = camera_trajectory(&scene, 20, TrajectoryMode::Orbit, 0);
        let frames = poses
            .iter()
            .enumerate()
            .map(|(i, pose)| {
                let out = render_frame(&scene, pose, &intr);
                FrameRecord { frame_id: i as u64, depth: out.depth, pano: out.pano, pose: out.pose }
            })
            .collect();
        (
            Dataset { intrinsics: intr, catalog: catalog(), frames },
            truth,
            cfg,
        )
    }

    #[test]
    fn recovers_separated_instances() {
        let (dataset, truth, cfg) = small_dataset(5);
        let opts = BuildOptions { map: Some(cfg), ..BuildOptions::default() };
        let (map, report) = build_si_map(&dataset, &opts).unwrap();
        assert_eq!(report.frames, 20);
        for class_id in [CHAIR, TABLE] {
            let truth_n = truth
                .uid_to_instance
                .values()
                .filter(|&&(c, _)| c == class_id)
                .count();
            let mr = match_instances(&map, &truth.map, class_id, 0.5).unwrap();
            assert_eq!(mr.tp.len(), truth_n, "class {class_id}");
            assert!(mr.fp.is_empty(), "class {class_id} extras: {:?}", mr.fp);
            for &(_, _, iou) in &mr.tp {
                assert!(iou >= 0.9, "low IoU {iou}");
            }
        }
        for c in &report.classes {
            for w in c.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "trace decreased: {:?}", c.trace);
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_bytes() {
        let (dataset, _, cfg) = small_dataset(9);
        let base = BuildOptions { map: Some(cfg), ..BuildOptions::default() };
        let opts1 = BuildOptions { threads: 1, ..base.clone() };
        let opts4 = BuildOptions { threads: 4, ..base.clone() };
        let (m1, _) = build_si_map(&dataset, &opts1).unwrap();
        let (m4, _) = build_si_map(&dataset, &opts4).unwrap();
        assert_eq!(m1.serialize(), m4.serialize());
    }

    #[test]
    fn empty_dataset_builds_an_empty_map() {
        let dataset = Dataset {
            intrinsics: CameraIntrinsics::new(280.0, 280.0, 160.0, 120.0, 320, 240).unwrap(),
            catalog: catalog(),
            frames: vec![],
        };
        let (map, report) = build_si_map(&dataset, &BuildOptions::default()).unwrap();
        assert_eq!(report.frames, 0);
        assert_eq!(report.observed_cells, 0);
        assert!(map.cells.iter().all(|&(c, t)| c == VOID_CLASS && t == 0));
    }
}
