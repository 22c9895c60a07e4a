//! Instance-level semantic top-view maps from posed RGB-D frames with
//! panoptic labels, plus navigation and evaluation on top of them.
//!
//! The pipeline: project every labeled depth pixel into a world grid
//! ([`projection`]), keep the highest hit per cell ([`semantic`]), connect
//! cells co-observed as one entity within single frames ([`instance_graph`]),
//! cluster each class's graph into instances ([`community`]), and store the
//! result in a compact binary map ([`map`]). [`nav`] executes
//! instance-addressed navigation programs against such maps, [`synth`]
//! generates fully ground-truthed synthetic scenes, and [`eval`] scores maps
//! and navigation episodes.

pub mod community;
pub mod dataset;
pub mod eval;
pub mod grid;
pub mod instance_graph;
pub mod map;
pub mod nav;
pub mod pipeline;
pub mod projection;
pub mod semantic;
pub mod synth;

pub use dataset::{ClassCatalog, ClassEntry, ClassKind, Dataset, VOID_CLASS};
pub use grid::{GridCell, MapConfig, MapGeometry, WorldPoint};
pub use map::SIMap;
pub use pipeline::{build_si_map, BuildOptions, BuildReport};
