//! `simap`: build instance-aware top-view maps from recorded RGB-D datasets,
//! synthesize ground-truth scenes, navigate primitive programs on a map, and
//! score predictions against truth.
//!
//! Exit codes: 0 success, 2 input error (bad files, flags, or config),
//! 3 runtime failure (navigation could not complete).

mod config;
mod ppm;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use si_maps::dataset::{load_catalog, load_dataset, CameraIntrinsics, ClassEntry, ClassKind, FrameRecord};
use si_maps::eval::{auto_success, metrics_report};
use si_maps::grid::WorldPoint;
use si_maps::nav::program::parse_program;
use si_maps::nav::{execute, AgentState};
use si_maps::semantic::SemanticGrid;
use si_maps::synth::{
    camera_trajectory, cc_map, generate_scene, render_frame, scene_map_config, truth_map,
    SceneMode, SceneParams, SynthError, TrajectoryMode,
};
use si_maps::{build_si_map, ClassCatalog, Dataset, SIMap, VOID_CLASS};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "simap", version, about = "Instance-aware top-view maps and navigation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a .simap instance map from a recorded dataset directory.
    Build(BuildArgs),
    /// Execute a primitive program against a built map.
    Nav(NavArgs),
    /// Generate a synthetic dataset with exact ground truth.
    Synth(SynthArgs),
    /// Score a predicted map (and optional episodes) against ground truth.
    Eval(EvalArgs),
    /// Print map statistics and write class/instance rasters.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Dataset directory (intrinsics.txt, catalog.tsv, poses.txt, frames/).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output map file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for frame integration; 0 uses the default pool.
    #[arg(long)]
    threads: Option<usize>,
    /// Community merge threshold K, in percent.
    #[arg(long = "k-merge")]
    k_merge: Option<f64>,
    /// Append per-cell observation counts to the map file.
    #[arg(long)]
    include_obs: bool,
}

#[derive(Args)]
struct NavArgs {
    /// Built .simap file.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Class catalog (for names in the program).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Program text file.
    #[arg(long)]
    program: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start position, meters.
    #[arg(long, default_value_t = 0.0)]
    start_x: f64,
    #[arg(long, default_value_t = 0.0)]
    start_y: f64,
    /// Start heading, degrees counterclockwise from +x.
    #[arg(long, default_value_t = 0.0)]
    start_heading: f64,
    /// Treat unobserved cells as navigable.
    #[arg(long)]
    void_navigable: bool,
    /// Write the trajectory (JSON lines) here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Separated,
    Touching,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TrajArg {
    Orbit,
    Sweep,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of objects (touching mode pairs them up).
    #[arg(long, default_value_t = 10)]
    objects: usize,
    #[arg(long, default_value_t = 60)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Separated)]
    mode: ModeArg,
    /// Touching mode: number of face-sharing pairs (default objects/2).
    #[arg(long)]
    pairs: Option<usize>,
    /// Minimum footprint gap between separate objects, meters.
    #[arg(long, default_value_t = 0.3)]
    min_gap: f64,
    /// Floor half extent, meters.
    #[arg(long, default_value_t = 2.5)]
    half_extent: f64,
    #[arg(long, value_enum, default_value_t = TrajArg::Orbit)]
    traj: TrajArg,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Evaluate the predicted map as-is.
    Si,
    /// Relabel the prediction's class layer by spatial connectivity first.
    Cc,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted .simap file.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Ground-truth .simap file.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Si)]
    method: MethodArg,
    /// Instance matching IoU threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Episode outcomes JSON: [{"x", "y", "class", "t"}, ...].
    #[arg(long)]
    episodes: Option<PathBuf>,
    /// Write the report JSON here (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// .simap file to describe.
    #[arg(long)]
    map: PathBuf,
    /// Raster path prefix (default: the map path minus extension).
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

/// Input problems exit 2; failures of an otherwise valid run exit 3.
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, err) = match self {
            Failure::Input(e) => (2, e),
            Failure::Runtime(e) => (3, e),
        };
        eprintln!("error: {err:#}");
        ExitCode::from(code)
    }
}

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Build(a) => cmd_build(a),
        Cmd::Nav(a) => cmd_nav(a),
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn require(path: Option<PathBuf>, fallback: Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    path.or(fallback)
        .ok_or_else(|| input(anyhow!("{what} required (flag or [paths] config entry)")))
}

fn read_map(path: &Path) -> Result<SIMap, Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading map {}", path.display()))
        .map_err(input)?;
    SIMap::deserialize(&bytes)
        .with_context(|| format!("decoding map {}", path.display()))
        .map_err(input)
}

fn cmd_build(args: BuildArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.config.as_deref()).map_err(input)?;
    let data = require(args.data, cfg.data.clone(), "--data")?;
    let out = require(args.out, cfg.out.clone(), "--out")?;

    let dataset = load_dataset(&data).map_err(input)?;
    let mut opts = cfg.build_options().map_err(input)?;
    if let Some(t) = args.threads {
        opts.threads = t;
    }
    if let Some(k) = args.k_merge {
        if !(0.0..=100.0).contains(&k) {
            return Err(input(anyhow!("--k-merge must be in 0..=100, got {k}")));
        }
        opts.merge.k_percent = k;
    }
    if args.include_obs {
        opts.include_obs = true;
    }

    let (map, report) = build_si_map(&dataset, &opts).map_err(input)?;
    fs::write(&out, map.serialize())
        .with_context(|| format!("writing {}", out.display()))
        .map_err(input)?;
    let meta = sidecar(&out, "meta.json");
    fs::write(&meta, serde_json::to_vec_pretty(&report).expect("report to json"))
        .with_context(|| format!("writing {}", meta.display()))
        .map_err(input)?;

    let g = map.geometry;
    println!(
        "built {}x{} map at {:.3} m/cell: {} observed cells from {} frames in {:.2}s",
        g.rows, g.cols, g.scale, report.observed_cells, report.frames, report.build_seconds
    );
    for c in &report.classes {
        println!(
            "  {} (class {}): {} cells, {} edges, {} communities -> {} after merge, {} instances",
            c.class_name, c.class_id, c.nodes, c.edges, c.communities,
            c.communities_after_merge, c.instances
        );
    }
    println!("map: {}", out.display());
    println!("stats: {}", meta.display());
    Ok(())
}

fn cmd_nav(args: NavArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.config.as_deref()).map_err(input)?;
    let map_path = require(args.map, cfg.map.clone(), "--map")?;
    let catalog_path = require(args.catalog, cfg.catalog.clone(), "--catalog")?;
    let program_path = require(args.program, cfg.program.clone(), "--program")?;

    let map = read_map(&map_path)?;
    let catalog = load_catalog(&catalog_path).map_err(input)?;
    let text = fs::read_to_string(&program_path)
        .with_context(|| format!("reading program {}", program_path.display()))
        .map_err(input)?;
    let program = parse_program(&text).map_err(input)?;

    let mut nav_cfg = cfg.nav_config(&catalog).map_err(input)?;
    if args.void_navigable {
        nav_cfg.void_navigable = true;
    }
    let start = AgentState::new(
        WorldPoint::new(args.start_x, args.start_y, 0.0),
        args.start_heading.to_radians(),
    );

    let traj = execute(&program, &map, &catalog, start, &nav_cfg);

    let mut lines = String::new();
    for rec in &traj.records {
        lines.push_str(&serde_json::to_string(rec).expect("record to json"));
        lines.push('\n');
    }
    match &args.out {
        Some(path) => fs::write(path, lines)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(input)?,
        None => print!("{lines}"),
    }

    match traj.failure {
        Some(msg) => Err(Failure::Runtime(anyhow!("navigation failed: {msg}"))),
        None => Ok(()),
    }
}

fn synth_catalog() -> ClassCatalog {
    ClassCatalog::new(vec![
        ClassEntry { id: 1, name: "floor".into(), kind: ClassKind::Stuff },
        ClassEntry { id: 2, name: "chair".into(), kind: ClassKind::Thing },
        ClassEntry { id: 3, name: "table".into(), kind: ClassKind::Thing },
    ])
    .expect("fixed catalog")
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let (mode, thing_classes) = match args.mode {
        ModeArg::Separated => (SceneMode::Separated { min_gap: args.min_gap }, vec![2u16, 3]),
        ModeArg::Touching => {
            let pairs = args.pairs.unwrap_or(args.objects / 2);
            if pairs * 2 != args.objects {
                return Err(input(anyhow!(
                    "touching mode needs objects = 2 * pairs, got {} and {}",
                    args.objects, pairs
                )));
            }
            (SceneMode::Touching { pairs, min_gap: args.min_gap }, vec![2u16])
        }
    };
    let params = SceneParams {
        n_objects: args.objects,
        thing_classes,
        floor_class: 1,
        floor_half_extent: args.half_extent,
        scale: 0.05,
        mode,
    };
    let scene = match generate_scene(&params, args.seed) {
        Ok(s) => s,
        Err(e @ SynthError::PlacementInfeasible { .. }) => return Err(input(e)),
        Err(e) => return Err(input(e)),
    };

    let intrinsics = CameraIntrinsics::new(280.0, 280.0, 160.0, 120.0, 320, 240)
        .expect("fixed intrinsics");
    let traj_mode = match args.traj {
        TrajArg::Orbit => TrajectoryMode::Orbit,
        TrajArg::Sweep => TrajectoryMode::Sweep,
    };
    let poses = camera_trajectory(&scene, args.frames, traj_mode, args.seed);
    let frames: Vec<FrameRecord> = poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let out = render_frame(&scene, pose, &intrinsics);
            FrameRecord { frame_id: i as u64, depth: out.depth, pano: out.pano, pose: out.pose }
        })
        .collect();
    let dataset = Dataset { intrinsics, catalog: synth_catalog(), frames };
    si_maps::dataset::write_dataset(&args.out, &dataset).map_err(input)?;

    let map_cfg = scene_map_config(&scene, 0.05, -0.1, 2.0);
    let truth = truth_map(&scene, &map_cfg);
    let truth_path = args.out.join("truth.simap");
    fs::write(&truth_path, truth.map.serialize())
        .with_context(|| format!("writing {}", truth_path.display()))
        .map_err(input)?;

    let scene_path = args.out.join("scene.json");
    fs::write(&scene_path, serde_json::to_vec_pretty(&scene).expect("scene to json"))
        .with_context(|| format!("writing {}", scene_path.display()))
        .map_err(input)?;

    // Pin the exact truth window so a later build is cell-aligned with it.
    let run_cfg = format!(
        "[map]\nrows = {}\ncols = {}\nscale = {}\norigin_x = {}\norigin_y = {}\n\
         z_min = {}\nz_max = {}\n",
        map_cfg.rows, map_cfg.cols, map_cfg.scale, map_cfg.origin_x, map_cfg.origin_y,
        map_cfg.z_min, map_cfg.z_max
    );
    let cfg_path = args.out.join("run.cfg");
    fs::write(&cfg_path, run_cfg)
        .with_context(|| format!("writing {}", cfg_path.display()))
        .map_err(input)?;

    println!(
        "synthesized {} objects, {} frames (seed {}) into {}",
        scene.boxes.len(),
        poses.len(),
        args.seed,
        args.out.display()
    );
    println!("truth map: {}", truth_path.display());
    println!("build config: {}", cfg_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.config.as_deref()).map_err(input)?;
    let map_path = require(args.map, cfg.map.clone(), "--map")?;
    let truth_path = require(args.truth, cfg.truth.clone(), "--truth")?;
    let catalog_path = require(args.catalog, cfg.catalog.clone(), "--catalog")?;

    let pred = read_map(&map_path)?;
    let truth = read_map(&truth_path)?;
    let catalog = load_catalog(&catalog_path).map_err(input)?;
    let iou = args.threshold.or(cfg.iou_threshold).unwrap_or(0.5);
    let tau = cfg.tau.unwrap_or(1.0);

    let (method, pred) = match args.method {
        MethodArg::Si => ("si", pred),
        MethodArg::Cc => {
            let grid = SemanticGrid {
                geometry: pred.geometry,
                classes: pred.cells.iter().map(|&(c, _)| c).collect(),
                obs: pred
                    .cells
                    .iter()
                    .map(|&(c, _)| u32::from(c != VOID_CLASS))
                    .collect(),
            };
            ("cc", cc_map(&grid, &catalog))
        }
    };

    let episodes_path = args.episodes.or(cfg.episodes.clone());
    let outcomes: Option<Vec<bool>> = match &episodes_path {
        None => None,
        Some(path) => Some(score_episodes(path, &truth, &catalog, tau).map_err(input)?),
    };

    let report = metrics_report(method, &pred, &truth, &catalog, iou, outcomes.as_deref())
        .map_err(input)?;
    print!("{}", report.table());
    let json = serde_json::to_string_pretty(&report).expect("report to json");
    match &args.out {
        Some(path) => fs::write(path, json)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(input)?,
        None => println!("{json}"),
    }
    Ok(())
}

/// Episode entries hold a final position and the truth target it aimed for.
fn score_episodes(
    path: &Path,
    truth: &SIMap,
    catalog: &ClassCatalog,
    tau: f64,
) -> Result<Vec<bool>> {
    #[derive(serde::Deserialize)]
    struct Entry {
        x: f64,
        y: f64,
        class: String,
        t: u16,
    }
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading episodes {}", path.display()))?;
    let entries: Vec<Entry> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut outcomes = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let class_id = catalog
            .id_of(&e.class)
            .ok_or_else(|| anyhow!("episode {i}: unknown class {:?}", e.class))?;
        let recs = truth
            .instances_of(class_id)
            .map_err(|err| anyhow!("episode {i}: {err}"))?;
        let rec = recs
            .iter()
            .find(|r| r.t == e.t)
            .ok_or_else(|| anyhow!("episode {i}: no instance {} of {:?}", e.t, e.class))?;
        let state = AgentState::new(WorldPoint::new(e.x, e.y, 0.0), 0.0);
        outcomes.push(auto_success(&state, &rec.footprint, &truth.geometry, tau));
    }
    Ok(outcomes)
}

fn cmd_inspect(args: InspectArgs) -> Result<(), Failure> {
    let map = read_map(&args.map)?;
    let g = map.geometry;
    let observed = map.cells.iter().filter(|&&(c, _)| c != VOID_CLASS).count();
    println!(
        "{}x{} cells at {} m/cell, origin ({}, {}), {} observed",
        g.rows, g.cols, g.scale, g.origin_x, g.origin_y, observed
    );

    // Stable orders: classes ascending, instances by (class, t).
    let mut class_cells: BTreeMap<u16, usize> = BTreeMap::new();
    let mut instances: BTreeSet<(u16, u16)> = BTreeSet::new();
    for &(c, t) in &map.cells {
        if c == VOID_CLASS {
            continue;
        }
        *class_cells.entry(c).or_insert(0) += 1;
        if t >= 1 {
            instances.insert((c, t));
        }
    }
    for (&c, &cells) in &class_cells {
        let n = instances.iter().filter(|&&(ic, _)| ic == c).count();
        println!("  class {c}: {cells} cells, {n} instances");
    }

    let mut palette = ppm::Palette::new();
    let class_colors: BTreeMap<u16, [u8; 3]> =
        class_cells.keys().map(|&c| (c, palette.allocate())).collect();
    let class_img: Vec<[u8; 3]> = map
        .cells
        .iter()
        .map(|&(c, _)| class_colors.get(&c).copied().unwrap_or(palette.background()))
        .collect();

    let mut palette = ppm::Palette::new();
    let inst_colors: BTreeMap<(u16, u16), [u8; 3]> =
        instances.iter().map(|&key| (key, palette.allocate())).collect();
    let inst_img: Vec<[u8; 3]> = map
        .cells
        .iter()
        .map(|&(c, t)| {
            inst_colors.get(&(c, t)).copied().unwrap_or(palette.background())
        })
        .collect();

    let prefix = args
        .out_prefix
        .clone()
        .unwrap_or_else(|| args.map.with_extension(""));
    let class_path = sidecar(&prefix, "classes.ppm");
    let inst_path = sidecar(&prefix, "instances.ppm");
    fs::write(&class_path, ppm::encode(g.cols, g.rows, &class_img))
        .with_context(|| format!("writing {}", class_path.display()))
        .map_err(input)?;
    fs::write(&inst_path, ppm::encode(g.cols, g.rows, &inst_img))
        .with_context(|| format!("writing {}", inst_path.display()))
        .map_err(input)?;
    println!("rasters: {} {}", class_path.display(), inst_path.display());
    Ok(())
}

/// `path` plus a dotted suffix, e.g. `out/map.simap` -> `out/map.simap.meta.json`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
