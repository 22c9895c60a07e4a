//! Run configuration: a sectioned key-value file merged with command-line
//! flags (flags win). Unknown sections or keys are rejected so typos fail
//! loudly instead of silently falling back to defaults.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use si_maps::dataset::ClassCatalog;
use si_maps::nav::NavConfig;
use si_maps::{BuildOptions, MapConfig};

#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    // [map] all-or-nothing fixed window; absent means derive from the frames.
    pub map_rows: Option<usize>,
    pub map_cols: Option<usize>,
    pub map_scale: Option<f64>,
    pub map_origin_x: Option<f64>,
    pub map_origin_y: Option<f64>,
    pub map_z_min: Option<f64>,
    pub map_z_max: Option<f64>,
    // [build]
    pub k_merge: Option<f64>,
    pub min_instance_cells: Option<usize>,
    pub max_depth: Option<f64>,
    pub auto_scale: Option<f64>,
    pub auto_z_min: Option<f64>,
    pub auto_z_max: Option<f64>,
    pub include_obs: Option<bool>,
    pub threads: Option<usize>,
    pub louvain_min_gain: Option<f64>,
    pub louvain_max_iterations: Option<usize>,
    // [nav]
    pub navigable_classes: Option<Vec<String>>,
    pub void_navigable: Option<bool>,
    pub inflation_cells: Option<u32>,
    pub fov_half_angle_deg: Option<f64>,
    pub stop_radius: Option<f64>,
    // [eval]
    pub iou_threshold: Option<f64>,
    pub tau: Option<f64>,
    // [paths]
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub program: Option<PathBuf>,
    pub episodes: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                parse(&text).with_context(|| format!("in config {}", p.display()))
            }
        }
    }

    /// The fixed map window, if the [map] section is present and complete.
    pub fn map_config(&self) -> Result<Option<MapConfig>> {
        let fields = [
            self.map_rows.is_some(),
            self.map_cols.is_some(),
            self.map_scale.is_some(),
            self.map_origin_x.is_some(),
            self.map_origin_y.is_some(),
            self.map_z_min.is_some(),
            self.map_z_max.is_some(),
        ];
        let set = fields.iter().filter(|&&b| b).count();
        if set == 0 {
            return Ok(None);
        }
        if set < fields.len() {
            bail!(
                "[map] needs all of rows, cols, scale, origin_x, origin_y, z_min, z_max \
                 (got {set} of {})",
                fields.len()
            );
        }
        Ok(Some(MapConfig {
            rows: self.map_rows.unwrap(),
            cols: self.map_cols.unwrap(),
            scale: self.map_scale.unwrap(),
            origin_x: self.map_origin_x.unwrap(),
            origin_y: self.map_origin_y.unwrap(),
            z_min: self.map_z_min.unwrap(),
            z_max: self.map_z_max.unwrap(),
        }))
    }

    pub fn build_options(&self) -> Result<BuildOptions> {
        let mut opts = BuildOptions::default();
        opts.map = self.map_config()?;
        if let Some(v) = self.k_merge {
            if !(0.0..=100.0).contains(&v) {
                bail!("k_merge must be a percentage in 0..=100, got {v}");
            }
            opts.merge.k_percent = v;
        }
        if let Some(v) = self.min_instance_cells {
            opts.merge.min_instance_cells = v;
        }
        if let Some(v) = self.max_depth {
            opts.max_depth = v;
        }
        if let Some(v) = self.auto_scale {
            opts.auto_scale = v;
        }
        if let Some(v) = self.auto_z_min {
            opts.auto_z.0 = v;
        }
        if let Some(v) = self.auto_z_max {
            opts.auto_z.1 = v;
        }
        if let Some(v) = self.include_obs {
            opts.include_obs = v;
        }
        if let Some(v) = self.threads {
            opts.threads = v;
        }
        if let Some(v) = self.louvain_min_gain {
            opts.louvain.min_gain = v;
        }
        if let Some(v) = self.louvain_max_iterations {
            opts.louvain.max_outer_iterations = v;
        }
        Ok(opts)
    }

    /// Navigation settings; classes named in the config are resolved against
    /// the catalog, otherwise floor-like stuff classes are navigable.
    pub fn nav_config(&self, catalog: &ClassCatalog) -> Result<NavConfig> {
        let mut cfg = NavConfig::for_catalog(catalog);
        if let Some(names) = &self.navigable_classes {
            let mut ids = BTreeSet::new();
            for token in names {
                let id = match token.parse::<u16>() {
                    Ok(id) if catalog.contains(id) => id,
                    _ => catalog
                        .id_of(token)
                        .ok_or_else(|| anyhow!("navigable_classes: unknown class {token:?}"))?,
                };
                ids.insert(id);
            }
            cfg.navigable_classes = ids;
        }
        if let Some(v) = self.void_navigable {
            cfg.void_navigable = v;
        }
        if let Some(v) = self.inflation_cells {
            cfg.inflation_cells = v;
        }
        if let Some(v) = self.fov_half_angle_deg {
            cfg.fov_half_angle = v.to_radians();
        }
        if let Some(v) = self.stop_radius {
            if v <= 0.0 {
                bail!("stop_radius must be positive, got {v}");
            }
            cfg.stop_radius = v;
        }
        Ok(cfg)
    }
}

pub fn parse(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| anyhow!("line {lineno}: unterminated section header"))?
                .trim();
            if !matches!(name, "map" | "build" | "nav" | "eval" | "paths") {
                bail!("line {lineno}: unknown section [{name}]");
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {lineno}: expected key = value"))?;
        let key = key.trim();
        let value = value.trim();
        let section = section
            .as_deref()
            .ok_or_else(|| anyhow!("line {lineno}: key {key:?} before any [section]"))?;
        set_key(&mut cfg, section, key, value)
            .map_err(|e| anyhow!("line {lineno}: {e:#}"))?;
    }
    Ok(cfg)
}

fn set_key(cfg: &mut RunConfig, section: &str, key: &str, value: &str) -> Result<()> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse::<T>()
            .map_err(|_| anyhow!("{key}: cannot parse {value:?}"))
    }
    fn boolean(key: &str, value: &str) -> Result<bool> {
        match value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => bail!("{key}: expected true or false, got {value:?}"),
        }
    }
    match (section, key) {
        ("map", "rows") => cfg.map_rows = Some(num(key, value)?),
        ("map", "cols") => cfg.map_cols = Some(num(key, value)?),
        ("map", "scale") => cfg.map_scale = Some(num(key, value)?),
        ("map", "origin_x") => cfg.map_origin_x = Some(num(key, value)?),
        ("map", "origin_y") => cfg.map_origin_y = Some(num(key, value)?),
        ("map", "z_min") => cfg.map_z_min = Some(num(key, value)?),
        ("map", "z_max") => cfg.map_z_max = Some(num(key, value)?),

        ("build", "k_merge") => cfg.k_merge = Some(num(key, value)?),
        ("build", "min_instance_cells") => cfg.min_instance_cells = Some(num(key, value)?),
        ("build", "max_depth") => cfg.max_depth = Some(num(key, value)?),
        ("build", "auto_scale") => cfg.auto_scale = Some(num(key, value)?),
        ("build", "auto_z_min") => cfg.auto_z_min = Some(num(key, value)?),
        ("build", "auto_z_max") => cfg.auto_z_max = Some(num(key, value)?),
        ("build", "include_obs") => cfg.include_obs = Some(boolean(key, value)?),
        ("build", "threads") => cfg.threads = Some(num(key, value)?),
        ("build", "louvain_min_gain") => cfg.louvain_min_gain = Some(num(key, value)?),
        ("build", "louvain_max_iterations") => {
            cfg.louvain_max_iterations = Some(num(key, value)?)
        }

        ("nav", "navigable_classes") => {
            cfg.navigable_classes =
                Some(value.split(',').map(|t| t.trim().to_string()).collect())
        }
        ("nav", "void_navigable") => cfg.void_navigable = Some(boolean(key, value)?),
        ("nav", "inflation_cells") => cfg.inflation_cells = Some(num(key, value)?),
        ("nav", "fov_half_angle_deg") => cfg.fov_half_angle_deg = Some(num(key, value)?),
        ("nav", "stop_radius") => cfg.stop_radius = Some(num(key, value)?),

        ("eval", "iou_threshold") => cfg.iou_threshold = Some(num(key, value)?),
        ("eval", "tau") => cfg.tau = Some(num(key, value)?),

        ("paths", "data") => cfg.data = Some(PathBuf::from(value)),
        ("paths", "out") => cfg.out = Some(PathBuf::from(value)),
        ("paths", "map") => cfg.map = Some(PathBuf::from(value)),
        ("paths", "truth") => cfg.truth = Some(PathBuf::from(value)),
        ("paths", "catalog") => cfg.catalog = Some(PathBuf::from(value)),
        ("paths", "program") => cfg.program = Some(PathBuf::from(value)),
        ("paths", "episodes") => cfg.episodes = Some(PathBuf::from(value)),

        _ => bail!("unknown key {key:?} in section [{section}]"),
    }
    Ok(())
}
