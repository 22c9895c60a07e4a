//! Recorded-dataset loading and validation: depth rasters, panoptic rasters,
//! camera poses, intrinsics, and the class catalog.
//!
//! Directory layout (text files UTF-8, binary little-endian):
//!
//! ```text
//! intrinsics.txt            fx fy cx cy width height
//! catalog.tsv               class_id<TAB>name<TAB>thing|stuff
//! poses.txt                 frame_id m00 m01 ... m33 (16 floats, row-major camera-to-world)
//! frames/NNNNNN.depth       raw f32 raster, row-major, width*height values
//! frames/NNNNNN.pano        raw interleaved (u16 class_id, u16 entity_id) pairs, row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Reserved class id for unlabeled pixels and unobserved map cells.
pub const VOID_CLASS: u16 = 0xFFFF;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },
    #[error("malformed {path} line {line}: {msg}")]
    Malformed { path: PathBuf, line: usize, msg: String },
    #[error("frame {frame_id}: raster holds {got} pixels, intrinsics say {expected}")]
    DimensionMismatch { frame_id: u64, expected: usize, got: usize },
    #[error("frame {frame_id}: bad pose: {msg}")]
    BadPose { frame_id: u64, msg: String },
    #[error("frame {frame_id}: depth pixel {pixel} is neither finite nor an invalid-marker (<= 0)")]
    BadDepth { frame_id: u64, pixel: usize },
    #[error("frame {frame_id}: panoptic class id {class_id} not in catalog")]
    UnknownClassId { frame_id: u64, class_id: u16 },
    #[error("bad intrinsics: {msg}")]
    BadIntrinsics { msg: String },
}

fn read_to_string(path: &Path) -> Result<String, DatasetError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            Err(DatasetError::MissingFile { path: path.to_path_buf() })
        }
        Err(e) => Err(DatasetError::Io { path: path.to_path_buf(), source: e }),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, DatasetError> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            Err(DatasetError::MissingFile { path: path.to_path_buf() })
        }
        Err(e) => Err(DatasetError::Io { path: path.to_path_buf(), source: e }),
    }
}

/// Pinhole camera parameters. `cx`/`cy` in pixels, inside the raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, DatasetError> {
        let intr = Self { fx, fy, cx, cy, width, height };
        intr.check()?;
        Ok(intr)
    }

    fn check(&self) -> Result<(), DatasetError> {
        let bad = |msg: &str| Err(DatasetError::BadIntrinsics { msg: msg.to_string() });
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside raster");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside raster");
        }
        if self.width == 0 || self.height == 0 {
            return bad("raster must be non-empty");
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Rigid camera-to-world transform: rotation columns are the camera axes
/// (x right, y down, z forward) expressed in the z-up world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
}

impl Pose {
    pub fn identity() -> Self {
        Self { r: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], t: [0.0; 3] }
    }

    /// Build from a 4x4 row-major homogeneous matrix. The bottom row must be
    /// exactly (0,0,0,1) and the rotation block orthonormal within 1e-6.
    pub fn from_matrix(m: &[f64; 16], frame_id: u64) -> Result<Self, DatasetError> {
        let bad = |msg: &str| Err(DatasetError::BadPose { frame_id, msg: msg.to_string() });
        if m.iter().any(|v| !v.is_finite()) {
            return bad("non-finite entry");
        }
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return bad("bottom row is not (0,0,0,1)");
        }
        let r = [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]];
        let t = [m[3], m[7], m[11]];
        // R^T R must be I within tolerance.
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-6 {
                    return bad("rotation block is not orthonormal");
                }
            }
        }
        Ok(Self { r, t })
    }

    pub fn to_matrix(&self) -> [f64; 16] {
        let r = &self.r;
        let t = &self.t;
        [
            r[0][0], r[0][1], r[0][2], t[0],
            r[1][0], r[1][1], r[1][2], t[1],
            r[2][0], r[2][1], r[2][2], t[2],
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Apply the transform: R*p + t.
    pub fn transform(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.r;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.t[2],
        ]
    }
}

/// Depth raster, meters. Values <= 0 mark invalid pixels; anything else must
/// be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthFrame {
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Panoptic raster: per pixel a class id and an intra-frame entity index.
/// Entity ids are only meaningful within their own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PanopticFrame {
    pub width: u32,
    pub height: u32,
    /// Row-major (class_id, entity_id) pairs.
    pub data: Vec<(u16, u16)>,
}

impl PanopticFrame {
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassKind {
    Thing,
    Stuff,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub id: u16,
    pub name: String,
    pub kind: ClassKind,
}

/// The set of known classes. Ids are unique and never the VOID sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCatalog {
    entries: Vec<ClassEntry>,
    by_id: BTreeMap<u16, usize>,
}

impl ClassCatalog {
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self, String> {
        let mut by_id = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.id == VOID_CLASS {
                return Err(format!("class id {:#06x} is reserved for VOID", VOID_CLASS));
            }
            if by_id.insert(e.id, i).is_some() {
                return Err(format!("duplicate class id {}", e.id));
            }
        }
        Ok(Self { entries, by_id })
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn contains(&self, id: u16) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn get(&self, id: u16) -> Option<&ClassEntry> {
        self.by_id.get(&id).map(|&i| &self.entries[i])
    }

    pub fn is_thing(&self, id: u16) -> bool {
        matches!(self.get(id), Some(e) if e.kind == ClassKind::Thing)
    }

    pub fn id_of(&self, name: &str) -> Option<u16> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.id)
    }

    /// Thing-class ids in ascending order.
    pub fn thing_ids(&self) -> Vec<u16> {
        self.by_id
            .iter()
            .filter(|(_, &i)| self.entries[i].kind == ClassKind::Thing)
            .map(|(&id, _)| id)
            .collect()
    }
}

/// One recorded frame: depth + panoptic rasters and the camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub depth: DepthFrame,
    pub pano: PanopticFrame,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub intrinsics: CameraIntrinsics,
    pub catalog: ClassCatalog,
    pub frames: Vec<FrameRecord>,
}

/// Check every per-frame invariant: raster sizes against intrinsics, depth
/// value validity, pose sanity, and panoptic class membership.
pub fn validate_frame(
    frame: &FrameRecord,
    intr: &CameraIntrinsics,
    catalog: &ClassCatalog,
) -> Result<(), DatasetError> {
    let expected = intr.pixel_count();
    if frame.depth.width != intr.width
        || frame.depth.height != intr.height
        || frame.depth.data.len() != expected
    {
        return Err(DatasetError::DimensionMismatch {
            frame_id: frame.frame_id,
            expected,
            got: frame.depth.data.len(),
        });
    }
    if frame.pano.width != intr.width
        || frame.pano.height != intr.height
        || frame.pano.data.len() != expected
    {
        return Err(DatasetError::DimensionMismatch {
            frame_id: frame.frame_id,
            expected,
            got: frame.pano.data.len(),
        });
    }
    for (i, &d) in frame.depth.data.iter().enumerate() {
        // NaN and +inf are errors; <= 0 is the documented invalid marker.
        if !d.is_finite() && !(d <= 0.0) {
            return Err(DatasetError::BadDepth { frame_id: frame.frame_id, pixel: i });
        }
    }
    for &(class_id, _) in &frame.pano.data {
        if class_id != VOID_CLASS && !catalog.contains(class_id) {
            return Err(DatasetError::UnknownClassId { frame_id: frame.frame_id, class_id });
        }
    }
    // Re-validate the pose through the matrix path so a hand-built record
    // gets the same checks as a loaded one.
    Pose::from_matrix(&frame.pose.to_matrix(), frame.frame_id)?;
    Ok(())
}

fn parse_intrinsics(path: &Path) -> Result<CameraIntrinsics, DatasetError> {
    let text = read_to_string(path)?;
    let malformed = |msg: &str| DatasetError::Malformed {
        path: path.to_path_buf(),
        line: 1,
        msg: msg.to_string(),
    };
    let line = text.lines().next().ok_or_else(|| malformed("empty file"))?;
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() != 6 {
        return Err(malformed(&format!("expected 6 fields, got {}", tok.len())));
    }
    let f = |s: &str| s.parse::<f64>().map_err(|_| malformed(&format!("bad number {s:?}")));
    let u = |s: &str| s.parse::<u32>().map_err(|_| malformed(&format!("bad integer {s:?}")));
    CameraIntrinsics::new(f(tok[0])?, f(tok[1])?, f(tok[2])?, f(tok[3])?, u(tok[4])?, u(tok[5])?)
}

fn parse_catalog(path: &Path) -> Result<ClassCatalog, DatasetError> {
    let text = read_to_string(path)?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |msg: String| DatasetError::Malformed {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let tok: Vec<&str> = line.split('\t').collect();
        if tok.len() != 3 {
            return Err(malformed(format!("expected 3 tab-separated fields, got {}", tok.len())));
        }
        let id = tok[0]
            .parse::<u16>()
            .map_err(|_| malformed(format!("bad class id {:?}", tok[0])))?;
        let kind = match tok[2] {
            "thing" => ClassKind::Thing,
            "stuff" => ClassKind::Stuff,
            other => return Err(malformed(format!("kind must be thing|stuff, got {other:?}"))),
        };
        entries.push(ClassEntry { id, name: tok[1].to_string(), kind });
    }
    ClassCatalog::new(entries).map_err(|msg| DatasetError::Malformed {
        path: path.to_path_buf(),
        line: 0,
        msg,
    })
}

fn parse_poses(path: &Path) -> Result<Vec<(u64, Pose)>, DatasetError> {
    let text = read_to_string(path)?;
    let mut out: Vec<(u64, Pose)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |msg: String| DatasetError::Malformed {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let tok: Vec<&str> = line.split_whitespace().collect();
        let frame_id = tok[0]
            .parse::<u64>()
            .map_err(|_| malformed(format!("bad frame id {:?}", tok[0])))?;
        if tok.len() != 17 {
            return Err(DatasetError::BadPose {
                frame_id,
                msg: format!("expected 16 matrix entries, got {}", tok.len() - 1),
            });
        }
        let mut m = [0.0f64; 16];
        for (i, s) in tok[1..].iter().enumerate() {
            m[i] = s.parse::<f64>().map_err(|_| DatasetError::BadPose {
                frame_id,
                msg: format!("bad number {s:?}"),
            })?;
        }
        let pose = Pose::from_matrix(&m, frame_id)?;
        if let Some(&(prev, _)) = out.last() {
            if frame_id <= prev {
                return Err(malformed(format!(
                    "frame ids must be strictly increasing ({prev} then {frame_id})"
                )));
            }
        }
        out.push((frame_id, pose));
    }
    Ok(out)
}

fn read_depth(path: &Path, frame_id: u64, expected: usize) -> Result<Vec<f32>, DatasetError> {
    let bytes = read_bytes(path)?;
    if bytes.len() != expected * 4 {
        return Err(DatasetError::DimensionMismatch { frame_id, expected, got: bytes.len() / 4 });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn read_pano(path: &Path, frame_id: u64, expected: usize) -> Result<Vec<(u16, u16)>, DatasetError> {
    let bytes = read_bytes(path)?;
    if bytes.len() != expected * 4 {
        return Err(DatasetError::DimensionMismatch { frame_id, expected, got: bytes.len() / 4 });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| {
            (u16::from_le_bytes([c[0], c[1]]), u16::from_le_bytes([c[2], c[3]]))
        })
        .collect())
}

/// Load a class catalog on its own, e.g. alongside an already built map.
pub fn load_catalog(path: &Path) -> Result<ClassCatalog, DatasetError> {
    parse_catalog(path)
}

/// Load a dataset directory, validating every frame. Frame order follows the
/// poses file, whose ids must be strictly increasing.
pub fn load_dataset(root: &Path) -> Result<Dataset, DatasetError> {
    let intrinsics = parse_intrinsics(&root.join("intrinsics.txt"))?;
    let catalog = parse_catalog(&root.join("catalog.tsv"))?;
    let poses = parse_poses(&root.join("poses.txt"))?;
    let expected = intrinsics.pixel_count();

    let mut frames = Vec::with_capacity(poses.len());
    for (frame_id, pose) in poses {
        let depth_path = root.join("frames").join(format!("{frame_id:06}.depth"));
        let pano_path = root.join("frames").join(format!("{frame_id:06}.pano"));
        let depth = DepthFrame {
            width: intrinsics.width,
            height: intrinsics.height,
            data: read_depth(&depth_path, frame_id, expected)?,
        };
        let pano = PanopticFrame {
            width: intrinsics.width,
            height: intrinsics.height,
            data: read_pano(&pano_path, frame_id, expected)?,
        };
        let frame = FrameRecord { frame_id, depth, pano, pose };
        validate_frame(&frame, &intrinsics, &catalog)?;
        frames.push(frame);
    }
    Ok(Dataset { intrinsics, catalog, frames })
}

/// Write a dataset in the directory layout `load_dataset` reads.
pub fn write_dataset(root: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    let io_err = |path: &Path, e: io::Error| DatasetError::Io { path: path.to_path_buf(), source: e };
    let frames_dir = root.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| io_err(&frames_dir, e))?;

    let intr = &ds.intrinsics;
    let path = root.join("intrinsics.txt");
    fs::write(
        &path,
        format!("{} {} {} {} {} {}\n", intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height),
    )
    .map_err(|e| io_err(&path, e))?;

    let path = root.join("catalog.tsv");
    let mut text = String::new();
    for e in ds.catalog.entries() {
        let kind = match e.kind {
            ClassKind::Thing => "thing",
            ClassKind::Stuff => "stuff",
        };
        text.push_str(&format!("{}\t{}\t{}\n", e.id, e.name, kind));
    }
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;

    let path = root.join("poses.txt");
    let mut text = String::new();
    for f in &ds.frames {
        text.push_str(&f.frame_id.to_string());
        for v in f.pose.to_matrix() {
            text.push(' ');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;

    for f in &ds.frames {
        let path = frames_dir.join(format!("{:06}.depth", f.frame_id));
        let mut buf = Vec::with_capacity(f.depth.data.len() * 4);
        for d in &f.depth.data {
            buf.write_all(&d.to_le_bytes()).unwrap();
        }
        fs::write(&path, buf).map_err(|e| io_err(&path, e))?;

        let path = frames_dir.join(format!("{:06}.pano", f.frame_id));
        let mut buf = Vec::with_capacity(f.pano.data.len() * 4);
        for (c, t) in &f.pano.data {
            buf.write_all(&c.to_le_bytes()).unwrap();
            buf.write_all(&t.to_le_bytes()).unwrap();
        }
        fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}
