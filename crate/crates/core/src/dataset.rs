//! GOT-10k style sequence directories and result files.
//!
//! A sequence directory holds image frames plus `groundtruth.txt` with one
//! `x,y,w,h` line per frame (empty or `nan` entries mark absent boxes) and
//! an optional `attributes.txt`. Results are written as
//! `<out>/<seq>/<seq>_001.txt` (`%.4f,%.4f,%.4f,%.4f` per frame) and
//! `<out>/<seq>/<seq>_time.txt` (seconds per frame).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracker::BBox;

pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";
pub const ATTRIBUTES_FILE: &str = "attributes.txt";
const FRAME_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

/// Sequence-level challenge attributes, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Attribute {
    AspectRatioChange,
    BackgroundClutter,
    CameraMotion,
    Deformation,
    FastMotion,
    FullOcclusion,
    IlluminationVariation,
    LowResolution,
    MotionBlur,
    OutOfView,
    PartialOcclusion,
    Rotation,
    ScaleVariation,
    ViewpointChange,
}

impl Attribute {
    pub const ALL: [Attribute; 14] = [
        Attribute::AspectRatioChange,
        Attribute::BackgroundClutter,
        Attribute::CameraMotion,
        Attribute::Deformation,
        Attribute::FastMotion,
        Attribute::FullOcclusion,
        Attribute::IlluminationVariation,
        Attribute::LowResolution,
        Attribute::MotionBlur,
        Attribute::OutOfView,
        Attribute::PartialOcclusion,
        Attribute::Rotation,
        Attribute::ScaleVariation,
        Attribute::ViewpointChange,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Attribute::AspectRatioChange => "ARC",
            Attribute::BackgroundClutter => "BC",
            Attribute::CameraMotion => "CM",
            Attribute::Deformation => "DEF",
            Attribute::FastMotion => "FM",
            Attribute::FullOcclusion => "FOC",
            Attribute::IlluminationVariation => "IV",
            Attribute::LowResolution => "LR",
            Attribute::MotionBlur => "MB",
            Attribute::OutOfView => "OV",
            Attribute::PartialOcclusion => "POC",
            Attribute::Rotation => "ROT",
            Attribute::ScaleVariation => "SV",
            Attribute::ViewpointChange => "VC",
        }
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Attribute::ALL
            .into_iter()
            .find(|a| a.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown attribute `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceAnnotation {
    pub name: String,
    /// Frame image paths in playback order; empty for annotation-only directories.
    pub frames: Vec<PathBuf>,
    pub groundtruth: Vec<Option<BBox>>,
    pub attributes: Vec<Attribute>,
}

impl SequenceAnnotation {
    pub fn num_frames(&self) -> usize {
        self.frames.len().max(self.groundtruth.len())
    }

    /// Groundtruth of frame `i`; frames past the end of the annotation are absent.
    pub fn gt(&self, i: usize) -> Option<BBox> {
        self.groundtruth.get(i).copied().flatten()
    }
}

/// Per-frame predictions and wall times of one sequence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackRun {
    pub name: String,
    pub boxes: Vec<BBox>,
    /// Seconds per frame; empty when timing is unavailable.
    pub times: Vec<f64>,
}

/// Parses one `x,y,w,h` line (comma, tab or space separated).
///
/// `Ok(None)` for an absent entry: blank, all-`nan`, or non-positive size.
pub fn parse_box_line(line: &str) -> std::result::Result<Option<BBox>, String> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(None);
    }
    let fields: Vec<&str> = line
        .split([',', '\t', ' '])
        .filter(|f| !f.is_empty())
        .collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let mut v = [0.0f64; 4];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f
            .parse::<f64>()
            .map_err(|_| format!("`{f}` is not a number"))?;
    }
    if v.iter().any(|x| x.is_nan()) {
        return Ok(None);
    }
    if v.iter().any(|x| x.is_infinite()) {
        return Err("infinite coordinate".into());
    }
    let b = BBox::new(v[0], v[1], v[2], v[3]);
    Ok(b.is_valid().then_some(b))
}

pub fn read_box_file(path: &Path) -> Result<Vec<Option<BBox>>> {
    let text = fs::read_to_string(path)?;
    let mut lines: Vec<&str> = text.lines().collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            parse_box_line(l).map_err(|msg| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            })
        })
        .collect()
}

fn parse_attributes(path: &Path) -> Result<Vec<Attribute>> {
    let text = fs::read_to_string(path)?;
    let fields: Vec<&str> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .collect();
    let parse_err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg,
    };
    // 14 binary flags in canonical order, or a list of codes
    if fields.len() == Attribute::ALL.len() && fields.iter().all(|f| *f == "0" || *f == "1") {
        return Ok(Attribute::ALL
            .into_iter()
            .zip(&fields)
            .filter(|(_, f)| **f == "1")
            .map(|(a, _)| a)
            .collect());
    }
    let mut out: Vec<Attribute> = fields
        .iter()
        .map(|f| f.parse().map_err(parse_err))
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

fn is_frame(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| FRAME_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

pub fn read_sequence(dir: impl AsRef<Path>) -> Result<SequenceAnnotation> {
    let dir = dir.as_ref();
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Invalid(format!("cannot name sequence at {}", dir.display())))?
        .to_string();
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    let groundtruth = read_box_file(&gt_path)?;
    if groundtruth.first().copied().flatten().is_none() {
        return Err(Error::Parse {
            path: gt_path,
            line: 1,
            msg: "first frame must have a groundtruth box".into(),
        });
    }
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && is_frame(p))
        .collect();
    frames.sort();
    let attr_path = dir.join(ATTRIBUTES_FILE);
    let attributes = if attr_path.is_file() {
        parse_attributes(&attr_path)?
    } else {
        Vec::new()
    };
    Ok(SequenceAnnotation {
        name,
        frames,
        groundtruth,
        attributes,
    })
}

/// Either a single sequence directory or a root whose children are sequences, sorted by name.
pub fn read_dataset(root: impl AsRef<Path>) -> Result<Vec<SequenceAnnotation>> {
    let root = root.as_ref();
    if root.join(GROUNDTRUTH_FILE).is_file() {
        return Ok(vec![read_sequence(root)?]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.join(GROUNDTRUTH_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Invalid(format!(
            "{} contains no sequence directories",
            root.display()
        )));
    }
    dirs.iter().map(read_sequence).collect()
}

pub fn format_boxes(boxes: &[BBox]) -> String {
    let mut s = String::with_capacity(boxes.len() * 40);
    for b in boxes {
        let _ = writeln!(s, "{:.4},{:.4},{:.4},{:.4}", b.x, b.y, b.w, b.h);
    }
    s
}

pub fn format_times(times: &[f64]) -> String {
    let mut s = String::with_capacity(times.len() * 12);
    for t in times {
        let _ = writeln!(s, "{t:.8}");
    }
    s
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("txt.partial");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn result_paths(out_dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    let dir = out_dir.join(name);
    (dir.join(format!("{name}_001.txt")), dir.join(format!("{name}_time.txt")))
}

/// Writes the box and timing files of `run` under `out_dir/<name>/`.
pub fn write_results(run: &TrackRun, out_dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let (boxes, times) = result_paths(out_dir.as_ref(), &run.name);
    fs::create_dir_all(boxes.parent().expect("joined path"))?;
    write_atomic(&boxes, &format_boxes(&run.boxes))?;
    write_atomic(&times, &format_times(&run.times))?;
    Ok((boxes, times))
}

/// Reads results of sequence `name`, from `dir/<name>/` or flat in `dir`.
pub fn read_results(dir: impl AsRef<Path>, name: &str) -> Result<TrackRun> {
    let dir = dir.as_ref();
    let (mut boxes_path, mut times_path) = result_paths(dir, name);
    if !boxes_path.is_file() {
        boxes_path = dir.join(format!("{name}_001.txt"));
        times_path = dir.join(format!("{name}_time.txt"));
    }
    let boxes = read_box_file(&boxes_path)?
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            b.ok_or_else(|| Error::Parse {
                path: boxes_path.clone(),
                line: i + 1,
                msg: "missing prediction".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let times = if times_path.is_file() {
        fs::read_to_string(&times_path)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|t| *t >= 0.0)
                    .ok_or_else(|| Error::Parse {
                        path: times_path.clone(),
                        line: i + 1,
                        msg: format!("bad time `{}`", l.trim()),
                    })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(TrackRun {
        name: name.to_string(),
        boxes,
        times,
    })
}

/// Names of the result sequences present in `dir` (subdirectories holding `<name>_001.txt`).
pub fn list_result_sequences(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if let Some(name) = p.file_name().and_then(|n| n.to_str()) {
            if p.is_dir() && p.join(format!("{name}_001.txt")).is_file() {
                names.push(name.to_string());
            } else if let Some(stem) = name.strip_suffix("_001.txt") {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    names.dedup();
    Ok(names)
}
