//! Frame stream input: records, manifest files and geometry providers.

pub mod depth_io;
pub mod features;
pub mod mask;
pub mod provider;
pub mod synth;

use std::fs::File;
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geom::{DepthMap, Intrinsics, Pose};
pub use mask::{BitMask, InstanceMask, MaskRecord};

#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: {reason}")]
    MalformedManifest { path: PathBuf, line: usize, reason: String },
    #[error("frame index {index} does not follow {previous}")]
    NonMonotoneIndex { previous: u64, index: u64 },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Depth(#[from] depth_io::DepthIoError),
}

/// One frame of the input stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub timestamp: f64,
    pub intrinsics: Intrinsics,
    pub sensor_depth: Option<DepthMap>,
    pub feature_score: Option<f64>,
    pub masks: Vec<InstanceMask>,
    pub rgb_path: Option<PathBuf>,
    /// Precomputed prediction references, consumed by the file-backed
    /// provider.
    #[serde(default)]
    pub predicted_depth_path: Option<PathBuf>,
    #[serde(default)]
    pub predicted_pose: Option<Pose>,
}

impl FrameRecord {
    pub fn new(frame_index: u64, timestamp: f64, intrinsics: Intrinsics) -> Self {
        FrameRecord {
            frame_index,
            timestamp,
            intrinsics,
            sensor_depth: None,
            feature_score: None,
            masks: Vec::new(),
            rgb_path: None,
            predicted_depth_path: None,
            predicted_pose: None,
        }
    }
}

impl Serialize for InstanceMask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SizedMask {
            width: self.mask.width(),
            height: self.mask.height(),
            record: self.to_record(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for InstanceMask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = SizedMask::deserialize(deserializer)?;
        InstanceMask::from_record(&s.record, s.width, s.height).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct SizedMask {
    width: u32,
    height: u32,
    #[serde(flatten)]
    record: MaskRecord,
}

/// One manifest line, field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub frame_index: u64,
    pub timestamp: f64,
    pub depth_sensor: Option<String>,
    pub depth_pred: Option<String>,
    pub pose: Option<[f64; 12]>,
    pub intrinsics: Intrinsics,
    pub feature_score: Option<f64>,
    pub masks: Vec<MaskRecord>,
    pub rgb: Option<String>,
}

impl ManifestEntry {
    fn referenced_files(&self, base: &Path) -> Vec<PathBuf> {
        [&self.depth_sensor, &self.depth_pred]
            .into_iter()
            .flatten()
            .map(|p| base.join(p))
            .collect()
    }

    fn load(self, base: &Path) -> Result<FrameRecord, String> {
        self.intrinsics.validate().map_err(|e| e.to_string())?;
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        let sensor_depth = match &self.depth_sensor {
            Some(p) => {
                let d = depth_io::read(&base.join(p)).map_err(|e| e.to_string())?;
                if !d.matches(&self.intrinsics) {
                    return Err(format!("sensor depth {p} is {}x{}, frame is {w}x{h}", d.width(), d.height()));
                }
                Some(d)
            }
            None => None,
        };
        if let Some(s) = self.feature_score {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(format!("feature score {s} is not a nonnegative real"));
            }
        }
        let masks = self
            .masks
            .iter()
            .map(|m| InstanceMask::from_record(m, w, h).map_err(|e| format!("mask {:?}: {e}", m.class)))
            .collect::<Result<Vec<_>, _>>()?;
        let predicted_pose = self.pose.map(Pose::from_array).transpose().map_err(|e| e.to_string())?;
        Ok(FrameRecord {
            frame_index: self.frame_index,
            timestamp: self.timestamp,
            intrinsics: self.intrinsics,
            sensor_depth,
            feature_score: self.feature_score,
            masks,
            rgb_path: self.rgb.map(|p| base.join(p)),
            predicted_depth_path: self.depth_pred.map(|p| base.join(p)),
            predicted_pose,
        })
    }
}

/// Lazily reads frames from a JSON-lines manifest in `frame_index` order.
///
/// Opening scans the file once to index `(frame_index, byte offset)` pairs
/// and to check that referenced files exist; record payloads are parsed and
/// depth rasters loaded one frame at a time during iteration.
pub struct FrameStream {
    path: PathBuf,
    base: PathBuf,
    reader: BufReader<File>,
    index: Vec<(u64, u64, usize)>,
    next: usize,
}

pub fn open_stream(manifest: &Path) -> Result<FrameStream, StreamError> {
    let file = File::open(manifest).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => StreamError::MissingFile(manifest.to_path_buf()),
        _ => StreamError::Io { path: manifest.to_path_buf(), source: e },
    })?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = BufReader::new(file);
    let mut index = Vec::new();
    let mut offset = 0u64;
    let mut line = String::new();
    let mut lineno = 0usize;
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| StreamError::Io { path: manifest.to_path_buf(), source: e })?;
        if n == 0 {
            break;
        }
        lineno += 1;
        if !line.trim().is_empty() {
            let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| StreamError::MalformedManifest {
                path: manifest.to_path_buf(),
                line: lineno,
                reason: e.to_string(),
            })?;
            for f in entry.referenced_files(&base) {
                if !f.exists() {
                    return Err(StreamError::MissingFile(f));
                }
            }
            index.push((entry.frame_index, offset, lineno));
        }
        offset += n as u64;
    }
    index.sort_by_key(|(i, _, _)| *i);
    for w in index.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(StreamError::NonMonotoneIndex { previous: w[0].0, index: w[1].0 });
        }
    }
    Ok(FrameStream { path: manifest.to_path_buf(), base, reader, index, next: 0 })
}

impl FrameStream {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Skips every frame whose index is `<= last`.
    pub fn skip_through(&mut self, last: u64) {
        while self.next < self.index.len() && self.index[self.next].0 <= last {
            self.next += 1;
        }
    }

    fn read_at(&mut self, offset: u64, lineno: usize) -> Result<FrameRecord, StreamError> {
        let io_err = |path: &Path, source| StreamError::Io { path: path.to_path_buf(), source };
        self.reader.seek(SeekFrom::Start(offset)).map_err(|e| io_err(&self.path, e))?;
        let mut line = String::new();
        self.reader.read_line(&mut line).map_err(|e| io_err(&self.path, e))?;
        let malformed = |reason: String| StreamError::MalformedManifest { path: self.path.clone(), line: lineno, reason };
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        for f in entry.referenced_files(&self.base) {
            if !f.exists() {
                return Err(StreamError::MissingFile(f));
            }
        }
        entry.load(&self.base).map_err(malformed)
    }
}

impl Iterator for FrameStream {
    type Item = Result<FrameRecord, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        let &(_, offset, lineno) = self.index.get(self.next)?;
        self.next += 1;
        Some(self.read_at(offset, lineno))
    }
}

/// Appends frames to a manifest, writing depth rasters next to it.
pub struct ManifestWriter {
    dir: PathBuf,
    out: io::BufWriter<File>,
}

impl ManifestWriter {
    pub fn create(dir: &Path) -> Result<Self, StreamError> {
        let io_err = |source| StreamError::Io { path: dir.to_path_buf(), source };
        std::fs::create_dir_all(dir.join("depth")).map_err(io_err)?;
        let f = File::create(dir.join("manifest.jsonl")).map_err(io_err)?;
        Ok(ManifestWriter { dir: dir.to_path_buf(), out: io::BufWriter::new(f) })
    }

    /// Writes one frame. `predicted` carries the stored prediction, if any.
    pub fn write_frame(&mut self, frame: &FrameRecord, predicted: Option<(&DepthMap, &Pose)>) -> Result<(), StreamError> {
        let depth_sensor = match &frame.sensor_depth {
            Some(d) => {
                let rel = format!("depth/sensor_{:06}.dpth", frame.frame_index);
                depth_io::write(&self.dir.join(&rel), d)?;
                Some(rel)
            }
            None => None,
        };
        let (depth_pred, pose) = match predicted {
            Some((d, p)) => {
                let rel = format!("depth/pred_{:06}.dpth", frame.frame_index);
                depth_io::write(&self.dir.join(&rel), d)?;
                (Some(rel), Some(p.to_array()))
            }
            None => (None, None),
        };
        let entry = ManifestEntry {
            frame_index: frame.frame_index,
            timestamp: frame.timestamp,
            depth_sensor,
            depth_pred,
            pose,
            intrinsics: frame.intrinsics,
            feature_score: frame.feature_score,
            masks: frame.masks.iter().map(InstanceMask::to_record).collect(),
            rgb: frame.rgb_path.as_ref().map(|p| p.display().to_string()),
        };
        let line = serde_json::to_string(&entry).expect("manifest entry serializes");
        writeln!(self.out, "{line}").map_err(|source| StreamError::Io { path: self.dir.clone(), source })
    }

    pub fn finish(mut self) -> Result<(), StreamError> {
        self.out.flush().map_err(|source| StreamError::Io { path: self.dir.clone(), source })
    }
}
