//! Geometry provider contract.
//!
//! A provider takes a frame list and query pixels on the list's first frame
//! and returns per-frame depth, per-frame extrinsics relative to the first
//! frame, and a point trajectory for every query.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{depth_io, FrameRecord};
use crate::geom::{DepthMap, Pose};

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("frame {0} has no stored prediction")]
    PredictionMissing(u64),
    #[error("empty frame list")]
    EmptyFrameList,
    #[error("query pixel ({u}, {v}) lies outside the first frame")]
    QueryOutOfBounds { u: f64, v: f64 },
    #[error("provider output violates contract: {0}")]
    InvalidOutput(String),
    #[error("{path}: {reason}")]
    Tracks { path: PathBuf, reason: String },
    #[error(transparent)]
    Depth(#[from] depth_io::DepthIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

/// Positions of one query point across every frame of the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub points: Vec<TrackPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderOutput {
    pub predicted_depths: Vec<DepthMap>,
    /// Camera-from-reference extrinsics; `extrinsics[0]` is the identity.
    pub extrinsics: Vec<Pose>,
    pub tracks: Vec<Track>,
}

impl ProviderOutput {
    pub fn validate(&self, frames: &[FrameRecord]) -> Result<(), ProviderError> {
        let bad = |s: String| Err(ProviderError::InvalidOutput(s));
        let n = frames.len();
        if self.predicted_depths.len() != n || self.extrinsics.len() != n {
            return bad(format!(
                "{} depths and {} extrinsics for {n} frames",
                self.predicted_depths.len(),
                self.extrinsics.len()
            ));
        }
        if let Some(first) = self.extrinsics.first() {
            if first.max_abs_diff(&Pose::identity()) > 1e-6 {
                return bad("first extrinsic is not the identity".into());
            }
        }
        for (d, f) in self.predicted_depths.iter().zip(frames) {
            if !d.matches(&f.intrinsics) {
                return bad(format!("predicted depth of frame {} has wrong size", f.frame_index));
            }
        }
        for t in &self.tracks {
            if t.points.len() != n {
                return bad(format!("track spans {} frames, list has {n}", t.points.len()));
            }
            if t.points.iter().any(|p| !(0.0..=1.0).contains(&p.confidence)) {
                return bad("track confidence outside [0, 1]".into());
            }
        }
        Ok(())
    }
}

/// Source of depth, relative pose and point tracks for a frame list.
pub trait GeometryProvider: Send {
    fn infer(&mut self, frames: &[FrameRecord], queries: &[(f64, f64)]) -> Result<ProviderOutput, ProviderError>;
}

pub(crate) fn check_queries(frames: &[FrameRecord], queries: &[(f64, f64)]) -> Result<(), ProviderError> {
    let first = frames.first().ok_or(ProviderError::EmptyFrameList)?;
    let (w, h) = (first.intrinsics.width as f64, first.intrinsics.height as f64);
    for &(u, v) in queries {
        if !(u >= 0.0 && u < w && v >= 0.0 && v < h) {
            return Err(ProviderError::QueryOutOfBounds { u, v });
        }
    }
    Ok(())
}

/// Stored tracks for one frame list, keyed on disk by the list's first
/// frame index (`<dir>/<first_frame_index>.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTracks {
    pub frames: Vec<u64>,
    pub tracks: Vec<Track>,
}

/// Replays precomputed predictions referenced from the manifest.
///
/// Stored poses may live in any common frame; they are re-expressed relative
/// to the first frame of each requested list.
#[derive(Debug, Clone, Default)]
pub struct FileProvider {
    tracks_dir: Option<PathBuf>,
}

impl FileProvider {
    pub fn new(tracks_dir: Option<PathBuf>) -> Self {
        FileProvider { tracks_dir }
    }

    fn load_tracks(&self, frames: &[FrameRecord]) -> Result<Vec<Track>, ProviderError> {
        let Some(dir) = &self.tracks_dir else { return Ok(Vec::new()) };
        let path = dir.join(format!("{}.json", frames[0].frame_index));
        if !path.exists() {
            log::warn!("no stored tracks at {}", path.display());
            return Ok(Vec::new());
        }
        let fail = |reason: String| ProviderError::Tracks { path: path.clone(), reason };
        let text = std::fs::read_to_string(&path).map_err(|e| fail(e.to_string()))?;
        let stored: StoredTracks = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        let wanted: Vec<u64> = frames.iter().map(|f| f.frame_index).collect();
        if stored.frames != wanted {
            return Err(fail(format!("tracks cover frames {:?}, list is {:?}", stored.frames, wanted)));
        }
        Ok(stored.tracks)
    }
}

pub fn write_stored_tracks(dir: &Path, stored: &StoredTracks) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let first = stored.frames.first().copied().unwrap_or_default();
    std::fs::write(dir.join(format!("{first}.json")), serde_json::to_vec(stored)?)
}

impl GeometryProvider for FileProvider {
    fn infer(&mut self, frames: &[FrameRecord], queries: &[(f64, f64)]) -> Result<ProviderOutput, ProviderError> {
        check_queries(frames, queries)?;
        let mut predicted_depths = Vec::with_capacity(frames.len());
        let mut poses = Vec::with_capacity(frames.len());
        for f in frames {
            let (Some(path), Some(pose)) = (&f.predicted_depth_path, f.predicted_pose) else {
                return Err(ProviderError::PredictionMissing(f.frame_index));
            };
            predicted_depths.push(depth_io::read(path)?);
            poses.push(pose);
        }
        let reference_inv = poses[0].inverse();
        let extrinsics = poses.iter().map(|p| p.compose(&reference_inv)).collect();
        let out = ProviderOutput { predicted_depths, extrinsics, tracks: self.load_tracks(frames)? };
        out.validate(frames)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Intrinsics;
    use crate::stream::{open_stream, ManifestWriter};
    use nalgebra::Vector3;

    #[test]
    fn missing_prediction_is_reported() {
        let k = Intrinsics::new(5.0, 5.0, 1.0, 1.0, 2, 2).unwrap();
        let frames = vec![FrameRecord::new(7, 0.0, k)];
        let err = FileProvider::default().infer(&frames, &[]).unwrap_err();
        assert!(matches!(err, ProviderError::PredictionMissing(7)));
    }

    #[test]
    fn stored_poses_become_relative() {
        let dir = tempfile::tempdir().unwrap();
        let k = Intrinsics::new(5.0, 5.0, 1.0, 1.0, 2, 2).unwrap();
        let mut w = ManifestWriter::create(dir.path()).unwrap();
        let depth = DepthMap::filled(2, 2, 3.0);
        for i in 0..3u64 {
            // Camera moves +0.1 m along x per frame, starting at x = 1.
            let pose = Pose::from_translation(Vector3::new(-(1.0 + 0.1 * i as f64), 0.0, 0.0));
            w.write_frame(&FrameRecord::new(i, i as f64, k), Some((&depth, &pose))).unwrap();
        }
        w.finish().unwrap();
        let frames: Vec<_> = open_stream(&dir.path().join("manifest.jsonl")).unwrap().map(Result::unwrap).collect();
        let out = FileProvider::default().infer(&frames, &[(0.5, 0.5)]).unwrap();
        for (j, e) in out.extrinsics.iter().enumerate() {
            assert!((e.translation() - Vector3::new(-0.1 * j as f64, 0.0, 0.0)).norm() < 1e-12);
        }
        assert!(out.tracks.is_empty());
        assert!(matches!(
            FileProvider::default().infer(&frames, &[(2.0, 0.0)]),
            Err(ProviderError::QueryOutOfBounds { .. })
        ));
    }

    #[test]
    fn stored_tracks_must_match_list() {
        let dir = tempfile::tempdir().unwrap();
        let k = Intrinsics::new(5.0, 5.0, 1.0, 1.0, 2, 2).unwrap();
        let mut w = ManifestWriter::create(dir.path()).unwrap();
        let depth = DepthMap::filled(2, 2, 3.0);
        for i in 0..2u64 {
            w.write_frame(&FrameRecord::new(i, i as f64, k), Some((&depth, &Pose::identity()))).unwrap();
        }
        w.finish().unwrap();
        let frames: Vec<_> = open_stream(&dir.path().join("manifest.jsonl")).unwrap().map(Result::unwrap).collect();
        let tracks_dir = dir.path().join("tracks");
        let p = TrackPoint { u: 0.0, v: 1.0, confidence: 0.9 };
        write_stored_tracks(&tracks_dir, &StoredTracks { frames: vec![0, 1], tracks: vec![Track { points: vec![p, p] }] })
            .unwrap();
        let mut provider = FileProvider::new(Some(tracks_dir.clone()));
        assert_eq!(provider.infer(&frames, &[]).unwrap().tracks.len(), 1);
        write_stored_tracks(&tracks_dir, &StoredTracks { frames: vec![0, 5], tracks: vec![] }).unwrap();
        assert!(matches!(provider.infer(&frames, &[]), Err(ProviderError::Tracks { .. })));
    }
}
