//! Global map state shared by the alignment and semantic stages.

use std::collections::HashSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geom::Pose;
use crate::stream::FrameRecord;

pub type VoxelKey = (i64, i64, i64);

pub fn voxel_key(p: &Vector3<f64>, voxel: f64) -> VoxelKey {
    ((p.x / voxel).floor() as i64, (p.y / voxel).floor() as i64, (p.z / voxel).floor() as i64)
}

/// Point set that keeps the first point falling into each voxel. Every
/// point carries a tag (the contributing frame index).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VoxelCloudRepr", into = "VoxelCloudRepr")]
pub struct VoxelCloud {
    voxel: f64,
    points: Vec<Vector3<f64>>,
    tags: Vec<u64>,
    occupied: HashSet<VoxelKey>,
}

#[derive(Serialize, Deserialize)]
struct VoxelCloudRepr {
    voxel: f64,
    points: Vec<[f64; 3]>,
    tags: Vec<u64>,
}

impl From<VoxelCloudRepr> for VoxelCloud {
    fn from(r: VoxelCloudRepr) -> Self {
        let mut c = VoxelCloud::new(r.voxel);
        for (p, t) in r.points.into_iter().zip(r.tags) {
            c.insert(Vector3::from(p), t);
        }
        c
    }
}

impl From<VoxelCloud> for VoxelCloudRepr {
    fn from(c: VoxelCloud) -> Self {
        VoxelCloudRepr { voxel: c.voxel, points: c.points.iter().map(|p| [p.x, p.y, p.z]).collect(), tags: c.tags }
    }
}

impl PartialEq for VoxelCloud {
    fn eq(&self, other: &Self) -> bool {
        self.voxel == other.voxel && self.points == other.points && self.tags == other.tags
    }
}

impl VoxelCloud {
    /// `voxel <= 0` disables deduplication.
    pub fn new(voxel: f64) -> Self {
        VoxelCloud { voxel, points: Vec::new(), tags: Vec::new(), occupied: HashSet::new() }
    }

    /// Returns whether the point was kept.
    pub fn insert(&mut self, p: Vector3<f64>, tag: u64) -> bool {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return false;
        }
        if self.voxel > 0.0 && !self.occupied.insert(voxel_key(&p, self.voxel)) {
            return false;
        }
        self.points.push(p);
        self.tags.push(tag);
        true
    }

    pub fn extend(&mut self, points: impl IntoIterator<Item = Vector3<f64>>, tag: u64) {
        for p in points {
            self.insert(p, tag);
        }
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn tags(&self) -> &[u64] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn voxel(&self) -> f64 {
        self.voxel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub frame_index: u64,
    pub timestamp: f64,
    pub raw: Pose,
    pub smoothed: Pose,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignState {
    /// Rolling reference extrinsic; `None` before the first block.
    pub e_ref: Option<Pose>,
    /// Block scale of the last processed block.
    pub last_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMap {
    pub align: AlignState,
    pub trajectory: Vec<TrajectoryEntry>,
    /// Background points (pixels outside every instance mask).
    pub cloud: VoxelCloud,
    /// Keyframes of the last processed block, in frame order.
    pub keyframes: Vec<FrameRecord>,
    pub blocks_processed: u64,
}

impl GlobalMap {
    pub fn new(voxel: f64) -> Self {
        GlobalMap {
            align: AlignState::default(),
            trajectory: Vec::new(),
            cloud: VoxelCloud::new(voxel),
            keyframes: Vec::new(),
            blocks_processed: 0,
        }
    }

    pub fn last_frame_index(&self) -> Option<u64> {
        self.trajectory.last().map(|t| t.frame_index)
    }
}
