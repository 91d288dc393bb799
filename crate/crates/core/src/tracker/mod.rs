//! Turns 2D instance masks and point tracks into persistent 3D objects.
//!
//! Within a block, sub-tracklets are born from the masks of the first frame
//! of the frame list; their grid points are followed through the list with
//! the provider's tracks and vote for masks in later frames. At the end of
//! the block every sub-tracklet is either merged into a known object
//! (bounding-box IoU first, then median-point Chamfer distance) or becomes a
//! new object.

pub mod assoc;
pub mod reid;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::align::{BlockInput, BlockState};
use crate::change::{LifeState, ObjectState};
use crate::geom::{component_median, unproject_pixel, DepthMap, Intrinsics, Pose};
use crate::map::VoxelCloud;
use crate::stream::mask::InstanceMask;
use crate::stream::FrameRecord;
use assoc::{erode_all, filter_tracks, mutual_assign, sample_grid, support_matrix};
use reid::{reid_bbox, reid_chamfer, Aabb};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub track_conf_thresh: f64,
    /// Query grid spacing in pixels.
    pub grid_stride: u32,
    pub erosion_radius: u32,
    pub bbox_iou_thresh: f64,
    /// Median-cloud Chamfer threshold (meters).
    pub chamfer_thresh: f64,
    /// Padding added to every side of object boxes before IoU (meters).
    #[serde(default = "default_padding")]
    pub bbox_padding: f64,
    /// Voxel size of object clouds (meters).
    #[serde(default = "default_voxel")]
    pub object_voxel: f64,
    /// Pixel stride when unprojecting mask pixels.
    #[serde(default = "default_cloud_stride")]
    pub cloud_stride: u32,
}

fn default_padding() -> f64 {
    0.01
}
fn default_voxel() -> f64 {
    0.02
}
fn default_cloud_stride() -> u32 {
    1
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            track_conf_thresh: 0.1,
            grid_stride: 8,
            erosion_radius: 1,
            bbox_iou_thresh: 0.25,
            chamfer_thresh: 0.30,
            bbox_padding: default_padding(),
            object_voxel: default_voxel(),
            cloud_stride: default_cloud_stride(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.track_conf_thresh) {
            return Err("track_conf_thresh must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.bbox_iou_thresh) {
            return Err("bbox_iou_thresh must lie in [0, 1]".into());
        }
        if !(self.chamfer_thresh > 0.0) {
            return Err("chamfer_thresh must be positive".into());
        }
        if self.grid_stride == 0 || self.cloud_stride == 0 {
            return Err("strides must be positive".into());
        }
        if !(self.bbox_padding >= 0.0) || !(self.object_voxel >= 0.0) {
            return Err("bbox_padding and object_voxel must be nonnegative".into());
        }
        Ok(())
    }
}

/// A persistent 3D object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalObject {
    pub global_id: u32,
    pub class_label: String,
    /// World points, tagged with the contributing frame index.
    pub cloud: VoxelCloud,
    /// Bounds of every point ever observed (before voxel thinning).
    pub bounds: Aabb,
    /// At most one median point per frame.
    pub median_points: BTreeMap<u64, [f64; 3]>,
    pub first_seen: u64,
    pub last_seen: u64,
    pub first_block: u64,
    pub last_detected_block: u64,
    pub state: ObjectState,
}

impl GlobalObject {
    pub fn centroid(&self) -> Option<Vector3<f64>> {
        component_median(self.cloud.points())
    }

    pub fn median_cloud(&self) -> Vec<Vector3<f64>> {
        self.median_points.values().map(|p| Vector3::from(*p)).collect()
    }

    fn absorb(&mut self, sub: &SubTracklet, block: u64) {
        for (p, f) in &sub.points {
            self.cloud.insert(*p, *f);
        }
        self.bounds = self.bounds.union(&sub.bounds);
        for (f, m) in &sub.medians {
            self.median_points.entry(*f).or_insert([m.x, m.y, m.z]);
        }
        self.first_seen = self.first_seen.min(sub.first_frame);
        self.last_seen = self.last_seen.max(sub.last_frame);
        self.last_detected_block = block;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub objects: BTreeMap<u32, GlobalObject>,
    pub next_id: u32,
    /// Sub-tracklets started so far.
    pub tracklet_inits: u64,
    /// Detections that could not be tied to any tracklet.
    pub untracked_total: u64,
}

impl Default for Registry {
    fn default() -> Self {
        Registry { objects: BTreeMap::new(), next_id: 1, tracklet_inits: 0, untracked_total: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Record {
    Mask(usize),
    Empty,
}

/// Temporal chain of detections within one frame list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    /// Object id after block-end resolution; `None` until then or if the
    /// tracklet never produced geometry.
    pub global_id: Option<u32>,
    pub class_label: String,
    /// List position of the first record.
    pub start: usize,
    pub records: Vec<Record>,
}

/// A mask no tracklet claimed after the first frame of the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UntrackedDetection {
    pub frame_index: u64,
    pub class_label: String,
    pub mask_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeKind {
    Bbox,
    Chamfer,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockSemantics {
    pub tracklets: Vec<Tracklet>,
    pub untracked: Vec<UntrackedDetection>,
    /// Objects detected anywhere in the frame list.
    pub detected: BTreeSet<u32>,
    pub created: Vec<u32>,
    pub merged: Vec<(u32, MergeKind)>,
}

/// Geometry gathered by one tracklet during the block.
#[derive(Debug, Clone)]
struct SubTracklet {
    points: Vec<(Vector3<f64>, u64)>,
    medians: BTreeMap<u64, Vector3<f64>>,
    bounds: Aabb,
    first_frame: u64,
    last_frame: u64,
}

/// Query pixels on the first frame of a list and the eroded mask each one
/// belongs to. Background samples are not tracked.
pub fn block_queries(frame: &FrameRecord, cfg: &TrackerConfig) -> (Vec<(f64, f64)>, Vec<usize>) {
    let masks = erode_all(&frame.masks, cfg.erosion_radius);
    let k = &frame.intrinsics;
    sample_grid(&masks, k.width, k.height, cfg.grid_stride)
        .into_iter()
        .filter_map(|s| s.label.map(|l| ((s.u as f64, s.v as f64), l)))
        .unzip()
}

fn unproject_mask(mask: &InstanceMask, depth: &DepthMap, k: &Intrinsics, world_from_cam: &Pose, stride: u32) -> Vec<Vector3<f64>> {
    let stride = stride.max(1);
    mask.mask
        .pixels()
        .filter(|(u, v)| u % stride == 0 && v % stride == 0)
        .filter_map(|(u, v)| depth.get(u, v).map(|z| unproject_pixel(u, v, z, k, world_from_cam)))
        .collect()
}

/// Runs association over the frame list and resolves identities against
/// the registry. `input.output` must already carry metric depth.
pub fn integrate_block(registry: &mut Registry, input: &BlockInput, state: &BlockState, cfg: &TrackerConfig) -> BlockSemantics {
    let block = input.block_index;
    let frames = &input.frames;
    let (queries, labels) = block_queries(&frames[0], cfg);
    let tracks = &input.output.tracks;
    let filtered = if tracks.len() == queries.len() {
        filter_tracks(tracks, cfg.track_conf_thresh)
    } else {
        if !queries.is_empty() {
            log::warn!("block {block}: {} tracks for {} queries, tracking disabled", tracks.len(), queries.len());
        }
        Vec::new()
    };

    let mut tracklets: Vec<Tracklet> = Vec::new();
    let mut subs: Vec<Option<SubTracklet>> = Vec::new();
    let mut untracked = Vec::new();

    for (j, frame) in frames.iter().enumerate() {
        let masks = erode_all(&frame.masks, cfg.erosion_radius);
        let mask_classes: Vec<&str> = masks.iter().map(|m| m.class_label.as_str()).collect();
        let assignment = if j == 0 {
            None
        } else {
            let points: Vec<(usize, f64, f64)> = filtered
                .iter()
                .zip(&labels)
                .filter_map(|(track, &t)| track[j].map(|(u, v)| (t, u, v)))
                .collect();
            let support = support_matrix(&points, &masks, tracklets.len());
            let order: Vec<u64> = (0..tracklets.len() as u64).collect();
            let classes: Vec<&str> = tracklets.iter().map(|t| t.class_label.as_str()).collect();
            Some(mutual_assign(&support, &order, &classes, &mask_classes))
        };

        match &assignment {
            None => {
                for m in &masks {
                    tracklets.push(Tracklet { global_id: None, class_label: m.class_label.clone(), start: 0, records: vec![] });
                    subs.push(None);
                }
                registry.tracklet_inits += masks.len() as u64;
            }
            Some(a) => {
                for (m, t) in a.mask_to_tracklet.iter().enumerate() {
                    if t.is_none() {
                        untracked.push(UntrackedDetection {
                            frame_index: frame.frame_index,
                            class_label: masks[m].class_label.clone(),
                            mask_index: m,
                        });
                    }
                }
            }
        }

        let world_from_cam = state.aligned[j].inverse();
        let depth = &input.output.predicted_depths[j];
        for (t, tracklet) in tracklets.iter_mut().enumerate() {
            let m = match &assignment {
                None => Some(t),
                Some(a) => a.tracklet_to_mask[t],
            };
            let Some(m) = m else {
                tracklet.records.push(Record::Empty);
                continue;
            };
            tracklet.records.push(Record::Mask(m));
            let pts = unproject_mask(&masks[m], depth, &frame.intrinsics, &world_from_cam, cfg.cloud_stride);
            let Some(median) = component_median(&pts) else { continue };
            let f = frame.frame_index;
            let sub = subs[t].get_or_insert_with(|| SubTracklet {
                points: Vec::new(),
                medians: BTreeMap::new(),
                bounds: Aabb::from_points(&pts[..1]).unwrap(),
                first_frame: f,
                last_frame: f,
            });
            for p in &pts {
                sub.bounds.include(p);
            }
            sub.points.extend(pts.into_iter().map(|p| (p, f)));
            sub.medians.insert(f, median);
            sub.last_frame = f;
        }
    }
    registry.untracked_total += untracked.len() as u64;
    if !untracked.is_empty() {
        log::debug!("block {block}: {} untracked detections", untracked.len());
    }

    // Identity resolution.
    let live: Vec<usize> = (0..subs.len()).filter(|&t| subs[t].is_some()).collect();
    let existing: Vec<u32> = registry.objects.keys().copied().collect();
    let mut resolved: BTreeMap<usize, (u32, Option<MergeKind>)> = BTreeMap::new();
    let mut claimed: BTreeSet<u32> = BTreeSet::new();

    let new_boxes: Vec<(&str, Aabb)> = live
        .iter()
        .map(|&t| (tracklets[t].class_label.as_str(), subs[t].as_ref().unwrap().bounds.padded(cfg.bbox_padding)))
        .collect();
    let old_boxes: Vec<(&str, Aabb)> = existing
        .iter()
        .map(|id| {
            let o = &registry.objects[id];
            (o.class_label.as_str(), o.bounds.padded(cfg.bbox_padding))
        })
        .collect();
    for (i, j) in reid_bbox(&new_boxes, &old_boxes, cfg.bbox_iou_thresh) {
        resolved.insert(live[i], (existing[j], Some(MergeKind::Bbox)));
        claimed.insert(existing[j]);
    }

    let pending: Vec<usize> = live.iter().copied().filter(|t| !resolved.contains_key(t)).collect();
    let pending_medians: Vec<Vec<Vector3<f64>>> =
        pending.iter().map(|&t| subs[t].as_ref().unwrap().medians.values().copied().collect()).collect();
    let candidates: Vec<u32> = existing.iter().copied().filter(|id| !claimed.contains(id)).collect();
    let history: Vec<Vec<Vector3<f64>>> = candidates.iter().map(|id| registry.objects[id].median_cloud()).collect();
    let new_refs: Vec<(&str, &[Vector3<f64>])> =
        pending.iter().zip(&pending_medians).map(|(&t, m)| (tracklets[t].class_label.as_str(), &m[..])).collect();
    let hist_refs: Vec<(&str, &[Vector3<f64>])> = candidates
        .iter()
        .zip(&history)
        .map(|(id, h)| (registry.objects[id].class_label.as_str(), &h[..]))
        .collect();
    for (i, j) in reid_chamfer(&new_refs, &hist_refs, cfg.chamfer_thresh) {
        resolved.insert(pending[i], (candidates[j], Some(MergeKind::Chamfer)));
    }

    let mut out = BlockSemantics::default();
    for &t in &live {
        let sub = subs[t].as_ref().unwrap();
        let (id, kind) = match resolved.get(&t) {
            Some(r) => *r,
            None => {
                let id = registry.next_id;
                registry.next_id += 1;
                let obj = GlobalObject {
                    global_id: id,
                    class_label: tracklets[t].class_label.clone(),
                    cloud: VoxelCloud::new(cfg.object_voxel),
                    bounds: sub.bounds,
                    median_points: BTreeMap::new(),
                    first_seen: sub.first_frame,
                    last_seen: sub.last_frame,
                    first_block: block,
                    last_detected_block: block,
                    state: ObjectState { state: LifeState::Recent, confidence: 1.0 },
                };
                registry.objects.insert(id, obj);
                out.created.push(id);
                (id, None)
            }
        };
        registry.objects.get_mut(&id).unwrap().absorb(sub, block);
        if let Some(kind) = kind {
            out.merged.push((id, kind));
        }
        tracklets[t].global_id = Some(id);
        out.detected.insert(id);
    }
    let dropped = subs.len() - live.len();
    if dropped > 0 {
        log::debug!("block {block}: {dropped} tracklets without valid depth dropped");
    }
    out.tracklets = tracklets;
    out.untracked = untracked;
    out
}
