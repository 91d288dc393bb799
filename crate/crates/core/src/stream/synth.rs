//! Deterministic synthetic scenes used as a ground-truth oracle.
//!
//! A scene is a set of infinite planes and axis-aligned boxes observed by a
//! pinhole camera moving along interpolated waypoints. Boxes are the
//! "objects": they carry a class label, produce exact instance masks, and
//! can be inserted or removed at block boundaries. All randomness is drawn
//! from per-frame generators derived from the scene seed, so any frame can
//! be regenerated independently of the others.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::depth_io;
use super::mask::{BitMask, InstanceMask};
use super::provider::{check_queries, GeometryProvider, ProviderError, ProviderOutput, Track, TrackPoint};
use super::{FrameRecord, ManifestWriter, StreamError};
use crate::geom::{project_point, DepthMap, Intrinsics, Pose};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: u64,
    pub position: [f64; 3],
    pub look_at: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub name: String,
    pub class: String,
    pub center: [f64; 3],
    pub size: [f64; 3],
    /// First block in which the box exists.
    #[serde(default)]
    pub insert_block: u64,
    /// First block in which the box no longer exists.
    #[serde(default)]
    pub remove_block: Option<u64>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.9
}

impl BoxSpec {
    pub fn present_in_block(&self, block: u64) -> bool {
        block >= self.insert_block && self.remove_block.is_none_or(|r| block < r)
    }

    fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let c = Vector3::from(self.center);
        let h = Vector3::from(self.size) * 0.5;
        (c - h, c + h)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Std. dev. of sensor depth noise (m).
    #[serde(default)]
    pub sensor: f64,
    /// Std. dev. of predicted depth noise (m, before prediction scaling).
    #[serde(default)]
    pub pred: f64,
    /// Std. dev. of predicted rotation noise per axis (rad).
    #[serde(default)]
    pub pose_rotation: f64,
    /// Std. dev. of predicted translation noise per axis (m).
    #[serde(default)]
    pub pose_translation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub frames: u64,
    /// Block length used to place insert/remove events.
    pub block_size: u64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub intrinsics: Intrinsics,
    pub camera: Vec<Waypoint>,
    #[serde(default)]
    pub planes: Vec<PlaneSpec>,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Predictions are `pred_scale` times metric depth and translation.
    #[serde(default = "default_scale")]
    pub pred_scale: f64,
    #[serde(default = "default_true")]
    pub sensor_depth: bool,
    /// Per-frame detector scores written to the manifest.
    #[serde(default)]
    pub feature_scores: Option<Vec<f64>>,
    /// Track confidence reported for points hidden behind other surfaces.
    #[serde(default)]
    pub occluded_track_confidence: f64,
}

fn default_fps() -> f64 {
    10.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |s: String| Err(SynthError::InvalidSpec(s));
        if self.frames == 0 || self.block_size == 0 {
            return bad("frames and block_size must be positive".into());
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        self.intrinsics.validate().map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        if self.camera.is_empty() {
            return bad("camera path needs at least one waypoint".into());
        }
        if self.camera.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return bad("waypoint frames must be strictly increasing".into());
        }
        for w in &self.camera {
            if (Vector3::from(w.look_at) - Vector3::from(w.position)).norm() < 1e-9 {
                return bad(format!("waypoint at frame {} looks at itself", w.frame));
            }
        }
        for p in &self.planes {
            if Vector3::from(p.normal).norm() < 1e-12 {
                return bad("plane normal is zero".into());
            }
        }
        for b in &self.boxes {
            if b.size.iter().any(|s| !(*s > 0.0)) {
                return bad(format!("box {} has non-positive size", b.name));
            }
            if b.remove_block.is_some_and(|r| r <= b.insert_block) {
                return bad(format!("box {} is removed before it is inserted", b.name));
            }
            if !(0.0..=1.0).contains(&b.confidence) {
                return bad(format!("box {} confidence outside [0, 1]", b.name));
            }
        }
        let n = &self.noise;
        if [n.sensor, n.pred, n.pose_rotation, n.pose_translation].iter().any(|s| !(*s >= 0.0)) {
            return bad("noise levels must be nonnegative".into());
        }
        if !(self.pred_scale > 0.0) {
            return bad("pred_scale must be positive".into());
        }
        if let Some(s) = &self.feature_scores {
            if s.len() as u64 != self.frames || s.iter().any(|x| !(*x >= 0.0)) {
                return bad("feature_scores must hold one nonnegative score per frame".into());
            }
        }
        if !(0.0..=1.0).contains(&self.occluded_track_confidence) {
            return bad("occluded_track_confidence outside [0, 1]".into());
        }
        Ok(())
    }
}

/// What a pixel ray hits first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hit {
    Nothing,
    Plane(usize),
    Box(usize),
}

pub struct Render {
    pub depth: Vec<f64>,
    pub hits: Vec<Hit>,
}

/// Stream-tag salts for the per-frame generators.
const SALT_SENSOR: u64 = 0x5e45;
const SALT_PRED: u64 = 0x93ed;
const SALT_POSE: u64 = 0x905e;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub seed: u64,
    pub spec: SceneSpec,
}

impl SyntheticScene {
    pub fn new(spec: SceneSpec, seed: u64) -> Result<Self, SynthError> {
        spec.validate()?;
        Ok(SyntheticScene { seed, spec })
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|source| SynthError::Io { path: path.to_path_buf(), source })?;
        let scene: SyntheticScene =
            serde_json::from_str(&text).map_err(|e| SynthError::InvalidSpec(format!("{}: {e}", path.display())))?;
        scene.spec.validate()?;
        Ok(scene)
    }

    fn rng(&self, frame: u64, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix(self.seed ^ splitmix(frame.wrapping_mul(0x1000_0001) ^ salt)))
    }

    pub fn block_of(&self, frame: u64) -> u64 {
        frame / self.spec.block_size
    }

    pub fn timestamp(&self, frame: u64) -> f64 {
        frame as f64 / self.spec.fps
    }

    /// Ground-truth camera-from-world pose.
    pub fn true_pose(&self, frame: u64) -> Pose {
        let cam = &self.spec.camera;
        let (pos, target) = match cam.iter().position(|w| w.frame >= frame) {
            None => {
                let w = cam.last().unwrap();
                (Vector3::from(w.position), Vector3::from(w.look_at))
            }
            Some(0) => (Vector3::from(cam[0].position), Vector3::from(cam[0].look_at)),
            Some(i) => {
                let (a, b) = (&cam[i - 1], &cam[i]);
                let s = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
                let lerp = |x: [f64; 3], y: [f64; 3]| Vector3::from(x) * (1.0 - s) + Vector3::from(y) * s;
                (lerp(a.position, b.position), lerp(a.look_at, b.look_at))
            }
        };
        Pose::look_at(pos, target)
    }

    /// Pose as a prediction would report it: in a frame scaled by
    /// `pred_scale`, with optional noise.
    pub fn predicted_pose(&self, frame: u64) -> Pose {
        let truth = self.true_pose(frame);
        let n = &self.spec.noise;
        let mut rotation = *truth.rotation();
        let mut translation = truth.translation() * self.spec.pred_scale;
        if n.pose_rotation > 0.0 || n.pose_translation > 0.0 {
            let mut rng = self.rng(frame, SALT_POSE);
            let rot_noise = Normal::new(0.0, n.pose_rotation).unwrap();
            let tr_noise = Normal::new(0.0, n.pose_translation).unwrap();
            let w = Vector3::from_fn(|_, _| rot_noise.sample(&mut rng));
            rotation = Rotation3::new(w).into_inner() * rotation;
            translation += Vector3::from_fn(|_, _| tr_noise.sample(&mut rng));
        }
        Pose::new_projected(rotation, translation)
    }

    fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, block: u64) -> (f64, Hit) {
        let mut best = (f64::INFINITY, Hit::Nothing);
        for (i, p) in self.spec.planes.iter().enumerate() {
            let n = Vector3::from(p.normal);
            let denom = dir.dot(&n);
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = (Vector3::from(p.point) - origin).dot(&n) / denom;
            if t > 1e-9 && t < best.0 {
                best = (t, Hit::Plane(i));
            }
        }
        for (i, b) in self.spec.boxes.iter().enumerate() {
            if !b.present_in_block(block) {
                continue;
            }
            let (lo, hi) = b.bounds();
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            let mut miss = false;
            for a in 0..3 {
                if dir[a].abs() < 1e-15 {
                    if origin[a] < lo[a] || origin[a] > hi[a] {
                        miss = true;
                        break;
                    }
                    continue;
                }
                let t1 = (lo[a] - origin[a]) / dir[a];
                let t2 = (hi[a] - origin[a]) / dir[a];
                t_near = t_near.max(t1.min(t2));
                t_far = t_far.min(t1.max(t2));
            }
            if miss || t_near > t_far {
                continue;
            }
            let t = if t_near > 1e-9 { t_near } else { t_far };
            if t > 1e-9 && t < best.0 {
                best = (t, Hit::Box(i));
            }
        }
        best
    }

    /// Casts the ray through pixel `(u, v)`. The ray is parameterized so the
    /// returned distance equals camera-frame depth.
    fn cast(&self, frame: u64, pose: &Pose, u: f64, v: f64) -> (f64, Hit) {
        let k = &self.spec.intrinsics;
        let origin = pose.center();
        let dir = pose.rotation().transpose() * k.ray(u, v);
        self.ray_hit(&origin, &dir, self.block_of(frame))
    }

    /// Exact depth and first-hit labels for every pixel.
    pub fn render(&self, frame: u64) -> Render {
        let k = self.spec.intrinsics;
        let pose = self.true_pose(frame);
        let mut depth = Vec::with_capacity(k.pixel_count());
        let mut hits = Vec::with_capacity(k.pixel_count());
        for v in 0..k.height {
            for u in 0..k.width {
                let (t, hit) = self.cast(frame, &pose, u as f64, v as f64);
                depth.push(if hit == Hit::Nothing { f64::NAN } else { t });
                hits.push(hit);
            }
        }
        Render { depth, hits }
    }

    fn noisy_depth(&self, exact: &[f64], scale: f64, sigma: f64, rng: &mut ChaCha8Rng) -> DepthMap {
        let k = &self.spec.intrinsics;
        let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).unwrap());
        let values = exact
            .iter()
            .map(|&d| {
                if !d.is_finite() {
                    return f64::NAN;
                }
                let mut x = scale * d;
                if let Some(n) = &normal {
                    x += n.sample(rng);
                }
                if x > 0.0 { x } else { f64::NAN }
            })
            .collect();
        depth_io::quantize(&DepthMap::new(k.width, k.height, values).expect("rendered depth is valid"))
    }

    pub fn sensor_depth(&self, frame: u64, render: &Render) -> DepthMap {
        self.noisy_depth(&render.depth, 1.0, self.spec.noise.sensor, &mut self.rng(frame, SALT_SENSOR))
    }

    pub fn predicted_depth(&self, frame: u64, render: &Render) -> DepthMap {
        let sigma = self.spec.noise.pred * self.spec.pred_scale;
        self.noisy_depth(&render.depth, self.spec.pred_scale, sigma, &mut self.rng(frame, SALT_PRED))
    }

    /// Exact silhouettes of the visible boxes.
    pub fn masks(&self, render: &Render) -> Vec<InstanceMask> {
        let k = &self.spec.intrinsics;
        let mut out = Vec::new();
        for (i, b) in self.spec.boxes.iter().enumerate() {
            let bits: Vec<bool> = render.hits.iter().map(|h| *h == Hit::Box(i)).collect();
            if bits.iter().any(|b| *b) {
                let mask = BitMask::new(k.width, k.height, bits);
                out.push(InstanceMask::new(b.class.clone(), mask, b.confidence).expect("non-empty mask"));
            }
        }
        out
    }

    pub fn frame_record(&self, frame: u64) -> FrameRecord {
        let render = self.render(frame);
        self.frame_record_from(frame, &render)
    }

    fn frame_record_from(&self, frame: u64, render: &Render) -> FrameRecord {
        let mut rec = FrameRecord::new(frame, self.timestamp(frame), self.spec.intrinsics);
        if self.spec.sensor_depth {
            rec.sensor_depth = Some(self.sensor_depth(frame, render));
        }
        rec.feature_score = self.spec.feature_scores.as_ref().map(|s| s[frame as usize]);
        rec.masks = self.masks(render);
        rec
    }

    /// Lazy in-memory stream over every frame of the scene.
    pub fn stream(&self) -> SyntheticStream<'_> {
        SyntheticStream { scene: self, next: 0 }
    }

    /// Analytic track of the surface point seen through `(u, v)` in the
    /// first frame of `frames`.
    fn track(&self, frames: &[u64], poses: &[Pose], u: f64, v: f64) -> Track {
        let k = &self.spec.intrinsics;
        let (t0, hit) = self.cast(frames[0], &poses[0], u, v);
        let lost = TrackPoint { u, v, confidence: 0.0 };
        if hit == Hit::Nothing {
            return Track { points: vec![lost; frames.len()] };
        }
        let world = poses[0].inverse().transform_point(&(k.ray(u, v) * t0));
        let points = frames
            .iter()
            .zip(poses)
            .map(|(&f, pose)| {
                let p = project_point(&world, k, pose);
                if !p.in_bounds {
                    return TrackPoint { u: p.u, v: p.v, confidence: 0.0 };
                }
                if let Hit::Box(b) = hit {
                    if !self.spec.boxes[b].present_in_block(self.block_of(f)) {
                        return TrackPoint { u: p.u, v: p.v, confidence: 0.0 };
                    }
                }
                let (t, _) = self.cast(f, pose, p.u, p.v);
                let visible = t >= p.depth - 1e-6 * p.depth.max(1.0);
                let confidence = if visible { 1.0 } else { self.spec.occluded_track_confidence };
                TrackPoint { u: p.u, v: p.v, confidence }
            })
            .collect();
        Track { points }
    }

    /// Writes manifest, depth rasters, the scene description and the
    /// ground-truth sidecars into `dir`.
    pub fn generate(&self, dir: &Path) -> Result<(), SynthError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SynthError::Io { path, source }
        };
        let mut writer = ManifestWriter::create(dir)?;
        for f in 0..self.spec.frames {
            let render = self.render(f);
            let rec = self.frame_record_from(f, &render);
            let pred = self.predicted_depth(f, &render);
            writer.write_frame(&rec, Some((&pred, &self.predicted_pose(f))))?;
        }
        writer.finish()?;

        let scene_path = dir.join("scene.json");
        fs::write(&scene_path, serde_json::to_vec_pretty(self).expect("scene serializes")).map_err(io_err(&scene_path))?;

        let gt_path = dir.join("groundtruth.txt");
        let tum_path = dir.join("groundtruth_tum.txt");
        let mut gt = String::new();
        let mut tum = String::new();
        for f in 0..self.spec.frames {
            let (c, q) = self.true_pose(f).to_tum();
            let tail = format!("{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}", c.x, c.y, c.z, q.i, q.j, q.k, q.w);
            gt.push_str(&format!("{f} {tail}\n"));
            tum.push_str(&format!("{:.6} {tail}\n", self.timestamp(f)));
        }
        fs::write(&gt_path, gt).map_err(io_err(&gt_path))?;
        fs::write(&tum_path, tum).map_err(io_err(&tum_path))?;

        let inv_path = dir.join("inventory.json");
        let mut f = fs::File::create(&inv_path).map_err(io_err(&inv_path))?;
        let inv = serde_json::to_vec_pretty(&self.inventory()).expect("inventory serializes");
        f.write_all(&inv).map_err(io_err(&inv_path))?;
        Ok(())
    }

    pub fn inventory(&self) -> Inventory {
        let mut events = Vec::new();
        for b in &self.spec.boxes {
            if b.insert_block > 0 {
                events.push(InventoryEvent {
                    block: b.insert_block,
                    frame: b.insert_block * self.spec.block_size,
                    object: b.name.clone(),
                    event: "insert".into(),
                });
            }
            if let Some(r) = b.remove_block {
                events.push(InventoryEvent {
                    block: r,
                    frame: r * self.spec.block_size,
                    object: b.name.clone(),
                    event: "remove".into(),
                });
            }
        }
        events.sort_by(|a, b| (a.block, &a.object).cmp(&(b.block, &b.object)));
        Inventory { objects: self.spec.boxes.clone(), events }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inventory {
    pub objects: Vec<BoxSpec>,
    pub events: Vec<InventoryEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryEvent {
    pub block: u64,
    pub frame: u64,
    pub object: String,
    pub event: String,
}

pub struct SyntheticStream<'a> {
    scene: &'a SyntheticScene,
    next: u64,
}

impl SyntheticStream<'_> {
    /// Skips every frame whose index is `<= last`.
    pub fn skip_through(&mut self, last: u64) {
        self.next = self.next.max(last + 1);
    }
}

impl Iterator for SyntheticStream<'_> {
    type Item = Result<FrameRecord, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.scene.spec.frames {
            return None;
        }
        let f = self.next;
        self.next += 1;
        Some(Ok(self.scene.frame_record(f)))
    }
}

/// Provider that computes predictions analytically from the scene.
///
/// Depth and poses match what [`SyntheticScene::generate`] stores on disk;
/// tracks are exact projections of the first-frame surface points.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    scene: SyntheticScene,
}

impl SyntheticProvider {
    pub fn new(scene: SyntheticScene) -> Self {
        SyntheticProvider { scene }
    }
}

impl GeometryProvider for SyntheticProvider {
    fn infer(&mut self, frames: &[FrameRecord], queries: &[(f64, f64)]) -> Result<ProviderOutput, ProviderError> {
        check_queries(frames, queries)?;
        let scene = &self.scene;
        let indices: Vec<u64> = frames.iter().map(|f| f.frame_index).collect();
        let predicted_depths = indices.iter().map(|&f| scene.predicted_depth(f, &scene.render(f))).collect();
        let predicted: Vec<Pose> = indices.iter().map(|&f| scene.predicted_pose(f)).collect();
        let reference_inv = predicted[0].inverse();
        let extrinsics = predicted.iter().map(|p| p.compose(&reference_inv)).collect();
        let true_poses: Vec<Pose> = indices.iter().map(|&f| scene.true_pose(f)).collect();
        let tracks = queries.iter().map(|&(u, v)| scene.track(&indices, &true_poses, u, v)).collect();
        let out = ProviderOutput { predicted_depths, extrinsics, tracks };
        out.validate(frames)?;
        Ok(out)
    }
}

/// Small ready-made scene: a floor, a back wall and the given boxes,
/// observed by a camera sliding along x while looking down +z.
pub fn corridor_scene(frames: u64, block_size: u64, boxes: Vec<BoxSpec>) -> SceneSpec {
    SceneSpec {
        frames,
        block_size,
        fps: 10.0,
        intrinsics: Intrinsics::new(80.0, 80.0, 47.5, 35.5, 96, 72).unwrap(),
        camera: vec![
            Waypoint { frame: 0, position: [0.0, 0.0, 0.0], look_at: [0.0, 0.3, 4.0] },
            Waypoint { frame: frames.max(2) - 1, position: [0.05 * frames as f64, 0.0, 0.0], look_at: [0.05 * frames as f64, 0.3, 4.0] },
        ],
        planes: vec![
            PlaneSpec { point: [0.0, 1.2, 0.0], normal: [0.0, -1.0, 0.0] },
            PlaneSpec { point: [0.0, 0.0, 5.0], normal: [0.0, 0.0, -1.0] },
        ],
        boxes,
        noise: NoiseSpec::default(),
        pred_scale: 1.0,
        sensor_depth: true,
        feature_scores: None,
        occluded_track_confidence: 0.0,
    }
}
