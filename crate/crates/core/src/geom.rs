//! Pinhole camera model and rigid transforms.
//!
//! Poses are camera-from-world: a world point `X` lands in camera coordinates
//! as `R * X + t`, and the camera center in the world is `-Rᵀ t`.

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Orthonormality drift above which a composed rotation is projected back
/// onto SO(3).
pub const ORTHO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal (drift {0:e})")]
    NotARotation(f64),
    #[error("depth map holds {got} values, expected {expected}")]
    DepthSize { expected: usize, got: usize },
    #[error("depth value {value} at index {index} is not positive")]
    NonPositiveDepth { index: usize, value: f64 },
    #[error("non-finite coordinate in pose")]
    NonFinitePose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeomError> {
        let k = Intrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeomError::InvalidIntrinsics("empty image".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Camera-frame point at normalized depth 1 for pixel coordinates `(u, v)`.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// A 3×4 extrinsic `[R | t]`, camera-from-world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 12]", into = "[f64; 12]")]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Builds a pose, rejecting matrices that are not proper rotations.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeomError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinitePose);
        }
        let drift = rotation_drift(&rotation);
        if drift > ORTHO_TOLERANCE || (rotation.determinant() - 1.0).abs() > ORTHO_TOLERANCE {
            return Err(GeomError::NotARotation(drift));
        }
        Ok(Pose { rotation, translation })
    }

    /// Builds a pose from a matrix that is only approximately a rotation,
    /// projecting it onto the nearest rotation.
    pub fn new_projected(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose { rotation: nearest_rotation(&rotation), translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose { rotation: Matrix3::identity(), translation }
    }

    /// Camera pose at `center` whose optical axis points at `target`, with
    /// image-down aligned to the world +y axis as far as possible.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>) -> Self {
        let z = (target - center).normalize();
        let down = Vector3::new(0.0, 1.0, 0.0);
        let mut x = down.cross(&z);
        if x.norm() < 1e-9 {
            x = Vector3::new(1.0, 0.0, 0.0).cross(&z);
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Pose { rotation, translation: -(rotation * center) }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn with_translation(&self, translation: Vector3<f64>) -> Self {
        Pose { rotation: self.rotation, translation }
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Pose with the same rotation whose camera center is `center`.
    pub fn with_center(&self, center: Vector3<f64>) -> Self {
        Pose { rotation: self.rotation, translation: -(self.rotation * center) }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Extracts the top 3×4 block of a homogeneous matrix.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self, GeomError> {
        Pose::new(m.fixed_view::<3, 3>(0, 0).into_owned(), m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    /// Homogeneous product `self · other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        if rotation_drift(&rotation) > ORTHO_TOLERANCE {
            rotation = nearest_rotation(&rotation);
        }
        Pose { rotation, translation: self.rotation * other.translation + self.translation }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Row-major `R` followed by `t`.
    pub fn to_array(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
            t[0], t[1], t[2],
        ]
    }

    /// Inverse of [`Pose::to_array`]. Rotations with small drift (as left by
    /// decimal round trips) are projected back onto SO(3).
    pub fn from_array(a: [f64; 12]) -> Result<Self, GeomError> {
        let rotation = Matrix3::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]);
        let translation = Vector3::new(a[9], a[10], a[11]);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinitePose);
        }
        let drift = rotation_drift(&rotation);
        if drift > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(GeomError::NotARotation(drift));
        }
        if drift > ORTHO_TOLERANCE {
            return Ok(Pose::new_projected(rotation, translation));
        }
        Ok(Pose { rotation, translation })
    }

    /// World-from-camera translation and rotation quaternion, as used by
    /// TUM-style trajectory files.
    pub fn to_tum(&self) -> (Vector3<f64>, UnitQuaternion<f64>) {
        let rot = Rotation3::from_matrix_unchecked(self.rotation.transpose());
        (self.center(), UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn from_tum(center: Vector3<f64>, q: UnitQuaternion<f64>) -> Pose {
        let rotation = q.to_rotation_matrix().into_inner().transpose();
        let rotation = nearest_rotation(&rotation);
        Pose { rotation, translation: -(rotation * center) }
    }

    /// Max-abs difference of the 3×4 matrices.
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Pose> for [f64; 12] {
    fn from(p: Pose) -> Self {
        p.to_array()
    }
}

impl TryFrom<[f64; 12]> for Pose {
    type Error = GeomError;
    fn try_from(a: [f64; 12]) -> Result<Self, Self::Error> {
        Pose::from_array(a)
    }
}

/// `‖RᵀR − I‖∞`.
pub fn rotation_drift(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Closest rotation in the Frobenius sense (polar decomposition).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Dense per-pixel depth in meters, row-major. Non-finite values mark
/// invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, GeomError> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(GeomError::DepthSize { expected, got: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| v.is_finite() && **v <= 0.0) {
            return Err(GeomError::NonPositiveDepth { index, value });
        }
        Ok(DepthMap { width, height, values })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        DepthMap { width, height, values: vec![value; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Depth at `(u, v)` if valid.
    #[inline]
    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        let d = self.values[v as usize * self.width as usize + u as usize];
        d.is_finite().then_some(d)
    }

    pub fn matches(&self, k: &Intrinsics) -> bool {
        self.width == k.width && self.height == k.height
    }

    /// Multiplies every valid value by `s` (`s > 0`).
    pub fn scaled(&self, s: f64) -> DepthMap {
        DepthMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|d| d * s).collect(),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }
}

impl Serialize for DepthMap {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use base64::Engine;
        use serde::ser::SerializeStruct;
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut s = serializer.serialize_struct("DepthMap", 3)?;
        s.serialize_field("width", &self.width)?;
        s.serialize_field("height", &self.height)?;
        s.serialize_field("f64le", &base64::engine::general_purpose::STANDARD.encode(bytes))?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for DepthMap {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use base64::Engine;
        #[derive(Deserialize)]
        struct Raw {
            width: u32,
            height: u32,
            f64le: String,
        }
        let raw = Raw::deserialize(deserializer)?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(raw.f64le)
            .map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom("depth payload is not a whole number of f64"));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        DepthMap::new(raw.width, raw.height, values).map_err(serde::de::Error::custom)
    }
}

/// World-frame points with optional per-point attributes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<[u8; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_ids: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_indices: Option<Vec<u64>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        PointCloud { points, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Camera-frame depth.
    pub depth: f64,
    pub in_bounds: bool,
}

impl Projection {
    /// Integer pixel nearest to `(u, v)`, clamped into the image.
    pub fn pixel(&self, k: &Intrinsics) -> (u32, u32) {
        let u = (self.u.round().max(0.0) as u32).min(k.width - 1);
        let v = (self.v.round().max(0.0) as u32).min(k.height - 1);
        (u, v)
    }
}

/// Back-projects every valid pixel on the `stride` grid into world points.
pub fn unproject(depth: &DepthMap, k: &Intrinsics, pose: &Pose, stride: u32) -> PointCloud {
    let stride = stride.max(1) as usize;
    let world_from_cam = pose.inverse();
    let mut points = Vec::new();
    for v in (0..depth.height).step_by(stride) {
        for u in (0..depth.width).step_by(stride) {
            if let Some(z) = depth.get(u, v) {
                points.push(world_from_cam.transform_point(&(k.ray(u as f64, v as f64) * z)));
            }
        }
    }
    PointCloud::from_points(points)
}

/// Back-projects a single pixel.
#[inline]
pub fn unproject_pixel(u: u32, v: u32, z: f64, k: &Intrinsics, world_from_cam: &Pose) -> Vector3<f64> {
    world_from_cam.transform_point(&(k.ray(u as f64, v as f64) * z))
}

#[inline]
pub fn project_point(p: &Vector3<f64>, k: &Intrinsics, pose: &Pose) -> Projection {
    let c = pose.transform_point(p);
    let u = k.fx * c.x / c.z + k.cx;
    let v = k.fy * c.y / c.z + k.cy;
    // pixel centers sit at integer coordinates
    let in_bounds = c.z > 0.0 && u >= -0.5 && u < k.width as f64 - 0.5 && v >= -0.5 && v < k.height as f64 - 0.5;
    Projection { u, v, depth: c.z, in_bounds }
}

pub fn project(cloud: &[Vector3<f64>], k: &Intrinsics, pose: &Pose) -> Vec<Projection> {
    cloud.iter().map(|p| project_point(p, k, pose)).collect()
}

/// Component-wise median; the mean of the two central values for even counts.
pub fn component_median(points: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    if points.is_empty() {
        return None;
    }
    let mut out = Vector3::zeros();
    let mut buf: Vec<f64> = Vec::with_capacity(points.len());
    for axis in 0..3 {
        buf.clear();
        buf.extend(points.iter().map(|p| p[axis]));
        out[axis] = median_in_place(&mut buf)?;
    }
    Some(out)
}

/// Median of finite values; `None` when there are none.
pub fn median_in_place(values: &mut Vec<f64>) -> Option<f64> {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}
