//! Block partitioning, keyframe selection, metric scale recovery and
//! alignment of each block into the global frame.
//!
//! Each block is inferred together with the previous block's keyframes. The
//! provider expresses every pose relative to the first frame of that list,
//! which is a keyframe already placed in the global frame; right-multiplying
//! by `Δ = (E_ref_current)⁻¹ E_ref` moves the whole list onto it without
//! touching the relative poses inside the list.

use serde::{Deserialize, Serialize};

use crate::geom::{median_in_place, DepthMap, Pose};
use crate::map::AlignState;
use crate::smooth::{smooth_block_poses, SmootherConfig};
use crate::stream::provider::{ProviderError, ProviderOutput};
use crate::stream::FrameRecord;

#[derive(Debug, thiserror::Error)]
pub enum AlignError {
    #[error("invalid alignment config: {0}")]
    InvalidConfig(String),
    #[error("no frame produced a usable scale")]
    NoValidScale,
    #[error("block scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("block {block}: {source}")]
    Provider { block: u64, source: ProviderError },
    #[error("block {block}: alignment invariant violated: {reason}")]
    Invariant { block: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    /// Frames per block (`n`).
    pub block_size: usize,
    /// Keyframes carried into the next block (`k`).
    pub keyframe_count: usize,
    /// Sensor depth range used for scale estimation (meters, exclusive).
    pub near_thresh: f64,
    pub far_thresh: f64,
    /// Pixel stride when unprojecting depth into the map.
    pub grid_stride: u32,
    /// Anchor the next block on the smoothed (rather than raw) keyframe pose.
    #[serde(default = "default_true")]
    pub anchor_on_smoothed: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            block_size: 10,
            keyframe_count: 3,
            near_thresh: 0.3,
            far_thresh: 6.0,
            grid_stride: 4,
            anchor_on_smoothed: true,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        let bad = |s: &str| Err(AlignError::InvalidConfig(s.into()));
        if self.block_size < 2 {
            return bad("block_size must be at least 2");
        }
        if self.keyframe_count == 0 || self.keyframe_count >= self.block_size {
            return bad("keyframe_count must satisfy 0 < k < block_size");
        }
        if !(self.near_thresh > 0.0 && self.near_thresh < self.far_thresh) {
            return bad("need 0 < near_thresh < far_thresh");
        }
        if self.grid_stride == 0 {
            return bad("grid_stride must be positive");
        }
        Ok(())
    }
}

/// Groups a fallible stream into blocks of `n`. A trailing single frame is
/// merged into the block before it; any other short tail is its own block.
pub struct Blocks<I, T, E> {
    inner: I,
    n: usize,
    carry: Vec<T>,
    pending: Option<E>,
    done: bool,
}

pub fn partition<I, T, E>(inner: I, n: usize) -> Blocks<I, T, E>
where
    I: Iterator<Item = Result<T, E>>,
{
    assert!(n >= 2, "block size must be at least 2");
    Blocks { inner, n, carry: Vec::new(), pending: None, done: false }
}

impl<I, T, E> Iterator for Blocks<I, T, E>
where
    I: Iterator<Item = Result<T, E>>,
{
    type Item = Result<Vec<T>, E>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(e) = self.pending.take() {
            self.done = true;
            return Some(Err(e));
        }
        if self.done {
            return None;
        }
        let mut block = std::mem::take(&mut self.carry);
        while block.len() < self.n {
            match self.inner.next() {
                Some(Ok(x)) => block.push(x),
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                None => {
                    self.done = true;
                    return (!block.is_empty()).then_some(Ok(block));
                }
            }
        }
        // Two frames of lookahead decide whether a lone frame follows.
        match self.inner.next() {
            None => self.done = true,
            Some(Err(e)) => self.pending = Some(e),
            Some(Ok(a)) => match self.inner.next() {
                None => {
                    block.push(a);
                    self.done = true;
                }
                Some(Ok(b)) => self.carry = vec![a, b],
                Some(Err(e)) => {
                    self.carry = vec![a];
                    self.pending = Some(e);
                }
            },
        }
        Some(Ok(block))
    }
}

/// Block lengths produced by [`partition`] for a stream of `total` frames.
pub fn partition_sizes(total: usize, n: usize) -> Vec<usize> {
    partition((0..total).map(Ok::<_, ()>), n).map(|b| b.unwrap().len()).collect()
}

/// Indices of the `k` highest scores in ascending order; ties go to the
/// earlier frame. Non-finite scores rank lowest.
pub fn select_keyframes(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let key = |i: usize| if scores[i].is_finite() { scores[i] } else { f64::NEG_INFINITY };
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Least-squares scale mapping predicted depth onto sensor depth over pixels
/// whose sensor depth lies strictly between the thresholds.
pub fn estimate_scale(pred: &DepthMap, sensor: &DepthMap, near: f64, far: f64) -> Option<f64> {
    assert_eq!(
        (pred.width(), pred.height()),
        (sensor.width(), sensor.height()),
        "depth maps differ in size"
    );
    let (mut num, mut den) = (0.0, 0.0);
    for (&p, &s) in pred.values().iter().zip(sensor.values()) {
        if p.is_finite() && s.is_finite() && s > near && s < far {
            num += p * s;
            den += p * p;
        }
    }
    (den > 0.0).then(|| num / den)
}

pub fn block_scale(scales: &[Option<f64>]) -> Result<f64, AlignError> {
    let mut finite: Vec<f64> = scales.iter().flatten().copied().collect();
    median_in_place(&mut finite).ok_or(AlignError::NoValidScale)
}

/// Multiplies predicted depths and extrinsic translations by `s`.
pub fn rescale(output: &mut ProviderOutput, s: f64) -> Result<(), AlignError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(AlignError::NonPositiveScale(s));
    }
    if s == 1.0 {
        return Ok(());
    }
    for d in &mut output.predicted_depths {
        *d = d.scaled(s);
    }
    for e in &mut output.extrinsics {
        *e = e.with_translation(e.translation() * s);
    }
    Ok(())
}

/// `Δ` with `E_ref_current · Δ = E_ref`.
pub fn compute_delta(e_ref_current: &Pose, e_ref: &Pose) -> Pose {
    e_ref_current.inverse().compose(e_ref)
}

/// Everything the map-update stage needs for one block.
#[derive(Debug, Clone)]
pub struct BlockInput {
    pub block_index: u64,
    /// Previous keyframes followed by the block's own frames.
    pub frames: Vec<FrameRecord>,
    /// Number of leading anchor keyframes in `frames`.
    pub anchor_count: usize,
    pub output: ProviderOutput,
    /// Query pixels on `frames[0]`, one per track.
    pub queries: Vec<(f64, f64)>,
    /// Keyframes of this block as offsets into its own frames.
    pub keyframes: Vec<usize>,
}

impl BlockInput {
    pub fn own_frames(&self) -> &[FrameRecord] {
        &self.frames[self.anchor_count..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub block_index: u64,
    pub frame_indices: Vec<u64>,
    pub anchor_count: usize,
    pub scales: Vec<Option<f64>>,
    pub block_scale: f64,
    /// Set when the block reused the previous block's scale.
    pub scale_fallback: bool,
    pub delta: Pose,
    /// Aligned raw extrinsics for the whole list.
    pub aligned: Vec<Pose>,
    /// Smoothed extrinsics for the block's own frames.
    pub smoothed: Vec<Pose>,
    /// Keyframes of this block as frame indices.
    pub keyframes: Vec<u64>,
}

impl BlockState {
    pub fn own_aligned(&self) -> &[Pose] {
        &self.aligned[self.anchor_count..]
    }
}

const INVARIANT_TOL: f64 = 1e-6;

/// Scales and aligns one block, updating the rolling reference.
///
/// `input.output` is rescaled in place so later stages see metric depth.
pub fn align_block(
    state: &mut AlignState,
    input: &mut BlockInput,
    cfg: &AlignConfig,
    smoother: &SmootherConfig,
) -> Result<BlockState, AlignError> {
    let block = input.block_index;
    let has_sensor = input.frames.iter().any(|f| f.sensor_depth.is_some());
    let scales: Vec<Option<f64>> = input
        .frames
        .iter()
        .zip(&input.output.predicted_depths)
        .map(|(f, pred)| f.sensor_depth.as_ref().and_then(|s| estimate_scale(pred, s, cfg.near_thresh, cfg.far_thresh)))
        .collect();
    let mut scale_fallback = false;
    let s = if !has_sensor {
        1.0
    } else {
        match block_scale(&scales) {
            Ok(s) => s,
            Err(AlignError::NoValidScale) => {
                scale_fallback = true;
                let s = state.last_scale.unwrap_or(1.0);
                log::warn!("block {block}: no usable depth scale, reusing {s}");
                s
            }
            Err(e) => return Err(e),
        }
    };
    rescale(&mut input.output, s)?;

    let e_ref_current = input.output.extrinsics[0];
    let delta = match &state.e_ref {
        Some(e_ref) => compute_delta(&e_ref_current, e_ref),
        None => Pose::identity(),
    };
    let aligned: Vec<Pose> = input.output.extrinsics.iter().map(|e| e.compose(&delta)).collect();
    if let Some(e_ref) = &state.e_ref {
        let err = aligned[0].max_abs_diff(e_ref);
        if !(err <= INVARIANT_TOL) {
            return Err(AlignError::Invariant { block, reason: format!("anchor pose off by {err:e}") });
        }
    }

    let anchor = input.anchor_count;
    let smoothed = smooth_block_poses(&aligned[anchor..], smoother);
    let own = input.own_frames();
    let keyframes: Vec<u64> = input.keyframes.iter().map(|&i| own[i].frame_index).collect();
    if let Some(&first) = input.keyframes.first() {
        state.e_ref = Some(if cfg.anchor_on_smoothed { smoothed[first] } else { aligned[anchor + first] });
    } else if state.e_ref.is_none() {
        state.e_ref = Some(aligned[0]);
    }
    state.last_scale = Some(s);

    Ok(BlockState {
        block_index: block,
        frame_indices: input.frames.iter().map(|f| f.frame_index).collect(),
        anchor_count: anchor,
        scales,
        block_scale: s,
        scale_fallback,
        delta,
        aligned,
        smoothed,
        keyframes,
    })
}
