//! Object presence states driven by visibility.
//!
//! An object that is detected becomes Recent with confidence 1. An object
//! that should be visible but is not detected loses `eta` confidence per
//! evaluation and is Removed at zero. Objects outside the view or hidden
//! behind other surfaces keep their confidence and become Retained.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::geom::{project_point, DepthMap, Intrinsics, Pose};
use crate::tracker::{BlockSemantics, Registry};
use nalgebra::Vector3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChangeConfig {
    /// Depth tolerance (meters).
    pub delta: f64,
    /// Confidence lost per missed visible evaluation.
    pub eta: f64,
    pub tau_vis: f64,
    pub tau_area: f64,
    /// Evaluate on every frame of the block instead of only the last one.
    #[serde(default)]
    pub every_frame: bool,
}

impl Default for ChangeConfig {
    fn default() -> Self {
        ChangeConfig { delta: 0.001, eta: 0.34, tau_vis: 0.0, tau_area: 0.0, every_frame: false }
    }
}

impl ChangeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.delta > 0.0) {
            return Err("delta must be positive".into());
        }
        for (name, v) in [("eta", self.eta), ("tau_vis", self.tau_vis), ("tau_area", self.tau_area)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifeState {
    Recent,
    Retained,
    Removed,
}

impl LifeState {
    pub fn parse(s: &str) -> Option<LifeState> {
        match s.to_ascii_lowercase().as_str() {
            "recent" => Some(LifeState::Recent),
            "retained" => Some(LifeState::Retained),
            "removed" => Some(LifeState::Removed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub state: LifeState,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ChangeError {
    #[error("object has no points")]
    EmptyObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visibility {
    pub f_vis: f64,
    pub area_fraction: f64,
    pub in_fov: bool,
}

/// Fraction of the object's in-view projections that are not hidden behind
/// the observed depth. Pixels without a valid observation count as visible.
pub fn visible_fraction(
    points: &[Vector3<f64>],
    pose: &Pose,
    k: &Intrinsics,
    observed: &DepthMap,
    delta: f64,
) -> Result<Visibility, ChangeError> {
    if points.is_empty() {
        return Err(ChangeError::EmptyObject);
    }
    let mut omega = 0usize;
    let mut visible = 0usize;
    let mut pixels = HashSet::new();
    for p in points {
        let proj = project_point(p, k, pose);
        if !proj.in_bounds {
            continue;
        }
        omega += 1;
        let (u, v) = proj.pixel(k);
        pixels.insert((u, v));
        match observed.get(u, v) {
            Some(z_obs) if proj.depth > z_obs + delta => {}
            _ => visible += 1,
        }
    }
    if omega == 0 {
        return Ok(Visibility { f_vis: 0.0, area_fraction: 0.0, in_fov: false });
    }
    Ok(Visibility {
        f_vis: visible as f64 / omega as f64,
        area_fraction: pixels.len() as f64 / k.pixel_count() as f64,
        in_fov: true,
    })
}

/// One visibility update. `vis` is `None` for objects without geometry,
/// which are treated as out of view.
pub fn update_object_state(prev: ObjectState, detected: bool, vis: Option<Visibility>, cfg: &ChangeConfig) -> ObjectState {
    if detected {
        return ObjectState { state: LifeState::Recent, confidence: 1.0 };
    }
    if prev.state == LifeState::Removed {
        return prev;
    }
    let hold = ObjectState { state: LifeState::Retained, confidence: prev.confidence };
    let Some(vis) = vis else { return hold };
    if !vis.in_fov || vis.f_vis <= cfg.tau_vis || vis.area_fraction <= cfg.tau_area {
        return hold;
    }
    let mut c = (prev.confidence - cfg.eta).max(0.0);
    if c <= 1e-12 {
        c = 0.0;
    }
    let state = if c == 0.0 { LifeState::Removed } else { LifeState::Retained };
    ObjectState { state, confidence: c }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChangeKind {
    Appeared,
    Redetected,
    BecameRetained,
    ConfidenceDecayed,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub block_index: u64,
    pub frame_index: u64,
    pub timestamp: f64,
    pub global_id: u32,
    pub event: ChangeKind,
    pub confidence_after: f64,
}

/// Frame the visibility test runs against.
pub struct EvalFrame<'a> {
    pub frame_index: u64,
    pub timestamp: f64,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub depth: &'a DepthMap,
}

fn transition(prev: ObjectState, next: ObjectState, created: bool) -> Option<ChangeKind> {
    if created {
        return Some(ChangeKind::Appeared);
    }
    match (prev.state, next.state) {
        (LifeState::Retained | LifeState::Removed, LifeState::Recent) => Some(ChangeKind::Redetected),
        (s, LifeState::Removed) if s != LifeState::Removed => Some(ChangeKind::Removed),
        _ if next.confidence < prev.confidence => Some(ChangeKind::ConfidenceDecayed),
        (LifeState::Recent, LifeState::Retained) => Some(ChangeKind::BecameRetained),
        _ => None,
    }
}

/// Updates every object against the evaluation frames of a block (the last
/// frame, or all of them) and returns the resulting events in order.
pub fn run_block_update(
    registry: &mut Registry,
    semantics: &BlockSemantics,
    block_index: u64,
    frames: &[EvalFrame],
    cfg: &ChangeConfig,
) -> Vec<ChangeEvent> {
    let mut events = Vec::new();
    let created: HashSet<u32> = semantics.created.iter().copied().collect();
    for (n, frame) in frames.iter().enumerate() {
        for (id, obj) in registry.objects.iter_mut() {
            let detected = semantics.detected.contains(id);
            let prev = obj.state;
            if prev.state == LifeState::Removed && !detected {
                continue;
            }
            let vis = if detected {
                None
            } else {
                visible_fraction(obj.cloud.points(), &frame.pose, &frame.intrinsics, frame.depth, cfg.delta).ok()
            };
            let next = update_object_state(prev, detected, vis, cfg);
            obj.state = next;
            if let Some(kind) = transition(prev, next, n == 0 && created.contains(id)) {
                events.push(ChangeEvent {
                    block_index,
                    frame_index: frame.frame_index,
                    timestamp: frame.timestamp,
                    global_id: *id,
                    event: kind,
                    confidence_after: next.confidence,
                });
            }
        }
    }
    events
}
