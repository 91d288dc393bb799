//! Ego position and object distance queries over a registry snapshot.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::change::LifeState;
use crate::geom::component_median;
use crate::map::GlobalMap;
use crate::tracker::Registry;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("object has no points")]
    EmptyObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub frame_index: u64,
    pub center: [f64; 3],
}

impl EgoState {
    /// Camera center of the latest raw pose in the map.
    pub fn from_map(map: &GlobalMap) -> Option<EgoState> {
        map.trajectory.last().map(|t| {
            let c = t.raw.center();
            EgoState { frame_index: t.frame_index, center: [c.x, c.y, c.z] }
        })
    }
}

pub fn object_centroid(points: &[Vector3<f64>]) -> Result<Vector3<f64>, QueryError> {
    component_median(points).ok_or(QueryError::EmptyObject)
}

/// States treated as currently valid.
pub const VALID_STATES: [LifeState; 2] = [LifeState::Recent, LifeState::Retained];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDistance {
    pub global_id: u32,
    pub class: String,
    pub state: LifeState,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub a: u32,
    pub b: u32,
    pub distance: f64,
}

fn centroids(registry: &Registry, include: &[LifeState]) -> Vec<(u32, Vector3<f64>)> {
    registry
        .objects
        .values()
        .filter(|o| include.contains(&o.state.state))
        .filter_map(|o| o.centroid().map(|c| (o.global_id, c)))
        .collect()
}

/// Distances from the ego position to every included object, nearest
/// first (ties by id).
pub fn distances(ego: &EgoState, registry: &Registry, include: &[LifeState]) -> Vec<ObjectDistance> {
    let e = Vector3::from(ego.center);
    let mut out: Vec<ObjectDistance> = centroids(registry, include)
        .into_iter()
        .map(|(id, c)| {
            let o = &registry.objects[&id];
            ObjectDistance { global_id: id, class: o.class_label.clone(), state: o.state.state, distance: (c - e).norm() }
        })
        .collect();
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.global_id.cmp(&b.global_id)));
    out
}

/// Distances between every pair of included objects, `a < b`.
pub fn pairwise_distances(registry: &Registry, include: &[LifeState]) -> Vec<PairDistance> {
    let cs = centroids(registry, include);
    let mut out = Vec::new();
    for (i, (a, ca)) in cs.iter().enumerate() {
        for (b, cb) in &cs[i + 1..] {
            out.push(PairDistance { a: *a, b: *b, distance: (ca - cb).norm() });
        }
    }
    out
}
