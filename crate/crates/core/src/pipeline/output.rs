//! Checkpoints and exported artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::change::{ChangeEvent, LifeState};
use crate::eval::Trajectory;
use crate::map::GlobalMap;
use crate::ply::{write_ply_file, PlyVertex};
use crate::tracker::reid::Aabb;
use crate::tracker::{MergeKind, Registry};

use super::PipelineError;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Per-block bookkeeping kept for the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub block_index: u64,
    pub first_frame: u64,
    pub last_frame: u64,
    pub list_len: usize,
    pub scale: f64,
    pub scale_fallback: bool,
    pub keyframes: Vec<u64>,
    pub created: Vec<u32>,
    pub merged: Vec<(u32, MergeKind)>,
    pub untracked: usize,
    pub events: usize,
}

/// Full engine state at a block boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub map: GlobalMap,
    pub registry: Registry,
    pub events: Vec<ChangeEvent>,
    pub blocks: Vec<BlockSummary>,
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(format!("{}: {e}", path.display()))
}

impl Checkpoint {
    pub fn fresh(config_hash: String, voxel: f64) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash,
            map: GlobalMap::new(voxel),
            registry: Registry::default(),
            events: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let f = File::open(path).map_err(|e| data_err(path, e))?;
        let c: Checkpoint =
            serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| data_err(path, format!("corrupt checkpoint: {e}")))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(data_err(path, format!("checkpoint version {} is not supported", c.version)));
        }
        Ok(c)
    }

    /// Writes through a temporary file so a crash never leaves a torn
    /// checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let tmp = path.with_extension("json.tmp");
        let f = File::create(&tmp).map_err(|e| data_err(&tmp, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer(&mut w, self).map_err(|e| data_err(&tmp, e))?;
        w.flush().map_err(|e| data_err(&tmp, e))?;
        drop(w);
        std::fs::rename(&tmp, path).map_err(|e| data_err(path, e))
    }

    pub fn last_block(&self) -> Option<u64> {
        self.map.blocks_processed.checked_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub global_id: u32,
    pub class: String,
    pub state: LifeState,
    pub confidence: f64,
    pub centroid: Option<[f64; 3]>,
    pub bounds: Aabb,
    pub points: usize,
    pub first_seen: u64,
    pub last_seen: u64,
    pub first_block: u64,
    pub last_detected_block: u64,
}

pub fn object_summaries(registry: &Registry) -> Vec<ObjectSummary> {
    registry
        .objects
        .values()
        .map(|o| ObjectSummary {
            global_id: o.global_id,
            class: o.class_label.clone(),
            state: o.state.state,
            confidence: o.state.confidence,
            centroid: o.centroid().map(|c| [c.x, c.y, c.z]),
            bounds: o.bounds,
            points: o.cloud.len(),
            first_seen: o.first_seen,
            last_seen: o.last_seen,
            first_block: o.first_block,
            last_detected_block: o.last_detected_block,
        })
        .collect()
}

pub fn trajectory(map: &GlobalMap, smoothed: bool) -> Trajectory {
    Trajectory {
        stamps: map.trajectory.iter().map(|t| t.timestamp).collect(),
        poses: map.trajectory.iter().map(|t| if smoothed { t.smoothed } else { t.raw }).collect(),
    }
}

const BACKGROUND: [u8; 3] = [160, 160, 160];

pub fn object_color(id: u32) -> [u8; 3] {
    let h = id.wrapping_mul(2_654_435_761);
    [55 + (h >> 8) as u8 % 200, 55 + (h >> 16) as u8 % 200, 55 + (h >> 24) as u8 % 200]
}

fn vertex(p: &nalgebra::Vector3<f64>, color: [u8; 3], object_id: u32) -> PlyVertex {
    PlyVertex { position: [p.x as f32, p.y as f32, p.z as f32], color, object_id }
}

/// Background plus every object cloud. With `semantic`, vertices carry
/// object ids and per-object colors.
pub fn map_vertices(map: &GlobalMap, registry: &Registry, semantic: bool) -> Vec<PlyVertex> {
    let mut out: Vec<PlyVertex> = map.cloud.points().iter().map(|p| vertex(p, BACKGROUND, 0)).collect();
    for o in registry.objects.values() {
        let (color, id) = if semantic { (object_color(o.global_id), o.global_id) } else { (BACKGROUND, 0) };
        out.extend(o.cloud.points().iter().map(|p| vertex(p, color, id)));
    }
    out
}

pub fn sorted_events(events: &[ChangeEvent]) -> Vec<ChangeEvent> {
    let mut ev = events.to_vec();
    ev.sort_by_key(|e| e.frame_index);
    ev
}

pub fn write_events(path: &Path, events: &[ChangeEvent]) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| data_err(path, e))?);
    for e in sorted_events(events) {
        serde_json::to_writer(&mut w, &e).map_err(|e| data_err(path, e))?;
        w.write_all(b"\n").map_err(|e| data_err(path, e))?;
    }
    w.flush().map_err(|e| data_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| data_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| data_err(path, e))
}

pub fn write_ply(path: &Path, vertices: &[PlyVertex]) -> Result<(), PipelineError> {
    write_ply_file(path, vertices).map_err(|e| data_err(path, e))
}

/// Files that must be identical between an interrupted and an
/// uninterrupted run.
pub const DETERMINISTIC_OUTPUTS: [&str; 6] =
    ["trajectory.txt", "trajectory_raw.txt", "map.ply", "semantic.ply", "objects.json", "events.jsonl"];

pub fn write_outputs(dir: &Path, state: &Checkpoint) -> Result<(), PipelineError> {
    let write_text = |name: &str, text: String| std::fs::write(dir.join(name), text).map_err(|e| data_err(&dir.join(name), e));
    write_text("trajectory.txt", trajectory(&state.map, true).to_tum())?;
    write_text("trajectory_raw.txt", trajectory(&state.map, false).to_tum())?;
    write_ply(&dir.join("map.ply"), &map_vertices(&state.map, &state.registry, false))?;
    write_ply(&dir.join("semantic.ply"), &map_vertices(&state.map, &state.registry, true))?;
    write_json(&dir.join("objects.json"), &object_summaries(&state.registry))?;
    write_events(&dir.join("events.jsonl"), &state.events)
}
