use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::align::AlignConfig;
use crate::change::ChangeConfig;
use crate::smooth::SmootherConfig;
use crate::tracker::TrackerConfig;

use super::PipelineError;

/// Where frames and predictions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderConfig {
    /// A manifest with precomputed predictions.
    Files { manifest: PathBuf, tracks_dir: Option<PathBuf> },
    /// A scene description rendered on the fly.
    Synthetic { scene: PathBuf },
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Files { manifest: PathBuf::from("manifest.jsonl"), tracks_dir: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Voxel edge of the background cloud in meters.
    pub voxel: f64,
    /// Pixel stride when back-projecting background depth.
    pub stride: u32,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { voxel: 0.02, stride: 2 }
    }
}

/// Run control. None of these fields affect results, so they are left out
/// of the checkpoint hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Continue from `dir/checkpoint.json` when present.
    pub resume: bool,
    /// Stop after this many blocks in total (checkpoint stays on disk).
    pub stop_after_blocks: Option<u64>,
    /// Bounded queue length between stages.
    pub queue_depth: usize,
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), resume: false, stop_after_blocks: None, queue_depth: 2, checkpoint: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub align: AlignConfig,
    pub smoother: SmootherConfig,
    pub tracker: TrackerConfig,
    pub change: ChangeConfig,
    pub map: MapConfig,
    pub provider: ProviderConfig,
    pub output: OutputConfig,
}

fn config_err(msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(msg.to_string())
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    /// Applies `a.b.c=value` overrides. Values parse as JSON when they can
    /// and are taken as strings otherwise.
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self, PipelineError> {
        let mut root = serde_json::to_value(self).map_err(config_err)?;
        for set in sets {
            let set = set.as_ref();
            let (path, raw) = set.split_once('=').ok_or_else(|| config_err(format!("override {set:?} lacks '='")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let keys: Vec<&str> = path.split('.').collect();
            let mut pointer = String::new();
            for (i, key) in keys.iter().enumerate() {
                let node = root.pointer_mut(&pointer).expect("parent exists");
                if node.is_null() {
                    // optional sections serialize as null
                    *node = Value::Object(Default::default());
                }
                let obj = node.as_object_mut().ok_or_else(|| config_err(format!("{path}: {key} is not a section")))?;
                if i + 1 == keys.len() {
                    // switching a tagged variant drops the old variant's fields
                    if *key == "kind" && obj.get("kind") != Some(&value) {
                        obj.clear();
                    }
                    obj.insert(key.to_string(), value.clone());
                } else {
                    obj.entry(key.to_string()).or_insert(Value::Null);
                    pointer = format!("{pointer}/{key}");
                }
            }
        }
        serde_json::from_value(root).map_err(|e| config_err(format!("override: {e}")))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.align.validate().map_err(config_err)?;
        self.smoother.validate().map_err(config_err)?;
        self.tracker.validate().map_err(config_err)?;
        self.change.validate().map_err(config_err)?;
        if !(self.map.voxel >= 0.0 && self.map.voxel.is_finite()) || self.map.stride == 0 {
            return Err(config_err("map.voxel must be >= 0 and map.stride positive"));
        }
        if self.output.queue_depth == 0 {
            return Err(config_err("output.queue_depth must be positive"));
        }
        Ok(())
    }

    /// Hex SHA-256 of every setting that influences results.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().unwrap().remove("output");
        // serde_json maps are ordered, so the text is canonical
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
