//! End-to-end orchestration: ingest → provider → map update.
//!
//! The three stages run on their own threads and hand work over through
//! bounded channels, so a slow map update stalls ingest instead of letting
//! frames pile up. Only the map stage mutates engine state, and it writes
//! a checkpoint after every block.

pub mod config;
pub mod output;

use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::align::{align_block, partition, select_keyframes, AlignError, BlockInput, BlockState};
use crate::change::{run_block_update, EvalFrame};
use crate::geom::unproject_pixel;
use crate::map::TrajectoryEntry;
use crate::stream::features::laplacian_variance;
use crate::stream::provider::{FileProvider, GeometryProvider, ProviderError};
use crate::stream::synth::{SynthError, SyntheticProvider, SyntheticScene, SyntheticStream};
use crate::stream::{open_stream, FrameRecord, FrameStream, StreamError};
use crate::tracker::{block_queries, integrate_block};

pub use config::{MapConfig, OutputConfig, PipelineConfig, ProviderConfig};
pub use output::{BlockSummary, Checkpoint, CHECKPOINT_FILE, DETERMINISTIC_OUTPUTS};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Invariant(_) => 3,
        }
    }
}

impl From<StreamError> for PipelineError {
    fn from(e: StreamError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<AlignError> for PipelineError {
    fn from(e: AlignError) -> Self {
        match e {
            AlignError::InvalidConfig(_) => PipelineError::Config(e.to_string()),
            AlignError::Invariant { .. } => PipelineError::Invariant(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

/// A frame stream that can fast-forward past frames already in a
/// checkpoint.
pub trait FrameSource: Iterator<Item = Result<FrameRecord, StreamError>> + Send {
    fn skip_through(&mut self, last: u64);
}

impl FrameSource for FrameStream {
    fn skip_through(&mut self, last: u64) {
        FrameStream::skip_through(self, last)
    }
}

impl FrameSource for SyntheticStream<'_> {
    fn skip_through(&mut self, last: u64) {
        SyntheticStream::skip_through(self, last)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub provider_ms: f64,
    pub map_ms: f64,
    pub checkpoint_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub resumed_from_block: Option<u64>,
    pub blocks_processed: u64,
    pub frames_processed: usize,
    pub map_points: usize,
    pub objects: usize,
    pub events: usize,
    pub untracked_detections: u64,
    pub scale_fallbacks: usize,
    pub stopped_early: bool,
    pub blocks: Vec<BlockSummary>,
    pub timing: StageTimes,
}

/// Called after every block with the aligned input and its result.
pub type BlockObserver<'a> = dyn FnMut(&BlockInput, &BlockState, &Checkpoint) + 'a;

/// Runs the configured provider end to end.
pub fn run(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    match &cfg.provider {
        ProviderConfig::Files { manifest, tracks_dir } => {
            let stream = open_stream(manifest)?;
            run_with(cfg, stream, FileProvider::new(tracks_dir.clone()), None)
        }
        ProviderConfig::Synthetic { scene } => {
            let scene = SyntheticScene::load(scene)?;
            let provider = SyntheticProvider::new(scene.clone());
            run_with(cfg, scene.stream(), provider, None)
        }
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs the engine over an explicit source and provider.
pub fn run_with<S: FrameSource, P: GeometryProvider>(
    cfg: &PipelineConfig,
    mut source: S,
    provider: P,
    observer: Option<&mut BlockObserver<'_>>,
) -> Result<RunReport, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))?;
    let hash = cfg.hash();
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let mut state = if cfg.output.resume && ckpt_path.exists() {
        let c = Checkpoint::load(&ckpt_path)?;
        if c.config_hash != hash {
            return Err(PipelineError::Config(format!(
                "{} was written with config {}, current config is {hash}",
                ckpt_path.display(),
                c.config_hash
            )));
        }
        log::info!("resuming after block {:?}", c.last_block());
        c
    } else {
        Checkpoint::fresh(hash.clone(), cfg.map.voxel)
    };
    let resumed_from_block = if cfg.output.resume { state.last_block() } else { None };
    if let Some(last) = state.map.last_frame_index() {
        source.skip_through(last);
    }

    let mut times = StageTimes::default();
    let limit = cfg.output.stop_after_blocks;
    let reached = |s: &Checkpoint| limit.is_some_and(|l| s.map.blocks_processed >= l);
    let mut stopped_early = reached(&state);
    if !stopped_early {
        let provider_time = run_stages(cfg, source, provider, &mut state, &mut times, observer, &ckpt_path, &reached)?;
        times.provider_ms = provider_time;
        stopped_early = reached(&state);
    }

    output::write_outputs(dir, &state)?;
    times.total_ms = ms(started.elapsed());
    let report = RunReport {
        config_hash: hash,
        resumed_from_block,
        blocks_processed: state.map.blocks_processed,
        frames_processed: state.map.trajectory.len(),
        map_points: state.map.cloud.len(),
        objects: state.registry.objects.len(),
        events: state.events.len(),
        untracked_detections: state.registry.untracked_total,
        scale_fallbacks: state.blocks.iter().filter(|b| b.scale_fallback).count(),
        stopped_early,
        blocks: state.blocks.clone(),
        timing: times,
    };
    output::write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn run_stages<S: FrameSource, P: GeometryProvider>(
    cfg: &PipelineConfig,
    source: S,
    provider: P,
    state: &mut Checkpoint,
    times: &mut StageTimes,
    mut observer: Option<&mut BlockObserver<'_>>,
    ckpt_path: &Path,
    reached: &dyn Fn(&Checkpoint) -> bool,
) -> Result<f64, PipelineError> {
    let depth = cfg.output.queue_depth;
    let anchors = state.map.keyframes.clone();
    let first_block = state.map.blocks_processed;
    std::thread::scope(|s| {
        let (tx_frames, rx_frames) = sync_channel(depth);
        let (tx_inputs, rx_inputs) = sync_channel(depth);
        let block_size = cfg.align.block_size;
        s.spawn(move || ingest_stage(source, block_size, tx_frames));
        let provider_thread = s.spawn(move || provider_stage(cfg, provider, anchors, first_block, rx_frames, tx_inputs));
        let result = (|| {
            for msg in rx_inputs.iter() {
                let mut input = msg?;
                let t = Instant::now();
                let block_state = map_stage(cfg, state, &mut input)?;
                times.map_ms += ms(t.elapsed());
                if let Some(obs) = observer.as_deref_mut() {
                    obs(&input, &block_state, state);
                }
                drop(input);
                if cfg.output.checkpoint {
                    let t = Instant::now();
                    state.save(ckpt_path)?;
                    times.checkpoint_ms += ms(t.elapsed());
                }
                if reached(state) {
                    break;
                }
            }
            Ok(())
        })();
        // hang up so blocked upstream stages exit
        drop(rx_inputs);
        let provider_ms = provider_thread.join().expect("provider stage panicked");
        result.map(|_| provider_ms)
    })
}

fn ingest_stage<S: FrameSource>(source: S, block_size: usize, tx: SyncSender<Result<Vec<FrameRecord>, StreamError>>) {
    for block in partition(source, block_size) {
        let failed = block.is_err();
        if tx.send(block).is_err() || failed {
            break;
        }
    }
}

/// Number of keyframes carried into the next block; a block always keeps
/// at least one own frame out of the anchor set unless it has only one.
fn effective_keyframes(k: usize, own: usize) -> usize {
    if own > 1 { k.min(own - 1) } else { own }
}

fn provider_stage<P: GeometryProvider>(
    cfg: &PipelineConfig,
    mut provider: P,
    mut anchors: Vec<FrameRecord>,
    mut block_index: u64,
    rx: Receiver<Result<Vec<FrameRecord>, StreamError>>,
    tx: SyncSender<Result<BlockInput, PipelineError>>,
) -> f64 {
    let mut busy = Duration::ZERO;
    for msg in rx.iter() {
        let t = Instant::now();
        let result = (|| {
            let own = msg?;
            let anchor_count = anchors.len();
            let mut frames = std::mem::take(&mut anchors);
            frames.extend(own);
            let (queries, _) = block_queries(&frames[0], &cfg.tracker);
            let output = provider.infer(&frames, &queries).map_err(|e: ProviderError| {
                PipelineError::Data(format!("block {block_index} (frames {}..): {e}", frames[0].frame_index))
            })?;
            let scores: Vec<f64> = (anchor_count..frames.len())
                .map(|i| {
                    frames[i].feature_score.unwrap_or_else(|| {
                        let d = &output.predicted_depths[i];
                        laplacian_variance(d.width() as usize, d.height() as usize, d.values())
                    })
                })
                .collect();
            let keyframes = select_keyframes(&scores, effective_keyframes(cfg.align.keyframe_count, scores.len()));
            anchors = keyframes.iter().map(|&i| frames[anchor_count + i].clone()).collect();
            Ok(BlockInput { block_index, frames, anchor_count, output, queries, keyframes })
        })();
        busy += t.elapsed();
        block_index += 1;
        let failed = result.is_err();
        if tx.send(result).is_err() || failed {
            break;
        }
    }
    ms(busy)
}

/// Folds one block into the engine state.
fn map_stage(cfg: &PipelineConfig, state: &mut Checkpoint, input: &mut BlockInput) -> Result<BlockState, PipelineError> {
    let block = input.block_index;
    let bs = align_block(&mut state.map.align, input, &cfg.align, &cfg.smoother)?;
    let anchor = input.anchor_count;
    let own = input.own_frames();

    for (i, f) in own.iter().enumerate() {
        if state.map.last_frame_index().is_some_and(|last| f.frame_index <= last) {
            return Err(PipelineError::Invariant(format!("block {block}: frame {} repeats", f.frame_index)));
        }
        state.map.trajectory.push(TrajectoryEntry {
            frame_index: f.frame_index,
            timestamp: f.timestamp,
            raw: bs.aligned[anchor + i],
            smoothed: bs.smoothed[i],
        });
    }

    let stride = cfg.map.stride as usize;
    for (i, f) in own.iter().enumerate() {
        let depth = &input.output.predicted_depths[anchor + i];
        let world_from_cam = bs.aligned[anchor + i].inverse();
        let k = &f.intrinsics;
        for v in (0..k.height).step_by(stride) {
            for u in (0..k.width).step_by(stride) {
                if f.masks.iter().any(|m| m.mask.get(u, v)) {
                    continue;
                }
                if let Some(z) = depth.get(u, v) {
                    state.map.cloud.insert(unproject_pixel(u, v, z, k, &world_from_cam), f.frame_index);
                }
            }
        }
    }

    let semantics = integrate_block(&mut state.registry, input, &bs, &cfg.tracker);

    let eval_range = if cfg.change.every_frame { 0..own.len() } else { own.len() - 1..own.len() };
    let eval: Vec<EvalFrame> = eval_range
        .map(|i| EvalFrame {
            frame_index: own[i].frame_index,
            timestamp: own[i].timestamp,
            pose: bs.aligned[anchor + i],
            intrinsics: own[i].intrinsics,
            depth: &input.output.predicted_depths[anchor + i],
        })
        .collect();
    let events = run_block_update(&mut state.registry, &semantics, block, &eval, &cfg.change);

    state.blocks.push(BlockSummary {
        block_index: block,
        first_frame: own[0].frame_index,
        last_frame: own[own.len() - 1].frame_index,
        list_len: input.frames.len(),
        scale: bs.block_scale,
        scale_fallback: bs.scale_fallback,
        keyframes: bs.keyframes.clone(),
        created: semantics.created.clone(),
        merged: semantics.merged.clone(),
        untracked: semantics.untracked.len(),
        events: events.len(),
    });
    state.events.extend(events);
    state.map.keyframes = input.keyframes.iter().map(|&i| own[i].clone()).collect();
    state.map.blocks_processed += 1;
    log::debug!("block {block}: {} frames, scale {:.6}, {} objects", own.len(), bs.block_scale, state.registry.objects.len());
    Ok(bs)
}
