//! `scenestream` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scenestream::change::LifeState;
use scenestream::eval::{ate_rmse, recon_metrics, Aggregate, MetricsReport, ReconOptions, Trajectory};
use scenestream::pipeline::output::{self, Checkpoint};
use scenestream::pipeline::{self, PipelineConfig, PipelineError};
use scenestream::ply::read_ply_file;
use scenestream::query::{distances, pairwise_distances, EgoState, VALID_STATES};
use scenestream::stream::synth::SyntheticScene;

#[derive(Parser)]
#[command(name = "scenestream", version, about = "Streaming semantic 3D mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; every field is optional.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a field, e.g. `--set align.block_size=12`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        let base = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        base.with_overrides(&self.sets)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Process a stream end to end.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (same as `--set output.dir=...`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Print the effective configuration.
    Config {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare an estimate against ground truth.
    Eval {
        #[arg(value_enum)]
        mode: EvalMode,
        /// Estimated trajectory (TUM) or point cloud (PLY).
        est: PathBuf,
        /// Ground-truth trajectory (TUM) or point cloud (PLY).
        gt: PathBuf,
        /// Association window in seconds.
        #[arg(long, default_value_t = 0.02)]
        max_dt: f64,
        /// Allow a scale factor in the alignment.
        #[arg(long)]
        with_scale: bool,
        /// Pre-align the clouds (recon mode).
        #[arg(long)]
        align: bool,
        /// Median instead of mean nearest-neighbor distances (recon mode).
        #[arg(long)]
        median: bool,
        /// Also write the metrics JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export artifacts from a checkpoint.
    Export {
        checkpoint: PathBuf,
        #[arg(value_enum)]
        what: ExportKind,
        out: PathBuf,
    },
    /// Render a synthetic scene to a manifest directory.
    Synth {
        scene: PathBuf,
        out: PathBuf,
        /// Override the seed stored in the scene file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a checkpoint.
    Inspect { checkpoint: PathBuf },
    /// Distances from the latest camera position to mapped objects.
    Query {
        checkpoint: PathBuf,
        /// Include removed objects.
        #[arg(long)]
        all: bool,
        /// Print object-to-object distances instead.
        #[arg(long)]
        pairs: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Ate,
    Recon,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Map,
    Semantic,
    Objects,
    Events,
}

fn data(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), PipelineError> {
    println!("{}", serde_json::to_string_pretty(value).map_err(data)?);
    Ok(())
}

fn eval(
    mode: EvalMode,
    est: &Path,
    gt: &Path,
    max_dt: f64,
    with_scale: bool,
    align: bool,
    median: bool,
) -> Result<MetricsReport, PipelineError> {
    match mode {
        EvalMode::Ate => {
            let est = Trajectory::read_tum(est).map_err(data)?;
            let gt = Trajectory::read_tum(gt).map_err(data)?;
            let r = ate_rmse(&est, &gt, max_dt, with_scale).map_err(data)?;
            Ok(MetricsReport { ate_rmse: Some(r.rmse), n_matched: Some(r.n_matched), alignment: Some(r.alignment), ..Default::default() })
        }
        EvalMode::Recon => {
            let load = |p: &Path| -> Result<Vec<_>, PipelineError> {
                Ok(read_ply_file(p)
                    .map_err(|e| data(format!("{}: {e}", p.display())))?
                    .iter()
                    .map(|v| v.position.map(f64::from).into())
                    .collect())
            };
            let opts = ReconOptions {
                align,
                with_scale,
                aggregate: if median { Aggregate::Median } else { Aggregate::Mean },
                ..ReconOptions::default()
            };
            let r = recon_metrics(&load(est)?, &load(gt)?, &opts).map_err(data)?;
            Ok(MetricsReport {
                accuracy: Some(r.accuracy),
                completion: Some(r.completion),
                chamfer: Some(r.chamfer),
                alignment: r.alignment,
                ..Default::default()
            })
        }
    }
}

fn inspect(c: &Checkpoint) {
    println!("config hash       {}", c.config_hash);
    println!("blocks processed  {}", c.map.blocks_processed);
    println!("frames            {}", c.map.trajectory.len());
    if let (Some(a), Some(b)) = (c.map.trajectory.first(), c.map.trajectory.last()) {
        println!("frame range       {}..={}", a.frame_index, b.frame_index);
    }
    println!("map points        {}", c.map.cloud.len());
    println!("keyframes         {:?}", c.map.keyframes.iter().map(|f| f.frame_index).collect::<Vec<_>>());
    println!("last scale        {:?}", c.map.align.last_scale);
    println!("events            {}", c.events.len());
    println!("untracked         {}", c.registry.untracked_total);
    println!("objects           {}", c.registry.objects.len());
    for o in output::object_summaries(&c.registry) {
        println!(
            "  #{:<4} {:<12} {:<8} c={:.3} points={} frames {}..={}",
            o.global_id,
            o.class,
            format!("{:?}", o.state).to_lowercase(),
            o.confidence,
            o.points,
            o.first_seen,
            o.last_seen
        );
    }
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run { config, out, resume } => {
            let mut cfg = config.load()?;
            if let Some(out) = out {
                cfg.output.dir = out;
            }
            cfg.output.resume |= resume;
            let report = pipeline::run(&cfg)?;
            log::info!("{} blocks, {} frames, {} objects", report.blocks_processed, report.frames_processed, report.objects);
            println!("{}", cfg.output.dir.join("report.json").display());
        }
        Command::Config { config } => {
            let cfg = config.load()?;
            cfg.validate()?;
            print_json(&cfg)?;
        }
        Command::Eval { mode, est, gt, max_dt, with_scale, align, median, out } => {
            let report = eval(mode, &est, &gt, max_dt, with_scale, align, median)?;
            print_json(&report)?;
            if let Some(out) = out {
                output::write_json(&out, &report)?;
            }
        }
        Command::Export { checkpoint, what, out } => {
            let c = Checkpoint::load(&checkpoint)?;
            match what {
                ExportKind::Map => output::write_ply(&out, &output::map_vertices(&c.map, &c.registry, false))?,
                ExportKind::Semantic => output::write_ply(&out, &output::map_vertices(&c.map, &c.registry, true))?,
                ExportKind::Objects => output::write_json(&out, &output::object_summaries(&c.registry))?,
                ExportKind::Events => output::write_events(&out, &c.events)?,
            }
        }
        Command::Synth { scene, out, seed } => {
            let mut scene = SyntheticScene::load(&scene)?;
            if let Some(seed) = seed {
                scene.seed = seed;
            }
            scene.generate(&out)?;
            println!("{}", out.join("manifest.jsonl").display());
        }
        Command::Inspect { checkpoint } => inspect(&Checkpoint::load(&checkpoint)?),
        Command::Query { checkpoint, all, pairs } => {
            let c = Checkpoint::load(&checkpoint)?;
            let include: &[LifeState] = if all { &[LifeState::Recent, LifeState::Retained, LifeState::Removed] } else { &VALID_STATES };
            if pairs {
                print_json(&pairwise_distances(&c.registry, include))?;
            } else {
                let ego = EgoState::from_map(&c.map).ok_or_else(|| data("checkpoint holds no frames"))?;
                print_json(&serde_json::json!({ "ego": ego, "objects": distances(&ego, &c.registry, include) }))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SCENESTREAM_LOG", "info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
