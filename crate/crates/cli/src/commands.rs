use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lidarcam_core::pipeline::fixture::{write_fixture, FixtureCamera, FixtureSpec};
use lidarcam_core::pipeline::{
    run_pipeline, stage_calibrate, stage_fov, stage_init_guess, stage_overlay, stage_preprocess, stage_render, IntegrationMode,
    PipelineConfig,
};

#[derive(Debug, Parser)]
#[command(name = "lidarcam", version, about = "Target-less LiDAR-camera extrinsic calibration")]
pub struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub voxel_size: Option<f64>,
    #[arg(long, global = true)]
    pub max_points_per_voxel: Option<usize>,
    /// `on` integrates scans with motion compensation, `off` concatenates them.
    #[arg(long, global = true)]
    pub deskew: Option<Toggle>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate and equalize each pair's scans into a dense cloud.
    Preprocess,
    /// Estimate the LiDAR field of view and pick the virtual camera.
    Fov,
    /// Render the LiDAR intensity image and index map.
    Render,
    /// RANSAC rotation plus robust reprojection refinement.
    InitGuess,
    /// NID fine registration from the initial guess.
    Calibrate,
    /// Render overlays at the current estimate.
    Overlay,
    /// Every stage in order.
    Run,
    /// Serve the annotation API (and UI, if given).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory with the UI's static files.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Write a synthetic dataset with known ground truth.
    Synth {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "pinhole")]
        camera: SynthCamera,
        #[arg(long, default_value_t = 150_000)]
        points: usize,
        #[arg(long, default_value_t = 2)]
        scans: usize,
        #[arg(long, default_value_t = 100)]
        matches: usize,
        #[arg(long, default_value_t = 0.4)]
        outlier_fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthCamera {
    Pinhole,
    Equirectangular,
}

impl Cli {
    pub fn load_config(&self) -> Result<PipelineConfig> {
        let Some(path) = &self.config else {
            bail!("--config is required");
        };
        let mut cfg = PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(v) = self.voxel_size {
            cfg.ivox.voxel_size = v;
        }
        if let Some(n) = self.max_points_per_voxel {
            cfg.ivox.max_points_per_voxel = n;
        }
        if let Some(d) = self.deskew {
            cfg.mode = match d {
                Toggle::On => IntegrationMode::Dynamic,
                Toggle::Off => IntegrationMode::Static,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn stage<T>(name: &str, f: impl FnOnce() -> lidarcam_core::Result<T>) -> Result<T> {
    f().with_context(|| format!("stage `{name}` failed"))
}

pub fn run(cli: Cli) -> Result<()> {
    if let Command::Synth {
        dir,
        camera,
        points,
        scans,
        matches,
        outlier_fraction,
    } = &cli.command
    {
        let spec = FixtureSpec {
            camera: match camera {
                SynthCamera::Pinhole => FixtureCamera::Pinhole,
                SynthCamera::Equirectangular => FixtureCamera::Equirectangular,
            },
            points: *points,
            scans: *scans,
            matches: *matches,
            outlier_fraction: *outlier_fraction,
            seed: cli.seed.unwrap_or(FixtureSpec::default().seed),
            ..FixtureSpec::default()
        };
        let fx = write_fixture(dir, &spec)?;
        println!("{}", fx.config_path.display());
        return Ok(());
    }

    let cfg = cli.load_config()?;
    match &cli.command {
        Command::Preprocess => stage("preprocess", || stage_preprocess(&cfg))?,
        Command::Fov => print_json(&stage("fov", || stage_fov(&cfg))?)?,
        Command::Render => stage("render", || stage_render(&cfg))?,
        Command::InitGuess => {
            let g = stage("init-guess", || stage_init_guess(&cfg))?;
            if g.low_confidence {
                log::warn!("low-confidence initial guess: {} inliers", g.inlier_count);
            }
            print_json(&serde_json::json!({
                "T_camera_lidar": g.camera_from_lidar,
                "correspondences": g.correspondences,
                "inlier_count": g.inlier_count,
                "low_confidence": g.low_confidence,
                "refined": g.refined,
            }))?
        }
        Command::Calibrate => print_json(&stage("calibrate", || stage_calibrate(&cfg))?)?,
        Command::Overlay => stage("overlay", || stage_overlay(&cfg))?,
        Command::Run => print_json(&run_pipeline(&cfg)?)?,
        Command::Serve { addr, ui } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::serve::serve(cfg, addr, ui.clone()))?
        }
        Command::Synth { .. } => unreachable!(),
    }
    Ok(())
}
