//! `fv` — RGB-D frame-bundle pipeline CLI.
//!
//! Subcommands cover the full batch workflow: render synthetic bundles,
//! align depth to color, reconstruct per-object point clouds with boxes,
//! evaluate segmentation masks, and benchmark the pipeline stages.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fv_core::cloudproc::{OutlierParams, VoxelParams};
use fv_core::io::{parse_pipeline_config, IoError};
use fv_core::pipeline::{PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(name = "fv", version, about = "RGB-D object point-cloud pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Re-render a depth PNG into the color camera's pixel grid.
    Align {
        /// Calibration document (fv-calib/1).
        #[arg(long)]
        calib: PathBuf,
        /// 16-bit grayscale depth PNG in the depth camera's grid.
        #[arg(long)]
        depth: PathBuf,
        /// Output path for the aligned 16-bit depth PNG.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline on one frame bundle and write clouds + boxes.
    Reconstruct {
        /// Bundle directory (calibration.json, depth.png, detections.json, masks/).
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out_dir: PathBuf,
        /// Write ASCII PLY instead of binary little-endian.
        #[arg(long)]
        ascii_ply: bool,
    },
    /// Process a directory of frame bundles.
    Pipeline {
        /// A bundle directory, or a directory whose subdirectories are bundles.
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (one subdirectory per bundle).
        #[arg(long)]
        out: PathBuf,
        /// Write ASCII PLY instead of binary little-endian.
        #[arg(long)]
        ascii_ply: bool,
    },
    /// Render a synthetic scene into a complete frame bundle with ground truth.
    Synth {
        /// Scene document (fv-scene/1).
        #[arg(long)]
        scene: PathBuf,
        /// Calibration document (fv-calib/1).
        #[arg(long)]
        calib: PathBuf,
        /// Optional noise document (fv-noise/1).
        #[arg(long)]
        noise: Option<PathBuf>,
        /// Output bundle directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted masks against ground truth and summarize.
    Metrics {
        /// Directory of predicted mask PNGs.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth mask PNGs (matched by file name).
        #[arg(long)]
        gt: PathBuf,
        /// Optional directory of soft (grayscale score) masks for AUC.
        #[arg(long)]
        soft: Option<PathBuf>,
        /// Optional predicted detections (fv-det/1) for box precision.
        #[arg(long)]
        pred_det: Option<PathBuf>,
        /// Ground-truth detections (fv-det/1), required with --pred-det.
        #[arg(long, requires = "pred_det")]
        gt_det: Option<PathBuf>,
        /// IoU threshold for detection matching.
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
        /// Report file; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Time the pipeline stages over repeated runs of one bundle.
    Bench {
        /// Bundle directory.
        #[arg(long)]
        bundle: PathBuf,
        /// Number of repetitions.
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[command(flatten)]
        config: ConfigArgs,
        /// Report file; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Pipeline configuration: an optional fv-config/1 document with every field
/// overridable by flag.
#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config document (fv-config/1).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Voxel edge length in meters.
    #[arg(long)]
    voxel_size: Option<f64>,
    /// Neighbor count for statistical outlier removal.
    #[arg(long)]
    k_neighbors: Option<usize>,
    /// Standard-deviation ratio for outlier removal.
    #[arg(long)]
    std_ratio: Option<f64>,
    /// Minimum raw points for a detection to produce an object.
    #[arg(long)]
    min_points: Option<usize>,
    /// Also write the raw (pre-postprocessing) per-object clouds.
    #[arg(long)]
    emit_raw_clouds: bool,
    /// Also write box wireframe PLYs.
    #[arg(long)]
    emit_wireframes: bool,
    /// Skip voxel downsampling.
    #[arg(long)]
    no_downsample: bool,
    /// Skip statistical outlier removal.
    #[arg(long)]
    no_denoise: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => parse_pipeline_config(&std::fs::read_to_string(path)?)?,
            None => PipelineConfig::default(),
        };
        if let Some(voxel_size) = self.voxel_size {
            config.voxel = VoxelParams::new(voxel_size).map_err(input_err)?;
        }
        if self.k_neighbors.is_some() || self.std_ratio.is_some() {
            config.outlier = OutlierParams::new(
                self.k_neighbors.unwrap_or(config.outlier.k_neighbors()),
                self.std_ratio.unwrap_or(config.outlier.std_ratio()),
            )
            .map_err(input_err)?;
        }
        if let Some(min_points) = self.min_points {
            config.min_points = min_points;
        }
        config.emit_raw_clouds |= self.emit_raw_clouds;
        config.emit_wireframes |= self.emit_wireframes;
        config.enable_downsample &= !self.no_downsample;
        config.enable_denoise &= !self.no_denoise;
        Ok(config)
    }
}

/// Input and validation problems exit with 1; failures inside a pipeline
/// stage exit with 2.
#[derive(Debug)]
enum CliError {
    Input(String),
    Stage(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(1),
            CliError::Stage(_) => ExitCode::from(2),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(message) | CliError::Stage(message) => f.write_str(message),
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Stage(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Align { calib, depth, out } => commands::align(&calib, &depth, &out),
        Command::Reconstruct {
            bundle,
            config,
            out_dir,
            ascii_ply,
        } => config
            .resolve()
            .and_then(|c| commands::reconstruct(&bundle, &c, &out_dir, ascii_ply)),
        Command::Pipeline {
            input,
            config,
            out,
            ascii_ply,
        } => config
            .resolve()
            .and_then(|c| commands::pipeline(&input, &c, &out, ascii_ply)),
        Command::Synth {
            scene,
            calib,
            noise,
            out,
        } => commands::synth(&scene, &calib, noise.as_deref(), &out),
        Command::Metrics {
            pred,
            gt,
            soft,
            pred_det,
            gt_det,
            iou_threshold,
            report,
        } => commands::metrics(
            &pred,
            &gt,
            soft.as_deref(),
            pred_det.as_deref(),
            gt_det.as_deref(),
            iou_threshold,
            report.as_deref(),
        ),
        Command::Bench {
            bundle,
            reps,
            config,
            report,
        } => config
            .resolve()
            .and_then(|c| commands::bench(&bundle, &c, reps, report.as_deref())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
