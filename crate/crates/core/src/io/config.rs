//! The `fv-config/1` pipeline configuration document. Every field is
//! optional and falls back to the built-in default, so partial configs are
//! valid; command-line flags override fields on top of this.

use serde::{Deserialize, Serialize};

use super::{check_schema, IoError};
use crate::cloudproc::{OutlierParams, VoxelParams};
use crate::pipeline::PipelineConfig;

pub const CONFIG_SCHEMA: &str = "fv-config/1";

#[derive(Serialize, Deserialize)]
struct ConfigDoc {
    schema: String,
    #[serde(default = "default_voxel_size")]
    voxel_size: f64,
    #[serde(default = "default_k_neighbors")]
    k_neighbors: usize,
    #[serde(default = "default_std_ratio")]
    std_ratio: f64,
    #[serde(default = "default_min_points")]
    min_points: usize,
    #[serde(default)]
    emit_raw_clouds: bool,
    #[serde(default)]
    emit_wireframes: bool,
    #[serde(default = "default_true")]
    enable_downsample: bool,
    #[serde(default = "default_true")]
    enable_denoise: bool,
}

fn default_voxel_size() -> f64 {
    VoxelParams::default().voxel_size()
}

fn default_k_neighbors() -> usize {
    OutlierParams::default().k_neighbors()
}

fn default_std_ratio() -> f64 {
    OutlierParams::default().std_ratio()
}

fn default_min_points() -> usize {
    1
}

fn default_true() -> bool {
    true
}

pub fn parse_pipeline_config(text: &str) -> Result<PipelineConfig, IoError> {
    let doc: ConfigDoc = serde_json::from_str(text).map_err(|source| IoError::Parse {
        what: "pipeline config",
        source,
    })?;
    check_schema("pipeline config", CONFIG_SCHEMA, &doc.schema)?;
    let voxel = VoxelParams::new(doc.voxel_size).map_err(|e| IoError::Format {
        what: "pipeline config",
        message: e.to_string(),
    })?;
    let outlier =
        OutlierParams::new(doc.k_neighbors, doc.std_ratio).map_err(|e| IoError::Format {
            what: "pipeline config",
            message: e.to_string(),
        })?;
    Ok(PipelineConfig {
        voxel,
        outlier,
        min_points: doc.min_points,
        emit_raw_clouds: doc.emit_raw_clouds,
        emit_wireframes: doc.emit_wireframes,
        enable_downsample: doc.enable_downsample,
        enable_denoise: doc.enable_denoise,
    })
}

pub fn write_pipeline_config(config: &PipelineConfig) -> String {
    let doc = ConfigDoc {
        schema: CONFIG_SCHEMA.to_string(),
        voxel_size: config.voxel.voxel_size(),
        k_neighbors: config.outlier.k_neighbors(),
        std_ratio: config.outlier.std_ratio(),
        min_points: config.min_points,
        emit_raw_clouds: config.emit_raw_clouds,
        emit_wireframes: config.emit_wireframes,
        enable_downsample: config.enable_downsample,
        enable_denoise: config.enable_denoise,
    };
    serde_json::to_string_pretty(&doc).expect("config document always serializes")
}
