//! Readers and writers for every on-disk format: calibration, depth and
//! color frames, masks (PNG and RLE), detections, point clouds (PLY),
//! box reports, scenes and pipeline configs.
//!
//! All structured-text documents are JSON with a versioned `schema` field so
//! upstream tools (detectors, segmenters, annotators) can target a stable
//! contract. Parsing never panics on arbitrary bytes; every failure is a
//! typed [`IoError`].

mod boxes;
mod bundle;
mod calibration;
mod config;
mod detections;
mod image;
mod ply;
mod rle;
mod scene;

pub use boxes::{read_boxes, write_boxes, BoxObject};
pub use bundle::{load_bundle, save_bundle, FrameBundle};
pub use calibration::{parse_calibration, write_calibration, Calibration};
pub use config::{parse_pipeline_config, write_pipeline_config};
pub use detections::{load_detections, write_detections};
pub use image::{
    load_color_png, load_depth_png, load_mask, load_soft_mask, save_color_png, save_depth_png,
    save_mask,
};
pub use ply::{read_ply, write_ply};
pub use rle::{rle_decode, rle_encode};
pub use scene::{parse_noise_spec, parse_scene_spec, write_noise_spec, write_scene_spec};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum IoError {
    /// The document is not syntactically valid for its format.
    #[error("failed to parse {what}: {source}")]
    Parse {
        what: &'static str,
        source: serde_json::Error,
    },
    /// The document parsed but declares an unknown schema version.
    #[error("{what} has unsupported schema {got:?} (expected {expected:?})")]
    Schema {
        what: &'static str,
        expected: &'static str,
        got: String,
    },
    /// Structural problem that is not a syntax error (wrong bit depth,
    /// mismatched sizes, unsupported PLY elements, ...).
    #[error("{what}: {message}")]
    Format { what: &'static str, message: String },
    /// The document was well-formed but violates a model invariant.
    #[error("invalid {what}: {source}")]
    Validation {
        what: &'static str,
        source: ModelError,
    },
    #[error("png decode error: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("png encode error: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Checks a document's `schema` tag against the expected identifier.
fn check_schema(what: &'static str, expected: &'static str, got: &str) -> Result<(), IoError> {
    if got == expected {
        Ok(())
    } else {
        Err(IoError::Schema {
            what,
            expected,
            got: got.to_string(),
        })
    }
}
