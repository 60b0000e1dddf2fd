//! The `fv-calib/1` calibration document.
//!
//! Carries both pinhole intrinsics, the depth scale, and the extrinsic
//! transform. The extrinsics map depth-camera coordinates into color-camera
//! coordinates (`p_color = R * p_depth + t`); keeping that direction explicit
//! in one place avoids inversion bugs downstream.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{check_schema, IoError};
use crate::model::{CameraIntrinsics, RigidTransform};

pub const CALIB_SCHEMA: &str = "fv-calib/1";

/// Everything needed to interpret a depth/color frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub color: CameraIntrinsics,
    pub depth: CameraIntrinsics,
    /// Meters per 16-bit depth unit.
    pub depth_scale: f64,
    /// Depth-camera → color-camera transform.
    pub extrinsics: RigidTransform,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsDoc {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct ExtrinsicsDoc {
    /// Row-major 3x3 rotation.
    rotation: [f64; 9],
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct CalibrationDoc {
    schema: String,
    color: IntrinsicsDoc,
    depth: IntrinsicsDoc,
    depth_scale: f64,
    extrinsics: ExtrinsicsDoc,
}

fn intrinsics_from_doc(
    doc: &IntrinsicsDoc,
    what: &'static str,
) -> Result<CameraIntrinsics, IoError> {
    CameraIntrinsics::new(doc.fx, doc.fy, doc.cx, doc.cy, doc.width, doc.height)
        .map_err(|source| IoError::Validation { what, source })
}

pub fn parse_calibration(text: &str) -> Result<Calibration, IoError> {
    let doc: CalibrationDoc = serde_json::from_str(text).map_err(|source| IoError::Parse {
        what: "calibration document",
        source,
    })?;
    check_schema("calibration document", CALIB_SCHEMA, &doc.schema)?;

    let color = intrinsics_from_doc(&doc.color, "color intrinsics")?;
    let depth = intrinsics_from_doc(&doc.depth, "depth intrinsics")?;
    if !(doc.depth_scale > 0.0 && doc.depth_scale.is_finite()) {
        return Err(IoError::Format {
            what: "calibration document",
            message: format!(
                "depth_scale must be positive and finite, got {}",
                doc.depth_scale
            ),
        });
    }
    let rotation = Matrix3::from_row_slice(&doc.extrinsics.rotation);
    let translation = Vector3::from_column_slice(&doc.extrinsics.translation);
    let extrinsics =
        RigidTransform::new(rotation, translation).map_err(|source| IoError::Validation {
            what: "extrinsics",
            source,
        })?;

    Ok(Calibration {
        color,
        depth,
        depth_scale: doc.depth_scale,
        extrinsics,
    })
}

pub fn write_calibration(calib: &Calibration) -> String {
    let intr = |k: &CameraIntrinsics| IntrinsicsDoc {
        fx: k.fx(),
        fy: k.fy(),
        cx: k.cx(),
        cy: k.cy(),
        width: k.width(),
        height: k.height(),
    };
    let mut rotation = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            rotation[r * 3 + c] = calib.extrinsics.rotation()[(r, c)];
        }
    }
    let doc = CalibrationDoc {
        schema: CALIB_SCHEMA.to_string(),
        color: intr(&calib.color),
        depth: intr(&calib.depth),
        depth_scale: calib.depth_scale,
        extrinsics: ExtrinsicsDoc {
            rotation,
            translation: [
                calib.extrinsics.translation().x,
                calib.extrinsics.translation().y,
                calib.extrinsics.translation().z,
            ],
        },
    };
    serde_json::to_string_pretty(&doc).expect("calibration document always serializes")
}
