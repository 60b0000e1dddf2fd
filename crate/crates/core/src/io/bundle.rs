//! A frame bundle is the on-disk record of one capture:
//!
//! ```text
//! bundle/
//!   calibration.json   fv-calib/1
//!   depth.png          16-bit grayscale, depth-camera pixel grid
//!   color.png          optional 8-bit RGB, color-camera pixel grid
//!   detections.json    fv-det/1
//!   masks/000.png ...  8-bit grayscale, color-camera pixel grid,
//!                      index-parallel to the detections
//! ```

use std::fs;
use std::path::Path;

use super::{
    load_color_png, load_depth_png, load_detections, load_mask, parse_calibration, save_color_png,
    save_depth_png, save_mask, write_calibration, write_detections, Calibration, IoError,
};
use crate::model::{
    BinaryMask, CameraIntrinsics, ColorFrame, DepthFrame, Detection2D, ModelError, RigidTransform,
};

/// One capture with everything the pipeline needs, validated on construction.
#[derive(Debug, Clone)]
pub struct FrameBundle {
    pub color: Option<ColorFrame>,
    pub depth: DepthFrame,
    pub intrinsics_color: CameraIntrinsics,
    pub intrinsics_depth: CameraIntrinsics,
    pub extrinsics: RigidTransform,
    pub detections: Vec<Detection2D>,
    pub masks: Vec<BinaryMask>,
}

impl FrameBundle {
    pub fn new(
        color: Option<ColorFrame>,
        depth: DepthFrame,
        intrinsics_color: CameraIntrinsics,
        intrinsics_depth: CameraIntrinsics,
        extrinsics: RigidTransform,
        detections: Vec<Detection2D>,
        masks: Vec<BinaryMask>,
    ) -> Result<Self, ModelError> {
        if masks.len() != detections.len() {
            return Err(ModelError::InvalidMask(format!(
                "{} masks for {} detections",
                masks.len(),
                detections.len()
            )));
        }
        // Masks annotate the color frame; they must share its pixel grid.
        let (cw, ch) = (intrinsics_color.width(), intrinsics_color.height());
        if let Some(color) = &color {
            if color.width() != cw || color.height() != ch {
                return Err(ModelError::InvalidFrame(format!(
                    "color frame is {}x{} but color intrinsics say {}x{}",
                    color.width(),
                    color.height(),
                    cw,
                    ch
                )));
            }
        }
        for (i, mask) in masks.iter().enumerate() {
            if mask.width() != cw || mask.height() != ch {
                return Err(ModelError::InvalidMask(format!(
                    "mask {i} is {}x{} but the color frame is {}x{}",
                    mask.width(),
                    mask.height(),
                    cw,
                    ch
                )));
            }
        }
        if depth.width() != intrinsics_depth.width() || depth.height() != intrinsics_depth.height()
        {
            return Err(ModelError::InvalidFrame(format!(
                "depth frame is {}x{} but depth intrinsics say {}x{}",
                depth.width(),
                depth.height(),
                intrinsics_depth.width(),
                intrinsics_depth.height()
            )));
        }
        Ok(Self {
            color,
            depth,
            intrinsics_color,
            intrinsics_depth,
            extrinsics,
            detections,
            masks,
        })
    }

    pub fn calibration(&self) -> Calibration {
        Calibration {
            color: self.intrinsics_color,
            depth: self.intrinsics_depth,
            depth_scale: self.depth.depth_scale(),
            extrinsics: self.extrinsics,
        }
    }
}

fn mask_path(dir: &Path, index: usize) -> std::path::PathBuf {
    dir.join("masks").join(format!("{index:03}.png"))
}

/// Reads a bundle directory written by [`save_bundle`] or by hand.
pub fn load_bundle(dir: &Path) -> Result<FrameBundle, IoError> {
    let calib = parse_calibration(&fs::read_to_string(dir.join("calibration.json"))?)?;
    let depth = load_depth_png(&fs::read(dir.join("depth.png"))?, calib.depth_scale)?;
    let color_path = dir.join("color.png");
    let color = if color_path.exists() {
        Some(load_color_png(&fs::read(color_path)?)?)
    } else {
        None
    };
    let detections = load_detections(&fs::read_to_string(dir.join("detections.json"))?)?;
    let mut masks = Vec::with_capacity(detections.len());
    for i in 0..detections.len() {
        masks.push(load_mask(&fs::read(mask_path(dir, i))?)?);
    }
    FrameBundle::new(
        color,
        depth,
        calib.color,
        calib.depth,
        calib.extrinsics,
        detections,
        masks,
    )
    .map_err(|source| IoError::Validation {
        what: "frame bundle",
        source,
    })
}

/// Writes a bundle directory (creating it as needed).
pub fn save_bundle(dir: &Path, bundle: &FrameBundle) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("calibration.json"),
        write_calibration(&bundle.calibration()),
    )?;
    fs::write(dir.join("depth.png"), save_depth_png(&bundle.depth)?)?;
    if let Some(color) = &bundle.color {
        fs::write(dir.join("color.png"), save_color_png(color)?)?;
    }
    fs::write(
        dir.join("detections.json"),
        write_detections(&bundle.detections),
    )?;
    if !bundle.masks.is_empty() {
        fs::create_dir_all(dir.join("masks"))?;
    }
    for (i, mask) in bundle.masks.iter().enumerate() {
        fs::write(mask_path(dir, i), save_mask(mask)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rect;

    fn small_bundle() -> FrameBundle {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 1.5, 4, 3).unwrap();
        let depth = DepthFrame::new(4, 3, (0..12).map(|i| i * 100).collect(), 0.001).unwrap();
        let det =
            Detection2D::new(0, "cup".into(), 0.9, Rect::new(0.0, 0.0, 2.0, 2.0).unwrap()).unwrap();
        let mask = BinaryMask::filled(4, 3, true);
        FrameBundle::new(
            None,
            depth,
            k,
            k,
            RigidTransform::identity(),
            vec![det],
            vec![mask],
        )
        .unwrap()
    }

    #[test]
    fn bundle_roundtrips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = small_bundle();
        save_bundle(dir.path(), &bundle).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert_eq!(loaded.depth, bundle.depth);
        assert_eq!(loaded.detections, bundle.detections);
        assert_eq!(loaded.masks, bundle.masks);
        assert!(loaded.color.is_none());
    }

    #[test]
    fn mask_detection_count_mismatch_is_rejected() {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 1.5, 4, 3).unwrap();
        let depth = DepthFrame::new(4, 3, vec![0; 12], 0.001).unwrap();
        let err = FrameBundle::new(
            None,
            depth,
            k,
            k,
            RigidTransform::identity(),
            vec![],
            vec![BinaryMask::filled(4, 3, false)],
        );
        assert!(err.is_err());
    }

    #[test]
    fn mask_dimensions_must_match_color_grid() {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 1.5, 4, 3).unwrap();
        let depth = DepthFrame::new(4, 3, vec![0; 12], 0.001).unwrap();
        let det =
            Detection2D::new(0, "cup".into(), 0.9, Rect::new(0.0, 0.0, 2.0, 2.0).unwrap()).unwrap();
        let err = FrameBundle::new(
            None,
            depth,
            k,
            k,
            RigidTransform::identity(),
            vec![det],
            vec![BinaryMask::filled(5, 3, false)],
        );
        assert!(err.is_err());
    }
}
