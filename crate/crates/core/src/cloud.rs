//! Full-view and per-object point-cloud generation from (aligned) depth.

use log::warn;
use thiserror::Error;

use crate::align::backproject;
use crate::cloudproc::compute_aabb;
use crate::model::{
    BinaryMask, CameraIntrinsics, ColorFrame, DepthFrame, Detection2D, LabeledCloud, PointCloud,
};

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
}

/// Back-projects every depth-valid (and mask-true, when a mask is given)
/// pixel into a camera-space point, row-major by source pixel. Colors are
/// copied per pixel when a color frame is supplied.
pub fn depth_to_cloud(
    depth: &DepthFrame,
    k: &CameraIntrinsics,
    mask: Option<&BinaryMask>,
    color: Option<&ColorFrame>,
) -> Result<PointCloud, CloudError> {
    if depth.width() != k.width() || depth.height() != k.height() {
        return Err(CloudError::ShapeMismatch(format!(
            "depth frame is {}x{} but intrinsics say {}x{}",
            depth.width(),
            depth.height(),
            k.width(),
            k.height()
        )));
    }
    for (name, w, h) in [
        mask.map(|m| ("mask", m.width(), m.height())),
        color.map(|c| ("color frame", c.width(), c.height())),
    ]
    .into_iter()
    .flatten()
    {
        if w != depth.width() || h != depth.height() {
            return Err(CloudError::ShapeMismatch(format!(
                "{name} is {w}x{h} but depth is {}x{}",
                depth.width(),
                depth.height()
            )));
        }
    }

    let mut points = Vec::new();
    let mut colors = color.map(|_| Vec::new());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            if let Some(m) = mask {
                if !m.get(u, v) {
                    continue;
                }
            }
            let z = match depth.depth_m(u, v) {
                Some(z) => z,
                None => continue,
            };
            let p = backproject(u as f64, v as f64, z, k).expect("z > 0 for valid samples");
            points.push(p);
            if let (Some(colors), Some(frame)) = (&mut colors, color) {
                colors.push(frame.rgb(u, v));
            }
        }
    }
    Ok(PointCloud::new(points, colors).expect("back-projected points are finite"))
}

/// Builds one labeled cloud per detection from its (already depth-restricted)
/// mask. Detections whose clouds end up below `min_points` are skipped with a
/// warning — a mask falling entirely on invalid depth should be visible, not
/// a silent empty object. Boxes are the raw per-cloud extrema; callers that
/// post-process the clouds recompute them afterwards.
pub fn extract_objects(
    aligned_depth: &DepthFrame,
    k_c: &CameraIntrinsics,
    detections: &[Detection2D],
    masks: &[BinaryMask],
    color: Option<&ColorFrame>,
    min_points: usize,
) -> Result<Vec<LabeledCloud>, CloudError> {
    if detections.len() != masks.len() {
        return Err(CloudError::ShapeMismatch(format!(
            "{} masks for {} detections",
            masks.len(),
            detections.len()
        )));
    }

    let mut objects = Vec::new();
    for (detection, mask) in detections.iter().zip(masks) {
        let cloud = depth_to_cloud(aligned_depth, k_c, Some(mask), color)?;
        if cloud.len() < min_points.max(1) {
            warn!(
                "dropping {:?} (class {}): {} points after masking, need at least {}",
                detection.label(),
                detection.class_id(),
                cloud.len(),
                min_points.max(1)
            );
            continue;
        }
        let bbox = compute_aabb(&cloud).expect("cloud is non-empty here");
        objects.push(
            LabeledCloud::new(
                detection.label().to_string(),
                detection.class_id(),
                cloud,
                bbox,
            )
            .expect("box computed from the same cloud"),
        );
    }
    Ok(objects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rect;
    use nalgebra::Point3;
    use proptest::prelude::*;

    #[test]
    fn all_valid_frame_yields_one_point_per_pixel() {
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
        let depth = DepthFrame::new(640, 480, vec![1500; 640 * 480], 0.001).unwrap();
        let cloud = depth_to_cloud(&depth, &k, None, None).unwrap();
        assert_eq!(cloud.len(), 307_200);
    }

    #[test]
    fn all_invalid_depth_yields_empty_cloud() {
        let k = CameraIntrinsics::new(600.0, 600.0, 1.0, 1.0, 4, 4).unwrap();
        let depth = DepthFrame::new(4, 4, vec![0; 16], 0.001).unwrap();
        assert!(depth_to_cloud(&depth, &k, None, None).unwrap().is_empty());
    }

    #[test]
    fn two_by_two_hand_backprojection() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 2, 2).unwrap();
        let depth = DepthFrame::new(2, 2, vec![1000, 0, 0, 2000], 0.001).unwrap();
        let cloud = depth_to_cloud(&depth, &k, None, None).unwrap();
        assert_eq!(
            cloud.points(),
            &[Point3::new(0.0, 0.0, 1.0), Point3::new(2.0, 2.0, 2.0)]
        );
    }

    #[test]
    fn colors_are_copied_for_emitted_points() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 2, 1).unwrap();
        let depth = DepthFrame::new(2, 1, vec![0, 500], 0.001).unwrap();
        let color = ColorFrame::new(2, 1, vec![9, 9, 9, 10, 20, 30]).unwrap();
        let cloud = depth_to_cloud(&depth, &k, None, Some(&color)).unwrap();
        assert_eq!(cloud.colors().unwrap(), &[[10, 20, 30]]);
    }

    #[test]
    fn mask_dimension_mismatch_is_an_error() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 2, 2).unwrap();
        let depth = DepthFrame::new(2, 2, vec![1; 4], 0.001).unwrap();
        let mask = BinaryMask::filled(3, 2, true);
        assert!(depth_to_cloud(&depth, &k, Some(&mask), None).is_err());
    }

    fn detection(label: &str) -> Detection2D {
        Detection2D::new(0, label.into(), 1.0, Rect::new(0.0, 0.0, 1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn no_detections_no_objects() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 2, 2).unwrap();
        let depth = DepthFrame::new(2, 2, vec![1; 4], 0.001).unwrap();
        let objects = extract_objects(&depth, &k, &[], &[], None, 1).unwrap();
        assert!(objects.is_empty());
    }

    #[test]
    fn extraction_agrees_with_masked_depth_to_cloud() {
        let k = CameraIntrinsics::new(2.0, 2.0, 1.0, 1.0, 3, 3).unwrap();
        let depth = DepthFrame::new(3, 3, vec![0, 100, 0, 200, 300, 0, 0, 0, 400], 0.001).unwrap();
        let mask = BinaryMask::new(
            3,
            3,
            vec![true, true, false, false, true, false, false, false, false],
        )
        .unwrap();
        let objects = extract_objects(
            &depth,
            &k,
            &[detection("cup")],
            std::slice::from_ref(&mask),
            None,
            1,
        )
        .unwrap();
        assert_eq!(objects.len(), 1);
        let direct = depth_to_cloud(&depth, &k, Some(&mask), None).unwrap();
        assert_eq!(objects[0].cloud(), &direct);
        assert_eq!(objects[0].label(), "cup");
    }

    #[test]
    fn empty_masked_cloud_is_skipped_not_failed() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 2, 2).unwrap();
        let depth = DepthFrame::new(2, 2, vec![0; 4], 0.001).unwrap();
        let mask = BinaryMask::filled(2, 2, true);
        let objects = extract_objects(&depth, &k, &[detection("ghost")], &[mask], None, 1).unwrap();
        assert!(objects.is_empty());
    }

    proptest! {
        // Point count equals the brute-force tally of (valid AND masked)
        // pixels, and shrinking the mask never adds points.
        #[test]
        fn point_count_matches_pixel_scan(
            samples in proptest::collection::vec(0u16..300, 12 * 9),
            bits in proptest::collection::vec(any::<bool>(), 12 * 9),
        ) {
            let k = CameraIntrinsics::new(20.0, 20.0, 6.0, 4.0, 12, 9).unwrap();
            let depth = DepthFrame::new(12, 9, samples.clone(), 0.001).unwrap();
            let mask = BinaryMask::new(12, 9, bits.clone()).unwrap();

            let expected = samples
                .iter()
                .zip(&bits)
                .filter(|(&s, &b)| s != 0 && b)
                .count();
            let cloud = depth_to_cloud(&depth, &k, Some(&mask), None).unwrap();
            prop_assert_eq!(cloud.len(), expected);

            // Monotonicity: clearing mask bits can only remove points.
            let mut shrunk_bits = bits.clone();
            for bit in shrunk_bits.iter_mut().step_by(3) {
                *bit = false;
            }
            let shrunk = BinaryMask::new(12, 9, shrunk_bits).unwrap();
            let smaller = depth_to_cloud(&depth, &k, Some(&shrunk), None).unwrap();
            prop_assert!(smaller.len() <= cloud.len());
        }
    }
}
