//! Pinhole projection, back-projection and depth-to-color alignment.
//!
//! Alignment forward-splats every valid depth pixel: back-project with the
//! depth intrinsics, transform into the color camera, project with the color
//! intrinsics, round to the nearest pixel and keep the smallest z on
//! collisions. Pixels never written stay invalid; no hole filling is done
//! (denoising happens later in 3D). The min-z collision rule makes the result
//! independent of pixel iteration order.

use nalgebra::Point3;
use thiserror::Error;

use crate::model::{BinaryMask, CameraIntrinsics, DepthFrame, RigidTransform};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("depth must be positive, got z={0}")]
    InvalidDepth(f64),
    #[error("point is behind the camera (z={0})")]
    BehindCamera(f64),
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
}

/// Lifts pixel `(u, v)` with metric depth `z` to a camera-space point.
pub fn backproject(
    u: f64,
    v: f64,
    z: f64,
    k: &CameraIntrinsics,
) -> Result<Point3<f64>, AlignError> {
    if z.is_nan() || z <= 0.0 {
        return Err(AlignError::InvalidDepth(z));
    }
    Ok(Point3::new(
        (u - k.cx()) * z / k.fx(),
        (v - k.cy()) * z / k.fy(),
        z,
    ))
}

/// Projects a camera-space point to continuous pixel coordinates `(u, v)`.
pub fn project(p: &Point3<f64>, k: &CameraIntrinsics) -> Result<(f64, f64), AlignError> {
    if p.z.is_nan() || p.z <= 0.0 {
        return Err(AlignError::BehindCamera(p.z));
    }
    Ok((k.fx() * p.x / p.z + k.cx(), k.fy() * p.y / p.z + k.cy()))
}

/// Re-renders `depth` into the color camera's pixel grid.
///
/// `t_cd` maps depth-camera coordinates into color-camera coordinates. The
/// output frame has the color intrinsics' dimensions and the input's depth
/// scale; out-of-frame projections are dropped, collisions keep the smaller
/// z, and untouched pixels remain invalid.
pub fn align_depth_to_color(
    depth: &DepthFrame,
    k_d: &CameraIntrinsics,
    k_c: &CameraIntrinsics,
    t_cd: &RigidTransform,
) -> Result<DepthFrame, AlignError> {
    if depth.width() != k_d.width() || depth.height() != k_d.height() {
        return Err(AlignError::ShapeMismatch(format!(
            "depth frame is {}x{} but depth intrinsics are {}x{}",
            depth.width(),
            depth.height(),
            k_d.width(),
            k_d.height()
        )));
    }

    let out_w = k_c.width() as usize;
    let out_h = k_c.height() as usize;
    // Accumulate metric z so the collision rule compares unquantized values.
    let mut z_buffer = vec![f64::INFINITY; out_w * out_h];

    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let z = match depth.depth_m(u, v) {
                Some(z) => z,
                None => continue,
            };
            let p_d = backproject(u as f64, v as f64, z, k_d).expect("z > 0 by construction");
            let p_c = t_cd.apply(&p_d);
            if p_c.z <= 0.0 {
                continue;
            }
            let (uc, vc) = project(&p_c, k_c).expect("z > 0 checked above");
            let ui = uc.round();
            let vi = vc.round();
            if ui < 0.0 || vi < 0.0 || ui >= out_w as f64 || vi >= out_h as f64 {
                continue;
            }
            let idx = vi as usize * out_w + ui as usize;
            if p_c.z < z_buffer[idx] {
                z_buffer[idx] = p_c.z;
            }
        }
    }

    let scale = depth.depth_scale();
    let data = z_buffer
        .iter()
        .map(|&z| {
            if !z.is_finite() {
                return 0;
            }
            let units = (z / scale).round();
            // A value quantizing to 0 or beyond 16 bits cannot be represented;
            // leave the pixel invalid rather than inventing depth.
            if units < 1.0 || units > u16::MAX as f64 {
                0
            } else {
                units as u16
            }
        })
        .collect();

    Ok(DepthFrame::new(k_c.width(), k_c.height(), data, scale).expect("constructed consistently"))
}

/// Restricts a color-frame mask to the pixels where aligned depth is valid.
pub fn align_mask_to_depth_domain(
    mask: &BinaryMask,
    aligned_depth: &DepthFrame,
) -> Result<BinaryMask, AlignError> {
    if mask.width() != aligned_depth.width() || mask.height() != aligned_depth.height() {
        return Err(AlignError::ShapeMismatch(format!(
            "mask is {}x{} but aligned depth is {}x{}",
            mask.width(),
            mask.height(),
            aligned_depth.width(),
            aligned_depth.height()
        )));
    }
    let bits = mask
        .bits()
        .iter()
        .zip(aligned_depth.data())
        .map(|(&m, &d)| m && d != 0)
        .collect();
    Ok(BinaryMask::new(mask.width(), mask.height(), bits).expect("same dimensions"))
}
