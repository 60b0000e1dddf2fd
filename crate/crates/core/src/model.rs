//! Shared value types for the RGB-D pipeline.
//!
//! Everything here is an immutable value type: constructors validate their
//! invariants and return a [`ModelError`] on violation, after which the data
//! can be shared freely between threads. World-space computation is done in
//! meters as `f64`; 16-bit depth units exist only at the I/O boundary.
//!
//! Conventions:
//! - depth values are z-coordinates along the optical axis, not ray lengths;
//! - pixel coordinates are `(u, v) = (column, row)`, origin top-left, pixel
//!   centers at integer coordinates;
//! - a stored depth value of `0` means "invalid / no measurement".

use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

/// Validation failure while constructing a model type.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with determinant +1 (deviation {deviation:.3e})")]
    NonOrthonormalRotation { deviation: f64 },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid loss parameters: {0}")]
    InvalidLossParams(String),
}

/// Ideal pinhole camera: focal lengths, principal point and sensor size, all
/// in pixels. Skew and lens distortion are not modeled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, ModelError> {
        if !(fx > 0.0 && fx.is_finite()) || !(fy > 0.0 && fy.is_finite()) {
            return Err(ModelError::InvalidIntrinsics(format!(
                "focal lengths must be positive and finite, got fx={fx}, fy={fy}"
            )));
        }
        if width < 1 || height < 1 {
            return Err(ModelError::InvalidIntrinsics(format!(
                "resolution must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(ModelError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} frame"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }
}

/// Proper rigid transform (rotation + translation) between two camera frames.
///
/// By convention throughout this crate the transform maps depth-camera
/// coordinates into color-camera coordinates: `p_color = R * p_depth + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Maximum deviation from orthonormality / unit determinant accepted by
/// [`RigidTransform::new`].
pub const ROTATION_TOL: f64 = 1e-9;

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, ModelError> {
        let gram = rotation.transpose() * rotation;
        let mut deviation: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((gram[(i, j)] - expected).abs());
            }
        }
        deviation = deviation.max((rotation.determinant() - 1.0).abs());
        if !deviation.is_finite() || deviation > ROTATION_TOL {
            return Err(ModelError::NonOrthonormalRotation { deviation });
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(ModelError::InvalidIntrinsics(
                "translation must be finite".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Applies the transform to a point.
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// The inverse transform. Exact up to floating-point rounding since the
    /// rotation is orthonormal (`R⁻¹ = Rᵀ`).
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Rectangular grid of 16-bit depth samples plus the metric scale of one
/// depth unit. A sample of `0` marks invalid depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    width: u32,
    height: u32,
    data: Vec<u16>,
    depth_scale: f64,
}

impl DepthFrame {
    pub fn new(
        width: u32,
        height: u32,
        data: Vec<u16>,
        depth_scale: f64,
    ) -> Result<Self, ModelError> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(ModelError::InvalidFrame(format!(
                "depth data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if !(depth_scale > 0.0 && depth_scale.is_finite()) {
            return Err(ModelError::InvalidFrame(format!(
                "depth scale must be positive and finite, got {depth_scale}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            depth_scale,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn depth_scale(&self) -> f64 {
        self.depth_scale
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    /// Raw sample at `(u, v)`; `u` is the column.
    pub fn sample(&self, u: u32, v: u32) -> u16 {
        self.data[(v as usize) * (self.width as usize) + u as usize]
    }

    /// Metric depth at `(u, v)`, or `None` for the invalid sentinel.
    pub fn depth_m(&self, u: u32, v: u32) -> Option<f64> {
        match self.sample(u, v) {
            0 => None,
            raw => Some(raw as f64 * self.depth_scale),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d != 0).count()
    }
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorFrame {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ColorFrame {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ModelError> {
        if data.len() != 3 * (width as usize) * (height as usize) {
            return Err(ModelError::InvalidFrame(format!(
                "color data length {} does not match 3x{}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn rgb(&self, u: u32, v: u32) -> [u8; 3] {
        let i = 3 * ((v as usize) * (self.width as usize) + u as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Row-major boolean image marking one object instance's pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, ModelError> {
        if bits.len() != (width as usize) * (height as usize) {
            return Err(ModelError::InvalidMask(format!(
                "mask bit count {} does not match {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[(v as usize) * (self.width as usize) + u as usize]
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Axis-aligned pixel rectangle `(x1, y1)..(x2, y2)` with `x1 < x2, y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl Rect {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, ModelError> {
        if ![x1, y1, x2, y2].iter().all(|c| c.is_finite()) {
            return Err(ModelError::InvalidDetection(
                "box coordinates must be finite".into(),
            ));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(ModelError::InvalidDetection(format!(
                "box corners must satisfy x1 < x2 and y1 < y2, got ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    /// Restricts the rectangle to `[0, width] x [0, height]`; fails when
    /// nothing of it lies inside the frame.
    pub fn clamped(&self, width: u32, height: u32) -> Result<Rect, ModelError> {
        Rect::new(
            self.x1.max(0.0),
            self.y1.max(0.0),
            self.x2.min(width as f64),
            self.y2.min(height as f64),
        )
    }
}

/// One detector output: class, label, confidence and 2D box in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection2D {
    class_id: i64,
    label: String,
    confidence: f64,
    bbox: Rect,
}

impl Detection2D {
    pub fn new(
        class_id: i64,
        label: String,
        confidence: f64,
        bbox: Rect,
    ) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ModelError::InvalidDetection(format!(
                "confidence must lie in [0, 1], got {confidence}"
            )));
        }
        Ok(Self {
            class_id,
            label,
            confidence,
            bbox,
        })
    }

    pub fn class_id(&self) -> i64 {
        self.class_id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn bbox(&self) -> &Rect {
        &self.bbox
    }

    /// Same detection with its box clamped to the frame bounds.
    pub fn clamped(&self, width: u32, height: u32) -> Result<Detection2D, ModelError> {
        Ok(Detection2D {
            bbox: self.bbox.clamped(width, height)?,
            label: self.label.clone(),
            ..*self
        })
    }
}

/// Unordered 3D point set in meters, with optional per-point RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>, colors: Option<Vec<[u8; 3]>>) -> Result<Self, ModelError> {
        if points
            .iter()
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(ModelError::InvalidCloud(
                "all coordinates must be finite".into(),
            ));
        }
        if let Some(colors) = &colors {
            if colors.len() != points.len() {
                return Err(ModelError::InvalidCloud(format!(
                    "color count {} does not match point count {}",
                    colors.len(),
                    points.len()
                )));
            }
        }
        Ok(Self { points, colors })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            colors: None,
        }
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[[u8; 3]]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Axis-aligned bounding box in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb3 {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl Aabb3 {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Result<Self, ModelError> {
        let finite = min
            .coords
            .iter()
            .chain(max.coords.iter())
            .all(|c| c.is_finite());
        if !finite {
            return Err(ModelError::InvalidBox("corners must be finite".into()));
        }
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(ModelError::InvalidBox(format!(
                "min {:?} exceeds max {:?} on some axis",
                min, max
            )));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> &Point3<f64> {
        &self.min
    }

    pub fn max(&self) -> &Point3<f64> {
        &self.max
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    /// Grows the box by `margin` on every face.
    pub fn inflated(&self, margin: f64) -> Aabb3 {
        Aabb3 {
            min: Point3::new(
                self.min.x - margin,
                self.min.y - margin,
                self.min.z - margin,
            ),
            max: Point3::new(
                self.max.x + margin,
                self.max.y + margin,
                self.max.z + margin,
            ),
        }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.max[i] - self.min[i]).product()
    }
}

/// A reconstructed object: its label, class, 3D points and bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    label: String,
    class_id: i64,
    cloud: PointCloud,
    bbox: Aabb3,
}

impl LabeledCloud {
    pub fn new(
        label: String,
        class_id: i64,
        cloud: PointCloud,
        bbox: Aabb3,
    ) -> Result<Self, ModelError> {
        if let Some(p) = cloud.points().iter().find(|p| !bbox.contains(p)) {
            return Err(ModelError::InvalidBox(format!(
                "box does not enclose cloud point {:?}",
                p
            )));
        }
        Ok(Self {
            label,
            class_id,
            cloud,
            bbox,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn class_id(&self) -> i64 {
        self.class_id
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn bbox(&self) -> &Aabb3 {
        &self.bbox
    }
}

/// Bounding-box regression target: center plus extent, in caller-consistent
/// units (normalized or pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxParams {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxParams {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, ModelError> {
        if w < 0.0 || h < 0.0 {
            return Err(ModelError::InvalidBox(format!(
                "box extent must be non-negative, got w={w}, h={h}"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }
}

/// Focal-loss shape parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl FocalParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self, ModelError> {
        if alpha.is_nan() || alpha <= 0.0 || gamma < 0.0 {
            return Err(ModelError::InvalidLossParams(format!(
                "required alpha > 0 and gamma >= 0, got alpha={alpha}, gamma={gamma}"
            )));
        }
        Ok(Self { alpha, gamma })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rotation_about_z(angle: f64) -> Matrix3<f64> {
        let (s, c) = angle.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn intrinsics_rejects_nonpositive_focal() {
        assert!(CameraIntrinsics::new(-1.0, 500.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(500.0, 0.0, 320.0, 240.0, 640, 480).is_err());
    }

    #[test]
    fn intrinsics_rejects_principal_point_outside_frame() {
        assert!(CameraIntrinsics::new(500.0, 500.0, 640.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 320.0, -0.1, 640, 480).is_err());
    }

    #[test]
    fn rigid_transform_rejects_scaled_rotation() {
        let err = RigidTransform::new(Matrix3::identity() * 2.0, Vector3::zeros());
        assert!(matches!(
            err,
            Err(ModelError::NonOrthonormalRotation { .. })
        ));
    }

    #[test]
    fn rigid_transform_rejects_reflection() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
    }

    #[test]
    fn rigid_transform_roundtrips_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = RigidTransform::new(
            rotation_about_z(0.7) * rotation_about_x(-0.3),
            Vector3::new(0.1, -0.2, 0.05),
        )
        .unwrap();
        let inv = t.inverse();
        for _ in 0..1000 {
            let p = Point3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            let back = inv.apply(&t.apply(&p));
            assert!((back - p).norm() < 1e-9, "{p:?} -> {back:?}");
        }
    }

    fn rotation_about_x(angle: f64) -> Matrix3<f64> {
        let (s, c) = angle.sin_cos();
        Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
    }

    #[test]
    fn depth_frame_checks_data_length_and_scale() {
        assert!(DepthFrame::new(2, 2, vec![0; 3], 0.001).is_err());
        assert!(DepthFrame::new(2, 2, vec![0; 4], 0.0).is_err());
        let f = DepthFrame::new(2, 2, vec![0, 1, 2, 3], 0.001).unwrap();
        assert_eq!(f.depth_m(0, 0), None);
        assert_relative_eq!(f.depth_m(1, 1).unwrap(), 0.003);
        assert_eq!(f.valid_count(), 3);
    }

    #[test]
    fn mask_and_color_dimension_checks() {
        assert!(BinaryMask::new(3, 2, vec![true; 5]).is_err());
        assert!(ColorFrame::new(2, 2, vec![0; 11]).is_err());
    }

    #[test]
    fn detection_invariants() {
        assert!(Rect::new(50.0, 10.0, 10.0, 50.0).is_err());
        let rect = Rect::new(10.0, 10.0, 50.0, 50.0).unwrap();
        assert!(Detection2D::new(0, "cup".into(), 1.5, rect).is_err());
        let det = Detection2D::new(0, "cup".into(), 0.9, rect).unwrap();
        let clamped = det.clamped(40, 480).unwrap();
        assert_eq!(clamped.bbox().x2(), 40.0);
        // fully outside the frame
        assert!(det.clamped(5, 5).is_err());
    }

    #[test]
    fn cloud_rejects_non_finite_and_mismatched_colors() {
        assert!(PointCloud::new(vec![Point3::new(0.0, f64::NAN, 0.0)], None).is_err());
        assert!(PointCloud::new(vec![Point3::origin()], Some(vec![])).is_err());
    }

    #[test]
    fn aabb_ordering_enforced() {
        assert!(Aabb3::new(Point3::new(0.0, 0.0, 1.0), Point3::new(1.0, 1.0, 0.5)).is_err());
    }

    #[test]
    fn labeled_cloud_requires_enclosing_box() {
        let cloud = PointCloud::new(vec![Point3::new(2.0, 0.0, 0.0)], None).unwrap();
        let bbox = Aabb3::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0)).unwrap();
        assert!(LabeledCloud::new("cup".into(), 0, cloud, bbox).is_err());
    }

    #[test]
    fn focal_params_validation() {
        assert!(FocalParams::new(0.0, 2.0).is_err());
        assert!(FocalParams::new(0.25, -1.0).is_err());
        assert!(FocalParams::new(0.25, 0.0).is_ok());
    }
}
