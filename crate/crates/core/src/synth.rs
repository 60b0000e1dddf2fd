//! Synthetic RGB-D scene oracle.
//!
//! Ray-casts analytic primitives (planes, spheres, boxes) into depth frames
//! with exact per-object masks and analytic bounding boxes, and injects
//! controlled sensor-style noise. This stands in for a physical camera and
//! detector so every geometric stage downstream can be tested against ground
//! truth.
//!
//! Rays go through pixel centers using the same pinhole model as
//! [`crate::align::backproject`], with direction `((u-cx)/fx, (v-cy)/fy, 1)`;
//! since the z-component is 1, the ray parameter of a hit *is* its depth.
//! Depth is quantized to integer units inside the renderer so tests exercise
//! the real 16-bit I/O path.

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::align::backproject;
use crate::model::{Aabb3, BinaryMask, CameraIntrinsics, DepthFrame};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error("object index {index} out of range ({count} objects)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("no finite bounding box for an unbounded plane")]
    UnboundedPrimitive,
}

/// Infinite plane `normal · p = offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Plane(Plane),
    Sphere { center: Point3<f64>, radius: f64 },
    Box(Aabb3),
}

impl Primitive {
    fn validate(&self) -> Result<(), SynthError> {
        match self {
            Primitive::Plane(p) => {
                if p.normal.norm_squared() == 0.0 || !p.offset.is_finite() {
                    return Err(SynthError::InvalidScene(
                        "plane needs a non-zero normal and finite offset".into(),
                    ));
                }
            }
            Primitive::Sphere { radius, .. } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(SynthError::InvalidScene(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
            }
            Primitive::Box(_) => {} // Aabb3 enforces min <= max on construction
        }
        Ok(())
    }

    /// Nearest positive ray parameter for the ray `t * dir` from the origin,
    /// or `None` when the primitive is missed.
    fn intersect(&self, dir: &Vector3<f64>) -> Option<f64> {
        const T_MIN: f64 = 1e-12;
        match self {
            Primitive::Plane(p) => {
                let denom = p.normal.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = p.offset / denom;
                (t > T_MIN).then_some(t)
            }
            Primitive::Sphere { center, radius } => {
                let a = dir.norm_squared();
                let b = dir.dot(&center.coords);
                let c = center.coords.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let near = (b - sq) / a;
                if near > T_MIN {
                    return Some(near);
                }
                let far = (b + sq) / a;
                (far > T_MIN).then_some(far)
            }
            Primitive::Box(bbox) => {
                let (mut enter, mut exit) = (f64::NEG_INFINITY, f64::INFINITY);
                for axis in 0..3 {
                    let (lo, hi) = (bbox.min()[axis], bbox.max()[axis]);
                    if dir[axis] == 0.0 {
                        if !(lo <= 0.0 && 0.0 <= hi) {
                            return None;
                        }
                        continue;
                    }
                    let t0 = lo / dir[axis];
                    let t1 = hi / dir[axis];
                    enter = enter.max(t0.min(t1));
                    exit = exit.min(t0.max(t1));
                }
                if enter > exit {
                    return None;
                }
                if enter > T_MIN {
                    Some(enter)
                } else {
                    (exit > T_MIN).then_some(exit)
                }
            }
        }
    }
}

/// One object to render: geometry plus the detection metadata the synthetic
/// bundle will carry for it.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub shape: Primitive,
    pub label: String,
    pub class_id: i64,
}

/// An object arrangement; the optional background plane occludes like any
/// primitive but is not an indexable object.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    objects: Vec<SceneObject>,
    background: Option<Plane>,
}

impl SceneSpec {
    pub fn new(objects: Vec<SceneObject>, background: Option<Plane>) -> Result<Self, SynthError> {
        for object in &objects {
            object.shape.validate()?;
        }
        if let Some(bg) = &background {
            Primitive::Plane(*bg).validate()?;
        }
        Ok(Self {
            objects,
            background,
        })
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn background(&self) -> Option<&Plane> {
        self.background.as_ref()
    }

    /// Nearest hit along the pixel ray: `(t, Some(object_index))`, with
    /// `None` for the background plane.
    fn nearest_hit(&self, dir: &Vector3<f64>) -> Option<(f64, Option<usize>)> {
        let mut best: Option<(f64, Option<usize>)> = None;
        let hits = self
            .objects
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.shape.intersect(dir).map(|t| (t, Some(i))))
            .chain(
                self.background
                    .and_then(|bg| Primitive::Plane(bg).intersect(dir))
                    .map(|t| (t, None)),
            );
        for (t, index) in hits {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, index));
            }
        }
        best
    }
}

fn pixel_ray(u: u32, v: u32, k: &CameraIntrinsics) -> Vector3<f64> {
    backproject(u as f64, v as f64, 1.0, k)
        .expect("unit depth is valid")
        .coords
}

/// Ray-casts the scene into a quantized depth frame. Pixels that miss every
/// primitive — or whose depth cannot be represented in 16-bit units — stay
/// invalid.
pub fn render_depth(scene: &SceneSpec, k: &CameraIntrinsics, depth_scale: f64) -> DepthFrame {
    let mut data = Vec::with_capacity((k.width() * k.height()) as usize);
    for v in 0..k.height() {
        for u in 0..k.width() {
            let dir = pixel_ray(u, v, k);
            let value = match scene.nearest_hit(&dir) {
                Some((t, _)) => {
                    let units = (t / depth_scale).round();
                    if (1.0..=u16::MAX as f64).contains(&units) {
                        units as u16
                    } else {
                        0
                    }
                }
                None => 0,
            };
            data.push(value);
        }
    }
    DepthFrame::new(k.width(), k.height(), data, depth_scale).expect("sized to intrinsics")
}

/// True exactly where `object_index` is the nearest hit.
pub fn ground_truth_mask(
    scene: &SceneSpec,
    object_index: usize,
    k: &CameraIntrinsics,
) -> Result<BinaryMask, SynthError> {
    if object_index >= scene.objects.len() {
        return Err(SynthError::IndexOutOfRange {
            index: object_index,
            count: scene.objects.len(),
        });
    }
    let mut bits = Vec::with_capacity((k.width() * k.height()) as usize);
    for v in 0..k.height() {
        for u in 0..k.width() {
            let dir = pixel_ray(u, v, k);
            bits.push(matches!(scene.nearest_hit(&dir), Some((_, Some(i))) if i == object_index));
        }
    }
    Ok(BinaryMask::new(k.width(), k.height(), bits).expect("sized to intrinsics"))
}

/// Analytic bounding box of a bounded primitive.
pub fn ground_truth_aabb(primitive: &Primitive) -> Result<Aabb3, SynthError> {
    match primitive {
        Primitive::Plane(_) => Err(SynthError::UnboundedPrimitive),
        Primitive::Sphere { center, radius } => {
            let r = Vector3::repeat(*radius);
            Ok(Aabb3::new(center - r, center + r).expect("radius > 0"))
        }
        Primitive::Box(bbox) => Ok(*bbox),
    }
}

/// Sensor-noise model: Gaussian depth jitter, dropout (pixels going
/// invalid) and speckle outliers displaced along the ray by a fixed
/// magnitude with random sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub dropout_rate: f64,
    pub outlier_rate: f64,
    pub outlier_magnitude: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(
        sigma: f64,
        dropout_rate: f64,
        outlier_rate: f64,
        outlier_magnitude: f64,
        seed: u64,
    ) -> Result<Self, SynthError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(SynthError::InvalidNoise(format!(
                "sigma must be non-negative, got {sigma}"
            )));
        }
        for (name, rate) in [
            ("dropout_rate", dropout_rate),
            ("outlier_rate", outlier_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(SynthError::InvalidNoise(format!(
                    "{name} must lie in [0, 1], got {rate}"
                )));
            }
        }
        if !(outlier_magnitude >= 0.0 && outlier_magnitude.is_finite()) {
            return Err(SynthError::InvalidNoise(format!(
                "outlier_magnitude must be non-negative, got {outlier_magnitude}"
            )));
        }
        Ok(Self {
            sigma,
            dropout_rate,
            outlier_rate,
            outlier_magnitude,
            seed,
        })
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based per-pixel random stream: fully determined by
/// `(seed, pixel_index)` so results do not depend on iteration order.
struct PixelRng {
    state: u64,
}

impl PixelRng {
    fn new(seed: u64, pixel_index: u64) -> Self {
        let mut state = seed ^ pixel_index.wrapping_mul(0xD1B5_4A32_D192_ED03);
        // burn one round so nearby pixel indices decorrelate
        splitmix64(&mut state);
        Self { state }
    }

    fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform in [0, 1).
    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller.
    fn next_gaussian(&mut self) -> f64 {
        let u1 = (self.next_u64() >> 11).max(1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Perturbs valid pixels; invalid pixels stay invalid. With all rates and
/// sigma at zero the input is returned bit-exactly.
pub fn inject_noise(depth: &DepthFrame, spec: &NoiseSpec) -> DepthFrame {
    let scale = depth.depth_scale();
    let data = depth
        .data()
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            if value == 0 {
                return 0;
            }
            let mut rng = PixelRng::new(spec.seed, i as u64);
            if rng.next_f64() < spec.dropout_rate {
                return 0;
            }
            let is_outlier = rng.next_f64() < spec.outlier_rate;
            if !is_outlier && spec.sigma == 0.0 {
                return value;
            }
            let mut z = value as f64 * scale;
            if spec.sigma > 0.0 {
                z += spec.sigma * rng.next_gaussian();
            }
            if is_outlier {
                let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
                z += sign * spec.outlier_magnitude;
            }
            let units = (z / scale).round();
            if (1.0..=u16::MAX as f64).contains(&units) {
                units as u16
            } else {
                0
            }
        })
        .collect();
    DepthFrame::new(depth.width(), depth.height(), data, scale).expect("same dimensions")
}
