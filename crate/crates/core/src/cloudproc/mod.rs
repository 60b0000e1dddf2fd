//! Point-cloud post-processing: voxel-grid downsampling, statistical outlier
//! removal and axis-aligned bounding boxes.

mod kdtree;

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::model::{Aabb3, PointCloud};
use kdtree::KdTree;

#[derive(Debug, Error)]
pub enum CloudProcError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("operation requires a non-empty point cloud")]
    EmptyCloud,
}

/// Voxel-grid downsampling parameters. The default edge length of 5 mm is
/// the native RealSense depth-unit scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelParams {
    voxel_size: f64,
}

impl VoxelParams {
    pub fn new(voxel_size: f64) -> Result<Self, CloudProcError> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(CloudProcError::InvalidParams(format!(
                "voxel size must be positive and finite, got {voxel_size}"
            )));
        }
        Ok(Self { voxel_size })
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }
}

impl Default for VoxelParams {
    fn default() -> Self {
        Self { voxel_size: 0.005 }
    }
}

/// Statistical outlier removal parameters: a point is dropped when its mean
/// distance to the `k_neighbors` nearest points exceeds the global mean by
/// more than `std_ratio` standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierParams {
    k_neighbors: usize,
    std_ratio: f64,
}

impl OutlierParams {
    pub fn new(k_neighbors: usize, std_ratio: f64) -> Result<Self, CloudProcError> {
        if k_neighbors < 1 {
            return Err(CloudProcError::InvalidParams(
                "k_neighbors must be at least 1".into(),
            ));
        }
        if !(std_ratio > 0.0 && std_ratio.is_finite()) {
            return Err(CloudProcError::InvalidParams(format!(
                "std_ratio must be positive and finite, got {std_ratio}"
            )));
        }
        Ok(Self {
            k_neighbors,
            std_ratio,
        })
    }

    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }

    pub fn std_ratio(&self) -> f64 {
        self.std_ratio
    }
}

impl Default for OutlierParams {
    fn default() -> Self {
        Self {
            k_neighbors: 300,
            std_ratio: 2.0,
        }
    }
}

fn voxel_key(p: &Point3<f64>, size: f64) -> (i64, i64, i64) {
    // Keyed (z, y, x) so the BTreeMap iteration order matches the documented
    // output ordering.
    (
        (p.z / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.x / size).floor() as i64,
    )
}

struct VoxelAccumulator {
    sum: Vector3<f64>,
    color_sum: [f64; 3],
    count: usize,
}

/// Replaces every occupied voxel by the centroid of its points.
///
/// Output points are ordered by ascending voxel key (z, then y, then x);
/// colors, when present, are averaged per voxel.
pub fn voxel_downsample(cloud: &PointCloud, params: &VoxelParams) -> PointCloud {
    let size = params.voxel_size;
    let mut voxels: BTreeMap<(i64, i64, i64), VoxelAccumulator> = BTreeMap::new();

    for (i, p) in cloud.points().iter().enumerate() {
        let acc = voxels
            .entry(voxel_key(p, size))
            .or_insert(VoxelAccumulator {
                sum: Vector3::zeros(),
                color_sum: [0.0; 3],
                count: 0,
            });
        acc.sum += p.coords;
        if let Some(colors) = cloud.colors() {
            for (sum, &channel) in acc.color_sum.iter_mut().zip(&colors[i]) {
                *sum += channel as f64;
            }
        }
        acc.count += 1;
    }

    let mut points = Vec::with_capacity(voxels.len());
    let mut colors = cloud.colors().map(|_| Vec::with_capacity(voxels.len()));
    for acc in voxels.values() {
        let inv = 1.0 / acc.count as f64;
        points.push(Point3::from(acc.sum * inv));
        if let Some(colors) = &mut colors {
            colors.push([
                (acc.color_sum[0] * inv).round().clamp(0.0, 255.0) as u8,
                (acc.color_sum[1] * inv).round().clamp(0.0, 255.0) as u8,
                (acc.color_sum[2] * inv).round().clamp(0.0, 255.0) as u8,
            ]);
        }
    }
    PointCloud::new(points, colors).expect("centroids of finite points are finite")
}

/// Per-point mean distance to the `k` nearest neighbors.
///
/// Each point's neighbor distances are accumulated in ascending
/// `(distance², index)` order, which pins the floating-point result exactly —
/// a brute-force scan summing in the same order reproduces it bit for bit.
fn mean_knn_distances(points: &[Point3<f64>], k: usize) -> Vec<f64> {
    let tree = KdTree::build(points);
    (0..points.len())
        .map(|i| {
            let neighbors = tree.k_nearest(points, i, k);
            let sum: f64 = neighbors.iter().map(|n| n.d2.sqrt()).sum();
            sum / k as f64
        })
        .collect()
}

/// Statistical outlier removal.
///
/// Clouds with fewer than 2 points are returned unchanged; `k_neighbors` is
/// clamped to `n - 1`. A point is removed when its mean k-NN distance
/// strictly exceeds `mean + std_ratio * std` (population standard deviation).
/// Removed indices refer to the input ordering; survivors keep their
/// relative order.
pub fn remove_statistical_outliers(
    cloud: &PointCloud,
    params: &OutlierParams,
) -> (PointCloud, Vec<usize>) {
    let n = cloud.len();
    if n < 2 {
        return (cloud.clone(), Vec::new());
    }
    let k = params.k_neighbors.min(n - 1);
    let distances = mean_knn_distances(cloud.points(), k);

    let mean = distances.iter().sum::<f64>() / n as f64;
    let variance = distances
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .sum::<f64>()
        / n as f64;
    let threshold = mean + params.std_ratio * variance.sqrt();

    let mut removed = Vec::new();
    let mut points = Vec::with_capacity(n);
    let mut colors = cloud.colors().map(|_| Vec::with_capacity(n));
    for (i, d) in distances.iter().enumerate() {
        if *d > threshold {
            removed.push(i);
        } else {
            points.push(cloud.points()[i]);
            if let Some(colors) = &mut colors {
                colors.push(cloud.colors().expect("checked above")[i]);
            }
        }
    }
    let kept = PointCloud::new(points, colors).expect("survivors are a subset of a valid cloud");
    (kept, removed)
}

/// Per-axis extrema of a non-empty cloud.
pub fn compute_aabb(cloud: &PointCloud) -> Result<Aabb3, CloudProcError> {
    let mut points = cloud.points().iter();
    let first = points.next().ok_or(CloudProcError::EmptyCloud)?;
    let mut min = *first;
    let mut max = *first;
    for p in points {
        for axis in 0..3 {
            min[axis] = min[axis].min(p[axis]);
            max[axis] = max[axis].max(p[axis]);
        }
    }
    Ok(Aabb3::new(min, max).expect("min <= max by construction"))
}

/// Box rendered as its 8 corners plus the 12 axis-parallel edges connecting
/// min and max coordinates along each axis (index pairs into `corners`).
#[derive(Debug, Clone, PartialEq)]
pub struct Wireframe {
    pub corners: [Point3<f64>; 8],
    pub edges: [[usize; 2]; 12],
}

pub fn aabb_wireframe(bbox: &Aabb3) -> Wireframe {
    // Corner index bit b selects min (0) or max (1) on axis b.
    let pick = |corner: usize, axis: usize| {
        if corner >> axis & 1 == 0 {
            bbox.min()[axis]
        } else {
            bbox.max()[axis]
        }
    };
    let corners = std::array::from_fn(|c| Point3::new(pick(c, 0), pick(c, 1), pick(c, 2)));
    let mut edges = [[0usize; 2]; 12];
    let mut e = 0;
    for corner in 0..8 {
        for axis in 0..3 {
            if corner >> axis & 1 == 0 {
                edges[e] = [corner, corner | 1 << axis];
                e += 1;
            }
        }
    }
    debug_assert_eq!(e, 12);
    Wireframe { corners, edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(
            points
                .iter()
                .map(|p| Point3::new(p[0], p[1], p[2]))
                .collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(VoxelParams::new(0.0).is_err());
        assert!(OutlierParams::new(0, 2.0).is_err());
        assert!(OutlierParams::new(10, -1.0).is_err());
    }

    #[test]
    fn colinear_points_in_one_voxel_average() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let down = voxel_downsample(&c, &VoxelParams::new(5.0).unwrap());
        assert_eq!(down.points(), &[Point3::new(1.0, 0.0, 0.0)]);
    }

    #[test]
    fn points_in_distinct_voxels_pass_through() {
        let c = cloud(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
        let down = voxel_downsample(&c, &VoxelParams::new(5.0).unwrap());
        assert_eq!(down.len(), 2);
        assert_eq!(
            down.points(),
            &[Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 0.0, 0.0)]
        );
    }

    #[test]
    fn output_is_sorted_by_voxel_key_z_y_x() {
        let c = cloud(&[
            [9.0, 0.0, 0.0],
            [0.0, 0.0, 9.0],
            [0.0, 9.0, 0.0],
            [0.0, 0.0, 0.0],
        ]);
        let down = voxel_downsample(&c, &VoxelParams::new(5.0).unwrap());
        let keys: Vec<_> = down.points().iter().map(|p| voxel_key(p, 5.0)).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn colors_average_per_voxel() {
        let c = PointCloud::new(
            vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)],
            Some(vec![[0, 0, 100], [10, 0, 101]]),
        )
        .unwrap();
        let down = voxel_downsample(&c, &VoxelParams::new(5.0).unwrap());
        assert_eq!(down.colors().unwrap(), &[[5, 0, 101]]); // 100.5 rounds up
    }

    #[test]
    fn identical_points_are_never_outliers() {
        let c = cloud(&[[1.0, 2.0, 3.0]; 20]);
        let (kept, removed) = remove_statistical_outliers(&c, &OutlierParams::new(5, 2.0).unwrap());
        assert!(removed.is_empty());
        assert_eq!(kept.len(), 20);
    }

    #[test]
    fn single_far_point_is_removed() {
        let mut points: Vec<[f64; 3]> = Vec::new();
        for x in 0..10 {
            for y in 0..10 {
                points.push([x as f64, y as f64, 0.0]);
            }
        }
        points.push([1000.0, 0.0, 0.0]);
        let c = cloud(&points);
        let (kept, removed) = remove_statistical_outliers(&c, &OutlierParams::new(5, 2.0).unwrap());
        assert_eq!(removed, vec![100]);
        assert_eq!(kept.len(), 100);
        // Survivors keep their coordinates and order.
        assert_eq!(kept.points()[0], Point3::new(0.0, 0.0, 0.0));
        assert_eq!(kept.points()[99], Point3::new(9.0, 9.0, 0.0));
    }

    #[test]
    fn tiny_clouds_are_returned_unchanged() {
        let empty = PointCloud::empty();
        let (kept, removed) = remove_statistical_outliers(&empty, &OutlierParams::default());
        assert!(kept.is_empty() && removed.is_empty());

        let single = cloud(&[[1.0, 1.0, 1.0]]);
        let (kept, removed) = remove_statistical_outliers(&single, &OutlierParams::default());
        assert_eq!(kept.len(), 1);
        assert!(removed.is_empty());
    }

    #[test]
    fn aabb_examples() {
        assert!(matches!(
            compute_aabb(&PointCloud::empty()),
            Err(CloudProcError::EmptyCloud)
        ));
        let single = compute_aabb(&cloud(&[[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(single.min(), single.max());

        let bbox = compute_aabb(&cloud(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(*bbox.min(), Point3::new(0.0, 0.0, 0.0));
        assert_eq!(*bbox.max(), Point3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn wireframe_unit_cube() {
        let bbox = Aabb3::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0)).unwrap();
        let wf = aabb_wireframe(&bbox);
        assert_eq!(wf.edges.len(), 12);
        for [a, b] in wf.edges {
            let d = wf.corners[b] - wf.corners[a];
            assert_eq!(d.norm(), 1.0);
            // axis-parallel: exactly one non-zero component
            let nonzero = (0..3).filter(|&i| d[i] != 0.0).count();
            assert_eq!(nonzero, 1);
        }
        // every edge connects corners differing in exactly one axis bit
        for [a, b] in wf.edges {
            assert_eq!((a ^ b).count_ones(), 1);
        }
    }

    #[test]
    fn wireframe_degenerate_box() {
        let p = Point3::new(0.5, 0.5, 0.5);
        let wf = aabb_wireframe(&Aabb3::new(p, p).unwrap());
        assert!(wf.corners.iter().all(|c| *c == p));
        for [a, b] in wf.edges {
            assert_eq!(wf.corners[a], wf.corners[b]);
        }
    }

    proptest! {
        #[test]
        fn downsample_never_grows_and_stays_near_inputs(
            coords in proptest::collection::vec(-20.0..20.0f64, 3..600),
            voxel in 0.5..10.0f64,
        ) {
            let points: Vec<Point3<f64>> = coords
                .chunks_exact(3)
                .map(|c| Point3::new(c[0], c[1], c[2]))
                .collect();
            let c = PointCloud::new(points, None).unwrap();
            let params = VoxelParams::new(voxel).unwrap();
            let down = voxel_downsample(&c, &params);
            prop_assert!(down.len() <= c.len());
            let reach = voxel * 3.0f64.sqrt();
            for p in down.points() {
                let nearest = c.points().iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(nearest <= reach, "centroid {p:?} is {nearest} from the cloud");
            }
            // Second pass can only shrink further.
            let twice = voxel_downsample(&down, &params);
            prop_assert!(twice.len() <= down.len());
            // Downsampled extent is contained in the original extent.
            if !down.is_empty() {
                let inner = compute_aabb(&down).unwrap();
                let outer = compute_aabb(&c).unwrap();
                prop_assert!(outer.contains(inner.min()) && outer.contains(inner.max()));
            }
        }

        #[test]
        fn outlier_removal_is_conservative(
            coords in proptest::collection::vec(-5.0..5.0f64, 6..300),
            k in 1usize..40,
            ratio in 0.5..4.0f64,
        ) {
            let points: Vec<Point3<f64>> = coords
                .chunks_exact(3)
                .map(|c| Point3::new(c[0], c[1], c[2]))
                .collect();
            let c = PointCloud::new(points.clone(), None).unwrap();
            let (kept, removed) = remove_statistical_outliers(
                &c,
                &OutlierParams::new(k, ratio).unwrap(),
            );
            prop_assert!(removed.len() < c.len(), "strict > never removes the whole cloud");
            prop_assert_eq!(kept.len() + removed.len(), c.len());
            // Survivors are the non-removed inputs, coordinates untouched, order kept.
            let removed_set: std::collections::HashSet<usize> = removed.iter().copied().collect();
            let expected: Vec<Point3<f64>> = points
                .iter()
                .enumerate()
                .filter(|(i, _)| !removed_set.contains(i))
                .map(|(_, p)| *p)
                .collect();
            prop_assert_eq!(kept.points(), expected.as_slice());
        }
    }
}
