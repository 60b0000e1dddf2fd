//! End-to-end frame processing: align depth into the color frame, restrict
//! masks to valid depth, extract per-object clouds, downsample, denoise and
//! fit boxes — timing every stage — plus a benchmark mode that aggregates
//! per-stage statistics over repeated runs.

use std::fmt;
use std::time::Instant;

use log::warn;

use crate::align::{align_depth_to_color, align_mask_to_depth_domain};
use crate::cloud::{depth_to_cloud, extract_objects};
use crate::cloudproc::{
    compute_aabb, remove_statistical_outliers, voxel_downsample, OutlierParams, VoxelParams,
};
use crate::io::FrameBundle;
use crate::metrics::aggregate;
use crate::model::{BinaryMask, LabeledCloud, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Align,
    FullCloud,
    MaskRestrict,
    Extract,
    Downsample,
    Denoise,
    Aabb,
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            StageKind::Align => "align",
            StageKind::FullCloud => "full_cloud",
            StageKind::MaskRestrict => "mask_restrict",
            StageKind::Extract => "extract",
            StageKind::Downsample => "downsample",
            StageKind::Denoise => "denoise",
            StageKind::Aabb => "aabb",
        };
        f.write_str(name)
    }
}

/// Wall time and (when meaningful) resulting point count of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: StageKind,
    pub millis: f64,
    pub points: Option<usize>,
}

/// Tunable knobs for one pipeline run. The defaults mirror the recommended
/// deployment parameters: 5 mm voxels, 300 neighbors, ratio 2.0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub voxel: VoxelParams,
    pub outlier: OutlierParams,
    /// Minimum raw points for a detection to produce an object.
    pub min_points: usize,
    /// Keep pre-postprocessing per-object clouds in the output.
    pub emit_raw_clouds: bool,
    /// Also write box wireframe geometry when saving results.
    pub emit_wireframes: bool,
    pub enable_downsample: bool,
    pub enable_denoise: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            voxel: VoxelParams::default(),
            outlier: OutlierParams::default(),
            min_points: 1,
            emit_raw_clouds: false,
            emit_wireframes: false,
            enable_downsample: true,
            enable_denoise: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: StageKind,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

fn stage_err<E: std::error::Error + Send + Sync + 'static>(
    stage: StageKind,
) -> impl FnOnce(E) -> PipelineError {
    move |source| PipelineError {
        stage,
        source: Box::new(source),
    }
}

/// Everything one frame produces: post-processed objects, per-stage timings,
/// and (optionally) the raw extracted clouds.
#[derive(Debug)]
pub struct PipelineRun {
    pub objects: Vec<LabeledCloud>,
    pub timings: Vec<StageTiming>,
    /// Populated when `emit_raw_clouds` is set.
    pub raw_objects: Vec<LabeledCloud>,
}

impl PipelineRun {
    pub fn total_millis(&self) -> f64 {
        self.timings.iter().map(|t| t.millis).sum()
    }

    pub fn stage(&self, kind: StageKind) -> Option<&StageTiming> {
        self.timings.iter().find(|t| t.stage == kind)
    }
}

fn time_stage<T>(stage: StageKind, timings: &mut Vec<StageTiming>, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let value = f();
    timings.push(StageTiming {
        stage,
        millis: start.elapsed().as_secs_f64() * 1e3,
        points: None,
    });
    value
}

fn set_points(timings: &mut [StageTiming], points: usize) {
    if let Some(last) = timings.last_mut() {
        last.points = Some(points);
    }
}

/// Runs the full post-detection pipeline on one bundle.
///
/// Stages execute in a fixed order — align, full-view cloud, mask
/// restriction, per-object extraction, voxel downsample, outlier removal,
/// box fitting — and the timing list preserves that order. Disabled stages
/// are skipped entirely. Outputs are deterministic for identical inputs;
/// only the timings vary between runs.
pub fn run_pipeline(
    bundle: &FrameBundle,
    config: &PipelineConfig,
) -> Result<PipelineRun, PipelineError> {
    let mut timings = Vec::new();

    let aligned = time_stage(StageKind::Align, &mut timings, || {
        align_depth_to_color(
            &bundle.depth,
            &bundle.intrinsics_depth,
            &bundle.intrinsics_color,
            &bundle.extrinsics,
        )
    })
    .map_err(stage_err(StageKind::Align))?;
    set_points(&mut timings, aligned.valid_count());

    let full_view = time_stage(StageKind::FullCloud, &mut timings, || {
        depth_to_cloud(
            &aligned,
            &bundle.intrinsics_color,
            None,
            bundle.color.as_ref(),
        )
    })
    .map_err(stage_err(StageKind::FullCloud))?;
    set_points(&mut timings, full_view.len());

    let restricted: Vec<BinaryMask> = time_stage(StageKind::MaskRestrict, &mut timings, || {
        bundle
            .masks
            .iter()
            .map(|m| align_mask_to_depth_domain(m, &aligned))
            .collect::<Result<_, _>>()
    })
    .map_err(stage_err(StageKind::MaskRestrict))?;

    let raw = time_stage(StageKind::Extract, &mut timings, || {
        extract_objects(
            &aligned,
            &bundle.intrinsics_color,
            &bundle.detections,
            &restricted,
            bundle.color.as_ref(),
            config.min_points,
        )
    })
    .map_err(stage_err(StageKind::Extract))?;
    set_points(&mut timings, raw.iter().map(|o| o.cloud().len()).sum());

    let mut clouds: Vec<PointCloud> = raw.iter().map(|o| o.cloud().clone()).collect();

    if config.enable_downsample {
        clouds = time_stage(StageKind::Downsample, &mut timings, || {
            clouds
                .iter()
                .map(|c| voxel_downsample(c, &config.voxel))
                .collect()
        });
        set_points(&mut timings, clouds.iter().map(PointCloud::len).sum());
    }

    if config.enable_denoise {
        for cloud in &clouds {
            if config.outlier.k_neighbors() + 1 > cloud.len() && cloud.len() >= 2 {
                warn!(
                    "outlier removal: k_neighbors={} clamped to {} (cloud has {} points)",
                    config.outlier.k_neighbors(),
                    cloud.len() - 1,
                    cloud.len()
                );
            }
        }
        clouds = time_stage(StageKind::Denoise, &mut timings, || {
            clouds
                .iter()
                .map(|c| remove_statistical_outliers(c, &config.outlier).0)
                .collect()
        });
        set_points(&mut timings, clouds.iter().map(PointCloud::len).sum());
    }

    let objects = time_stage(StageKind::Aabb, &mut timings, || {
        raw.iter()
            .zip(clouds)
            .filter(|(_, cloud)| !cloud.is_empty())
            .map(|(src, cloud)| {
                let bbox = compute_aabb(&cloud).expect("non-empty after filter");
                LabeledCloud::new(src.label().to_string(), src.class_id(), cloud, bbox)
                    .expect("box fitted to the same cloud")
            })
            .collect::<Vec<_>>()
    });
    set_points(&mut timings, objects.iter().map(|o| o.cloud().len()).sum());

    Ok(PipelineRun {
        objects,
        timings,
        raw_objects: if config.emit_raw_clouds {
            raw
        } else {
            Vec::new()
        },
    })
}

/// One line of a benchmark report.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub process: String,
    /// `None` for stages that run outside this pipeline (detector, segmenter).
    pub median_ms: Option<f64>,
    pub mean_ms: Option<f64>,
    pub points: Option<usize>,
}

/// Per-stage timing statistics over repeated runs of one bundle.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub repetitions: usize,
    pub rows: Vec<BenchRow>,
    pub total_median_ms: f64,
    pub total_mean_ms: f64,
    /// `1000 / total_median_ms`.
    pub fps: f64,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>20} {:>16} {:>20}",
            "Process", "Processing time (ms)", "Frame rate (fps)", "Point-cloud density"
        )?;
        let fmt_points = |p: Option<usize>| p.map_or("-".to_string(), |n| n.to_string());
        for row in &self.rows {
            match row.median_ms {
                Some(ms) => writeln!(
                    f,
                    "{:<24} {:>20.3} {:>16.1} {:>20}",
                    row.process,
                    ms,
                    1000.0 / ms.max(f64::EPSILON),
                    fmt_points(row.points),
                )?,
                None => writeln!(
                    f,
                    "{:<24} {:>20} {:>16} {:>20}",
                    row.process,
                    "external",
                    "-",
                    fmt_points(row.points),
                )?,
            }
        }
        writeln!(
            f,
            "{:<24} {:>20.3} {:>16.1} {:>20}",
            "complete pipeline",
            self.total_median_ms,
            self.fps,
            fmt_points(self.rows.last().and_then(|r| r.points)),
        )?;
        write!(
            f,
            "({} repetitions; fps = 1000 / median total ms)",
            self.repetitions
        )
    }
}

/// Runs the pipeline `repetitions` times and reports median/mean wall time
/// per stage plus point counts.
///
/// The 2D detector and segmenter are not part of this pipeline — their rows
/// are present but marked external so the report structure stays complete.
pub fn bench(
    bundle: &FrameBundle,
    config: &PipelineConfig,
    repetitions: usize,
) -> Result<BenchReport, PipelineError> {
    let repetitions = repetitions.max(1);
    let mut runs = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        runs.push(run_pipeline(bundle, config)?);
    }

    let mut rows = vec![
        BenchRow {
            process: "object detection".into(),
            median_ms: None,
            mean_ms: None,
            points: None,
        },
        BenchRow {
            process: "instance segmentation".into(),
            median_ms: None,
            mean_ms: None,
            points: None,
        },
    ];

    let stage_count = runs[0].timings.len();
    for stage_index in 0..stage_count {
        let samples: Vec<f64> = runs.iter().map(|r| r.timings[stage_index].millis).collect();
        let summary = aggregate(&samples).expect("repetitions >= 1");
        rows.push(BenchRow {
            process: runs[0].timings[stage_index].stage.to_string(),
            median_ms: Some(summary.median),
            mean_ms: Some(summary.mean),
            points: runs[0].timings[stage_index].points,
        });
    }

    let totals: Vec<f64> = runs.iter().map(PipelineRun::total_millis).collect();
    let total = aggregate(&totals).expect("repetitions >= 1");
    Ok(BenchReport {
        repetitions,
        rows,
        total_median_ms: total.median,
        total_mean_ms: total.mean,
        fps: 1000.0 / total.median.max(f64::EPSILON),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CameraIntrinsics, Detection2D, Rect, RigidTransform};
    use crate::synth::{ground_truth_mask, render_depth, Plane, Primitive, SceneObject, SceneSpec};
    use nalgebra::{Point3, Vector3};

    fn sphere_bundle() -> FrameBundle {
        let k = CameraIntrinsics::new(120.0, 120.0, 64.0, 48.0, 128, 96).unwrap();
        let scene = SceneSpec::new(
            vec![SceneObject {
                shape: Primitive::Sphere {
                    center: Point3::new(0.0, 0.0, 1.5),
                    radius: 0.3,
                },
                label: "ball".into(),
                class_id: 1,
            }],
            Some(Plane {
                normal: Vector3::new(0.0, 0.0, 1.0),
                offset: 3.0,
            }),
        )
        .unwrap();
        let depth = render_depth(&scene, &k, 0.001);
        let mask = ground_truth_mask(&scene, 0, &k).unwrap();
        let det = Detection2D::new(
            1,
            "ball".into(),
            1.0,
            Rect::new(30.0, 20.0, 100.0, 80.0).unwrap(),
        )
        .unwrap();
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

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            outlier: OutlierParams::new(20, 2.0).unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn single_sphere_bundle_yields_one_object() {
        let bundle = sphere_bundle();
        let run = run_pipeline(&bundle, &small_config()).unwrap();
        assert_eq!(run.objects.len(), 1);
        let bbox = run.objects[0].bbox();
        // visible surface of the sphere: front hemisphere
        assert!(
            (bbox.min().z - 1.2).abs() < 0.01,
            "near face {:?}",
            bbox.min()
        );
        assert!(bbox.max().z <= 1.5 + 0.01, "far face {:?}", bbox.max());
    }

    #[test]
    fn zero_detections_still_reports_align_and_full_cloud() {
        let mut bundle = sphere_bundle();
        bundle.detections.clear();
        bundle.masks.clear();
        let run = run_pipeline(&bundle, &small_config()).unwrap();
        assert!(run.objects.is_empty());
        assert!(run.stage(StageKind::Align).is_some());
        let full = run.stage(StageKind::FullCloud).unwrap();
        assert!(full.points.unwrap() > 0);
    }

    #[test]
    fn stage_order_is_fixed() {
        let run = run_pipeline(&sphere_bundle(), &small_config()).unwrap();
        let order: Vec<StageKind> = run.timings.iter().map(|t| t.stage).collect();
        assert_eq!(
            order,
            vec![
                StageKind::Align,
                StageKind::FullCloud,
                StageKind::MaskRestrict,
                StageKind::Extract,
                StageKind::Downsample,
                StageKind::Denoise,
                StageKind::Aabb,
            ]
        );
    }

    #[test]
    fn disabled_stages_are_skipped() {
        let config = PipelineConfig {
            enable_downsample: false,
            enable_denoise: false,
            ..small_config()
        };
        let run = run_pipeline(&sphere_bundle(), &config).unwrap();
        assert!(run.stage(StageKind::Downsample).is_none());
        assert!(run.stage(StageKind::Denoise).is_none());
        assert_eq!(run.objects.len(), 1);
    }

    #[test]
    fn runs_are_deterministic() {
        let bundle = sphere_bundle();
        let config = small_config();
        let a = run_pipeline(&bundle, &config).unwrap();
        let b = run_pipeline(&bundle, &config).unwrap();
        assert_eq!(a.objects, b.objects);
    }

    #[test]
    fn raw_clouds_emitted_on_request() {
        let config = PipelineConfig {
            emit_raw_clouds: true,
            ..small_config()
        };
        let run = run_pipeline(&sphere_bundle(), &config).unwrap();
        assert_eq!(run.raw_objects.len(), 1);
        assert!(run.raw_objects[0].cloud().len() >= run.objects[0].cloud().len());
    }

    #[test]
    fn denoising_a_speckled_bundle_never_grows_the_box() {
        let mut bundle = sphere_bundle();
        let noise = crate::synth::NoiseSpec::new(0.0, 0.0, 0.01, 0.4, 5).unwrap();
        bundle.depth = crate::synth::inject_noise(&bundle.depth, &noise);

        let denoised = run_pipeline(&bundle, &small_config()).unwrap();
        let raw = run_pipeline(
            &bundle,
            &PipelineConfig {
                enable_denoise: false,
                ..small_config()
            },
        )
        .unwrap();
        assert_eq!(denoised.objects.len(), 1);
        assert_eq!(raw.objects.len(), 1);
        // outliers only inflate extrema, so removing them cannot grow the box
        assert!(
            denoised.objects[0].bbox().volume() <= raw.objects[0].bbox().volume(),
            "denoised {} > raw {}",
            denoised.objects[0].bbox().volume(),
            raw.objects[0].bbox().volume()
        );
    }

    #[test]
    fn bench_single_repetition_matches_one_run() {
        let bundle = sphere_bundle();
        let report = bench(&bundle, &small_config(), 1).unwrap();
        assert_eq!(report.repetitions, 1);
        assert_eq!(report.total_median_ms, report.total_mean_ms);
        // external rows + 7 stages
        assert_eq!(report.rows.len(), 2 + 7);
        assert!(report.rows[0].median_ms.is_none());
        let text = report.to_string();
        assert!(text.contains("Processing time (ms)"));
        assert!(text.contains("Frame rate (fps)"));
        assert!(text.contains("Point-cloud density"));
        assert!(text.contains("external"));
    }

    #[test]
    fn median_total_ignores_one_slow_run() {
        // the bench median uses aggregate(); one outlier cannot move it
        let timings = [5.0, 5.1, 500.0, 5.2, 4.9];
        let summary = aggregate(&timings).unwrap();
        assert_eq!(summary.median, 5.1);
    }
}
