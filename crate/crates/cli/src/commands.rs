//! Implementations behind the `fv` subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use fv_core::align::align_depth_to_color;
use fv_core::cloudproc::aabb_wireframe;
use fv_core::io::{
    load_bundle, load_depth_png, load_detections, load_mask, load_soft_mask, parse_calibration,
    parse_noise_spec, parse_scene_spec, save_bundle, save_depth_png, write_boxes, write_ply,
    BoxObject, FrameBundle,
};
use fv_core::metrics::{
    aggregate, mask_confusion, match_detections, roc_auc, MetricSummary, SoftMask,
};
use fv_core::model::{BinaryMask, Detection2D, LabeledCloud, Rect};
use fv_core::pipeline::{bench as run_bench, run_pipeline, PipelineConfig, PipelineRun};
use fv_core::synth::{ground_truth_aabb, ground_truth_mask, inject_noise, render_depth};

use crate::{input_err, CliError};

pub fn align(calib_path: &Path, depth_path: &Path, out: &Path) -> Result<(), CliError> {
    let calib = parse_calibration(&fs::read_to_string(calib_path)?)?;
    let depth = load_depth_png(&fs::read(depth_path)?, calib.depth_scale)?;
    let aligned = align_depth_to_color(&depth, &calib.depth, &calib.color, &calib.extrinsics)
        .map_err(input_err)?;
    fs::write(out, save_depth_png(&aligned)?)?;
    println!(
        "aligned {}x{} depth into {}x{} color grid ({} valid pixels) -> {}",
        depth.width(),
        depth.height(),
        aligned.width(),
        aligned.height(),
        aligned.valid_count(),
        out.display()
    );
    Ok(())
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_object_plys(dir: &Path, objects: &[LabeledCloud], ascii: bool) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (i, object) in objects.iter().enumerate() {
        let name = format!("{i:03}_{}.ply", sanitize(object.label()));
        fs::write(dir.join(name), write_ply(object.cloud(), !ascii))?;
    }
    Ok(())
}

/// Writes a wireframe as an ASCII PLY with an `edge` element — viewable in
/// standard tools, although not itself a point-cloud file.
fn wireframe_ply(object: &LabeledCloud) -> String {
    let wf = aabb_wireframe(object.bbox());
    let mut out = String::from(
        "ply\nformat ascii 1.0\nelement vertex 8\nproperty float x\nproperty float y\nproperty float z\nelement edge 12\nproperty int vertex1\nproperty int vertex2\nend_header\n",
    );
    for corner in &wf.corners {
        let _ = writeln!(
            out,
            "{} {} {}",
            corner.x as f32, corner.y as f32, corner.z as f32
        );
    }
    for [a, b] in &wf.edges {
        let _ = writeln!(out, "{a} {b}");
    }
    out
}

fn write_run_outputs(
    out_dir: &Path,
    run: &PipelineRun,
    config: &PipelineConfig,
    ascii: bool,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)?;
    write_object_plys(&out_dir.join("objects"), &run.objects, ascii)?;
    let boxes: Vec<BoxObject> = run.objects.iter().map(BoxObject::from).collect();
    fs::write(out_dir.join("boxes.json"), write_boxes(&boxes))?;

    if config.emit_raw_clouds {
        write_object_plys(&out_dir.join("raw"), &run.raw_objects, ascii)?;
    }
    if config.emit_wireframes {
        let dir = out_dir.join("wireframes");
        fs::create_dir_all(&dir)?;
        for (i, object) in run.objects.iter().enumerate() {
            let name = format!("{i:03}_{}.ply", sanitize(object.label()));
            fs::write(dir.join(name), wireframe_ply(object))?;
        }
    }

    let mut timings = String::from("stage\tms\tpoints\n");
    for t in &run.timings {
        let points = t.points.map_or("-".to_string(), |p| p.to_string());
        let _ = writeln!(timings, "{}\t{:.3}\t{}", t.stage, t.millis, points);
    }
    let _ = writeln!(timings, "total\t{:.3}\t-", run.total_millis());
    fs::write(out_dir.join("timings.txt"), timings)?;
    Ok(())
}

pub fn reconstruct(
    bundle_dir: &Path,
    config: &PipelineConfig,
    out_dir: &Path,
    ascii: bool,
) -> Result<(), CliError> {
    let bundle = load_bundle(bundle_dir)?;
    let run = run_pipeline(&bundle, config)?;
    write_run_outputs(out_dir, &run, config, ascii)?;
    println!(
        "{}: {} objects, {:.1} ms -> {}",
        bundle_dir.display(),
        run.objects.len(),
        run.total_millis(),
        out_dir.display()
    );
    Ok(())
}

fn discover_bundles(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    if input.join("calibration.json").exists() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut bundles: Vec<PathBuf> = fs::read_dir(input)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.join("calibration.json").exists())
        .collect();
    bundles.sort();
    if bundles.is_empty() {
        return Err(CliError::Input(format!(
            "{} contains no frame bundles (no calibration.json found)",
            input.display()
        )));
    }
    Ok(bundles)
}

pub fn pipeline(
    input: &Path,
    config: &PipelineConfig,
    out: &Path,
    ascii: bool,
) -> Result<(), CliError> {
    for bundle_dir in discover_bundles(input)? {
        let name = bundle_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "bundle".to_string());
        reconstruct(&bundle_dir, config, &out.join(name), ascii)?;
    }
    Ok(())
}

pub fn synth(
    scene_path: &Path,
    calib_path: &Path,
    noise_path: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let scene = parse_scene_spec(&fs::read_to_string(scene_path)?)?;
    let calib = parse_calibration(&fs::read_to_string(calib_path)?)?;

    // Ground truth comes from the clean render; noise only perturbs the
    // depth that the pipeline will consume.
    let mut depth = render_depth(&scene, &calib.depth, calib.depth_scale);
    if let Some(path) = noise_path {
        let spec = parse_noise_spec(&fs::read_to_string(path)?)?;
        depth = inject_noise(&depth, &spec);
    }

    let mut detections = Vec::new();
    let mut masks: Vec<BinaryMask> = Vec::new();
    let mut truth = Vec::new();
    for (index, object) in scene.objects().iter().enumerate() {
        let mask = ground_truth_mask(&scene, index, &calib.color).map_err(input_err)?;
        let Some(bbox_2d) = mask_bbox(&mask) else {
            warn!(
                "object {index} ({:?}) is not visible; skipping",
                object.label
            );
            continue;
        };
        detections.push(
            Detection2D::new(object.class_id, object.label.clone(), 1.0, bbox_2d)
                .map_err(input_err)?,
        );
        if let Ok(bbox_3d) = ground_truth_aabb(&object.shape) {
            truth.push(BoxObject {
                label: object.label.clone(),
                class_id: object.class_id,
                bbox: bbox_3d,
                point_count: mask.count_true(),
            });
        }
        masks.push(mask);
    }

    let bundle = FrameBundle::new(
        None,
        depth,
        calib.color,
        calib.depth,
        calib.extrinsics,
        detections,
        masks,
    )
    .map_err(input_err)?;
    save_bundle(out, &bundle)?;
    fs::write(out.join("truth_boxes.json"), write_boxes(&truth))?;
    println!(
        "rendered {} objects into {} ({} valid depth pixels)",
        bundle.detections.len(),
        out.display(),
        bundle.depth.valid_count()
    );
    Ok(())
}

/// Tight pixel bounding box of a mask, or `None` when it is empty.
fn mask_bbox(mask: &BinaryMask) -> Option<Rect> {
    let (mut min_u, mut min_v, mut max_u, mut max_v) = (u32::MAX, u32::MAX, 0u32, 0u32);
    for v in 0..mask.height() {
        for u in 0..mask.width() {
            if mask.get(u, v) {
                min_u = min_u.min(u);
                min_v = min_v.min(v);
                max_u = max_u.max(u);
                max_v = max_v.max(v);
            }
        }
    }
    if min_u == u32::MAX {
        return None;
    }
    Rect::new(
        min_u as f64,
        min_v as f64,
        (max_u + 1) as f64,
        (max_v + 1) as f64,
    )
    .ok()
}

/// Masks are grouped per image: `frame.png` and `frame__0.png`,
/// `frame__1.png`, ... all contribute to the union mask of image `frame`.
fn union_masks_by_image(dir: &Path) -> Result<BTreeMap<String, BinaryMask>, CliError> {
    let mut groups: BTreeMap<String, BinaryMask> = BTreeMap::new();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Input(format!(
            "{} contains no .png masks",
            dir.display()
        )));
    }
    for path in files {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let image = stem.split("__").next().unwrap_or(&stem).to_string();
        let mask = load_mask(&fs::read(&path)?)?;
        match groups.remove(&image) {
            None => {
                groups.insert(image, mask);
            }
            Some(existing) => {
                if existing.width() != mask.width() || existing.height() != mask.height() {
                    return Err(CliError::Input(format!(
                        "mask {} does not match earlier masks for image {image:?}",
                        path.display()
                    )));
                }
                let bits = existing
                    .bits()
                    .iter()
                    .zip(mask.bits())
                    .map(|(&a, &b)| a || b)
                    .collect();
                groups.insert(
                    image,
                    BinaryMask::new(existing.width(), existing.height(), bits)
                        .map_err(input_err)?,
                );
            }
        }
    }
    Ok(groups)
}

struct ImageRow {
    image: String,
    values: [f64; 6],
    auc: Option<f64>,
}

const METRIC_NAMES: [&str; 6] = [
    "jaccard",
    "dice",
    "precision",
    "recall",
    "f1",
    "pixel_accuracy",
];

fn format_summary(name: &str, summary: &MetricSummary) -> String {
    format!(
        "{name:<16} {:.4} ± {:.4}   median {:.4}   MAD {:.4}",
        summary.mean, summary.std, summary.median, summary.mad
    )
}

#[allow(clippy::too_many_arguments)]
pub fn metrics(
    pred_dir: &Path,
    gt_dir: &Path,
    soft_dir: Option<&Path>,
    pred_det: Option<&Path>,
    gt_det: Option<&Path>,
    iou_threshold: f64,
    report_path: Option<&Path>,
) -> Result<(), CliError> {
    let gt = union_masks_by_image(gt_dir)?;
    let pred = union_masks_by_image(pred_dir)?;

    let mut rows = Vec::new();
    for (image, gt_mask) in &gt {
        let pred_mask = pred.get(image).ok_or_else(|| {
            CliError::Input(format!(
                "no predicted mask for image {image:?} in {}",
                pred_dir.display()
            ))
        })?;
        let counts = mask_confusion(pred_mask, gt_mask).map_err(input_err)?;
        let auc = match soft_dir {
            Some(dir) => {
                let path = dir.join(format!("{image}.png"));
                if path.exists() {
                    let (w, h, values) = load_soft_mask(&fs::read(&path)?)?;
                    let soft = SoftMask::new(w, h, values).map_err(input_err)?;
                    Some(roc_auc(&soft, gt_mask).map_err(input_err)?)
                } else {
                    None
                }
            }
            None => None,
        };
        rows.push(ImageRow {
            image: image.clone(),
            values: [
                counts.jaccard(),
                counts.dice(),
                counts.precision(),
                counts.recall(),
                counts.f1(),
                counts.pixel_accuracy(),
            ],
            auc,
        });
    }

    let mut report = String::new();
    let _ = writeln!(
        report,
        "{:<20} {:>9} {:>9} {:>9} {:>9} {:>9} {:>15} {:>9}",
        "image", "jaccard", "dice", "precision", "recall", "f1", "pixel_accuracy", "auc"
    );
    for row in &rows {
        let auc = row.auc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(
            report,
            "{:<20} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>15.4} {:>9}",
            row.image,
            row.values[0],
            row.values[1],
            row.values[2],
            row.values[3],
            row.values[4],
            row.values[5],
            auc
        );
    }

    let _ = writeln!(
        report,
        "\nsummary over {} images (mean ± std, median, MAD)",
        rows.len()
    );
    for (m, name) in METRIC_NAMES.iter().enumerate() {
        let values: Vec<f64> = rows.iter().map(|r| r.values[m]).collect();
        let summary = aggregate(&values).map_err(input_err)?;
        let _ = writeln!(report, "{}", format_summary(name, &summary));
    }
    let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
    if aucs.is_empty() {
        let _ = writeln!(report, "{:<16} n/a (requires soft masks)", "auc");
    } else {
        let summary = aggregate(&aucs).map_err(input_err)?;
        let _ = writeln!(report, "{}", format_summary("auc", &summary));
    }

    if let (Some(pred_path), Some(gt_path)) = (pred_det, gt_det) {
        let preds = load_detections(&fs::read_to_string(pred_path)?)?;
        let gts: Vec<(i64, Rect)> = load_detections(&fs::read_to_string(gt_path)?)?
            .iter()
            .map(|d| (d.class_id(), *d.bbox()))
            .collect();
        let _ = writeln!(report, "\nper-class box precision @ IoU {iou_threshold:.2}");
        for (class, precision) in match_detections(&preds, &gts, iou_threshold) {
            let label = preds
                .iter()
                .find(|d| d.class_id() == class)
                .map(|d| d.label().to_string())
                .unwrap_or_else(|| "-".to_string());
            let _ = writeln!(report, "{class:<6} {label:<16} {precision:.4}");
        }
    }

    match report_path {
        Some(path) => {
            fs::write(path, &report)?;
            println!(
                "wrote metrics report for {} images to {}",
                rows.len(),
                path.display()
            );
        }
        None => print!("{report}"),
    }
    Ok(())
}

pub fn bench(
    bundle_dir: &Path,
    config: &PipelineConfig,
    reps: usize,
    report_path: Option<&Path>,
) -> Result<(), CliError> {
    if reps < 1 {
        return Err(CliError::Input("--reps must be at least 1".into()));
    }
    let bundle = load_bundle(bundle_dir)?;
    let report = run_bench(&bundle, config, reps)?;
    let text = report.to_string();
    match report_path {
        Some(path) => {
            fs::write(path, &text)?;
            println!("{text}");
            println!("(report written to {})", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}
