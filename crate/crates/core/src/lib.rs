//! RGB-D frame-bundle processing library.
//!
//! Takes recorded RGB-D captures (depth + calibration + 2D detections and
//! instance masks), aligns depth into the color frame, back-projects masked
//! depth into per-object 3D point clouds, post-processes them (voxel
//! downsampling, statistical outlier removal) and fits axis-aligned bounding
//! boxes. Ships a synthetic scene renderer so the whole geometric path can be
//! exercised against analytic ground truth, plus the segmentation and
//! detection metrics used to evaluate upstream models.

pub mod align;
pub mod cloud;
pub mod cloudproc;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synth;
