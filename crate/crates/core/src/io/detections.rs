//! The `fv-det/1` detections document — the ingestion contract for whatever
//! 2D detector runs upstream.

use serde::{Deserialize, Serialize};

use super::{check_schema, IoError};
use crate::model::{Detection2D, Rect};

pub const DET_SCHEMA: &str = "fv-det/1";

#[derive(Serialize, Deserialize)]
struct DetectionDoc {
    class_id: i64,
    label: String,
    confidence: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct DetectionsDoc {
    schema: String,
    detections: Vec<DetectionDoc>,
}

pub fn load_detections(text: &str) -> Result<Vec<Detection2D>, IoError> {
    let doc: DetectionsDoc = serde_json::from_str(text).map_err(|source| IoError::Parse {
        what: "detections document",
        source,
    })?;
    check_schema("detections document", DET_SCHEMA, &doc.schema)?;
    doc.detections
        .into_iter()
        .map(|d| {
            let rect = Rect::new(d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3])
                .and_then(|rect| Detection2D::new(d.class_id, d.label, d.confidence, rect));
            rect.map_err(|source| IoError::Validation {
                what: "detection",
                source,
            })
        })
        .collect()
}

pub fn write_detections(detections: &[Detection2D]) -> String {
    let doc = DetectionsDoc {
        schema: DET_SCHEMA.to_string(),
        detections: detections
            .iter()
            .map(|d| DetectionDoc {
                class_id: d.class_id(),
                label: d.label().to_string(),
                confidence: d.confidence(),
                bbox: [d.bbox().x1(), d.bbox().y1(), d.bbox().x2(), d.bbox().y2()],
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("detections document always serializes")
}
