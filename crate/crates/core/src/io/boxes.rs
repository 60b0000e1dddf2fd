//! The `fv-box/1` box report: one axis-aligned box plus point count per
//! reconstructed object. Written by the pipeline, also used for synthetic
//! ground truth.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::{check_schema, IoError};
use crate::model::{Aabb3, LabeledCloud};

pub const BOX_SCHEMA: &str = "fv-box/1";

#[derive(Debug, Clone, PartialEq)]
pub struct BoxObject {
    pub label: String,
    pub class_id: i64,
    pub bbox: Aabb3,
    pub point_count: usize,
}

impl From<&LabeledCloud> for BoxObject {
    fn from(obj: &LabeledCloud) -> Self {
        BoxObject {
            label: obj.label().to_string(),
            class_id: obj.class_id(),
            bbox: *obj.bbox(),
            point_count: obj.cloud().len(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BoxObjectDoc {
    label: String,
    class_id: i64,
    min: [f64; 3],
    max: [f64; 3],
    point_count: usize,
}

#[derive(Serialize, Deserialize)]
struct BoxesDoc {
    schema: String,
    objects: Vec<BoxObjectDoc>,
}

pub fn write_boxes(objects: &[BoxObject]) -> String {
    let doc = BoxesDoc {
        schema: BOX_SCHEMA.to_string(),
        objects: objects
            .iter()
            .map(|o| BoxObjectDoc {
                label: o.label.clone(),
                class_id: o.class_id,
                min: [o.bbox.min().x, o.bbox.min().y, o.bbox.min().z],
                max: [o.bbox.max().x, o.bbox.max().y, o.bbox.max().z],
                point_count: o.point_count,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("box document always serializes")
}

pub fn read_boxes(text: &str) -> Result<Vec<BoxObject>, IoError> {
    let doc: BoxesDoc = serde_json::from_str(text).map_err(|source| IoError::Parse {
        what: "box document",
        source,
    })?;
    check_schema("box document", BOX_SCHEMA, &doc.schema)?;
    doc.objects
        .into_iter()
        .map(|o| {
            let bbox = Aabb3::new(Point3::from(o.min), Point3::from(o.max)).map_err(|source| {
                IoError::Validation {
                    what: "box object",
                    source,
                }
            })?;
            Ok(BoxObject {
                label: o.label,
                class_id: o.class_id,
                bbox,
                point_count: o.point_count,
            })
        })
        .collect()
}
