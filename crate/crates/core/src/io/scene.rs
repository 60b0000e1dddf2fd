//! The `fv-scene/1` scene document and `fv-noise/1` noise document consumed
//! by the synthetic renderer.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{check_schema, IoError};
use crate::model::Aabb3;
use crate::synth::{NoiseSpec, Plane, Primitive, SceneObject, SceneSpec};

pub const SCENE_SCHEMA: &str = "fv-scene/1";
pub const NOISE_SCHEMA: &str = "fv-noise/1";

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ShapeDoc {
    Plane { normal: [f64; 3], offset: f64 },
    Sphere { center: [f64; 3], radius: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
}

#[derive(Serialize, Deserialize)]
struct ObjectDoc {
    label: String,
    class_id: i64,
    shape: ShapeDoc,
}

#[derive(Serialize, Deserialize)]
struct BackgroundDoc {
    normal: [f64; 3],
    offset: f64,
}

#[derive(Serialize, Deserialize)]
struct SceneDoc {
    schema: String,
    objects: Vec<ObjectDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    background: Option<BackgroundDoc>,
}

fn shape_from_doc(doc: &ShapeDoc) -> Result<Primitive, IoError> {
    Ok(match doc {
        ShapeDoc::Plane { normal, offset } => Primitive::Plane(Plane {
            normal: Vector3::from_column_slice(normal),
            offset: *offset,
        }),
        ShapeDoc::Sphere { center, radius } => Primitive::Sphere {
            center: Point3::from(*center),
            radius: *radius,
        },
        ShapeDoc::Box { min, max } => {
            let bbox = Aabb3::new(Point3::from(*min), Point3::from(*max)).map_err(|source| {
                IoError::Validation {
                    what: "scene box",
                    source,
                }
            })?;
            Primitive::Box(bbox)
        }
    })
}

fn shape_to_doc(shape: &Primitive) -> ShapeDoc {
    match shape {
        Primitive::Plane(p) => ShapeDoc::Plane {
            normal: [p.normal.x, p.normal.y, p.normal.z],
            offset: p.offset,
        },
        Primitive::Sphere { center, radius } => ShapeDoc::Sphere {
            center: [center.x, center.y, center.z],
            radius: *radius,
        },
        Primitive::Box(bbox) => ShapeDoc::Box {
            min: [bbox.min().x, bbox.min().y, bbox.min().z],
            max: [bbox.max().x, bbox.max().y, bbox.max().z],
        },
    }
}

pub fn parse_scene_spec(text: &str) -> Result<SceneSpec, IoError> {
    let doc: SceneDoc = serde_json::from_str(text).map_err(|source| IoError::Parse {
        what: "scene document",
        source,
    })?;
    check_schema("scene document", SCENE_SCHEMA, &doc.schema)?;
    let objects = doc
        .objects
        .iter()
        .map(|o| {
            Ok(SceneObject {
                shape: shape_from_doc(&o.shape)?,
                label: o.label.clone(),
                class_id: o.class_id,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let background = doc.background.map(|bg| Plane {
        normal: Vector3::from_column_slice(&bg.normal),
        offset: bg.offset,
    });
    SceneSpec::new(objects, background).map_err(|e| IoError::Format {
        what: "scene document",
        message: e.to_string(),
    })
}

pub fn write_scene_spec(scene: &SceneSpec) -> String {
    let doc = SceneDoc {
        schema: SCENE_SCHEMA.to_string(),
        objects: scene
            .objects()
            .iter()
            .map(|o| ObjectDoc {
                label: o.label.clone(),
                class_id: o.class_id,
                shape: shape_to_doc(&o.shape),
            })
            .collect(),
        background: scene.background().map(|bg| BackgroundDoc {
            normal: [bg.normal.x, bg.normal.y, bg.normal.z],
            offset: bg.offset,
        }),
    };
    serde_json::to_string_pretty(&doc).expect("scene document always serializes")
}

#[derive(Serialize, Deserialize)]
struct NoiseDoc {
    schema: String,
    #[serde(default)]
    sigma: f64,
    #[serde(default)]
    dropout_rate: f64,
    #[serde(default)]
    outlier_rate: f64,
    #[serde(default)]
    outlier_magnitude: f64,
    #[serde(default)]
    seed: u64,
}

pub fn parse_noise_spec(text: &str) -> Result<NoiseSpec, IoError> {
    let doc: NoiseDoc = serde_json::from_str(text).map_err(|source| IoError::Parse {
        what: "noise document",
        source,
    })?;
    check_schema("noise document", NOISE_SCHEMA, &doc.schema)?;
    NoiseSpec::new(
        doc.sigma,
        doc.dropout_rate,
        doc.outlier_rate,
        doc.outlier_magnitude,
        doc.seed,
    )
    .map_err(|e| IoError::Format {
        what: "noise document",
        message: e.to_string(),
    })
}

pub fn write_noise_spec(spec: &NoiseSpec) -> String {
    let doc = NoiseDoc {
        schema: NOISE_SCHEMA.to_string(),
        sigma: spec.sigma,
        dropout_rate: spec.dropout_rate,
        outlier_rate: spec.outlier_rate,
        outlier_magnitude: spec.outlier_magnitude,
        seed: spec.seed,
    };
    serde_json::to_string_pretty(&doc).expect("noise document always serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_roundtrip() {
        let text = r#"{
            "schema": "fv-scene/1",
            "objects": [
                {"label": "ball", "class_id": 1,
                 "shape": {"type": "sphere", "center": [0, 0, 2], "radius": 0.5}},
                {"label": "crate", "class_id": 2,
                 "shape": {"type": "box", "min": [-0.1, -0.1, 1.9], "max": [0.1, 0.1, 2.1]}}
            ],
            "background": {"normal": [0, 0, 1], "offset": 3.0}
        }"#;
        let scene = parse_scene_spec(text).unwrap();
        assert_eq!(scene.objects().len(), 2);
        assert!(scene.background().is_some());
        let reparsed = parse_scene_spec(&write_scene_spec(&scene)).unwrap();
        assert_eq!(reparsed, scene);
    }

    #[test]
    fn invalid_sphere_radius_is_rejected() {
        let text = r#"{
            "schema": "fv-scene/1",
            "objects": [{"label": "x", "class_id": 0,
                         "shape": {"type": "sphere", "center": [0,0,2], "radius": -1}}]
        }"#;
        assert!(parse_scene_spec(text).is_err());
    }

    #[test]
    fn noise_roundtrip_and_defaults() {
        let spec = NoiseSpec::new(0.002, 0.01, 0.005, 0.5, 1234).unwrap();
        let reparsed = parse_noise_spec(&write_noise_spec(&spec)).unwrap();
        assert_eq!(reparsed, spec);

        let minimal = parse_noise_spec(r#"{"schema": "fv-noise/1"}"#).unwrap();
        assert_eq!(minimal.sigma, 0.0);
        assert_eq!(minimal.dropout_rate, 0.0);
    }
}
