//! PLY point-cloud reader/writer (ASCII and binary little-endian).
//!
//! Coordinates are stored as 32-bit floats with optional `uchar` RGB; that is
//! what every common viewer expects. Only the `vertex` element is supported —
//! anything else in the header is reported back by name.

use nalgebra::Point3;

use super::IoError;
use crate::model::PointCloud;

fn format_err(message: String) -> IoError {
    IoError::Format {
        what: "ply",
        message,
    }
}

/// Serializes a cloud; `binary` selects `binary_little_endian` over ASCII.
pub fn write_ply(cloud: &PointCloud, binary: bool) -> Vec<u8> {
    let mut out = Vec::new();
    let format = if binary {
        "binary_little_endian"
    } else {
        "ascii"
    };
    out.extend_from_slice(b"ply\n");
    out.extend_from_slice(format!("format {format} 1.0\n").as_bytes());
    out.extend_from_slice(format!("element vertex {}\n", cloud.len()).as_bytes());
    out.extend_from_slice(b"property float x\nproperty float y\nproperty float z\n");
    if cloud.colors().is_some() {
        out.extend_from_slice(b"property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.extend_from_slice(b"end_header\n");

    for (i, p) in cloud.points().iter().enumerate() {
        let (x, y, z) = (p.x as f32, p.y as f32, p.z as f32);
        let rgb = cloud.colors().map(|c| c[i]);
        if binary {
            out.extend_from_slice(&x.to_le_bytes());
            out.extend_from_slice(&y.to_le_bytes());
            out.extend_from_slice(&z.to_le_bytes());
            if let Some([r, g, b]) = rgb {
                out.extend_from_slice(&[r, g, b]);
            }
        } else {
            match rgb {
                Some([r, g, b]) => {
                    out.extend_from_slice(format!("{x} {y} {z} {r} {g} {b}\n").as_bytes())
                }
                None => out.extend_from_slice(format!("{x} {y} {z}\n").as_bytes()),
            }
        }
    }
    out
}

#[derive(PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
}

struct Property {
    kind: String,
    name: String,
}

/// Parses a PLY produced by [`write_ply`] or a compatible tool.
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud, IoError> {
    // The header is ASCII even for binary files; scan for its terminator.
    let header_end = find_header_end(bytes)?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| format_err("header is not valid UTF-8".into()))?;
    let body = &bytes[header_end..];

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(format_err("missing ply magic".into()));
    }

    let mut format = None;
    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<Property> = Vec::new();
    let mut unsupported_elements: Vec<String> = Vec::new();
    let mut in_vertex_element = false;

    for line in lines {
        let line = line.trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("format") => {
                format = match tokens.next() {
                    Some("ascii") => Some(PlyFormat::Ascii),
                    Some("binary_little_endian") => Some(PlyFormat::BinaryLe),
                    other => {
                        return Err(format_err(format!(
                            "unsupported format {:?}",
                            other.unwrap_or("<missing>")
                        )))
                    }
                };
            }
            Some("element") => {
                let name = tokens.next().unwrap_or("<unnamed>");
                let count: usize = tokens
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| format_err(format!("element {name} has no count")))?;
                if name == "vertex" {
                    vertex_count = Some(count);
                    in_vertex_element = true;
                } else {
                    unsupported_elements.push(name.to_string());
                    in_vertex_element = false;
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    continue; // property of an unsupported element, reported via its element
                }
                let kind = tokens.next().unwrap_or("").to_string();
                let name = tokens.last().unwrap_or("").to_string();
                properties.push(Property { kind, name });
            }
            Some("comment") | Some("obj_info") => {}
            Some("end_header") => break,
            Some(other) => return Err(format_err(format!("unexpected header line {other:?}"))),
            None => {}
        }
    }

    if !unsupported_elements.is_empty() {
        return Err(format_err(format!(
            "unsupported elements: {}",
            unsupported_elements.join(", ")
        )));
    }
    let format = format.ok_or_else(|| format_err("missing format line".into()))?;
    let vertex_count = vertex_count.ok_or_else(|| format_err("missing vertex element".into()))?;

    // Only float x/y/z plus uchar red/green/blue are understood.
    let expected_float = ["x", "y", "z"];
    let expected_uchar = ["red", "green", "blue"];
    let mut has_color = false;
    match properties.len() {
        3 => {}
        6 => has_color = true,
        n => {
            return Err(format_err(format!(
                "expected 3 or 6 vertex properties, got {n}"
            )))
        }
    }
    for (i, prop) in properties.iter().enumerate() {
        let (kind, name) = if i < 3 {
            ("float", expected_float[i])
        } else {
            ("uchar", expected_uchar[i - 3])
        };
        if prop.kind != kind || prop.name != name {
            return Err(format_err(format!(
                "unsupported vertex property \"{} {}\" (expected \"{} {}\")",
                prop.kind, prop.name, kind, name
            )));
        }
    }

    let mut points = Vec::with_capacity(vertex_count);
    let mut colors = has_color.then(|| Vec::with_capacity(vertex_count));

    match format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|_| format_err("ascii body is not valid UTF-8".into()))?;
            let mut rows = text.lines().filter(|l| !l.trim().is_empty());
            for i in 0..vertex_count {
                let row = rows
                    .next()
                    .ok_or_else(|| format_err(format!("missing vertex row {i}")))?;
                let fields: Vec<&str> = row.split_whitespace().collect();
                let needed = if has_color { 6 } else { 3 };
                if fields.len() != needed {
                    return Err(format_err(format!(
                        "vertex row {i} has {} fields, expected {needed}",
                        fields.len()
                    )));
                }
                let coord = |j: usize| -> Result<f32, IoError> {
                    fields[j]
                        .parse()
                        .map_err(|_| format_err(format!("bad float {:?} in row {i}", fields[j])))
                };
                points.push(Point3::new(
                    coord(0)? as f64,
                    coord(1)? as f64,
                    coord(2)? as f64,
                ));
                if let Some(colors) = &mut colors {
                    let chan = |j: usize| -> Result<u8, IoError> {
                        fields[j].parse().map_err(|_| {
                            format_err(format!("bad color {:?} in row {i}", fields[j]))
                        })
                    };
                    colors.push([chan(3)?, chan(4)?, chan(5)?]);
                }
            }
        }
        PlyFormat::BinaryLe => {
            let stride = if has_color { 15 } else { 12 };
            if body.len() < vertex_count * stride {
                return Err(format_err(format!(
                    "binary body holds {} bytes, expected at least {}",
                    body.len(),
                    vertex_count * stride
                )));
            }
            for i in 0..vertex_count {
                let row = &body[i * stride..(i + 1) * stride];
                let coord = |j: usize| {
                    f32::from_le_bytes([row[4 * j], row[4 * j + 1], row[4 * j + 2], row[4 * j + 3]])
                };
                points.push(Point3::new(
                    coord(0) as f64,
                    coord(1) as f64,
                    coord(2) as f64,
                ));
                if let Some(colors) = &mut colors {
                    colors.push([row[12], row[13], row[14]]);
                }
            }
        }
    }

    PointCloud::new(points, colors).map_err(|source| IoError::Validation {
        what: "ply point cloud",
        source,
    })
}

fn find_header_end(bytes: &[u8]) -> Result<usize, IoError> {
    const TERMINATOR: &[u8] = b"end_header\n";
    bytes
        .windows(TERMINATOR.len())
        .position(|w| w == TERMINATOR)
        .map(|pos| pos + TERMINATOR.len())
        .ok_or_else(|| format_err("missing end_header".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_cloud_is_valid_ply() {
        let bytes = write_ply(&PointCloud::empty(), false);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("element vertex 0"));
        assert_eq!(read_ply(&bytes).unwrap().len(), 0);
    }

    #[test]
    fn single_point_roundtrips_within_f32() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)], None).unwrap();
        for binary in [false, true] {
            let loaded = read_ply(&write_ply(&cloud, binary)).unwrap();
            assert_eq!(loaded.points()[0], Point3::new(1.0, 2.0, 3.0));
        }
    }

    #[test]
    fn colors_survive_roundtrip() {
        let cloud = PointCloud::new(
            vec![Point3::new(0.5, -0.25, 1.0)],
            Some(vec![[10, 200, 31]]),
        )
        .unwrap();
        for binary in [false, true] {
            let loaded = read_ply(&write_ply(&cloud, binary)).unwrap();
            assert_eq!(loaded.colors().unwrap(), &[[10, 200, 31]]);
        }
    }

    #[test]
    fn unsupported_elements_are_listed() {
        let text = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nelement face 2\nproperty list uchar int vertex_indices\nelement edge 1\nproperty int vertex1\nend_header\n";
        let err = read_ply(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("face") && err.contains("edge"), "{err}");
    }

    #[test]
    fn truncated_binary_body_is_an_error() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)], None).unwrap();
        let mut bytes = write_ply(&cloud, true);
        bytes.truncate(bytes.len() - 4);
        assert!(read_ply(&bytes).is_err());
    }

    #[test]
    fn ten_thousand_random_points_roundtrip_within_1e6() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let points: Vec<Point3<f64>> = (0..10_000)
            .map(|_| {
                Point3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(0.05..8.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(points, None).unwrap();
        for binary in [false, true] {
            let loaded = read_ply(&write_ply(&cloud, binary)).unwrap();
            assert_eq!(loaded.len(), 10_000);
            let worst = loaded
                .points()
                .iter()
                .zip(cloud.points())
                .map(|(a, b)| (a - b).amax())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-6, "binary={binary}: worst error {worst}");
        }
    }

    proptest! {
        #[test]
        fn random_clouds_roundtrip_within_1e6(
            coords in proptest::collection::vec(-5.0..5.0f64, 3 * 64),
            binary in any::<bool>(),
        ) {
            let points: Vec<Point3<f64>> = coords
                .chunks_exact(3)
                .map(|c| Point3::new(c[0], c[1], c[2]))
                .collect();
            let cloud = PointCloud::new(points, None).unwrap();
            let loaded = read_ply(&write_ply(&cloud, binary)).unwrap();
            prop_assert_eq!(loaded.len(), cloud.len());
            for (a, b) in loaded.points().iter().zip(cloud.points()) {
                prop_assert!((a - b).amax() <= 1e-6);
            }
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            let _ = read_ply(&bytes);
        }
    }
}
