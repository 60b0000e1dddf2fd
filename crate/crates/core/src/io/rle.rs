//! The `fv-rle/1` run-length mask document: row-major runs that must sum to
//! exactly `width * height` pixels.

use serde::{Deserialize, Serialize};

use super::{check_schema, IoError};
use crate::model::BinaryMask;

pub const RLE_SCHEMA: &str = "fv-rle/1";

#[derive(Serialize, Deserialize)]
struct Run {
    value: bool,
    length: u64,
}

#[derive(Serialize, Deserialize)]
struct RleDoc {
    schema: String,
    width: u32,
    height: u32,
    runs: Vec<Run>,
}

pub fn rle_encode(mask: &BinaryMask) -> String {
    let mut runs: Vec<Run> = Vec::new();
    for &bit in mask.bits() {
        match runs.last_mut() {
            Some(run) if run.value == bit => run.length += 1,
            _ => runs.push(Run {
                value: bit,
                length: 1,
            }),
        }
    }
    let doc = RleDoc {
        schema: RLE_SCHEMA.to_string(),
        width: mask.width(),
        height: mask.height(),
        runs,
    };
    serde_json::to_string(&doc).expect("rle document always serializes")
}

pub fn rle_decode(text: &str) -> Result<BinaryMask, IoError> {
    let doc: RleDoc = serde_json::from_str(text).map_err(|source| IoError::Parse {
        what: "rle mask document",
        source,
    })?;
    check_schema("rle mask document", RLE_SCHEMA, &doc.schema)?;

    let expected = (doc.width as u64) * (doc.height as u64);
    let total: u64 = doc.runs.iter().map(|r| r.length).sum();
    if total != expected {
        return Err(IoError::Format {
            what: "rle mask document",
            message: format!(
                "runs sum to {total} pixels but the declared size is {}x{} = {expected}",
                doc.width, doc.height
            ),
        });
    }
    let mut bits = Vec::with_capacity(expected as usize);
    for run in &doc.runs {
        bits.extend(std::iter::repeat_n(run.value, run.length as usize));
    }
    BinaryMask::new(doc.width, doc.height, bits).map_err(|source| IoError::Validation {
        what: "rle mask",
        source,
    })
}
