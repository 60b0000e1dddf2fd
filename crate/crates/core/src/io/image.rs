//! PNG codecs for depth frames (16-bit grayscale), binary masks and soft
//! masks (8-bit grayscale) and color frames (8-bit RGB).

use std::io::Cursor;

use super::IoError;
use crate::model::{BinaryMask, ColorFrame, DepthFrame};

struct DecodedPng {
    width: u32,
    height: u32,
    bit_depth: png::BitDepth,
    color_type: png::ColorType,
    data: Vec<u8>,
}

fn decode_png(bytes: &[u8]) -> Result<DecodedPng, IoError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info()?;
    let mut data = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut data)?;
    data.truncate(info.buffer_size());
    Ok(DecodedPng {
        width: info.width,
        height: info.height,
        bit_depth: info.bit_depth,
        color_type: info.color_type,
        data,
    })
}

/// Decodes a 16-bit single-channel PNG into a [`DepthFrame`].
///
/// `depth_scale` is carried alongside the frame (it lives in the calibration
/// document, not in the PNG).
pub fn load_depth_png(bytes: &[u8], depth_scale: f64) -> Result<DepthFrame, IoError> {
    let png = decode_png(bytes)?;
    if png.color_type != png::ColorType::Grayscale || png.bit_depth != png::BitDepth::Sixteen {
        return Err(IoError::Format {
            what: "depth PNG",
            message: format!(
                "expected 16-bit grayscale, got {:?} {:?}",
                png.bit_depth, png.color_type
            ),
        });
    }
    // PNG stores 16-bit samples big-endian.
    let samples: Vec<u16> = png
        .data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    DepthFrame::new(png.width, png.height, samples, depth_scale).map_err(|source| {
        IoError::Validation {
            what: "depth frame",
            source,
        }
    })
}

pub fn save_depth_png(frame: &DepthFrame) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, frame.width(), frame.height());
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header()?;
    let mut bytes = Vec::with_capacity(frame.data().len() * 2);
    for &sample in frame.data() {
        bytes.extend_from_slice(&sample.to_be_bytes());
    }
    writer.write_image_data(&bytes)?;
    writer.finish()?;
    Ok(out)
}

/// Decodes an 8-bit single-channel PNG into a [`BinaryMask`]; samples above
/// 127 count as object pixels.
pub fn load_mask(bytes: &[u8]) -> Result<BinaryMask, IoError> {
    let png = decode_png(bytes)?;
    if png.color_type != png::ColorType::Grayscale || png.bit_depth != png::BitDepth::Eight {
        return Err(IoError::Format {
            what: "mask PNG",
            message: format!(
                "expected 8-bit grayscale, got {:?} {:?}",
                png.bit_depth, png.color_type
            ),
        });
    }
    let bits = png.data.iter().map(|&s| s > 127).collect();
    BinaryMask::new(png.width, png.height, bits).map_err(|source| IoError::Validation {
        what: "mask",
        source,
    })
}

pub fn save_mask(mask: &BinaryMask) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, mask.width(), mask.height());
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    let bytes: Vec<u8> = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    writer.write_image_data(&bytes)?;
    writer.finish()?;
    Ok(out)
}

/// Decodes an 8- or 16-bit single-channel PNG into per-pixel scores in
/// `[0, 1]` for ROC analysis.
pub fn load_soft_mask(bytes: &[u8]) -> Result<(u32, u32, Vec<f64>), IoError> {
    let png = decode_png(bytes)?;
    if png.color_type != png::ColorType::Grayscale {
        return Err(IoError::Format {
            what: "soft mask PNG",
            message: format!(
                "expected single-channel grayscale, got {:?}",
                png.color_type
            ),
        });
    }
    let values = match png.bit_depth {
        png::BitDepth::Eight => png.data.iter().map(|&s| s as f64 / 255.0).collect(),
        png::BitDepth::Sixteen => png
            .data
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        other => {
            return Err(IoError::Format {
                what: "soft mask PNG",
                message: format!("unsupported bit depth {other:?}"),
            })
        }
    };
    Ok((png.width, png.height, values))
}

/// Decodes an 8-bit RGB PNG.
pub fn load_color_png(bytes: &[u8]) -> Result<ColorFrame, IoError> {
    let png = decode_png(bytes)?;
    if png.color_type != png::ColorType::Rgb || png.bit_depth != png::BitDepth::Eight {
        return Err(IoError::Format {
            what: "color PNG",
            message: format!(
                "expected 8-bit RGB, got {:?} {:?}",
                png.bit_depth, png.color_type
            ),
        });
    }
    ColorFrame::new(png.width, png.height, png.data).map_err(|source| IoError::Validation {
        what: "color frame",
        source,
    })
}

pub fn save_color_png(frame: &ColorFrame) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, frame.width(), frame.height());
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(frame.data())?;
    writer.finish()?;
    Ok(out)
}
