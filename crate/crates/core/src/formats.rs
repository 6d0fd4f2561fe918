//! Byte-level codecs: PFM depth maps and PNG masks / label maps.

use std::io::Cursor;
use std::path::Path;

use crate::error::{LayoutError, Result};
use crate::raster::{BitMask, DepthMap, LabelMap};

/// Largest accepted image side, in pixels.
pub const MAX_IMAGE_SIDE: usize = 1 << 14;

/// Decodes a single-channel PFM ("Pf") image. Rows are stored bottom to top;
/// a negative scale means little-endian samples. Non-finite and non-positive
/// samples become invalid depth.
pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let err = |m: &str| LayoutError::Pfm(m.to_string());
    let mut pos = 0;
    let mut token = || -> Result<&[u8]> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        Ok(&bytes[start..pos])
    };
    let magic = token()?;
    if magic == b"PF" {
        return Err(err("color PFM is not a depth map"));
    }
    if magic != b"Pf" {
        return Err(err("missing Pf magic"));
    }
    let parse_dim = |t: &[u8]| -> Result<usize> {
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&v| v > 0 && v <= MAX_IMAGE_SIDE)
            .ok_or_else(|| err("bad image dimension"))
    };
    let width = parse_dim(token()?)?;
    let height = parse_dim(token()?)?;
    let scale: f64 = std::str::from_utf8(token()?)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| err("bad scale"))?;
    // exactly one whitespace byte separates the header from the samples
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(err("truncated header"));
    }
    let data = &bytes[pos + 1..];
    let n = width * height;
    if data.len() != n * 4 {
        return Err(err(&format!(
            "expected {} sample bytes, found {}",
            n * 4,
            data.len()
        )));
    }
    let little = scale < 0.0;
    let mut values = vec![0.0; n];
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, row_from_bottom) = (k % width, k / width);
        let y = height - 1 - row_from_bottom;
        values[y * width + x] = v as f64;
    }
    Ok(DepthMap::from_values(width, height, values))
}

/// Encodes a depth map as little-endian PFM; invalid pixels are written as
/// NaN. Samples are rounded to f32.
pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = (depth.width(), depth.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            let i = y * w + x;
            let v = if depth.is_valid(i) {
                depth.values()[i] as f32
            } else {
                f32::NAN
            };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn png_err(path: &Path, reason: impl ToString) -> LayoutError {
    LayoutError::Png {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

struct DecodedPng {
    width: usize,
    height: usize,
    channels: usize,
    bytes_per_sample: usize,
    data: Vec<u8>,
}

fn decode_png(bytes: &[u8], path: &Path, keep_16: bool) -> Result<DecodedPng> {
    let mut decoder = png::Decoder::new_with_limits(
        Cursor::new(bytes),
        png::Limits {
            bytes: 256 * 1024 * 1024,
        },
    );
    let mut t = png::Transformations::EXPAND;
    if !keep_16 {
        t |= png::Transformations::STRIP_16;
    }
    decoder.set_transformations(t);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(|e| png_err(path, e))?;
    let (width, height) = (info.width as usize, info.height as usize);
    if width > MAX_IMAGE_SIDE || height > MAX_IMAGE_SIDE {
        return Err(png_err(path, "image too large"));
    }
    let channels = info.color_type.samples();
    let bytes_per_sample = if info.bit_depth == png::BitDepth::Sixteen { 2 } else { 1 };
    data.truncate(info.buffer_size());
    if info.line_size != width * channels * bytes_per_sample {
        return Err(png_err(path, "unsupported sample layout"));
    }
    Ok(DecodedPng {
        width,
        height,
        channels,
        bytes_per_sample,
        data,
    })
}

/// Decodes a region mask; a pixel belongs to the region when its first
/// channel is nonzero.
pub fn decode_mask_png(bytes: &[u8], path: &Path) -> Result<BitMask> {
    let img = decode_png(bytes, path, false)?;
    let stride = img.channels * img.bytes_per_sample;
    Ok(BitMask::from_fn(img.width, img.height, |x, y| {
        img.data[(y * img.width + x) * stride] != 0
    }))
}

fn encode_png(width: usize, height: usize, depth: png::BitDepth, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(depth);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        writer
            .write_image_data(data)
            .expect("in-memory PNG data has the declared size");
        writer.finish().expect("in-memory PNG trailer");
    }
    out
}

/// 8-bit grayscale PNG, 255 inside the mask and 0 outside.
pub fn encode_mask_png(mask: &BitMask) -> Vec<u8> {
    let data: Vec<u8> = (0..mask.len())
        .map(|i| if mask.get_index(i) { 255 } else { 0 })
        .collect();
    encode_png(mask.width(), mask.height(), png::BitDepth::Eight, &data)
}

/// 16-bit grayscale PNG holding `id + 1` per labeled pixel and 0 elsewhere.
pub fn encode_label_png(labels: &LabelMap) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(labels.labels().len() * 2);
    for l in labels.labels() {
        let v = match l {
            None => 0u16,
            Some(id) if *id < u16::MAX as u32 => (*id + 1) as u16,
            Some(id) => {
                return Err(LayoutError::Metric(format!(
                    "label {id} does not fit a 16-bit label image"
                )))
            }
        };
        data.extend_from_slice(&v.to_be_bytes());
    }
    Ok(encode_png(labels.width(), labels.height(), png::BitDepth::Sixteen, &data))
}

/// Inverse of [`encode_label_png`]; 8-bit images are accepted too.
pub fn decode_label_png(bytes: &[u8], path: &Path) -> Result<LabelMap> {
    let img = decode_png(bytes, path, true)?;
    let stride = img.channels * img.bytes_per_sample;
    let mut labels = LabelMap::new(img.width, img.height);
    for i in 0..img.width * img.height {
        let at = i * stride;
        let v = if img.bytes_per_sample == 2 {
            u16::from_be_bytes([img.data[at], img.data[at + 1]])
        } else {
            img.data[at] as u16
        };
        labels.set_index(i, v.checked_sub(1).map(u32::from));
    }
    Ok(labels)
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| LayoutError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| LayoutError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| LayoutError::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    decode_pfm(&read_file(path)?)
}

pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    write_file(path, &encode_pfm(depth))
}
