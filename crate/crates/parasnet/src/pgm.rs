//! Binary greyscale PGM (`P5`, 8-bit).
//!
//! Pixels are written as `round(v · 255)` after clamping to `[0, 1]` and read
//! back as `byte / 255`. Header comments (`#` to end of line) are accepted on
//! read; only `maxval = 255` is supported.

use std::fs;
use std::path::Path;

use parasnet_core::Tensor;

use crate::error::{Error, Result};

pub const MAXVAL: u32 = 255;

pub fn encode(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let (h, w, c) = image.dims3("pgm image")?;
    if c != 1 {
        return Err(Error::Invalid(format!("PGM holds one channel, image has {c}")));
    }
    let mut out = format!("P5\n{w} {h}\n{MAXVAL}\n").into_bytes();
    out.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * MAXVAL as f32).round() as u8));
    Ok(out)
}

/// Header fields of a `P5` file and the offset of the first pixel byte.
struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("not a binary PGM (missing P5 magic)".into());
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for (n, name) in ["width", "height", "maxval"].iter().enumerate() {
        // Whitespace and comments may precede each field.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format!("malformed header: missing {name}"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        fields[n] = text.parse().map_err(|_| format!("malformed header: {name} {text} out of range"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("malformed header: no separator before pixel data".into()),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format!("empty image {width}x{height}"));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval: u32::try_from(maxval).unwrap_or(u32::MAX),
        data_start: pos,
    })
}

/// Decodes to a `[h, w, 1]` tensor with values in `[0, 1]`. `path` only
/// labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    let header = parse_header(bytes).map_err(|m| Error::format(path, m))?;
    if header.maxval != MAXVAL {
        return Err(Error::format(path, format!("unsupported maxval {} (expected {MAXVAL})", header.maxval)));
    }
    let n = header.width * header.height;
    let raster = &bytes[header.data_start..];
    if raster.len() != n {
        return Err(Error::format(
            path,
            format!(
                "{}x{} image needs {n} pixel bytes, found {}",
                header.width,
                header.height,
                raster.len()
            ),
        ));
    }
    let data = raster.iter().map(|&b| b as f32 / MAXVAL as f32).collect();
    Ok(Tensor::new([header.height, header.width, 1], data)?)
}

pub fn write(path: &Path, image: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode(image)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
