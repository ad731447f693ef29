//! Binary PGM (`P5`) and PPM (`P6`) with maxval 255.

use crate::error::{Error, Result};

/// `round(127.5·(v + 1))` clamped to `[0, 255]`.
pub fn signed_unit_to_byte(v: f64) -> u8 {
    (127.5 * (v + 1.0)).round().clamp(0.0, 255.0) as u8
}

/// `round(255·v)` clamped to `[0, 255]`.
pub fn unit_to_byte(v: f64) -> u8 {
    (255.0 * v).round().clamp(0.0, 255.0) as u8
}

fn encode(magic: &str, width: usize, height: usize, channels: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height * channels {
        return Err(Error::LengthMismatch(pixels.len(), width * height * channels));
    }
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Grey-scale, row-major pixels.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    encode("P5", width, height, 1, pixels)
}

/// Colour, row-major pixels with interleaved RGB.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    encode("P6", width, height, 3, rgb)
}
