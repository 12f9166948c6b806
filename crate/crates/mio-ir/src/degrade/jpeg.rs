//! Baseline JPEG round-trip: quantize to 8-bit, encode at the given quality
//! with 4:2:0 chroma subsampling, decode, return to [0,1] floats.

use jpeg_encoder::{ColorType, Encoder, SamplingFactor};

use crate::error::{Error, Result};
use crate::imagebuf::ImageBuffer;

pub(crate) fn to_bytes(y: &ImageBuffer) -> Vec<u8> {
    // Round-half-up quantization, matching PNG save.
    y.data().iter().map(|&v| ((v * 255.0) + 0.5).floor().clamp(0.0, 255.0) as u8).collect()
}

pub fn op_jpeg(y: &ImageBuffer, quality: u8) -> Result<ImageBuffer> {
    if !(1..=100).contains(&quality) {
        return Err(Error::invalid(format!("JPEG quality must be in 1..=100, got {quality}")));
    }
    let bytes = encode_jpeg(y, quality)?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Jpeg)
        .map_err(|e| Error::Other(format!("JPEG decode failed: {e}")))?
        .to_rgb8();
    let data: Vec<f64> = decoded.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    ImageBuffer::from_vec(y.height(), y.width(), data)
}

pub(crate) fn encode_jpeg(y: &ImageBuffer, quality: u8) -> Result<Vec<u8>> {
    let rgb = to_bytes(y);
    let mut out = Vec::new();
    let mut enc = Encoder::new(&mut out, quality);
    enc.set_sampling_factor(SamplingFactor::F_2_2); // 4:2:0
    enc.encode(&rgb, y.width() as u16, y.height() as u16, ColorType::Rgb)
        .map_err(|e| Error::Other(format!("JPEG encode failed: {e}")))?;
    Ok(out)
}
