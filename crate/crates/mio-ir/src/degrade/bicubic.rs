//! Separable cubic-convolution resampling with kernel parameter a = -0.5
//! (Catmull-Rom style) and edge-clamped source sampling.

use crate::error::{Error, Result};
use crate::imagebuf::{ImageBuffer, CHANNELS};

const A: f64 = -0.5;

/// Cubic convolution weight at distance |t| <= 2.
pub(crate) fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Sample positions and weights for one output axis.
fn axis_taps(in_len: usize, out_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let src = (d as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0usize; 4];
            let mut wts = [0f64; 4];
            for k in 0..4 {
                let p = base as isize + k as isize - 1;
                idx[k] = p.clamp(0, in_len as isize - 1) as usize;
                wts[k] = cubic_weight(frac - (k as f64 - 1.0));
            }
            // Weights sum to 1 analytically; renormalize to kill rounding drift.
            let sum: f64 = wts.iter().sum();
            for w in &mut wts {
                *w /= sum;
            }
            (idx, wts)
        })
        .collect()
}

/// Resize to `out_h`x`out_w`. The returned buffer keeps the 8-px floor of
/// `ImageBuffer`; internal SR intermediates go through `resize_raw` instead.
pub fn bicubic_resize(y: &ImageBuffer, out_h: usize, out_w: usize) -> Result<ImageBuffer> {
    if out_h < 2 || out_w < 2 {
        return Err(Error::invalid(format!("target size must be >= 2, got {out_h}x{out_w}")));
    }
    let data = resize_raw(y.data(), y.height(), y.width(), out_h, out_w);
    let mut out = ImageBuffer::from_vec(out_h, out_w, data)?;
    out.clip();
    Ok(out)
}

/// Raw resample without the ImageBuffer size floor.
fn resize_raw(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let row_taps = axis_taps(h, out_h);
    let col_taps = axis_taps(w, out_w);
    let mut tmp = vec![0.0; h * out_w * CHANNELS];
    for r in 0..h {
        for (c, (idx, wts)) in col_taps.iter().enumerate() {
            for ch in 0..CHANNELS {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += wts[k] * src[(r * w + idx[k]) * CHANNELS + ch];
                }
                tmp[(r * out_w + c) * CHANNELS + ch] = acc;
            }
        }
    }
    let mut data = vec![0.0; out_h * out_w * CHANNELS];
    for (r, (idx, wts)) in row_taps.iter().enumerate() {
        for c in 0..out_w {
            for ch in 0..CHANNELS {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += wts[k] * tmp[(idx[k] * out_w + c) * CHANNELS + ch];
                }
                data[(r * out_w + c) * CHANNELS + ch] = acc;
            }
        }
    }
    data
}

/// Bicubic downsample by `scale` then upsample back to the original size.
pub fn op_sr(y: &ImageBuffer, scale: u32) -> Result<ImageBuffer> {
    if scale == 1 {
        return Ok(y.clone());
    }
    if ![2, 4, 8].contains(&scale) {
        return Err(Error::invalid(format!("SR scale must be one of 1,2,4,8, got {scale}")));
    }
    let (h, w) = (y.height(), y.width());
    let s = scale as usize;
    if h < s || w < s {
        return Err(Error::invalid(format!("image {h}x{w} smaller than scale {scale}")));
    }
    let (dh, dw) = ((h / s).max(2), (w / s).max(2));
    let down = resize_raw(y.data(), h, w, dh, dw);
    let up = resize_raw(&down, dh, dw, h, w);
    let mut out = ImageBuffer::from_vec(h, w, up)?;
    out.clip();
    Ok(out)
}
