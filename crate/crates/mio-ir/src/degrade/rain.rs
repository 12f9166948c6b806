//! Constructive rain streak synthesis, a parametric stand-in for the
//! interactively produced streak layers common in deraining datasets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagebuf::{ImageBuffer, CHANNELS};
use crate::rng::RngStream;

use super::{convolve_plane, gaussian_kernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RainConfig {
    /// Seed-pixel probability = strength / density_divisor.
    pub density_divisor: f64,
    /// Streak length in px = round(strength / length_divisor).
    pub length_divisor: f64,
    /// Streak angle drawn uniformly in +-angle_max_deg from vertical.
    pub angle_max_deg: f64,
    pub brightness_min: f64,
    pub brightness_max: f64,
    /// Sigma of the 3x3 Gaussian soften pass.
    pub soften_sigma: f64,
}

impl Default for RainConfig {
    fn default() -> Self {
        RainConfig {
            density_divisor: 2000.0,
            length_divisor: 5.0,
            angle_max_deg: 30.0,
            brightness_min: 0.5,
            brightness_max: 1.0,
            soften_sigma: 0.5,
        }
    }
}

/// Build the nonnegative streak map. Also returns the number of seeded
/// streaks, which sampling tests check against density * H * W.
pub fn rain_streak_map(
    h: usize,
    w: usize,
    strength: f64,
    cfg: &RainConfig,
    rng: &RngStream,
) -> Result<(Vec<f64>, usize)> {
    if strength < 0.0 {
        return Err(Error::invalid(format!("rain strength must be >= 0, got {strength}")));
    }
    let mut map = vec![0.0; h * w];
    if strength == 0.0 {
        return Ok((map, 0));
    }
    let density = strength / cfg.density_divisor;
    let length = (strength / cfg.length_divisor).round().max(1.0) as usize;
    let angle_max = cfg.angle_max_deg.to_radians();
    let mut r = rng.rng();
    let mut seeds = 0usize;
    for row in 0..h {
        for col in 0..w {
            if r.gen::<f64>() >= density {
                continue;
            }
            seeds += 1;
            let angle = r.gen_range(-angle_max..=angle_max);
            let bright = r.gen_range(cfg.brightness_min..=cfg.brightness_max);
            let (dr, dc) = (angle.cos(), angle.sin());
            for t in 0..length {
                let pr = (row as f64 + dr * t as f64).round() as isize;
                let pc = (col as f64 + dc * t as f64).round() as isize;
                if pr < 0 || pr >= h as isize || pc < 0 || pc >= w as isize {
                    break;
                }
                let idx = pr as usize * w + pc as usize;
                map[idx] = map[idx].max(bright);
            }
        }
    }
    if cfg.soften_sigma > 0.0 {
        let kernel = gaussian_kernel(3, cfg.soften_sigma)?;
        let mut soft = vec![0.0; h * w];
        convolve_plane(&map, h, w, &kernel, &mut soft);
        map = soft;
    }
    Ok((map, seeds))
}

/// x = clip(y + R), R >= 0 pointwise.
pub fn op_rain(
    y: &ImageBuffer,
    strength: f64,
    cfg: &RainConfig,
    rng: &RngStream,
) -> Result<ImageBuffer> {
    let (map, _) = rain_streak_map(y.height(), y.width(), strength, cfg, rng)?;
    let mut out = y.clone();
    let data = out.data_mut();
    for (i, &r) in map.iter().enumerate() {
        for ch in 0..CHANNELS {
            data[i * CHANNELS + ch] += r;
        }
    }
    out.clip();
    Ok(out)
}
