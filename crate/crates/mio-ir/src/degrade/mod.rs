//! The seven degradation models with In-Dis / Out-Dis parameter samplers.
//!
//! All operations are pure functions of (inputs, rng stream): safe to run in
//! parallel over images, bit-reproducible for a fixed stream.

mod bicubic;
mod jpeg;
mod rain;

pub use bicubic::{bicubic_resize, op_sr};
#[cfg(test)]
pub(crate) use bicubic::cubic_weight;
pub use jpeg::op_jpeg;
pub use rain::{op_rain, rain_streak_map, RainConfig};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagebuf::{DepthMap, ImageBuffer, CHANNELS};
use crate::rng::RngStream;

/// The seven restoration tasks, keyed by their single-letter codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    /// Super-resolution (bicubic down/up).
    S,
    /// Deblurring (isotropic Gaussian blur).
    B,
    /// Denoising (additive white Gaussian noise).
    N,
    /// DeJPEG (baseline JPEG compression).
    J,
    /// Deraining (synthetic rain streaks).
    R,
    /// Dehazing (atmospheric scattering model).
    H,
    /// Low-light enhancement (gamma nonlinearity).
    L,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskCategory {
    DetailEnhancement,
    LuminanceAdjustment,
}

impl TaskId {
    pub const ALL: [TaskId; 7] =
        [TaskId::S, TaskId::B, TaskId::N, TaskId::J, TaskId::R, TaskId::H, TaskId::L];

    pub fn letter(self) -> char {
        match self {
            TaskId::S => 'S',
            TaskId::B => 'B',
            TaskId::N => 'N',
            TaskId::J => 'J',
            TaskId::R => 'R',
            TaskId::H => 'H',
            TaskId::L => 'L',
        }
    }

    pub fn from_letter(c: char) -> Result<TaskId> {
        match c.to_ascii_uppercase() {
            'S' => Ok(TaskId::S),
            'B' => Ok(TaskId::B),
            'N' => Ok(TaskId::N),
            'J' => Ok(TaskId::J),
            'R' => Ok(TaskId::R),
            'H' => Ok(TaskId::H),
            'L' => Ok(TaskId::L),
            other => Err(Error::invalid(format!(
                "unknown task letter '{other}', valid letters are S B N J R H L"
            ))),
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn category(self) -> TaskCategory {
        match self {
            TaskId::H | TaskId::L => TaskCategory::LuminanceAdjustment,
            _ => TaskCategory::DetailEnhancement,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::S => "super-resolution",
            TaskId::B => "deblur",
            TaskId::N => "denoise",
            TaskId::J => "dejpeg",
            TaskId::R => "derain",
            TaskId::H => "dehaze",
            TaskId::L => "low-light",
        }
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl std::str::FromStr for TaskId {
    type Err = Error;
    fn from_str(s: &str) -> Result<TaskId> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => TaskId::from_letter(c),
            _ => Err(Error::invalid(format!("task must be a single letter, got '{s}'"))),
        }
    }
}

/// Which parameter-range column a sample is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    InDis,
    OutDis,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::InDis => "in_dis",
            Group::OutDis => "out_dis",
        }
    }
}

impl std::str::FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Group> {
        match s {
            "in" | "in_dis" | "in-dis" => Ok(Group::InDis),
            "out" | "out_dis" | "out-dis" => Ok(Group::OutDis),
            other => Err(Error::invalid(format!("unknown group '{other}', use in_dis or out_dis"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "interval lower bound must not exceed upper");
        Interval { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

/// Per-task sampling intervals for both test groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamRanges {
    pub sr_scale_in: u32,
    pub sr_scale_out: u32,
    pub blur_size_min: u32,
    pub blur_size_max: u32,
    pub blur_sigma_in: Interval,
    pub blur_sigma_out: Interval,
    pub noise_sigma_in: Interval,
    pub noise_sigma_out: Interval,
    pub jpeg_quality_in: Interval,
    pub jpeg_quality_out: Interval,
    pub rain_strength_in: Interval,
    pub rain_strength_out: Interval,
    pub haze_a: Interval,
    pub haze_beta_in: Interval,
    pub haze_beta_out: Interval,
    pub ll_gamma_in: Interval,
    pub ll_gamma_out: Interval,
    pub rain: RainConfig,
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            sr_scale_in: 4,
            sr_scale_out: 8,
            blur_size_min: 7,
            blur_size_max: 23,
            blur_sigma_in: Interval::new(1.0, 3.0),
            blur_sigma_out: Interval::new(3.0, 5.0),
            noise_sigma_in: Interval::new(15.0, 50.0),
            noise_sigma_out: Interval::new(50.0, 70.0),
            jpeg_quality_in: Interval::new(30.0, 70.0),
            jpeg_quality_out: Interval::new(10.0, 30.0),
            rain_strength_in: Interval::new(50.0, 100.0),
            rain_strength_out: Interval::new(100.0, 150.0),
            haze_a: Interval::new(0.8, 1.0),
            haze_beta_in: Interval::new(0.5, 2.5),
            haze_beta_out: Interval::new(2.5, 3.0),
            ll_gamma_in: Interval::new(1.0, 3.0),
            ll_gamma_out: Interval::new(3.0, 4.0),
            rain: RainConfig::default(),
        }
    }
}

/// The parameters actually used for one degraded image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task")]
pub enum DegradeParams {
    S { scale: u32 },
    B { size: u32, sigma: f64 },
    N { sigma255: f64 },
    J { quality: u8 },
    R { strength: f64 },
    H { a: f64, beta: f64 },
    L { gamma: f64 },
}

impl DegradeParams {
    pub fn task(&self) -> TaskId {
        match self {
            DegradeParams::S { .. } => TaskId::S,
            DegradeParams::B { .. } => TaskId::B,
            DegradeParams::N { .. } => TaskId::N,
            DegradeParams::J { .. } => TaskId::J,
            DegradeParams::R { .. } => TaskId::R,
            DegradeParams::H { .. } => TaskId::H,
            DegradeParams::L { .. } => TaskId::L,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthKind {
    SmoothRandom,
    VerticalRamp,
}

impl Default for DepthKind {
    fn default() -> Self {
        DepthKind::SmoothRandom
    }
}

impl std::str::FromStr for DepthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<DepthKind> {
        match s {
            "smooth-random" | "smooth_random" | "smooth" => Ok(DepthKind::SmoothRandom),
            "vertical-ramp" | "vertical_ramp" | "ramp" => Ok(DepthKind::VerticalRamp),
            other => Err(Error::invalid(format!("unknown depth kind '{other}'"))),
        }
    }
}

/// Normalized 2-D Gaussian kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    data: Vec<f64>,
}

impl Kernel {
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[u * self.size + v]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Kernel> {
    if size % 2 == 0 || !(3..=31).contains(&size) {
        return Err(Error::invalid(format!("kernel size must be odd and in 3..=31, got {size}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let c = (size / 2) as isize;
    let mut data = vec![0.0; size * size];
    let mut sum = 0.0;
    for u in 0..size {
        for v in 0..size {
            let du = u as isize - c;
            let dv = v as isize - c;
            let w = (-((du * du + dv * dv) as f64) / (2.0 * sigma * sigma)).exp();
            data[u * size + v] = w;
            sum += w;
        }
    }
    for w in &mut data {
        *w /= sum;
    }
    Ok(Kernel { size, data })
}

/// 2-D convolution of one image plane with replicate padding.
pub(crate) fn convolve_plane(
    src: &[f64],
    h: usize,
    w: usize,
    kernel: &Kernel,
    dst: &mut [f64],
) {
    let k = kernel.size();
    let c = (k / 2) as isize;
    for r in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for ku in 0..k {
                let sr = (r as isize + ku as isize - c).clamp(0, h as isize - 1) as usize;
                for kv in 0..k {
                    let sc = (col as isize + kv as isize - c).clamp(0, w as isize - 1) as usize;
                    acc += src[sr * w + sc] * kernel.get(ku, kv);
                }
            }
            dst[r * w + col] = acc;
        }
    }
}

pub fn op_blur(y: &ImageBuffer, kernel: &Kernel) -> Result<ImageBuffer> {
    let (h, w) = (y.height(), y.width());
    if kernel.size() > h || kernel.size() > w {
        return Err(Error::invalid(format!(
            "kernel {}x{} larger than image {h}x{w}",
            kernel.size(),
            kernel.size()
        )));
    }
    let mut out = ImageBuffer::new(h, w)?;
    let mut plane = vec![0.0; h * w];
    let mut blurred = vec![0.0; h * w];
    for ch in 0..CHANNELS {
        for r in 0..h {
            for c in 0..w {
                plane[r * w + c] = y.get(r, c, ch);
            }
        }
        convolve_plane(&plane, h, w, kernel, &mut blurred);
        for r in 0..h {
            for c in 0..w {
                out.set(r, c, ch, blurred[r * w + c]);
            }
        }
    }
    out.clip();
    Ok(out)
}

pub fn op_noise(y: &ImageBuffer, sigma255: f64, rng: &RngStream) -> Result<ImageBuffer> {
    if sigma255 < 0.0 {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma255}")));
    }
    if sigma255 == 0.0 {
        return Ok(y.clone());
    }
    let normal = Normal::new(0.0, sigma255 / 255.0).expect("positive std");
    let mut r = rng.rng();
    let mut out = y.clone();
    for v in out.data_mut() {
        *v += normal.sample(&mut r);
    }
    out.clip();
    Ok(out)
}

pub fn synth_depth(h: usize, w: usize, rng: &RngStream, kind: DepthKind) -> Result<DepthMap> {
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!("depth map dimensions must be >= 2, got {h}x{w}")));
    }
    let data = match kind {
        DepthKind::VerticalRamp => {
            let mut d = vec![0.0; h * w];
            for r in 0..h {
                let v = r as f64 / (h - 1) as f64;
                for c in 0..w {
                    d[r * w + c] = v;
                }
            }
            d
        }
        DepthKind::SmoothRandom => {
            const G: usize = 4;
            let mut r = rng.rng();
            let grid: Vec<f64> = (0..G * G).map(|_| r.gen::<f64>()).collect();
            let mut d = vec![0.0; h * w];
            for row in 0..h {
                let gy = row as f64 / (h - 1) as f64 * (G - 1) as f64;
                let y0 = (gy.floor() as usize).min(G - 2);
                let fy = gy - y0 as f64;
                for col in 0..w {
                    let gx = col as f64 / (w - 1) as f64 * (G - 1) as f64;
                    let x0 = (gx.floor() as usize).min(G - 2);
                    let fx = gx - x0 as f64;
                    let v00 = grid[y0 * G + x0];
                    let v01 = grid[y0 * G + x0 + 1];
                    let v10 = grid[(y0 + 1) * G + x0];
                    let v11 = grid[(y0 + 1) * G + x0 + 1];
                    d[row * w + col] = v00 * (1.0 - fy) * (1.0 - fx)
                        + v01 * (1.0 - fy) * fx
                        + v10 * fy * (1.0 - fx)
                        + v11 * fy * fx;
                }
            }
            let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = if max > min { max - min } else { 1.0 };
            for v in &mut d {
                *v = (*v - min) / span;
            }
            d
        }
    };
    DepthMap::from_vec(h, w, data)
}

pub fn op_haze(y: &ImageBuffer, a: f64, beta: f64, depth: &DepthMap) -> Result<ImageBuffer> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::invalid(format!("atmospheric light must be in [0,1], got {a}")));
    }
    if beta < 0.0 {
        return Err(Error::invalid(format!("scattering coefficient must be >= 0, got {beta}")));
    }
    if depth.height() != y.height() || depth.width() != y.width() {
        return Err(Error::invalid(format!(
            "depth map {}x{} does not match image {}x{}",
            depth.height(),
            depth.width(),
            y.height(),
            y.width()
        )));
    }
    let mut out = y.clone();
    for r in 0..y.height() {
        for c in 0..y.width() {
            let t = (-beta * depth.get(r, c)).exp();
            for ch in 0..CHANNELS {
                out.set(r, c, ch, y.get(r, c, ch) * t + a * (1.0 - t));
            }
        }
    }
    out.clip();
    Ok(out)
}

pub fn op_lowlight(y: &ImageBuffer, gamma: f64) -> Result<ImageBuffer> {
    if gamma < 1.0 {
        return Err(Error::invalid(format!("gamma must be >= 1 for degradation, got {gamma}")));
    }
    let mut out = y.map(|v| v.powf(gamma));
    out.clip();
    Ok(out)
}

/// Draw the parameters for one degraded image from the group's intervals.
pub fn sample_params(
    task: TaskId,
    group: Group,
    ranges: &ParamRanges,
    rng: &RngStream,
) -> DegradeParams {
    let mut r = rng.rng();
    match task {
        TaskId::S => {
            let scale = match group {
                Group::InDis => ranges.sr_scale_in,
                Group::OutDis => ranges.sr_scale_out,
            };
            DegradeParams::S { scale }
        }
        TaskId::B => {
            // Odd sizes only; "from 7 to 23" with centered isotropic kernels.
            let n_odd = (ranges.blur_size_max - ranges.blur_size_min) / 2 + 1;
            let size = ranges.blur_size_min + 2 * r.gen_range(0..n_odd);
            let sigma = match group {
                Group::InDis => ranges.blur_sigma_in,
                Group::OutDis => ranges.blur_sigma_out,
            }
            .sample(&mut r);
            DegradeParams::B { size, sigma }
        }
        TaskId::N => {
            let iv = match group {
                Group::InDis => ranges.noise_sigma_in,
                Group::OutDis => ranges.noise_sigma_out,
            };
            DegradeParams::N { sigma255: iv.sample(&mut r) }
        }
        TaskId::J => {
            let iv = match group {
                Group::InDis => ranges.jpeg_quality_in,
                Group::OutDis => ranges.jpeg_quality_out,
            };
            let quality = r.gen_range(iv.lo.round() as i64..=iv.hi.round() as i64) as u8;
            DegradeParams::J { quality }
        }
        TaskId::R => {
            let iv = match group {
                Group::InDis => ranges.rain_strength_in,
                Group::OutDis => ranges.rain_strength_out,
            };
            DegradeParams::R { strength: iv.sample(&mut r) }
        }
        TaskId::H => {
            let a = ranges.haze_a.sample(&mut r);
            let beta = match group {
                Group::InDis => ranges.haze_beta_in,
                Group::OutDis => ranges.haze_beta_out,
            }
            .sample(&mut r);
            DegradeParams::H { a, beta }
        }
        TaskId::L => {
            let iv = match group {
                Group::InDis => ranges.ll_gamma_in,
                Group::OutDis => ranges.ll_gamma_out,
            };
            DegradeParams::L { gamma: iv.sample(&mut r) }
        }
    }
}

/// Apply fixed parameters. The stochastic tasks (noise, rain, haze depth)
/// draw from sub-streams of `rng` so the result is reproducible.
pub fn apply_params(
    y: &ImageBuffer,
    params: &DegradeParams,
    rain_cfg: &RainConfig,
    depth_kind: DepthKind,
    rng: &RngStream,
) -> Result<ImageBuffer> {
    match *params {
        DegradeParams::S { scale } => op_sr(y, scale),
        DegradeParams::B { size, sigma } => op_blur(y, &gaussian_kernel(size as usize, sigma)?),
        DegradeParams::N { sigma255 } => op_noise(y, sigma255, &rng.derive("noise")),
        DegradeParams::J { quality } => op_jpeg(y, quality),
        DegradeParams::R { strength } => op_rain(y, strength, rain_cfg, &rng.derive("rain")),
        DegradeParams::H { a, beta } => {
            let depth = synth_depth(y.height(), y.width(), &rng.derive("depth"), depth_kind)?;
            op_haze(y, a, beta, &depth)
        }
        DegradeParams::L { gamma } => op_lowlight(y, gamma),
    }
}

/// Sample parameters for (task, group) and apply them.
pub fn degrade(
    y: &ImageBuffer,
    task: TaskId,
    group: Group,
    ranges: &ParamRanges,
    depth_kind: DepthKind,
    rng: &RngStream,
) -> Result<(ImageBuffer, DegradeParams)> {
    let params = sample_params(task, group, ranges, &rng.derive("params"));
    let x = apply_params(y, &params, &ranges.rain, depth_kind, rng)?;
    Ok((x, params))
}

#[cfg(test)]
mod tests;
