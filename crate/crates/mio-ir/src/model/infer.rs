//! Full-image restoration via overlapping tiles with blended seams.

use crate::dataio::{chw_to_image, image_to_chw};
use crate::degrade::TaskId;
use crate::error::{Error, Result};
use crate::imagebuf::ImageBuffer;
use crate::nncore::{Graph, Tensor};

use super::{interpolate_prompts, PromptMode, RestorationModel};

pub const TILE_OVERLAP: usize = 8;

/// How to build the prompt for an inference call.
#[derive(Debug, Clone)]
pub enum PromptSpec {
    None,
    /// Explicit prompt selected by task.
    Task(TaskId),
    /// A concrete prompt image, e.g. an interpolation between two tasks.
    Image(ImageBuffer),
    /// The degraded input doubles as the prompt.
    Adaptive,
}

impl PromptSpec {
    pub fn interpolated(
        task_a: TaskId,
        task_b: TaskId,
        alpha: f64,
        size: usize,
    ) -> Result<PromptSpec> {
        Ok(PromptSpec::Image(interpolate_prompts(task_a, task_b, alpha, size, size)?))
    }
}

fn tile_starts(dim: usize, tile: usize, step: usize) -> Vec<usize> {
    if dim <= tile {
        return vec![0];
    }
    let mut starts = Vec::new();
    let mut s = 0;
    loop {
        if s + tile >= dim {
            starts.push(dim - tile);
            break;
        }
        starts.push(s);
        s += step;
    }
    starts
}

/// Restore one image, tiling it into patch-sized windows with an
/// 8-pixel overlap. Overlapping predictions are averaged with linear
/// ramp weights so seams blend smoothly; the result is clipped to [0,1].
pub fn restore_image(
    model: &RestorationModel,
    img: &ImageBuffer,
    prompt: &PromptSpec,
) -> Result<ImageBuffer> {
    match (model.config.prompt_mode, prompt) {
        (PromptMode::None, PromptSpec::None) => {}
        (PromptMode::Explicit, PromptSpec::Task(_) | PromptSpec::Image(_)) => {}
        (PromptMode::Adaptive, PromptSpec::Adaptive | PromptSpec::Image(_)) => {}
        (mode, spec) => {
            return Err(Error::invalid(format!(
                "prompt spec {spec:?} does not fit model prompt mode {mode:?}"
            )))
        }
    }
    let (h, w) = (img.height(), img.width());
    let tile = model.config.patch;
    // 8-px overlap, clamped for tiny tiles so the step stays positive.
    let overlap = TILE_OVERLAP.min(tile / 2);
    let step = tile - overlap;
    let rows = tile_starts(h, tile, step);
    let cols = tile_starts(w, tile, step);

    let mut acc = vec![0.0; 3 * h * w];
    let mut weight = vec![0.0; h * w];
    for &top in &rows {
        for &left in &cols {
            let th = tile.min(h);
            let tw = tile.min(w);
            let tile_img = img.crop(top, left, th, tw)?;
            let out = restore_tile(model, &tile_img, prompt)?;
            for r in 0..th {
                // Linear ramp toward every tile edge; the final division by
                // the accumulated weight renormalizes border tiles.
                let wy = ramp(r, th, overlap);
                for c in 0..tw {
                    let wxy = wy * ramp(c, tw, overlap);
                    weight[(top + r) * w + (left + c)] += wxy;
                    for ch in 0..3 {
                        acc[ch * h * w + (top + r) * w + (left + c)] +=
                            wxy * out[ch * th * tw + r * tw + c];
                    }
                }
            }
        }
    }
    let mut data = vec![0.0; 3 * h * w];
    for i in 0..h * w {
        for ch in 0..3 {
            data[ch * h * w + i] = acc[ch * h * w + i] / weight[i];
        }
    }
    let mut out = chw_to_image(&data, h, w)?;
    out.clip();
    Ok(out)
}

fn ramp(i: usize, len: usize, overlap: usize) -> f64 {
    let edge = (i + 1).min(len - i);
    (edge.min(overlap + 1)) as f64 / (overlap + 1) as f64
}

/// One un-clipped forward pass over a whole tile; returns CHW data.
fn restore_tile(
    model: &RestorationModel,
    tile: &ImageBuffer,
    prompt: &PromptSpec,
) -> Result<Vec<f64>> {
    let (th, tw) = (tile.height(), tile.width());
    let x = Tensor::new(vec![1, 3, th, tw], image_to_chw(tile))?;
    let prompt_tensor = match prompt {
        PromptSpec::None => None,
        PromptSpec::Adaptive => Some(x.clone()),
        PromptSpec::Task(task) => {
            let img = model.prompt_image(*task, th, tw);
            Some(Tensor::new(vec![1, 3, th, tw], image_to_chw(&img))?)
        }
        PromptSpec::Image(img) => {
            let sized = if (img.height(), img.width()) == (th, tw) {
                img.clone()
            } else {
                crate::degrade::bicubic_resize(img, th, tw)?
            };
            Some(Tensor::new(vec![1, 3, th, tw], image_to_chw(&sized))?)
        }
    };
    let mut g = Graph::new();
    let fwd = model.forward(&mut g, x, prompt_tensor)?;
    Ok(g.value(fwd.out).data().to_vec())
}
