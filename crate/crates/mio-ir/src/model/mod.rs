//! Miniature restoration backbone with per-channel prompt injection, the
//! explicit/adaptive prompt sources, and the degradation classifier.

mod checkpoint;
mod infer;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointPayload, CHECKPOINT_MAGIC};
pub use infer::{restore_image, PromptSpec};
pub use params::ParamSet;

use serde::{Deserialize, Serialize};

use crate::dataio::image_to_chw;
use crate::degrade::TaskId;
use crate::error::{Error, Result};
use crate::imagebuf::ImageBuffer;
use crate::nncore::{Graph, NodeId, Tensor};
use crate::rng::RngStream;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const NUM_TASKS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    None,
    Explicit,
    Adaptive,
}

impl std::str::FromStr for PromptMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<PromptMode> {
        match s {
            "none" => Ok(PromptMode::None),
            "explicit" | "ep" => Ok(PromptMode::Explicit),
            "adaptive" | "ap" => Ok(PromptMode::Adaptive),
            other => Err(Error::invalid(format!(
                "unknown prompt mode '{other}', use none/explicit/adaptive"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    pub channels: usize,
    pub body_modules: usize,
    pub patch: usize,
    pub prompt_mode: PromptMode,
    pub prompt_dim: usize,
    /// Explicit prompts as trainable tensors instead of fixed images.
    pub learnable_prompts: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            channels: 16,
            body_modules: 4,
            patch: 32,
            prompt_mode: PromptMode::None,
            prompt_dim: 32,
            learnable_prompts: false,
        }
    }
}

impl BackboneConfig {
    fn extractor_channels(&self) -> [usize; 3] {
        [(self.prompt_dim / 4).max(4), (self.prompt_dim / 2).max(8), self.prompt_dim]
    }

    /// Parameter count of the prompt machinery: extractor plus one
    /// (scale, bias) head per injected module.
    pub fn prompt_machinery_params(&self) -> usize {
        if self.prompt_mode == PromptMode::None {
            return 0;
        }
        let [c1, c2, c3] = self.extractor_channels();
        let ext = (c1 * 3 * 9 + c1) + (c2 * c1 * 9 + c2) + (c3 * c2 * 9 + c3);
        let heads = self.body_modules * (2 * self.channels * self.prompt_dim + 2 * self.channels);
        ext + heads
    }
}

/// Fixed per-task prompt image: constant (index+1)/7 on channel
/// (index mod 3), zero elsewhere. Deterministic and pairwise distinct.
pub fn make_explicit_prompt(task: TaskId, height: usize, width: usize) -> ImageBuffer {
    let idx = task.index();
    let mut img = ImageBuffer::new(height, width).expect("prompt size >= 8");
    let value = (idx + 1) as f64 / NUM_TASKS as f64;
    let channel = idx % 3;
    for r in 0..height {
        for c in 0..width {
            img.set(r, c, channel, value);
        }
    }
    img
}

/// P = (1-alpha) * P_a + alpha * P_b.
pub fn interpolate_prompts(
    task_a: TaskId,
    task_b: TaskId,
    alpha: f64,
    height: usize,
    width: usize,
) -> Result<ImageBuffer> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must be in [0,1], got {alpha}")));
    }
    let pa = make_explicit_prompt(task_a, height, width);
    let pb = make_explicit_prompt(task_b, height, width);
    let data = pa
        .data()
        .iter()
        .zip(pb.data())
        .map(|(&a, &b)| (1.0 - alpha) * a + alpha * b)
        .collect();
    ImageBuffer::from_vec(height, width, data)
}

/// Output of one bound forward pass.
pub struct Forward {
    pub out: NodeId,
    pub param_nodes: Vec<NodeId>,
    /// Extractor feature node [N, D] when prompting is active.
    pub prompt_features: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestorationModel {
    pub config: BackboneConfig,
    pub params: ParamSet,
}

impl RestorationModel {
    pub fn new(config: BackboneConfig, seed: u64) -> Self {
        assert!(config.channels >= 1 && config.body_modules >= 1 && config.prompt_dim >= 1);
        let stream = RngStream::new(seed, "model-init");
        let mut p = ParamSet::new();
        let c = config.channels;
        let mut rng = params::init_rng(&stream, "backbone");
        p.push("head.w", params::conv_init(&mut rng, c, 3, 3));
        p.push("head.b", Tensor::zeros(vec![c]));
        for m in 0..config.body_modules {
            p.push(format!("body{m}.w"), params::conv_init(&mut rng, c, c, 3));
            p.push(format!("body{m}.b"), Tensor::zeros(vec![c]));
        }
        p.push("tail.w", params::conv_init(&mut rng, 3, c, 3));
        p.push("tail.b", Tensor::zeros(vec![3]));
        if config.prompt_mode != PromptMode::None {
            let [c1, c2, c3] = config.extractor_channels();
            let mut erng = params::init_rng(&stream, "extractor");
            p.push("ext1.w", params::conv_init(&mut erng, c1, 3, 3));
            p.push("ext1.b", Tensor::zeros(vec![c1]));
            p.push("ext2.w", params::conv_init(&mut erng, c2, c1, 3));
            p.push("ext2.b", Tensor::zeros(vec![c2]));
            p.push("ext3.w", params::conv_init(&mut erng, c3, c2, 3));
            p.push("ext3.b", Tensor::zeros(vec![c3]));
            for m in 0..config.body_modules {
                // Zero weights with bias (1...,0...) make injection start as
                // the exact identity.
                p.push(format!("fc{m}.w"), Tensor::zeros(vec![2 * c, config.prompt_dim]));
                let mut bias = vec![0.0; 2 * c];
                bias[..c].fill(1.0);
                p.push(format!("fc{m}.b"), Tensor::new(vec![2 * c], bias).expect("sized"));
            }
            if config.learnable_prompts && config.prompt_mode == PromptMode::Explicit {
                for task in TaskId::ALL {
                    let img = make_explicit_prompt(task, config.patch, config.patch);
                    let t = Tensor::new(
                        vec![3, config.patch, config.patch],
                        image_to_chw(&img),
                    )
                    .expect("sized");
                    p.push(format!("prompt{}", task.letter()), t);
                }
            }
        }
        RestorationModel { config, params: p }
    }

    /// P = (1-alpha) * P_a + alpha * P_b over this model's own prompts, so
    /// learned prompt images interpolate between their trained endpoints.
    pub fn interpolated_prompt(
        &self,
        task_a: TaskId,
        task_b: TaskId,
        alpha: f64,
        height: usize,
        width: usize,
    ) -> Result<ImageBuffer> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must be in [0,1], got {alpha}")));
        }
        let pa = self.prompt_image(task_a, height, width);
        let pb = self.prompt_image(task_b, height, width);
        let data = pa
            .data()
            .iter()
            .zip(pb.data())
            .map(|(&a, &b)| (1.0 - alpha) * a + alpha * b)
            .collect();
        ImageBuffer::from_vec(height, width, data)
    }

    /// Prompt image for a task: the learned tensor when enabled, the fixed
    /// pattern otherwise.
    pub fn prompt_image(&self, task: TaskId, height: usize, width: usize) -> ImageBuffer {
        if self.config.learnable_prompts {
            if let Some(t) = self.params.get(&format!("prompt{}", task.letter())) {
                let (ph, pw) = (t.shape()[1], t.shape()[2]);
                if (ph, pw) == (height, width) {
                    return crate::dataio::chw_to_image(t.data(), ph, pw).expect("prompt shape");
                }
            }
        }
        make_explicit_prompt(task, height, width)
    }

    /// Build the prompt batch tensor for a forward pass, or None for
    /// prompt-free models. Explicit mode requires per-sample task hints.
    pub fn prompt_batch(
        &self,
        x: &Tensor,
        task_hints: Option<&[TaskId]>,
    ) -> Result<Option<Tensor>> {
        match self.config.prompt_mode {
            PromptMode::None => Ok(None),
            PromptMode::Adaptive => Ok(Some(x.clone())),
            PromptMode::Explicit => {
                let (n, _, h, w) = x.dims4()?;
                let hints = task_hints.ok_or_else(|| {
                    Error::invalid("explicit prompt mode requires a task hint")
                })?;
                if hints.len() != n {
                    return Err(Error::shape(format!(
                        "{n} batch items but {} task hints",
                        hints.len()
                    )));
                }
                let mut data = Vec::with_capacity(n * 3 * h * w);
                for &task in hints {
                    let img = self.prompt_image(task, h, w);
                    data.extend(image_to_chw(&img));
                }
                Ok(Some(Tensor::new(vec![n, 3, h, w], data)?))
            }
        }
    }

    /// Bind parameters and run the full forward pass on the graph.
    pub fn forward(
        &self,
        g: &mut Graph,
        x: Tensor,
        prompt: Option<Tensor>,
    ) -> Result<Forward> {
        match (self.config.prompt_mode, &prompt) {
            (PromptMode::None, Some(_)) => {
                return Err(Error::invalid("prompt given to a prompt-free model"))
            }
            (PromptMode::Explicit | PromptMode::Adaptive, None) => {
                return Err(Error::invalid("prompt mode requires a prompt batch"))
            }
            _ => {}
        }
        let param_nodes = self.params.bind(g);
        let node = |name: &str| -> Result<NodeId> {
            self.params
                .index_of(name)
                .map(|i| param_nodes[i])
                .ok_or_else(|| Error::Other(format!("missing parameter {name}")))
        };

        let x_id = g.leaf(x);
        // Prompt path first: shared extractor features, per-module heads.
        let mut injections: Vec<(NodeId, NodeId)> = Vec::new();
        let mut prompt_features = None;
        if let Some(pt) = prompt {
            let p_id = g.leaf(pt);
            let feat = self.extract_features_on(g, p_id, &node)?;
            prompt_features = Some(feat);
            let c = self.config.channels;
            for m in 0..self.config.body_modules {
                let fm = g.dense(feat, node(&format!("fc{m}.w"))?, node(&format!("fc{m}.b"))?)?;
                let s = g.slice_cols(fm, 0, c)?;
                let b = g.slice_cols(fm, c, c)?;
                injections.push((s, b));
            }
        }

        let head = g.conv2d(x_id, node("head.w")?, node("head.b")?, 1)?;
        let mut f = g.leaky_relu(head, LEAKY_SLOPE);
        for m in 0..self.config.body_modules {
            let conv = g.conv2d(f, node(&format!("body{m}.w"))?, node(&format!("body{m}.b"))?, 1)?;
            f = g.leaky_relu(conv, LEAKY_SLOPE);
            if let Some(&(s, b)) = injections.get(m) {
                f = g.channel_affine(f, s, b)?;
            }
        }
        let tail = g.conv2d(f, node("tail.w")?, node("tail.b")?, 1)?;
        let out = g.add(x_id, tail)?;
        Ok(Forward { out, param_nodes, prompt_features })
    }

    fn extract_features_on(
        &self,
        g: &mut Graph,
        p_id: NodeId,
        node: &dyn Fn(&str) -> Result<NodeId>,
    ) -> Result<NodeId> {
        let c1 = g.conv2d(p_id, node("ext1.w")?, node("ext1.b")?, 2)?;
        let a1 = g.leaky_relu(c1, LEAKY_SLOPE);
        let c2 = g.conv2d(a1, node("ext2.w")?, node("ext2.b")?, 2)?;
        let a2 = g.leaky_relu(c2, LEAKY_SLOPE);
        let c3 = g.conv2d(a2, node("ext3.w")?, node("ext3.b")?, 2)?;
        let a3 = g.leaky_relu(c3, LEAKY_SLOPE);
        g.global_avg_pool(a3)
    }

    /// Extractor features for a batch of prompt images, outside any
    /// training graph.
    pub fn extract_prompt_features(&self, prompts: &Tensor) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let param_nodes = self.params.bind(&mut g);
        let node = |name: &str| -> Result<NodeId> {
            self.params
                .index_of(name)
                .map(|i| param_nodes[i])
                .ok_or_else(|| Error::Other(format!("missing parameter {name}")))
        };
        let p_id = g.leaf(prompts.clone());
        let feat = self.extract_features_on(&mut g, p_id, &node)?;
        let t = g.value(feat);
        let (n, d) = t.dims2()?;
        Ok((0..n).map(|i| t.data()[i * d..(i + 1) * d].to_vec()).collect())
    }

    /// Per-module (s, b) emitted for one prompt image; used by tests to
    /// verify the identity-at-init contract.
    pub fn scale_bias_for_prompt(&self, prompt: &ImageBuffer) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let (h, w) = (prompt.height(), prompt.width());
        let pt = Tensor::new(vec![1, 3, h, w], image_to_chw(prompt))?;
        let mut g = Graph::new();
        let param_nodes = self.params.bind(&mut g);
        let node = |name: &str| -> Result<NodeId> {
            self.params
                .index_of(name)
                .map(|i| param_nodes[i])
                .ok_or_else(|| Error::Other(format!("missing parameter {name}")))
        };
        let p_id = g.leaf(pt);
        let feat = self.extract_features_on(&mut g, p_id, &node)?;
        let c = self.config.channels;
        let mut out = Vec::new();
        for m in 0..self.config.body_modules {
            let fm = g.dense(feat, node(&format!("fc{m}.w"))?, node(&format!("fc{m}.b"))?)?;
            let s = g.slice_cols(fm, 0, c)?;
            let b = g.slice_cols(fm, c, c)?;
            out.push((g.value(s).data().to_vec(), g.value(b).data().to_vec()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub channels: [usize; 3],
    pub num_classes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { channels: [16, 32, 64], num_classes: NUM_TASKS }
    }
}

/// Small conv stack + first/second-moment pooling + dense over task logits.
/// The first conv keeps full resolution so high-frequency texture cues
/// (noise grain, resampling aliasing, blocking) survive into the features;
/// the squared-feature branch exposes per-channel energy, which separates
/// degradations that only differ in local variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub params: ParamSet,
}

impl Classifier {
    pub fn new(config: ClassifierConfig, seed: u64) -> Self {
        let stream = RngStream::new(seed, "classifier-init");
        let mut rng = params::init_rng(&stream, "conv");
        let [c1, c2, c3] = config.channels;
        let mut p = ParamSet::new();
        p.push("conv1.w", params::conv_init(&mut rng, c1, 3, 3));
        p.push("conv1h.w", params::conv_init(&mut rng, c1, 3, 3));
        p.push("conv1.b", Tensor::zeros(vec![c1]));
        p.push("conv2.w", params::conv_init(&mut rng, c2, c1, 3));
        p.push("conv2h.w", params::conv_init(&mut rng, c2, 3, 3));
        p.push("conv2.b", Tensor::zeros(vec![c2]));
        p.push("conv3.w", params::conv_init(&mut rng, c3, c2, 3));
        p.push("conv3.b", Tensor::zeros(vec![c3]));
        p.push("fc.w", params::dense_init(&mut rng, config.num_classes, c3));
        p.push("fc2.w", params::dense_init(&mut rng, config.num_classes, c3));
        p.push("fce1.w", params::dense_init(&mut rng, config.num_classes, 3));
        p.push("fce2.w", params::dense_init(&mut rng, config.num_classes, 3));
        p.push("fc.b", Tensor::zeros(vec![config.num_classes]));
        p.push("fc2.b", Tensor::zeros(vec![config.num_classes]));
        p.push("fce.b", Tensor::zeros(vec![config.num_classes]));
        Classifier { config, params: p }
    }

    pub fn forward(&self, g: &mut Graph, x: Tensor) -> Result<(NodeId, Vec<NodeId>)> {
        let param_nodes = self.params.bind(g);
        let node = |name: &str| -> NodeId {
            param_nodes[self.params.index_of(name).expect("classifier parameter")]
        };
        let x_id = g.leaf(x);
        // Fixed 8-neighbor Laplacian side input: degradation classes differ
        // mostly in their high-frequency residual, which is hard for a small
        // learned stack to isolate on its own.
        let mut lap_w = Tensor::zeros(vec![3, 3, 3, 3]);
        for ch in 0..3 {
            for (t, &v) in lap_w.data_mut()[ch * 9 * 3 + ch * 9..][..9]
                .iter_mut()
                .zip(&[-1.0, -1.0, -1.0, -1.0, 8.0, -1.0, -1.0, -1.0, -1.0])
            {
                *t = v / 8.0;
            }
        }
        let lap_w = g.leaf(lap_w);
        let lap_b = g.leaf(Tensor::zeros(vec![3]));
        let highpass = g.conv2d(x_id, lap_w, lap_b, 1)?;
        let c1_raw = g.conv2d(x_id, node("conv1.w"), node("conv1.b"), 1)?;
        let zero_b = g.leaf(Tensor::zeros(vec![self.config.channels[0]]));
        let c1_high = g.conv2d(highpass, node("conv1h.w"), zero_b, 1)?;
        let c1 = g.add(c1_raw, c1_high)?;
        let a1 = g.leaky_relu(c1, LEAKY_SLOPE);
        // Second scale: the same Laplacian after a fixed 2x average-downsample,
        // so band-energy ratios across scales reach the head. A Gaussian blur
        // and a bicubic down-up resample with similar total energy loss leave
        // different signatures across scales.
        let mut avg_w = Tensor::zeros(vec![3, 3, 3, 3]);
        for ch in 0..3 {
            for t in avg_w.data_mut()[ch * 9 * 3 + ch * 9..][..9].iter_mut() {
                *t = 1.0 / 9.0;
            }
        }
        let avg_w = g.leaf(avg_w);
        let avg_b = g.leaf(Tensor::zeros(vec![3]));
        let down = g.conv2d(x_id, avg_w, avg_b, 2)?;
        let highpass2 = g.conv2d(down, lap_w, lap_b, 1)?;
        let c2_raw = g.conv2d(a1, node("conv2.w"), node("conv2.b"), 2)?;
        let zero_b2 = g.leaf(Tensor::zeros(vec![self.config.channels[1]]));
        let c2_high = g.conv2d(highpass2, node("conv2h.w"), zero_b2, 1)?;
        let c2 = g.add(c2_raw, c2_high)?;
        let a2 = g.leaky_relu(c2, LEAKY_SLOPE);
        let c3 = g.conv2d(a2, node("conv3.w"), node("conv3.b"), 2)?;
        let a3 = g.leaky_relu(c3, LEAKY_SLOPE);
        let pooled = g.global_avg_pool(a3)?;
        let squared = g.mul(a3, a3)?;
        let pooled_sq = g.global_avg_pool(squared)?;
        let mean_logits = g.dense(pooled, node("fc.w"), node("fc.b"))?;
        let energy_logits = g.dense(pooled_sq, node("fc2.w"), node("fc2.b"))?;
        let logits = g.add(mean_logits, energy_logits)?;
        // Raw per-channel band energies of the two highpass scales go straight
        // to the head: blur-like degradations are ranked by exactly these.
        let hp_sq = g.mul(highpass, highpass)?;
        let hp_energy = g.global_avg_pool(hp_sq)?;
        let hp2_sq = g.mul(highpass2, highpass2)?;
        let hp2_energy = g.global_avg_pool(hp2_sq)?;
        let e1_logits = g.dense(hp_energy, node("fce1.w"), node("fce.b"))?;
        let e2_logits = g.dense(hp2_energy, node("fce2.w"), node("fce.b"))?;
        let band_logits = g.add(e1_logits, e2_logits)?;
        let logits = g.add(logits, band_logits)?;
        Ok((logits, param_nodes))
    }

    /// Raw logits of a single view, without any multi-crop voting.
    pub fn logits_for(&self, img: &ImageBuffer) -> Result<Vec<f64>> {
        let x = Tensor::new(vec![1, 3, img.height(), img.width()], image_to_chw(img))?;
        let mut g = Graph::new();
        let (logits, _) = self.forward(&mut g, x)?;
        Ok(g.value(logits).data().to_vec())
    }

    /// Argmax task with ties broken toward the lowest task index. Images large
    /// enough to quarter also vote with their four quadrants, which stabilizes
    /// the pooled statistics. Votes are summed as softmax probabilities rather
    /// than raw logits, so a single over-confident view cannot dominate.
    pub fn classify(&self, img: &ImageBuffer) -> Result<(TaskId, Vec<f64>)> {
        let (h, w) = (img.height(), img.width());
        let mut row = softmax(&self.logits_for(img)?);
        if h >= 32 && w >= 32 {
            let (hh, hw) = (h / 2, w / 2);
            for (top, left) in [(0, 0), (0, w - hw), (h - hh, 0), (h - hh, w - hw)] {
                let quadrant = img.crop(top, left, hh, hw)?;
                for (acc, v) in row.iter_mut().zip(softmax(&self.logits_for(&quadrant)?)) {
                    *acc += v;
                }
            }
        }
        Ok((argmax_task(&row)?, row))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&v| v / sum).collect()
}

/// Lowest index wins ties, so uniform logits select task S.
pub fn argmax_task(logits: &[f64]) -> Result<TaskId> {
    if logits.len() != NUM_TASKS {
        return Err(Error::shape(format!("expected {NUM_TASKS} logits, got {}", logits.len())));
    }
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    Ok(TaskId::ALL[best])
}
